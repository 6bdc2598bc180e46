//! Graphical lasso with an unpenalized diagonal:
//!
//! ```text
//! minimize  -log|Θ| + tr(SΘ) + λ Σ_{i≠k} |Θ_ik|
//! ```
//!
//! Solved by block coordinate ascent on the dual covariance `W = Θ⁻¹`: each
//! column update is a Lasso on the current `W_{-j,-j}`, and the diagonal of
//! `W` stays pinned at `diag(S)`. The start point `(1 - t) S + t diag(S)` with
//! `t = min(1, λ / max_{i≠k}|S_ik|)` is dual feasible and SPD even when `S` is
//! singular, so `log|W|` increases monotonically from a finite value.

use crate::error::{Error, Result};
use crate::lasso::soft_threshold;
use crate::linalg::{spd_cholesky, spd_inverse, spd_logdet, Matrix, SymMatrix};

pub const DEFAULT_GLASSO_TOL: f64 = 1e-9;
pub const DEFAULT_GLASSO_MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, Copy)]
pub struct GlassoProblem<'a> {
    pub s: &'a SymMatrix,
    pub lambda2: f64,
}

impl<'a> GlassoProblem<'a> {
    pub fn new(s: &'a SymMatrix, lambda2: f64) -> Self {
        Self { s, lambda2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoSolution {
    pub theta: SymMatrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoOptions {
    /// Outer stopping rule: mean absolute change of `W` below
    /// `tol * mean(diag S)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Stopping rule for each column Lasso, relative to `mean(diag S)`.
    pub inner_tol: f64,
    pub inner_max_sweeps: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_GLASSO_TOL,
            max_sweeps: DEFAULT_GLASSO_MAX_SWEEPS,
            inner_tol: 1e-10,
            inner_max_sweeps: 10_000,
        }
    }
}

/// `max_{i≠k} |S_ik|`: the smallest penalty whose solution is diagonal.
pub fn glasso_lambda_max(s: &SymMatrix) -> f64 {
    let n = s.dim();
    let mut m = 0.0_f64;
    for i in 0..n {
        for k in 0..i {
            m = m.max(s[(i, k)].abs());
        }
    }
    m
}

/// Penalized objective; `+∞` when `theta` is not positive definite.
pub fn glasso_objective(s: &SymMatrix, theta: &SymMatrix, lambda2: f64) -> f64 {
    let Ok(f) = spd_cholesky(theta) else {
        return f64::INFINITY;
    };
    let n = s.dim();
    let mut off = 0.0;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                off += theta[(i, k)].abs();
            }
        }
    }
    -spd_logdet(&f) + s.trace_product(theta) + lambda2 * off
}

/// Largest violation of the optimality conditions
/// `diag(Θ⁻¹) = diag(S)` and `(Θ⁻¹ - S)_ik ∈ λ ∂|Θ_ik|`.
pub fn glasso_kkt_residual(s: &SymMatrix, theta: &SymMatrix, lambda2: f64) -> Result<f64> {
    let w = spd_inverse(&spd_cholesky(theta)?);
    let n = s.dim();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for k in 0..n {
            let g = w[(i, k)] - s[(i, k)];
            let v = if i == k {
                g.abs()
            } else if theta[(i, k)] != 0.0 {
                (g - lambda2 * theta[(i, k)].signum()).abs()
            } else {
                (g.abs() - lambda2).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

fn validate(problem: &GlassoProblem<'_>) -> Result<()> {
    let lambda = problem.lambda2;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda2 must be finite and >= 0, got {lambda}")));
    }
    if !problem.s.as_matrix().is_finite() {
        return Err(Error::invalid("covariance contains non-finite values"));
    }
    for i in 0..problem.s.dim() {
        let d = problem.s[(i, i)];
        if !(d > 0.0) {
            return Err(Error::invalid(format!("covariance diagonal entry {i} is {d}, must be > 0")));
        }
    }
    Ok(())
}

/// Block coordinate ascent state: the working covariance `W` and the column
/// regression coefficients `B` (column `j` holds `β_j`, zero on the diagonal).
pub struct GlassoState<'p, 'a> {
    problem: &'p GlassoProblem<'a>,
    opts: GlassoOptions,
    w: Matrix,
    beta: Matrix,
    scale: f64,
    inner_tol: f64,
    /// Inner tolerance used by the last sweep.
    swept_tol: f64,
    buf: Vec<f64>,
}

impl<'p, 'a> GlassoState<'p, 'a> {
    /// Requires `0 < λ < max_{i≠k}|S_ik|`-style problems; the trivial cases are
    /// handled by [`solve_glasso_with`].
    pub fn new(problem: &'p GlassoProblem<'a>, opts: GlassoOptions) -> Result<Self> {
        validate(problem)?;
        let s = problem.s;
        let n = s.dim();
        let lmax = glasso_lambda_max(s);
        let t = if lmax > 0.0 { (problem.lambda2 / lmax).min(1.0) } else { 1.0 };
        let w = Matrix::from_fn(n, n, |i, k| if i == k { s[(i, i)] } else { (1.0 - t) * s[(i, k)] });
        let scale = s.as_matrix().trace() / n as f64;
        Ok(Self {
            problem,
            opts,
            w,
            beta: Matrix::zeros(n, n),
            scale,
            inner_tol: 1e-3 * scale,
            swept_tol: f64::INFINITY,
            buf: vec![0.0; n],
        })
    }

    pub fn working_covariance(&self) -> &Matrix {
        &self.w
    }

    /// Column Lasso for `j`, then writes `W_{-j,j} = W_{-j,-j} β_j`.
    fn update_column(&mut self, j: usize) {
        let n = self.w.rows();
        let s = self.problem.s;
        let lambda = self.problem.lambda2;
        let tol = self.inner_tol;
        // v = W11 β_j (entry j unused).
        let v = &mut self.buf;
        for i in 0..n {
            if i == j {
                v[i] = 0.0;
                continue;
            }
            let wi = self.w.row(i);
            let mut acc = 0.0;
            for k in 0..n {
                if k != j {
                    acc += wi[k] * self.beta[(k, j)];
                }
            }
            v[i] = acc;
        }
        for _ in 0..self.opts.inner_max_sweeps {
            let mut max_change = 0.0_f64;
            for i in 0..n {
                if i == j {
                    continue;
                }
                let wii = self.w[(i, i)];
                let old = self.beta[(i, j)];
                let r = s[(i, j)] - (v[i] - wii * old);
                let new = soft_threshold(r, lambda) / wii;
                let delta = new - old;
                if delta != 0.0 {
                    self.beta[(i, j)] = new;
                    let wi = self.w.row(i);
                    for k in 0..n {
                        v[k] += delta * wi[k];
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < tol {
                break;
            }
        }
        for i in 0..n {
            if i != j {
                self.w[(i, j)] = v[i];
                self.w[(j, i)] = v[i];
            }
        }
    }

    /// One pass over all columns; returns the mean absolute change of `W`.
    ///
    /// Column problems are solved only as accurately as the previous sweep's
    /// progress warrants, down to `inner_tol` once the outer loop settles.
    pub fn sweep(&mut self) -> f64 {
        let n = self.w.rows();
        let before = self.w.clone();
        for j in 0..n {
            self.update_column(j);
        }
        let total: f64 = self
            .w
            .as_slice()
            .iter()
            .zip(before.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let change = total / (n * n) as f64;
        self.swept_tol = self.inner_tol;
        self.inner_tol = (1e-2 * change).max(self.opts.inner_tol * self.scale);
        change
    }

    /// A small change only counts once the column problems behind it were
    /// solved tightly; a loose inner solve can stall `W` anywhere.
    pub fn is_converged(&self, change: f64) -> bool {
        let tight = (self.opts.inner_tol * self.scale).max(1e-2 * self.opts.tol * self.scale);
        change < self.opts.tol * self.scale && self.swept_tol <= tight
    }

    /// Precision implied by the column regressions:
    /// `Θ_jj = 1 / (W_jj - W_{-j,j}ᵀ β_j)`, `Θ_{-j,j} = -β_j Θ_jj`, symmetrized.
    pub fn theta(&self) -> Result<SymMatrix> {
        let n = self.w.rows();
        let mut raw = Matrix::zeros(n, n);
        for j in 0..n {
            let mut dot = 0.0;
            for i in 0..n {
                if i != j {
                    dot += self.w[(i, j)] * self.beta[(i, j)];
                }
            }
            let tjj = 1.0 / (self.w[(j, j)] - dot);
            raw[(j, j)] = tjj;
            for i in 0..n {
                if i != j {
                    raw[(i, j)] = -self.beta[(i, j)] * tjj;
                }
            }
        }
        let theta = SymMatrix::symmetrize(&raw);
        if spd_cholesky(&theta).is_ok() {
            return Ok(theta);
        }
        let w = SymMatrix::symmetrize(&self.w);
        let f = spd_cholesky(&w).map_err(|e| e.context("working covariance"))?;
        Ok(spd_inverse(&f))
    }
}

pub fn solve_glasso(problem: &GlassoProblem<'_>) -> Result<GlassoSolution> {
    solve_glasso_with(problem, &GlassoOptions::default())
}

pub fn solve_glasso_with(problem: &GlassoProblem<'_>, opts: &GlassoOptions) -> Result<GlassoSolution> {
    validate(problem)?;
    let s = problem.s;
    let lambda = problem.lambda2;
    let n = s.dim();
    let finish = |theta: SymMatrix, iterations: usize, converged: bool| {
        let objective = glasso_objective(s, &theta, lambda);
        GlassoSolution {
            theta,
            objective,
            iterations,
            converged,
        }
    };

    if n == 1 {
        return Ok(finish(SymMatrix::from_diag(&[1.0 / s[(0, 0)]]), 0, true));
    }
    if lambda == 0.0 {
        let f = spd_cholesky(s).map_err(|e| e.context("unpenalized covariance"))?;
        // A rank-deficient S can survive elimination on rounding noise.
        let l = f.lower();
        let max_diag = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
        if let Some(i) = (0..n).find(|&i| l[(i, i)] * l[(i, i)] <= 1e-13 * n as f64 * max_diag) {
            return Err(Error::not_pd(format!("unpenalized covariance is numerically singular (pivot {i})")));
        }
        return Ok(finish(spd_inverse(&f), 0, true));
    }
    if lambda >= glasso_lambda_max(s) {
        let diag: Vec<f64> = (0..n).map(|i| 1.0 / s[(i, i)]).collect();
        return Ok(finish(SymMatrix::from_diag(&diag), 0, true));
    }

    let mut state = GlassoState::new(problem, *opts)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_sweeps {
        let change = state.sweep();
        iterations += 1;
        if state.is_converged(change) {
            converged = true;
            break;
        }
    }
    let theta = state.theta()?;
    Ok(finish(theta, iterations, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_data, random_spd};
    use proptest::prelude::*;

    fn sample_cov(n: usize, p: usize, seed: u64) -> SymMatrix {
        let x = random_data(n, p, seed);
        let mut x = x;
        for j in 0..p {
            let mean: f64 = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
            for i in 0..n {
                x[(i, j)] -= mean;
            }
        }
        // Mix columns so there is real correlation.
        for i in 0..n {
            for j in 1..p {
                let prev = x[(i, j - 1)];
                x[(i, j)] += 0.6 * prev;
            }
        }
        SymMatrix::from_lower(x.t_matmul_scaled(&x, 1.0 / n as f64))
    }

    /// Proximal gradient with backtracking on the primal objective.
    fn proximal_oracle(s: &SymMatrix, lambda: f64) -> SymMatrix {
        let n = s.dim();
        let prox = |m: &Matrix, step: f64| {
            SymMatrix::from_lower(Matrix::from_fn(n, n, |i, k| {
                if i == k {
                    m[(i, k)]
                } else {
                    soft_threshold(m[(i, k)], step * lambda)
                }
            }))
        };
        let smooth = |t: &SymMatrix| match spd_cholesky(t) {
            Ok(f) => -spd_logdet(&f) + s.trace_product(t),
            Err(_) => f64::INFINITY,
        };
        let diag: Vec<f64> = (0..n).map(|i| 1.0 / s[(i, i)]).collect();
        let mut theta = SymMatrix::from_diag(&diag);
        let mut step = 1.0;
        for _ in 0..200_000 {
            let inv = spd_inverse(&spd_cholesky(&theta).unwrap());
            let grad = s.as_matrix().sub(inv.as_matrix());
            let f0 = smooth(&theta);
            let mut next;
            loop {
                next = prox(&theta.as_matrix().sub(&grad.scale(step)), step);
                let d = next.as_matrix().sub(theta.as_matrix());
                let bound = f0
                    + grad.as_slice().iter().zip(d.as_slice()).map(|(g, x)| g * x).sum::<f64>()
                    + d.frobenius_sq() / (2.0 * step);
                if smooth(&next) <= bound {
                    break;
                }
                step *= 0.5;
            }
            let change = next.as_matrix().max_abs_diff(theta.as_matrix());
            theta = next;
            step = (step * 1.5).min(10.0);
            if change < 1e-14 {
                break;
            }
        }
        theta
    }

    #[test]
    fn identity_covariance_gives_identity() {
        for lambda in [0.0, 0.1, 1.0] {
            let s = SymMatrix::identity(4);
            let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
            assert!(sol.theta.as_matrix().max_abs_diff(&Matrix::identity(4)) < 1e-14);
        }
    }

    #[test]
    fn full_shrinkage_is_inverse_diagonal() {
        let s = sample_cov(30, 5, 1);
        let lmax = glasso_lambda_max(&s);
        for lambda in [lmax, 1.001 * lmax, 10.0 * lmax] {
            let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
            for i in 0..5 {
                for k in 0..5 {
                    let expected = if i == k { 1.0 / s[(i, i)] } else { 0.0 };
                    assert_eq!(sol.theta[(i, k)], expected);
                }
            }
        }
    }

    #[test]
    fn lambda_max_examples() {
        assert_eq!(glasso_lambda_max(&SymMatrix::identity(3)), 0.0);
        let s = SymMatrix::from_rows(&[[1.0, 0.3], [0.3, 1.0]]).unwrap();
        assert_eq!(glasso_lambda_max(&s), 0.3);
    }

    #[test]
    fn two_by_two_matches_numerical_oracle() {
        for (r, lambda) in [(0.6, 0.2), (-0.5, 0.1), (0.9, 0.85), (0.3, 0.05)] {
            let s = SymMatrix::from_rows(&[[1.0, r], [r, 1.0]]).unwrap();
            let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
            let oracle = proximal_oracle(&s, lambda);
            assert!(
                sol.theta.as_matrix().max_abs_diff(oracle.as_matrix()) < 1e-5,
                "r={r} λ={lambda}: {:?} vs {:?}",
                sol.theta,
                oracle
            );
            // Dual closed form: W_12 = sign(r)(|r| - λ).
            let w12 = r.signum() * (r.abs() - lambda);
            let det = 1.0 - w12 * w12;
            assert!((sol.theta[(0, 1)] + w12 / det).abs() < 1e-6);
        }
    }

    #[test]
    fn three_dim_matches_numerical_oracle() {
        for seed in 0..6 {
            let s = sample_cov(20, 3, seed);
            let lmax = glasso_lambda_max(&s);
            for frac in [0.05, 0.3, 0.7] {
                let lambda = frac * lmax;
                let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
                let oracle = proximal_oracle(&s, lambda);
                let d = sol.theta.as_matrix().max_abs_diff(oracle.as_matrix());
                assert!(d < 1e-5, "seed {seed} frac {frac}: {d}");
            }
        }
    }

    #[test]
    fn scalar_problem_is_reciprocal() {
        let s = SymMatrix::from_diag(&[2.5]);
        let sol = solve_glasso(&GlassoProblem::new(&s, 0.7)).unwrap();
        assert_eq!(sol.theta[(0, 0)], 1.0 / 2.5);
    }

    #[test]
    fn error_paths() {
        // λ = 0 with singular S.
        let s = sample_cov(3, 5, 2);
        assert!(matches!(
            solve_glasso(&GlassoProblem::new(&s, 0.0)),
            Err(Error::NotPositiveDefinite(_))
        ));
        let z = SymMatrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(
            solve_glasso(&GlassoProblem::new(&z, 0.1)),
            Err(Error::InvalidInput(_))
        ));
        assert!(solve_glasso(&GlassoProblem::new(&SymMatrix::identity(2), -0.1)).is_err());
    }

    #[test]
    fn singular_covariance_with_penalty_is_fine() {
        // n < p: S is rank deficient.
        let s = sample_cov(4, 10, 3);
        let lambda = 0.1 * glasso_lambda_max(&s);
        let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
        assert!(sol.converged);
        assert!(spd_cholesky(&sol.theta).is_ok());
        assert!(glasso_kkt_residual(&s, &sol.theta, lambda).unwrap() <= 1e-4);
    }

    #[test]
    fn unpenalized_is_inverse() {
        let s = random_spd(5, 4);
        let sol = solve_glasso(&GlassoProblem::new(&s, 0.0)).unwrap();
        let prod = sol.theta.as_matrix().matmul(s.as_matrix());
        assert!(prod.max_abs_diff(&Matrix::identity(5)) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn kkt_holds(seed in any::<u64>(), frac in 0.01f64..1.0, p in 2usize..9, n in 5usize..40) {
            let s = sample_cov(n, p, seed);
            let lambda = frac * glasso_lambda_max(&s);
            let sol = solve_glasso(&GlassoProblem::new(&s, lambda)).unwrap();
            prop_assert!(sol.converged);
            prop_assert!(glasso_kkt_residual(&s, &sol.theta, lambda).unwrap() <= 1e-4);
        }

        #[test]
        fn lambda_max_gives_diagonal(seed in any::<u64>(), p in 2usize..8) {
            let s = sample_cov(25, p, seed);
            let sol = solve_glasso(&GlassoProblem::new(&s, 1.001 * glasso_lambda_max(&s))).unwrap();
            for i in 0..p {
                for k in 0..p {
                    if i != k {
                        prop_assert_eq!(sol.theta[(i, k)], 0.0);
                    }
                }
            }
        }

        #[test]
        fn objective_never_increases_across_sweeps(seed in any::<u64>(), frac in 0.02f64..0.9, p in 2usize..8) {
            let s = sample_cov(30, p, seed);
            let lambda = frac * glasso_lambda_max(&s);
            let problem = GlassoProblem::new(&s, lambda);
            let mut state = GlassoState::new(&problem, GlassoOptions::default()).unwrap();
            let mut prev = f64::INFINITY;
            for _ in 0..30 {
                state.sweep();
                let obj = glasso_objective(&s, &state.theta().unwrap(), lambda);
                prop_assert!(obj <= prev + 1e-9 * obj.abs().max(1.0), "{} > {}", obj, prev);
                prev = obj;
            }
        }
    }
}
