//! Weighted multivariate-regression Lasso solved by cyclic coordinate descent.
//!
//! For a response block `X` (`n x p_j`), a design block `Z` (`n x q_j`) and an
//! SPD weight `W` (`p_j x p_j`) the objective is
//!
//! ```text
//! f(A) = (1/n) tr[(X - Z Aᵀ) W (X - Z Aᵀ)ᵀ] + λ Σ |A_kl|
//! ```
//!
//! The problem is equivalent to a scalar Lasso on `vec(X L)` with design
//! `Lᵀ ⊗ Z` (`W = L Lᵀ`), but the Kronecker design is never formed: the solver
//! works from the Gram blocks `XᵀX/n`, `XᵀZ/n` and `ZᵀZ/n`, which are computed
//! once per data set and shared across weights and penalties.

use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, Matrix, SymMatrix};

/// Default stopping rule: largest coefficient change in a sweep.
pub const DEFAULT_LASSO_TOL: f64 = 1e-7;
pub const DEFAULT_LASSO_MAX_SWEEPS: usize = 10_000;

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centered response/design blocks together with their scaled Gram blocks.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: Matrix,
    z: Matrix,
    sxx: Matrix,
    sxz: Matrix,
    szz: Matrix,
}

impl RegressionData {
    pub fn new(x: Matrix, z: Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::invalid("regression needs at least one row"));
        }
        if x.rows() != z.rows() {
            return Err(Error::invalid(format!(
                "response has {} rows but design has {}",
                x.rows(),
                z.rows()
            )));
        }
        if !x.is_finite() || !z.is_finite() {
            return Err(Error::invalid("regression data contains non-finite values"));
        }
        let inv_n = 1.0 / x.rows() as f64;
        let sxx = x.t_matmul_scaled(&x, inv_n);
        let sxz = x.t_matmul_scaled(&z, inv_n);
        let szz = z.t_matmul_scaled(&z, inv_n);
        Ok(Self { x, z, sxx, sxz, szz })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Number of responses `p_j`.
    pub fn responses(&self) -> usize {
        self.x.cols()
    }

    /// Number of predictors `q_j`.
    pub fn predictors(&self) -> usize {
        self.z.cols()
    }

    pub fn response(&self) -> &Matrix {
        &self.x
    }

    pub fn design(&self) -> &Matrix {
        &self.z
    }

    /// `XᵀZ / n`.
    pub fn cross_gram(&self) -> &Matrix {
        &self.sxz
    }

    /// `ZᵀZ / n`.
    pub fn design_gram(&self) -> &Matrix {
        &self.szz
    }

    /// `XᵀX / n`.
    pub fn response_gram(&self) -> &Matrix {
        &self.sxx
    }

    /// Residuals `X - Z Aᵀ`.
    pub fn residuals(&self, coef: &Matrix) -> Matrix {
        let mut r = self.x.clone();
        let (p, q) = (self.responses(), self.predictors());
        for i in 0..self.n() {
            let zi = self.z.row(i);
            let ri = r.row_mut(i);
            for k in 0..p {
                let ak = coef.row(k);
                let mut s = 0.0;
                for l in 0..q {
                    s += zi[l] * ak[l];
                }
                ri[k] -= s;
            }
        }
        r
    }

    /// Residual covariance `(X - Z Aᵀ)ᵀ (X - Z Aᵀ) / n`.
    pub fn residual_covariance(&self, coef: &Matrix) -> SymMatrix {
        let r = self.residuals(coef);
        SymMatrix::from_lower(r.t_matmul_scaled(&r, 1.0 / self.n() as f64))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub data: &'a RegressionData,
    pub weight: &'a SymMatrix,
    pub lambda1: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(data: &'a RegressionData, weight: &'a SymMatrix, lambda1: f64) -> Self {
        Self { data, weight, lambda1 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return Err(Error::invalid(format!("lambda1 must be finite and >= 0, got {}", self.lambda1)));
        }
        if self.weight.dim() != self.data.responses() {
            return Err(Error::invalid(format!(
                "weight is {0}x{0} but there are {1} responses",
                self.weight.dim(),
                self.data.responses()
            )));
        }
        if !self.weight.as_matrix().is_finite() {
            return Err(Error::invalid("weight contains non-finite values"));
        }
        spd_cholesky(self.weight)
            .map_err(|e| Error::invalid(format!("weight must be SPD ({e})")))?;
        Ok(())
    }

    /// `C = W · XᵀZ/n`.
    fn weighted_cross(&self) -> Matrix {
        self.weight.as_matrix().matmul(self.data.cross_gram())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coef: Matrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_LASSO_TOL,
            max_sweeps: DEFAULT_LASSO_MAX_SWEEPS,
        }
    }
}

/// Objective evaluated from residuals.
pub fn lasso_objective(problem: &LassoProblem<'_>, coef: &Matrix) -> f64 {
    let r = problem.data.residuals(coef);
    let w = problem.weight.as_matrix();
    let p = r.cols();
    let mut quad = 0.0;
    for i in 0..r.rows() {
        let ri = r.row(i);
        for a in 0..p {
            let wa = w.row(a);
            let mut s = 0.0;
            for b in 0..p {
                s += wa[b] * ri[b];
            }
            quad += ri[a] * s;
        }
    }
    let l1: f64 = coef.as_slice().iter().map(|v| v.abs()).sum();
    quad / problem.data.n() as f64 + problem.lambda1 * l1
}

/// Gradient of the smooth part: `2 W (A ZᵀZ/n - XᵀZ/n)`.
pub fn lasso_gradient(problem: &LassoProblem<'_>, coef: &Matrix) -> Matrix {
    let m = coef.matmul(problem.data.design_gram());
    let diff = m.sub(problem.data.cross_gram());
    problem.weight.as_matrix().matmul(&diff).scale(2.0)
}

/// Largest violation of the subgradient optimality conditions.
pub fn lasso_kkt_residual(problem: &LassoProblem<'_>, coef: &Matrix) -> f64 {
    let g = lasso_gradient(problem, coef);
    let lambda = problem.lambda1;
    g.as_slice()
        .iter()
        .zip(coef.as_slice())
        .map(|(&gk, &a)| {
            if a != 0.0 {
                (gk + lambda * a.signum()).abs()
            } else {
                (gk.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest penalty with an all-zero solution: `max |2 W XᵀZ/n|`.
pub fn lasso_lambda_max(problem: &LassoProblem<'_>) -> f64 {
    if problem.data.predictors() == 0 {
        return 0.0;
    }
    2.0 * problem.weighted_cross().max_abs()
}

/// Cyclic coordinate descent state for one problem.
///
/// Keeps `M = A ZᵀZ/n` up to date so each coordinate costs `O(p_j + q_j)`.
pub struct CoordinateDescent<'p, 'a> {
    problem: &'p LassoProblem<'a>,
    coef: Matrix,
    cross: Matrix,
    m: Matrix,
}

impl<'p, 'a> CoordinateDescent<'p, 'a> {
    pub fn new(problem: &'p LassoProblem<'a>, warm: Option<&Matrix>) -> Result<Self> {
        problem.validate()?;
        let (p, q) = (problem.data.responses(), problem.data.predictors());
        let coef = match warm {
            Some(w) if (w.rows(), w.cols()) == (p, q) && w.is_finite() => w.clone(),
            Some(_) => return Err(Error::invalid("warm start has the wrong shape")),
            None => Matrix::zeros(p, q),
        };
        let m = coef.matmul(problem.data.design_gram());
        Ok(Self {
            problem,
            coef,
            cross: problem.weighted_cross(),
            m,
        })
    }

    pub fn coef(&self) -> &Matrix {
        &self.coef
    }

    pub fn into_coef(self) -> Matrix {
        self.coef
    }

    #[inline]
    fn update(&mut self, k: usize, l: usize) -> f64 {
        let w = self.problem.weight.as_matrix();
        let szz = self.problem.data.design_gram();
        let h = 2.0 * w[(k, k)] * szz[(l, l)];
        if h <= 0.0 {
            // Zero design column: the coordinate does not enter the fit.
            let old = self.coef[(k, l)];
            if old != 0.0 {
                self.coef[(k, l)] = 0.0;
            }
            return old.abs();
        }
        let p = self.coef.rows();
        let q = self.coef.cols();
        let mdata = self.m.as_slice();
        let wk = w.row(k);
        let mut wm = 0.0;
        for a in 0..p {
            wm += wk[a] * mdata[a * q + l];
        }
        let grad = 2.0 * (wm - self.cross[(k, l)]);
        let old = self.coef[(k, l)];
        let new = soft_threshold(h * old - grad, self.problem.lambda1) / h;
        let delta = new - old;
        if delta != 0.0 {
            self.coef[(k, l)] = new;
            let srow = szz.row(l);
            for (mv, &s) in self.m.row_mut(k).iter_mut().zip(srow) {
                *mv += delta * s;
            }
        }
        delta.abs()
    }

    /// One pass over every coordinate in row-major order; returns the largest
    /// absolute change.
    pub fn sweep(&mut self) -> f64 {
        let (p, q) = (self.coef.rows(), self.coef.cols());
        let mut max_change = 0.0_f64;
        for k in 0..p {
            for l in 0..q {
                max_change = max_change.max(self.update(k, l));
            }
        }
        max_change
    }

    /// One pass over the currently nonzero coordinates.
    pub fn active_sweep(&mut self) -> f64 {
        let (p, q) = (self.coef.rows(), self.coef.cols());
        let mut max_change = 0.0_f64;
        for k in 0..p {
            for l in 0..q {
                if self.coef[(k, l)] != 0.0 {
                    max_change = max_change.max(self.update(k, l));
                }
            }
        }
        max_change
    }

    /// Runs full sweeps, each followed by active-set sweeps to convergence,
    /// until a full sweep moves no coefficient by more than `tol`.
    pub fn run(&mut self, opts: &LassoOptions) -> (usize, bool) {
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            let change = self.sweep();
            sweeps += 1;
            if change < opts.tol {
                return (sweeps, true);
            }
            while sweeps < opts.max_sweeps {
                let change = self.active_sweep();
                sweeps += 1;
                if change < opts.tol {
                    break;
                }
            }
        }
        (sweeps, false)
    }
}

/// Unpenalized solution `A = XᵀZ (ZᵀZ)⁻¹`, which does not depend on the
/// weight. `None` when the design Gram is (numerically) singular.
fn least_squares(data: &RegressionData) -> Option<Matrix> {
    let q = data.predictors();
    if q == 0 {
        return None;
    }
    let gram = SymMatrix::from_lower(data.design_gram().clone());
    let f = spd_cholesky(&gram).ok()?;
    let max_diag = (0..q).map(|k| gram[(k, k)]).fold(0.0, f64::max);
    let l = f.lower();
    if (0..q).any(|k| l[(k, k)] * l[(k, k)] <= 1e-13 * q as f64 * max_diag) {
        return None;
    }
    let cross = data.cross_gram();
    let mut coef = Matrix::zeros(data.responses(), q);
    for a in 0..data.responses() {
        coef.row_mut(a).copy_from_slice(&f.solve(cross.row(a)));
    }
    Some(coef)
}

pub fn solve_lasso(problem: &LassoProblem<'_>) -> Result<LassoSolution> {
    solve_lasso_with(problem, &LassoOptions::default(), None)
}

/// Solves from `warm` (or zero). Hitting the sweep cap is reported through
/// `converged = false`, not as an error.
pub fn solve_lasso_with(
    problem: &LassoProblem<'_>,
    opts: &LassoOptions,
    warm: Option<&Matrix>,
) -> Result<LassoSolution> {
    let mut cd = CoordinateDescent::new(problem, warm)?;
    if problem.lambda1 == 0.0 {
        if let Some(coef) = least_squares(problem.data) {
            let objective = lasso_objective(problem, &coef);
            return Ok(LassoSolution {
                coef,
                objective,
                iterations: 0,
                converged: true,
            });
        }
    }
    let (iterations, converged) = if problem.data.predictors() == 0 {
        (0, true)
    } else {
        cd.run(opts)
    };
    let coef = cd.into_coef();
    let objective = lasso_objective(problem, &coef);
    Ok(LassoSolution {
        coef,
        objective,
        iterations,
        converged,
    })
}
