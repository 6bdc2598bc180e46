//! Block Cholesky estimation of a sparse precision matrix.
//!
//! Each group `j` is fitted independently: starting from `D_j = I`, alternate
//! a weighted Lasso for the regression of group `j` on its predecessor groups
//! and a graphical lasso on the residual covariance, until both the
//! coefficients and the residual covariance stop moving (squared Frobenius
//! change below `tau1` / `tau2`) or the outer iteration cap is reached. The
//! blocks are then assembled as `Ω = Tᵀ D⁻¹ T`.

use rayon::prelude::*;

use crate::block_model::{assemble, BlockDiagSpd, BlockLowerUnit, GroupPartition, PrecisionEstimate};
use crate::error::{Error, Result};
use crate::glasso::{solve_glasso_with, GlassoOptions, GlassoProblem};
use crate::lasso::{solve_lasso_with, LassoOptions, LassoProblem, RegressionData};
use crate::linalg::{spd_cholesky, spd_inverse, spd_logdet, Matrix, SymMatrix};

/// Which special case of the block decomposition to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodMode {
    /// Block Cholesky with the data's partition.
    Bcd,
    /// Full ordering: every variable is its own group.
    Mcd,
    /// One group: plain graphical lasso on the sample covariance.
    GlassoOnly,
    /// `T = I`: independent graphical lassos on the diagonal blocks.
    BlockDiagonal,
    /// Each group regresses only on the `k` nearest preceding groups.
    Banded(usize),
}

impl MethodMode {
    /// Parses the command-line spelling: `prop`, `mcd`, `glasso`,
    /// `block-diag` or `banded:K`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "prop" | "bcd" => Ok(MethodMode::Bcd),
            "mcd" => Ok(MethodMode::Mcd),
            "glasso" => Ok(MethodMode::GlassoOnly),
            "block-diag" => Ok(MethodMode::BlockDiagonal),
            other => {
                if let Some(k) = other.strip_prefix("banded:") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad band width in {other:?}")))?;
                    if k == 0 {
                        return Err(Error::invalid("band width must be >= 1"));
                    }
                    Ok(MethodMode::Banded(k))
                } else {
                    Err(Error::invalid(format!("unknown method {other:?}")))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            MethodMode::Bcd => "prop".into(),
            MethodMode::Mcd => "mcd".into(),
            MethodMode::GlassoOnly => "glasso".into(),
            MethodMode::BlockDiagonal => "block-diag".into(),
            MethodMode::Banded(k) => format!("banded:{k}"),
        }
    }

    /// The partition the method actually fits with.
    pub fn effective_partition(&self, partition: &GroupPartition) -> GroupPartition {
        let p = partition.total();
        match self {
            MethodMode::Mcd => GroupPartition::singletons(p).expect("p >= 1"),
            MethodMode::GlassoOnly => GroupPartition::single(p).expect("p >= 1"),
            _ => partition.clone(),
        }
    }

    /// Groups that group `j` regresses on.
    pub fn predecessors(&self, j: usize) -> Vec<usize> {
        match self {
            MethodMode::BlockDiagonal | MethodMode::GlassoOnly => Vec::new(),
            MethodMode::Banded(k) => (j.saturating_sub(*k)..j).collect(),
            MethodMode::Bcd | MethodMode::Mcd => (0..j).collect(),
        }
    }
}

pub const DEFAULT_COLLAPSE_RATIO: f64 = 1e-3;
/// Residual variance at rounding level: the sample is exactly collinear.
pub const DEGENERATE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub max_outer_iterations: usize,
    /// A group fit is abandoned once some residual variance falls below this
    /// fraction of the response's sample variance: the predecessors then
    /// interpolate the group and the penalised likelihood has no minimiser.
    /// Groups with fewer than n - 1 predictors use the smaller of this and
    /// `DEGENERATE_RATIO`. Zero disables the check.
    pub collapse_ratio: f64,
    pub method: MethodMode,
    pub lasso: LassoOptions,
    pub glasso: GlassoOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            tau1: 1e-6,
            tau2: 1e-6,
            max_outer_iterations: 100,
            collapse_ratio: DEFAULT_COLLAPSE_RATIO,
            method: MethodMode::Bcd,
            lasso: LassoOptions::default(),
            glasso: GlassoOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            ..Self::default()
        }
    }

    pub fn with_method(mut self, method: MethodMode) -> Self {
        self.method = method;
        self
    }

    pub fn with_lambdas(&self, lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.tau1 > 0.0) || !(self.tau2 > 0.0) {
            return Err(Error::invalid("tau1 and tau2 must be > 0"));
        }
        if !(0.0..1.0).contains(&self.collapse_ratio) {
            return Err(Error::invalid("collapse_ratio must lie in [0, 1)"));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::invalid("max_outer_iterations must be >= 1"));
        }
        if self.method == MethodMode::Banded(0) {
            return Err(Error::invalid("band width must be >= 1"));
        }
        Ok(())
    }
}

/// An `n x p` data matrix with its group partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Matrix,
    partition: GroupPartition,
    centered: bool,
}

impl Dataset {
    pub fn new(data: Matrix, partition: GroupPartition) -> Result<Self> {
        if data.rows() < 2 {
            return Err(Error::invalid(format!("need at least 2 rows, got {}", data.rows())));
        }
        partition.check_total(data.cols())?;
        if !data.is_finite() {
            return Err(Error::invalid("data contains non-finite values"));
        }
        Ok(Self {
            data,
            partition,
            centered: false,
        })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn p(&self) -> usize {
        self.data.cols()
    }

    /// Same data under a different partition.
    pub fn with_partition(&self, partition: GroupPartition) -> Result<Self> {
        partition.check_total(self.p())?;
        Ok(Self {
            partition,
            ..self.clone()
        })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n() as f64;
        let mut means = vec![0.0; self.p()];
        for i in 0..self.n() {
            for (m, v) in means.iter_mut().zip(self.data.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// `XᵀX / n` of the centered data.
    pub fn sample_covariance(&self) -> SymMatrix {
        let centered;
        let x = if self.centered {
            &self.data
        } else {
            centered = center_columns(self);
            &centered.data
        };
        SymMatrix::from_lower(x.t_matmul_scaled(x, 1.0 / self.n() as f64))
    }

    /// Columns of the listed groups, concatenated in order.
    pub fn group_columns(&self, groups: &[usize]) -> Matrix {
        let cols: Vec<usize> = groups.iter().flat_map(|&g| self.partition.range(g)).collect();
        self.data.select_columns(&cols)
    }
}

pub fn center_columns(d: &Dataset) -> Dataset {
    let means = d.column_means();
    let mut data = d.data.clone();
    for i in 0..data.rows() {
        for (v, m) in data.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    Dataset {
        data,
        partition: d.partition.clone(),
        centered: true,
    }
}

/// Design block for group `j` under a band of width `k`: the columns of groups
/// `max(0, j - k) .. j`.
pub fn banded_design(d: &Dataset, j: usize, k: usize) -> Matrix {
    d.group_columns(&MethodMode::Banded(k).predecessors(j))
}

/// Result of the alternating fit for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub group: usize,
    pub predecessors: Vec<usize>,
    /// `A_j`, `p_j x q_j`.
    pub coef: Matrix,
    /// `D_j⁻¹`.
    pub theta: SymMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized group objective after each outer iteration.
    pub objective_trace: Vec<f64>,
}

/// `-log|Θ| + tr(S_ε Θ) + λ₁‖A‖₁ + λ₂‖Θ‖₁⁻`.
pub fn group_objective(s_eps: &SymMatrix, theta: &SymMatrix, coef: &Matrix, lambda1: f64, lambda2: f64) -> f64 {
    let Ok(f) = spd_cholesky(theta) else {
        return f64::INFINITY;
    };
    let n = theta.dim();
    let mut off = 0.0;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                off += theta[(i, k)].abs();
            }
        }
    }
    let l1: f64 = coef.as_slice().iter().map(|v| v.abs()).sum();
    -spd_logdet(&f) + s_eps.trace_product(theta) + lambda1 * l1 + lambda2 * off
}

/// Alternating Lasso / graphical-lasso fit of group `j` on `predecessors`.
///
/// `d` must be centered. `init_theta` replaces the `D_j = I` start.
fn check_collapse(s_eps: &SymMatrix, sxx: &Matrix, ratio: f64) -> Result<()> {
    for k in 0..s_eps.dim() {
        let (r, v) = (s_eps.as_matrix()[(k, k)], sxx[(k, k)]);
        if r < ratio * v {
            return Err(Error::not_pd(format!(
                "residual variance of response {} collapsed to {r:.3e} (sample variance {v:.3e}); increase lambda1",
                k + 1
            )));
        }
    }
    Ok(())
}

pub fn fit_group(
    d: &Dataset,
    j: usize,
    predecessors: &[usize],
    config: &FitConfig,
    init_theta: Option<&SymMatrix>,
) -> Result<GroupFit> {
    let ctx = format!("group {}", j + 1);
    let x = d.group_columns(&[j]);
    let z = d.group_columns(predecessors);
    let data = RegressionData::new(x, z).map_err(|e| e.context(&ctx))?;
    let pj = data.responses();
    let qj = data.predictors();

    if qj == 0 {
        let s = SymMatrix::from_lower(data.response_gram().clone());
        let sol = solve_glasso_with(&GlassoProblem::new(&s, config.lambda2), &config.glasso)
            .map_err(|e| e.context(&ctx))?;
        let coef = Matrix::zeros(pj, 0);
        let obj = group_objective(&s, &sol.theta, &coef, config.lambda1, config.lambda2);
        return Ok(GroupFit {
            group: j,
            predecessors: Vec::new(),
            coef,
            theta: sol.theta,
            iterations: 1,
            converged: sol.converged,
            objective_trace: vec![obj],
        });
    }

    let mut theta = match init_theta {
        Some(t) if t.dim() == pj => t.clone(),
        Some(_) => return Err(Error::invalid(format!("{ctx}: initial D⁻¹ has the wrong size"))),
        None => SymMatrix::identity(pj),
    };
    // Centered data has rank at most n - 1. With fewer predictors only an
    // exactly collinear sample lets the residuals vanish.
    let can_interpolate = qj + 1 >= data.n();
    let mut cov = spd_inverse(&spd_cholesky(&theta).map_err(|e| e.context(&ctx))?);
    let mut coef = Matrix::zeros(pj, qj);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iterations {
        iterations += 1;
        let lasso = solve_lasso_with(
            &LassoProblem::new(&data, &theta, config.lambda1),
            &config.lasso,
            Some(&coef),
        )
        .map_err(|e| e.context(&ctx))?;
        let new_coef = lasso.coef;

        let s_eps = data.residual_covariance(&new_coef);
        let ratio = if can_interpolate { config.collapse_ratio } else { config.collapse_ratio.min(DEGENERATE_RATIO) };
        check_collapse(&s_eps, data.response_gram(), ratio).map_err(|e| e.context(&ctx))?;
        let sol = solve_glasso_with(&GlassoProblem::new(&s_eps, config.lambda2), &config.glasso)
            .map_err(|e| e.context(&ctx))?;
        let mut obj = group_objective(&s_eps, &sol.theta, &new_coef, config.lambda1, config.lambda2);
        let new_theta = if iterations > 1 {
            // The glasso answer is only accurate to its tolerance; never take
            // a step that is clearly worse than staying put. Differences at
            // rounding level must not freeze the iterate short of the optimum.
            let stay = group_objective(&s_eps, &theta, &new_coef, config.lambda1, config.lambda2);
            if stay < obj - 1e-12 * obj.abs().max(1.0) {
                obj = stay;
                theta.clone()
            } else {
                sol.theta
            }
        } else {
            sol.theta
        };
        let new_cov = spd_inverse(&spd_cholesky(&new_theta).map_err(|e| e.context(&ctx))?);

        let d_coef = new_coef.sub(&coef).frobenius_sq();
        let d_cov = new_cov.as_matrix().sub(cov.as_matrix()).frobenius_sq();
        coef = new_coef;
        theta = new_theta;
        cov = new_cov;
        trace.push(obj);
        if d_coef < config.tau1 && d_cov < config.tau2 {
            converged = true;
            break;
        }
    }

    Ok(GroupFit {
        group: j,
        predecessors: predecessors.to_vec(),
        coef,
        theta,
        iterations,
        converged,
        objective_trace: trace,
    })
}

pub fn fit(d: &Dataset, c: &FitConfig) -> Result<PrecisionEstimate> {
    Ok(fit_detailed(d, c, None)?.0)
}

/// Fits every group (concurrently on the current rayon pool) and assembles the
/// estimate. `init` optionally supplies a starting `D_j⁻¹` per group.
pub fn fit_detailed(
    d: &Dataset,
    c: &FitConfig,
    init: Option<&[SymMatrix]>,
) -> Result<(PrecisionEstimate, Vec<GroupFit>)> {
    c.validate()?;
    let partition = c.method.effective_partition(d.partition());
    let centered = if d.is_centered() {
        d.with_partition(partition.clone())?
    } else {
        center_columns(&d.with_partition(partition.clone())?)
    };
    let m = partition.num_groups();
    if let Some(init) = init {
        if init.len() != m {
            return Err(Error::invalid(format!("expected {m} initial blocks, got {}", init.len())));
        }
    }

    // Later groups have more predecessors and fail first when they fail at
    // all, so they are scheduled first.
    let mut groups: Vec<GroupFit> = (0..m)
        .into_par_iter()
        .rev()
        .map(|j| {
            let preds = c.method.predecessors(j);
            fit_group(&centered, j, &preds, c, init.map(|i| &i[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    groups.reverse();

    let mut t = BlockLowerUnit::identity(partition.clone());
    for g in &groups {
        if !g.predecessors.is_empty() {
            t.set_regression_row(g.group, &g.predecessors, &g.coef)?;
        }
    }
    let dinv = BlockDiagSpd::new(partition.clone(), groups.iter().map(|g| g.theta.clone()).collect())?;
    let omega = assemble(&t, &dinv)?;
    spd_cholesky(&omega).map_err(|e| e.context("assembled estimate"))?;
    let estimate = PrecisionEstimate {
        partition,
        t,
        dinv,
        omega,
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        per_group_iterations: groups.iter().map(|g| g.iterations).collect(),
        converged_flags: groups.iter().map(|g| g.converged).collect(),
    };
    Ok((estimate, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glasso::solve_glasso;
    use crate::linalg::spd_invert;
    use crate::testutil::random_data;

    fn correlated_data(n: usize, p: usize, seed: u64) -> Matrix {
        let mut x = random_data(n, p, seed);
        for i in 0..n {
            for j in 1..p {
                let prev = x[(i, j - 1)];
                x[(i, j)] += 0.5 * prev;
            }
        }
        x
    }

    #[test]
    fn method_parsing() {
        assert_eq!(MethodMode::parse("prop").unwrap(), MethodMode::Bcd);
        assert_eq!(MethodMode::parse("banded:3").unwrap(), MethodMode::Banded(3));
        assert!(MethodMode::parse("banded:0").is_err());
        assert!(MethodMode::parse("scio").is_err());
        for m in [MethodMode::Bcd, MethodMode::Mcd, MethodMode::GlassoOnly, MethodMode::BlockDiagonal, MethodMode::Banded(2)] {
            assert_eq!(MethodMode::parse(&m.name()).unwrap(), m);
        }
    }

    #[test]
    fn centering_examples() {
        let part = GroupPartition::new(vec![2]).unwrap();
        let d = Dataset::new(Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap(), part).unwrap();
        let c = center_columns(&d);
        assert!(c.is_centered());
        assert_eq!(c.data().column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.data().column(1), vec![0.0, 0.0, 0.0]);
        let again = center_columns(&c);
        assert!(again.data().max_abs_diff(c.data()) < 1e-12);
    }

    #[test]
    fn dataset_validation() {
        let part = GroupPartition::new(vec![2, 2]).unwrap();
        let err = Dataset::new(Matrix::zeros(5, 3), part.clone()).unwrap_err();
        assert!(err.to_string().contains("partition total ≠ p"));
        assert!(Dataset::new(Matrix::zeros(1, 4), part.clone()).is_err());
        let mut m = Matrix::zeros(3, 4);
        m[(0, 0)] = f64::INFINITY;
        assert!(Dataset::new(m, part).is_err());
    }

    #[test]
    fn banded_design_selects_nearest_groups() {
        let part = GroupPartition::new(vec![1, 2, 1, 2]).unwrap();
        let data = Matrix::from_fn(3, 6, |i, j| (10 * i + j) as f64);
        let d = Dataset::new(data.clone(), part).unwrap();
        let full = d.group_columns(&[0, 1]);
        assert_eq!(banded_design(&d, 2, 2), full);
        assert_eq!(banded_design(&d, 2, 5), full);
        let only_prev = banded_design(&d, 2, 1);
        assert_eq!(only_prev, data.select_columns(&[1, 2]));
    }

    #[test]
    fn unpenalized_fit_recovers_inverse_sample_covariance() {
        let part = GroupPartition::new(vec![2, 2, 2]).unwrap();
        let d = Dataset::new(correlated_data(500, 6, 1), part).unwrap();
        let est = fit(&d, &FitConfig::new(0.0, 0.0)).unwrap();
        let expected = spd_invert(&d.sample_covariance()).unwrap();
        let err = est.omega.as_matrix().max_abs_diff(expected.as_matrix());
        assert!(err < 1e-8, "max abs error {err}");
    }

    #[test]
    fn glasso_mode_matches_direct_glasso() {
        let part = GroupPartition::new(vec![3, 3]).unwrap();
        let d = Dataset::new(correlated_data(60, 6, 2), part).unwrap();
        let s = d.sample_covariance();
        let est = fit(&d, &FitConfig::new(0.3, 0.05).with_method(MethodMode::GlassoOnly)).unwrap();
        let direct = solve_glasso(&GlassoProblem::new(&s, 0.05)).unwrap();
        assert!(est.omega.as_matrix().max_abs_diff(direct.theta.as_matrix()) < 1e-6);
        assert_eq!(est.partition.num_groups(), 1);
    }

    #[test]
    fn interpolating_group_is_rejected() {
        // Ten predictors for eight centered rows: a tiny λ₁ fits group 2 exactly.
        let d = Dataset::new(random_data(8, 12, 4), GroupPartition::new(vec![10, 2]).unwrap()).unwrap();
        let err = fit(&d, &FitConfig::new(1e-4, 0.01)).unwrap_err();
        assert!(matches!(&err, Error::NotPositiveDefinite(m) if m.contains("collapsed")), "{err}");
        assert!(fit(&d, &FitConfig::new(10.0, 0.01)).is_ok());
    }

    #[test]
    fn block_diagonal_mode_has_identity_t() {
        let part = GroupPartition::new(vec![2, 3]).unwrap();
        let d = Dataset::new(correlated_data(60, 5, 3), part.clone()).unwrap();
        let s = d.sample_covariance();
        let est = fit(&d, &FitConfig::new(0.1, 0.05).with_method(MethodMode::BlockDiagonal)).unwrap();
        assert!(est.t.is_identity());
        for j in 0..2 {
            let sjj = s.principal_block(part.offset(j), part.size(j));
            let direct = solve_glasso(&GlassoProblem::new(&sjj, 0.05)).unwrap();
            assert_eq!(est.dinv.blocks()[j], direct.theta);
        }
    }

    #[test]
    fn banded_mode_zeroes_far_blocks() {
        let part = GroupPartition::new(vec![2, 2, 2, 2]).unwrap();
        let d = Dataset::new(correlated_data(80, 8, 4), part).unwrap();
        let est = fit(&d, &FitConfig::new(0.01, 0.01).with_method(MethodMode::Banded(1))).unwrap();
        for (j, i) in [(2, 0), (3, 0), (3, 1)] {
            assert!(est.t.block(j, i).is_none());
        }
        let td = est.t.to_dense();
        for (r, c) in [(4, 0), (5, 1), (6, 0), (7, 3)] {
            assert_eq!(td[(r, c)], 0.0);
        }
        assert!(est.t.block(1, 0).is_some());
    }

    #[test]
    fn mcd_equals_singleton_partition() {
        let part = GroupPartition::new(vec![2, 3]).unwrap();
        let d = Dataset::new(correlated_data(40, 5, 5), part).unwrap();
        let cfg = FitConfig::new(0.05, 0.02);
        let mcd = fit(&d, &cfg.clone().with_method(MethodMode::Mcd)).unwrap();
        let single = d.with_partition(GroupPartition::singletons(5).unwrap()).unwrap();
        let bcd = fit(&single, &cfg).unwrap();
        assert_eq!(mcd.omega, bcd.omega);
    }

    #[test]
    fn singular_residual_without_penalty_is_not_pd() {
        // Group of 6 variables with only 4 observations.
        let part = GroupPartition::new(vec![6]).unwrap();
        let d = Dataset::new(random_data(4, 6, 6), part).unwrap();
        let err = fit(&d, &FitConfig::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)), "{err}");
        assert!(err.to_string().contains("group 1"));
    }

    #[test]
    fn objective_trace_is_monotone_and_estimate_pd() {
        let part = GroupPartition::new(vec![3, 3, 4]).unwrap();
        let d = Dataset::new(correlated_data(40, 10, 7), part).unwrap();
        for (l1, l2) in [(0.01, 0.01), (0.1, 0.05), (0.3, 0.2)] {
            let (est, groups) = fit_detailed(&d, &FitConfig::new(l1, l2), None).unwrap();
            assert!(spd_cholesky(&est.omega).is_ok());
            for g in &groups {
                for w in g.objective_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0), "{:?}", g.objective_trace);
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let part = GroupPartition::new(vec![2]).unwrap();
        let d = Dataset::new(random_data(5, 2, 1), part).unwrap();
        assert!(fit(&d, &FitConfig::new(-1.0, 0.1)).is_err());
        let mut c = FitConfig::new(0.1, 0.1);
        c.tau1 = 0.0;
        assert!(fit(&d, &c).is_err());
    }
}
