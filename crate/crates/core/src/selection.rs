//! BIC and the (λ₁, λ₂) grid search.

use rayon::prelude::*;

use crate::block_model::PrecisionEstimate;
use crate::error::{Error, Result};
use crate::estimator::{center_columns, fit_detailed, Dataset, FitConfig, MethodMode};
use crate::glasso::glasso_lambda_max;
use crate::lasso::{lasso_lambda_max, LassoProblem, RegressionData};
use crate::linalg::{spd_cholesky, spd_logdet, SymMatrix};

/// Magnitude above which an entry counts as nonzero (BIC and FSL).
pub const NONZERO_THRESHOLD: f64 = 1e-6;

pub const DEFAULT_GRID_SIZE: usize = 10;
pub const DEFAULT_MIN_RATIO: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSource {
    Explicit,
    Auto { grid_size: usize, min_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub generated_from: GridSource,
}

impl TuningGrid {
    /// Sorts both axes descending and rejects negative or empty axes.
    pub fn explicit(mut lambda1_values: Vec<f64>, mut lambda2_values: Vec<f64>) -> Result<Self> {
        for v in lambda1_values.iter().chain(&lambda2_values) {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("grid value {v} must be finite and >= 0")));
            }
        }
        if lambda1_values.is_empty() || lambda2_values.is_empty() {
            return Err(Error::invalid("grid axes must be non-empty"));
        }
        lambda1_values.sort_by(|a, b| b.total_cmp(a));
        lambda2_values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            lambda1_values,
            lambda2_values,
            generated_from: GridSource::Explicit,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda1_values.len() * self.lambda2_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Methods without a regression step ignore λ₁, so their grid keeps only
    /// the first λ₁ value.
    pub fn for_method(&self, method: MethodMode) -> TuningGrid {
        if has_regression_step(method) {
            self.clone()
        } else {
            TuningGrid {
                lambda1_values: self.lambda1_values[..1].to_vec(),
                ..self.clone()
            }
        }
    }
}

fn has_regression_step(method: MethodMode) -> bool {
    !matches!(method, MethodMode::GlassoOnly | MethodMode::BlockDiagonal)
}

/// Count of strictly-lower entries with magnitude above the threshold.
pub fn lower_nonzeros(m: &SymMatrix) -> usize {
    let mut count = 0;
    for i in 0..m.dim() {
        for j in 0..i {
            if m[(i, j)].abs() > NONZERO_THRESHOLD {
                count += 1;
            }
        }
    }
    count
}

/// `-log|Ω| + tr(ΩS) + (ln n / n)·ν(Ω)`.
pub fn bic(est: &PrecisionEstimate, s: &SymMatrix, n: usize) -> Result<f64> {
    bic_of(&est.omega, s, n)
}

pub fn bic_of(omega: &SymMatrix, s: &SymMatrix, n: usize) -> Result<f64> {
    if omega.dim() != s.dim() {
        return Err(Error::invalid(format!("bic: Ω is {} but S is {}", omega.dim(), s.dim())));
    }
    if n < 2 {
        return Err(Error::invalid("bic: need n >= 2"));
    }
    let f = spd_cholesky(omega).map_err(|e| Error::invalid(format!("bic: {e}")))?;
    let nf = n as f64;
    Ok(-spd_logdet(&f) + omega.trace_product(s) + nf.ln() / nf * lower_nonzeros(omega) as f64)
}

fn log_spaced(top: f64, grid_size: usize, min_ratio: f64) -> Vec<f64> {
    let step = min_ratio.ln() / (grid_size - 1) as f64;
    (0..grid_size)
        .map(|i| {
            if i == 0 {
                top
            } else if i == grid_size - 1 {
                top * min_ratio
            } else {
                top * (step * i as f64).exp()
            }
        })
        .collect()
}

/// Largest useful λ₁ and λ₂ for `method` on `d`.
///
/// λ₂ is the largest off-diagonal magnitude of any group's covariance block.
/// λ₁ is the largest lasso `λ_max` over groups, taken under both the identity
/// weight (the first outer iteration) and the fully-shrunk diagonal weight
/// `diag(1/s_kk)` that the glasso returns at the top λ₂; above it every
/// regression block stays zero.
pub fn lambda_anchors(d: &Dataset, method: MethodMode) -> Result<(f64, f64)> {
    let partition = method.effective_partition(d.partition());
    let centered = center_columns(&d.with_partition(partition.clone())?);
    let s = centered.sample_covariance();
    if s.as_matrix().max_abs() == 0.0 {
        return Err(Error::invalid("data are constant: every column has zero variance"));
    }
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    for j in 0..partition.num_groups() {
        let sjj = s.principal_block(partition.offset(j), partition.size(j));
        l2 = l2.max(glasso_lambda_max(&sjj));
        let preds = method.predecessors(j);
        if preds.is_empty() {
            continue;
        }
        let data = RegressionData::new(centered.group_columns(&[j]), centered.group_columns(&preds))?;
        let identity = SymMatrix::identity(partition.size(j));
        l1 = l1.max(lasso_lambda_max(&LassoProblem::new(&data, &identity, 0.0)));
        let shrunk: Vec<f64> = sjj.as_matrix().diagonal().iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
        let shrunk = SymMatrix::from_diag(&shrunk);
        l1 = l1.max(lasso_lambda_max(&LassoProblem::new(&data, &shrunk, 0.0)));
    }
    Ok((l1, l2))
}

pub fn auto_grid(d: &Dataset, grid_size: usize, min_ratio: f64) -> Result<TuningGrid> {
    auto_grid_for(d, MethodMode::Bcd, grid_size, min_ratio)
}

/// Log-spaced grid from the method's anchors down to `min_ratio` times them.
/// An axis whose anchor is 0 collapses to `[0]`.
pub fn auto_grid_for(d: &Dataset, method: MethodMode, grid_size: usize, min_ratio: f64) -> Result<TuningGrid> {
    let (l1, l2) = lambda_anchors(d, method)?;
    grid_from_anchors(l1, l2, grid_size, min_ratio)
}

pub fn grid_from_anchors(l1: f64, l2: f64, grid_size: usize, min_ratio: f64) -> Result<TuningGrid> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid size must be >= 2, got {grid_size}")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::invalid(format!("min ratio must be in (0, 1), got {min_ratio}")));
    }
    let axis = |top: f64| if top > 0.0 { log_spaced(top, grid_size, min_ratio) } else { vec![0.0] };
    Ok(TuningGrid {
        lambda1_values: axis(l1),
        lambda2_values: axis(l2),
        generated_from: GridSource::Auto { grid_size, min_ratio },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicRow {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `+∞` when the fit failed.
    pub bic: f64,
    pub nnz: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best: PrecisionEstimate,
    pub best_index: usize,
    /// Ordered by (λ₁ index, λ₂ index) of the grid.
    pub table: Vec<BicRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectOptions {
    /// Start each λ₂ cell from the previous cell's `D⁻¹` blocks.
    pub warm_start: bool,
    /// Skip λ₁ rows below one in which every cell failed.
    pub prune_failed_rows: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self { warm_start: false, prune_failed_rows: true }
    }
}

/// A grid cell's table row and, when the fit succeeded, its estimate.
type Cell = (BicRow, Option<PrecisionEstimate>);

pub fn select(d: &Dataset, grid: &TuningGrid, template: &FitConfig) -> Result<Selection> {
    select_with(d, grid, template, SelectOptions::default())
}

pub fn select_with(d: &Dataset, grid: &TuningGrid, template: &FitConfig, opts: SelectOptions) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::invalid("empty tuning grid"));
    }
    let centered = if d.is_centered() { d.clone() } else { center_columns(d) };
    let s = centered.sample_covariance();
    let n = centered.n();
    let l2s = &grid.lambda2_values;

    let cell = |l1: f64, l2: f64, init: Option<&[SymMatrix]>| -> Cell {
        let outcome = fit_detailed(&centered, &template.with_lambdas(l1, l2), init)
            .and_then(|(est, _)| bic(&est, &s, n).map(|b| (b, est)));
        match outcome {
            Ok((b, est)) => (
                BicRow {
                    lambda1: l1,
                    lambda2: l2,
                    bic: b,
                    nnz: lower_nonzeros(&est.omega),
                    converged: est.converged(),
                },
                Some(est),
            ),
            Err(_) => (
                BicRow {
                    lambda1: l1,
                    lambda2: l2,
                    bic: f64::INFINITY,
                    nnz: 0,
                    converged: false,
                },
                None,
            ),
        }
    };

    let fit_row = |l1: f64| -> Vec<Cell> {
        if opts.warm_start {
            let mut row = Vec::with_capacity(l2s.len());
            let mut prev: Option<Vec<SymMatrix>> = None;
            for &l2 in l2s {
                let (r, est) = cell(l1, l2, prev.as_deref());
                if let Some(e) = &est {
                    prev = Some(e.dinv.blocks().to_vec());
                }
                row.push((r, est));
            }
            row
        } else {
            l2s.par_iter().map(|&l2| cell(l1, l2, None)).collect()
        }
    };
    let skipped = |l1: f64| -> Vec<Cell> {
        l2s.iter()
            .map(|&l2| {
                let row = BicRow { lambda1: l1, lambda2: l2, bic: f64::INFINITY, nnz: 0, converged: false };
                (row, None)
            })
            .collect()
    };

    // Rows run from the largest λ₁ down. Once a whole row fails, every
    // smaller λ₁ is skipped: lowering λ₁ only shrinks the residuals further.
    let l1s = &grid.lambda1_values;
    let mut order: Vec<usize> = (0..l1s.len()).collect();
    order.sort_by(|&a, &b| l1s[b].total_cmp(&l1s[a]));
    let mut rows: Vec<Option<Vec<Cell>>> = (0..l1s.len()).map(|_| None).collect();
    let mut floor: Option<f64> = None;
    for i in order {
        let l1 = l1s[i];
        let row = match floor {
            Some(f) if opts.prune_failed_rows && l1 <= f => skipped(l1),
            _ => {
                let row = fit_row(l1);
                if row.iter().all(|(_, est)| est.is_none()) {
                    floor = Some(l1);
                }
                row
            }
        };
        rows[i] = Some(row);
    }
    let cells: Vec<Cell> = rows.into_iter().flatten().flatten().collect();

    let mut best: Option<usize> = None;
    for (i, (row, est)) in cells.iter().enumerate() {
        if est.is_none() {
            continue;
        }
        best = Some(match best {
            None => i,
            Some(b) => {
                let cur = &cells[b].0;
                let tie = (row.bic - cur.bic).abs() <= 1e-12 * cur.bic.abs().max(1.0);
                let smaller = (row.lambda1, row.lambda2) < (cur.lambda1, cur.lambda2);
                if (tie && smaller) || (!tie && row.bic < cur.bic) {
                    i
                } else {
                    b
                }
            }
        });
    }
    let Some(best_index) = best else {
        // Surface the first cell's actual failure.
        let first = (grid.lambda1_values[0], l2s[0]);
        let err = fit_detailed(&centered, &template.with_lambdas(first.0, first.1), None)
            .and_then(|(est, _)| bic(&est, &s, n))
            .err()
            .unwrap_or_else(|| Error::invalid("every grid cell failed"));
        return Err(err.context("every grid cell failed; first cell"));
    };
    let mut table = Vec::with_capacity(cells.len());
    let mut best_est = None;
    for (i, (row, est)) in cells.into_iter().enumerate() {
        if i == best_index {
            best_est = est;
        }
        table.push(row);
    }
    Ok(Selection {
        best: best_est.expect("best cell has an estimate"),
        best_index,
        table,
    })
}
