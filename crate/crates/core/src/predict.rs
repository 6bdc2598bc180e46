//! Conditional-Gaussian prediction of late coordinates from early ones.

use rayon::prelude::*;

use crate::block_model::PrecisionEstimate;
use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::linalg::{spd_cholesky, Matrix, SpdFactor};

/// Fitted model for predicting coordinates `split..p` from `0..split`.
#[derive(Debug, Clone)]
pub struct PredictTask {
    pub split_index: usize,
    pub mean: Vec<f64>,
    pub precision: PrecisionEstimate,
    late_factor: SpdFactor,
}

impl PredictTask {
    pub fn new(split_index: usize, mean: Vec<f64>, precision: PrecisionEstimate) -> Result<Self> {
        let p = precision.omega.dim();
        if mean.len() != p {
            return Err(Error::invalid(format!("mean has {} entries, estimate is {p}", mean.len())));
        }
        if split_index == 0 || split_index >= p {
            return Err(Error::invalid(format!("split must be in 1..{p}, got {split_index}")));
        }
        let late = precision.omega.principal_block(split_index, p - split_index);
        let late_factor = spd_cholesky(&late).map_err(|e| e.context("late block of Ω"))?;
        Ok(Self {
            split_index,
            mean,
            precision,
            late_factor,
        })
    }

    pub fn late_count(&self) -> usize {
        self.mean.len() - self.split_index
    }

    /// `μ₂ − Ω₂₂⁻¹ Ω₁₂ᵀ (y_E − μ₁)`.
    pub fn predict(&self, early: &[f64]) -> Result<Vec<f64>> {
        let s = self.split_index;
        if early.len() != s {
            return Err(Error::invalid(format!("expected {s} early values, got {}", early.len())));
        }
        let omega = &self.precision.omega;
        let late = self.late_count();
        let mut rhs = vec![0.0; late];
        for (k, (&y, &mu)) in early.iter().zip(&self.mean[..s]).enumerate() {
            let dev = y - mu;
            if dev != 0.0 {
                for (l, r) in rhs.iter_mut().enumerate() {
                    *r += omega[(k, s + l)] * dev;
                }
            }
        }
        let shift = self.late_factor.solve(&rhs);
        Ok(self.mean[s..].iter().zip(shift).map(|(m, d)| m - d).collect())
    }
}

/// The split must fall strictly inside `1..p` and on a group boundary.
pub fn check_split(partition: &crate::block_model::GroupPartition, split: usize) -> Result<()> {
    let p = partition.total();
    if split == 0 || split >= p {
        return Err(Error::invalid(format!("split must be in 1..{p}, got {split}")));
    }
    if !partition.is_boundary(split) {
        return Err(Error::invalid(format!("split {split} is not on a group boundary")));
    }
    Ok(())
}

/// `y -> sqrt(y + 1/4)` applied entrywise (count data).
pub fn sqrt_transform(data: &Matrix) -> Result<Matrix> {
    if data.as_slice().iter().any(|&v| v < -0.25) {
        return Err(Error::invalid("sqrt transform needs values >= -1/4"));
    }
    let mut out = data.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = (*v + 0.25).sqrt());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeReport {
    pub split_index: usize,
    /// Mean absolute error per late coordinate.
    pub ape: Vec<f64>,
    /// Standard error of each entry of `ape`.
    pub se: Vec<f64>,
    pub overall: f64,
    pub held_out: usize,
}

fn summarize(split_index: usize, errors: &[Vec<f64>]) -> ApeReport {
    let m = errors.len() as f64;
    let late = errors.first().map_or(0, |e| e.len());
    let mut ape = vec![0.0; late];
    for e in errors {
        for (a, v) in ape.iter_mut().zip(e) {
            *a += v / m;
        }
    }
    let se = (0..late)
        .map(|l| {
            if errors.len() < 2 {
                return 0.0;
            }
            let ss: f64 = errors.iter().map(|e| (e[l] - ape[l]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt() / m.sqrt()
        })
        .collect();
    let overall = if late == 0 { 0.0 } else { ape.iter().sum::<f64>() / late as f64 };
    ApeReport {
        split_index,
        ape,
        se,
        overall,
        held_out: errors.len(),
    }
}

fn abs_errors(task: &PredictTask, row: &[f64]) -> Result<Vec<f64>> {
    let s = task.split_index;
    let pred = task.predict(&row[..s])?;
    Ok(pred.iter().zip(&row[s..]).map(|(a, b)| (a - b).abs()).collect())
}

/// Train on `train`, predict every row of `test`.
pub fn evaluate_split<F>(train: &Dataset, test: &Matrix, split: usize, fit: F) -> Result<ApeReport>
where
    F: Fn(&Dataset) -> Result<PrecisionEstimate>,
{
    if test.cols() != train.p() {
        return Err(Error::invalid(format!("test has {} columns, train has {}", test.cols(), train.p())));
    }
    if test.rows() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    check_split(train.partition(), split)?;
    let task = PredictTask::new(split, train.column_means(), fit(train)?)?;
    let errors = (0..test.rows()).map(|i| abs_errors(&task, test.row(i))).collect::<Result<Vec<_>>>()?;
    Ok(summarize(split, &errors))
}

/// Leave-one-out: each row is predicted by a model fitted on all other rows.
pub fn leave_one_out<F>(d: &Dataset, split: usize, fit: F) -> Result<ApeReport>
where
    F: Fn(&Dataset) -> Result<PrecisionEstimate> + Sync,
{
    check_split(d.partition(), split)?;
    let n = d.n();
    if n < 3 {
        return Err(Error::invalid("leave-one-out needs at least 3 rows"));
    }
    let errors = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let train = Dataset::new(d.data().select_rows(&keep), d.partition().clone())?;
            let task = PredictTask::new(split, train.column_means(), fit(&train).map_err(|e| e.context(format!("fold {}", i + 1)))?)?;
            abs_errors(&task, d.data().row(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(split, &errors))
}
