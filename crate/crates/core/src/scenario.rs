//! Simulation truths (seven precision structures) and a seeded Gaussian sampler.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::block_model::GroupPartition;
use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::linalg::{spd_cholesky, spd_inverse, sym_eigenvalues, Matrix, SymMatrix};

/// Block size of `H` and lag of the shift in `B` for scenarios 5 and 6.
pub const SHIFT_LAG: usize = 20;
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbedKind {
    Ar(f64),
    Ma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: u8,
    pub p: usize,
    pub partition: GroupPartition,
    pub seed: u64,
    pub alpha_step: f64,
    pub alpha_floor: f64,
}

impl ScenarioSpec {
    pub fn new(id: u8, partition: GroupPartition, seed: u64) -> Self {
        Self {
            id,
            p: partition.total(),
            partition,
            seed,
            alpha_step: 0.05,
            alpha_floor: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.id) {
            return Err(Error::invalid(format!("scenario must be 1..7, got {}", self.id)));
        }
        self.partition.check_total(self.p)?;
        if matches!(self.id, 5 | 6) && self.p < SHIFT_LAG + 2 {
            return Err(Error::invalid(format!(
                "scenario {} needs p >= {}, got {}",
                self.id,
                SHIFT_LAG + 2,
                self.p
            )));
        }
        if !(self.alpha_step > 0.0) || !self.alpha_floor.is_finite() {
            return Err(Error::invalid("alpha_step must be > 0 and alpha_floor finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTruth {
    pub omega: SymMatrix,
    pub sigma: SymMatrix,
    /// Row-major `p x p` mask of `|ω_ij| > 1e-12`.
    pub support: Vec<bool>,
    /// Diagonal shift added to reach the eigenvalue floor (0 if none).
    pub alpha: f64,
}

impl GeneratedTruth {
    pub fn from_omega(omega: SymMatrix, alpha: f64) -> Result<Self> {
        let sigma = spd_inverse(&spd_cholesky(&omega)?);
        let support = omega.as_matrix().as_slice().iter().map(|v| v.abs() > SUPPORT_THRESHOLD).collect();
        Ok(Self {
            omega,
            sigma,
            support,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        self.support[i * self.dim() + j]
    }
}

pub fn ar_matrix(dim: usize, rho: f64) -> SymMatrix {
    SymMatrix::from_lower(Matrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

pub fn ma_matrix(dim: usize) -> SymMatrix {
    SymMatrix::from_lower(Matrix::from_fn(dim, dim, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        2 => 0.4,
        3 => 0.3,
        _ => 0.0,
    }))
}

/// Square generator of size `min(rows, cols)` in the top-left corner, zero
/// padded to the right or below.
pub fn rect_embed(kind: EmbedKind, rows: usize, cols: usize) -> Matrix {
    let k = rows.min(cols);
    let square = match kind {
        EmbedKind::Ar(rho) => ar_matrix(k, rho),
        EmbedKind::Ma => ma_matrix(k),
    };
    let mut out = Matrix::zeros(rows, cols);
    out.set_block(0, 0, square.as_matrix());
    out
}

fn block_pattern(partition: &GroupPartition, diag: impl Fn(usize) -> SymMatrix, off: EmbedKind) -> Matrix {
    let p = partition.total();
    let mut m = Matrix::zeros(p, p);
    for a in 0..partition.num_groups() {
        for b in 0..partition.num_groups() {
            let block = if a == b {
                diag(partition.size(a)).into_matrix()
            } else {
                rect_embed(off, partition.size(a), partition.size(b))
            };
            m.set_block(partition.offset(a), partition.offset(b), &block);
        }
    }
    m
}

fn block_diag(sizes: impl Iterator<Item = usize>, gen: impl Fn(usize) -> SymMatrix) -> Matrix {
    let blocks: Vec<SymMatrix> = sizes.map(gen).collect();
    let p = blocks.iter().map(|b| b.dim()).sum();
    let mut m = Matrix::zeros(p, p);
    let mut at = 0;
    for b in &blocks {
        m.set_block(at, at, b.as_matrix());
        at += b.dim();
    }
    m
}

/// `B' H B` with `H` block diagonal (blocks of `SHIFT_LAG`) and `B` unit
/// lower triangular with the lag-20 (and for scenario 6 lag-21) shift.
fn shifted_structure(p: usize, h_block: impl Fn(usize) -> SymMatrix, with_second_lag: bool) -> Matrix {
    let sizes = (0..p).step_by(SHIFT_LAG).map(|start| SHIFT_LAG.min(p - start));
    let h = block_diag(sizes, h_block);
    let mut b = Matrix::identity(p);
    for i in 0..p {
        if i + SHIFT_LAG < p {
            b[(i + SHIFT_LAG, i)] = -0.8;
        }
        if with_second_lag && i + SHIFT_LAG + 1 < p {
            b[(i + SHIFT_LAG + 1, i)] = 0.5;
        }
    }
    b.transpose().matmul(&h).matmul(&b)
}

/// Smallest multiple of `step` that lifts the minimum eigenvalue to `floor`.
fn inflation(base: &SymMatrix, step: f64, floor: f64) -> Result<f64> {
    let lmin = *sym_eigenvalues(base)?.last().expect("dim >= 1");
    if lmin >= floor {
        return Ok(0.0);
    }
    let mut k = ((floor - lmin) / step).ceil().max(0.0);
    while lmin + k * step < floor {
        k += 1.0;
    }
    Ok(k * step)
}

fn add_diagonal(m: &SymMatrix, alpha: f64) -> SymMatrix {
    let mut out = m.clone().into_matrix();
    for i in 0..out.rows() {
        out[(i, i)] += alpha;
    }
    SymMatrix::from_lower(out)
}

/// Permutation that shuffles indices within each group and keeps groups in place.
pub fn within_group_permutation(partition: &GroupPartition, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..partition.total()).collect();
    for j in 0..partition.num_groups() {
        perm[partition.range(j)].shuffle(rng);
    }
    perm
}

pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedTruth> {
    spec.validate()?;
    let p = spec.p;
    let part = &spec.partition;
    let mut rng = stream_rng(spec.seed, TRUTH_STREAM);
    let (base, inflate) = match spec.id {
        1 => (ar_matrix(p, 0.8).into_matrix(), false),
        2 => (block_diag(part.sizes().iter().copied(), |k| ar_matrix(k, 0.5)), false),
        3 => (block_pattern(part, ma_matrix, EmbedKind::Ar(0.5)), true),
        4 => {
            let m = SymMatrix::from_lower(block_pattern(part, |k| ar_matrix(k, 0.5), EmbedKind::Ma));
            let perm = within_group_permutation(part, &mut rng);
            (m.permuted(&perm).into_matrix(), true)
        }
        5 => (shifted_structure(p, |k| ar_matrix(k, 0.5), false), false),
        6 => (shifted_structure(p, ma_matrix, true), false),
        7 => {
            let mut m = Matrix::zeros(p, p);
            for i in 0..p {
                for j in (i + 1)..p {
                    if rng.random_bool(0.15) {
                        let v = rng.random_range(-1.0..1.0);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            }
            (m, true)
        }
        _ => unreachable!("validated"),
    };
    let base = SymMatrix::symmetrize(&base);
    let alpha = if inflate {
        inflation(&base, spec.alpha_step, spec.alpha_floor)?
    } else {
        0.0
    };
    let omega = if alpha > 0.0 { add_diagonal(&base, alpha) } else { base };
    GeneratedTruth::from_omega(omega, alpha)
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// ChaCha20 stream ids derived from one seed.
pub const TRUTH_STREAM: u64 = 0;
pub const SAMPLE_STREAM: u64 = 1;
pub const SHUFFLE_STREAM: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` rows of `N(0, Σ)` as `x = L z`, `L` the Cholesky factor of Σ and `z`
/// standard normal by inverse CDF from the sample stream of `seed`.
pub fn sample_mvn(truth: &GeneratedTruth, n: usize, seed: u64, partition: &GroupPartition) -> Result<Dataset> {
    let p = truth.dim();
    let l = spd_cholesky(&truth.sigma)?;
    let l = l.lower();
    let normal = Normal::standard();
    let mut rng = stream_rng(seed, SAMPLE_STREAM);
    let mut data = Matrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = normal.inverse_cdf(open_unit(&mut rng));
        }
        let row = data.row_mut(i);
        for (r, out) in row.iter_mut().enumerate() {
            let lr = l.row(r);
            *out = lr[..=r].iter().zip(&z[..=r]).map(|(a, b)| a * b).sum();
        }
    }
    Dataset::new(data, partition.clone())
}
