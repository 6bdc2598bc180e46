//! Replicate harness: generate a truth, sample, tune each method by BIC and
//! score it against the truth.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::block_model::{GroupPartition, PrecisionEstimate};
use crate::error::{Error, Result};
use crate::estimator::{Dataset, FitConfig, MethodMode};
use crate::io::fmt_f64;
use crate::linalg::SymMatrix;
use crate::metrics::{aggregate, losses, Aggregate, LossReport, METRIC_NAMES};
use crate::scenario::{generate, sample_mvn, stream_rng, within_group_permutation, ScenarioSpec, SHUFFLE_STREAM};
use crate::selection::{grid_from_anchors, lambda_anchors, select_with, SelectOptions, TuningGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    Mode(MethodMode),
    /// Prop fitted on data whose columns are shuffled within each group, then
    /// mapped back to the original layout.
    PropShuffled,
}

impl SimMethod {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "prop*" | "prop-star" => Ok(SimMethod::PropShuffled),
            other => MethodMode::parse(other).map(SimMethod::Mode),
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        let list: Vec<Self> = text.split(',').filter(|s| !s.trim().is_empty()).map(Self::parse).collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::invalid("no methods given"));
        }
        Ok(list)
    }

    pub fn name(&self) -> String {
        match self {
            SimMethod::Mode(m) => m.name(),
            SimMethod::PropShuffled => "prop*".into(),
        }
    }

    pub fn mode(&self) -> MethodMode {
        match self {
            SimMethod::Mode(m) => *m,
            SimMethod::PropShuffled => MethodMode::Bcd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: u8,
    pub n: usize,
    pub partition: GroupPartition,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<SimMethod>,
    pub grid_size: usize,
    pub min_ratio: f64,
    pub fit: FitConfig,
    pub warm_start: bool,
}

impl SimulationConfig {
    pub fn new(scenario: u8, n: usize, partition: GroupPartition, reps: usize, seed: u64, methods: Vec<SimMethod>) -> Self {
        Self {
            scenario,
            n,
            partition,
            reps,
            seed,
            methods,
            grid_size: crate::selection::DEFAULT_GRID_SIZE,
            min_ratio: crate::selection::DEFAULT_MIN_RATIO,
            fit: FitConfig::default(),
            warm_start: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ScenarioSpec::new(self.scenario, self.partition.clone(), self.seed).validate()?;
        if self.n < 2 {
            return Err(Error::invalid("n must be >= 2"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods given"));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub rep: usize,
    pub method: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub losses: LossReport,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub raw: Vec<RawRow>,
    /// One entry per method, in the configured order (`None` with one replicate).
    pub summary: Vec<(String, Option<Aggregate>)>,
}

/// One BIC grid per replicate shared by all methods: each axis starts at the
/// largest anchor over the methods. Methods without a regression step use a
/// single λ₁ value.
pub fn shared_grid(d: &Dataset, methods: &[SimMethod], grid_size: usize, min_ratio: f64) -> Result<TuningGrid> {
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    let mut modes: Vec<MethodMode> = methods.iter().map(SimMethod::mode).collect();
    modes.dedup();
    for m in modes {
        let (a, b) = lambda_anchors(d, m)?;
        l1 = l1.max(a);
        l2 = l2.max(b);
    }
    grid_from_anchors(l1, l2, grid_size, min_ratio)
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Fits on columns reordered by `perm` (new column `k` is old column
/// `perm[k]`) and returns Ω in the original layout.
pub fn fit_permuted(
    d: &Dataset,
    perm: &[usize],
    run: impl Fn(&Dataset) -> Result<PrecisionEstimate>,
) -> Result<(SymMatrix, PrecisionEstimate)> {
    let shuffled = Dataset::new(d.data().select_columns(perm), d.partition().clone())?;
    let est = run(&shuffled)?;
    Ok((est.omega.permuted(&inverse_permutation(perm)), est))
}

fn run_replicate(cfg: &SimulationConfig, rep: usize) -> Result<Vec<RawRow>> {
    let seed = cfg.seed ^ rep as u64;
    let truth = generate(&ScenarioSpec::new(cfg.scenario, cfg.partition.clone(), seed))?;
    let d = sample_mvn(&truth, cfg.n, seed, &cfg.partition)?;
    let grid = shared_grid(&d, &cfg.methods, cfg.grid_size, cfg.min_ratio)?;
    let opts = SelectOptions { warm_start: cfg.warm_start, ..Default::default() };
    let ctx = |m: &SimMethod| format!("replicate {rep}, method {}", m.name());

    cfg.methods
        .iter()
        .map(|m| {
            let template = cfg.fit.clone().with_method(m.mode());
            let method_grid = grid.for_method(m.mode());
            let run = |data: &Dataset| select_with(data, &method_grid, &template, opts).map(|s| s.best);
            let (omega, est) = match m {
                SimMethod::Mode(_) => {
                    let est = run(&d).map_err(|e| e.context(ctx(m)))?;
                    (est.omega.clone(), est)
                }
                SimMethod::PropShuffled => {
                    let perm = within_group_permutation(&cfg.partition, &mut stream_rng(seed, SHUFFLE_STREAM));
                    fit_permuted(&d, &perm, run).map_err(|e| e.context(ctx(m)))?
                }
            };
            Ok(RawRow {
                rep,
                method: m.name(),
                lambda1: est.lambda1,
                lambda2: est.lambda2,
                losses: losses(&truth, &omega)?,
            })
        })
        .collect()
}

/// Replicates run concurrently on the current rayon pool; rows come back in
/// (replicate, method) order whatever the scheduling.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let per_rep: Vec<Vec<RawRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replicate(cfg, rep))
        .collect::<Result<_>>()?;
    let raw: Vec<RawRow> = per_rep.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for m in &cfg.methods {
        let name = m.name();
        if summary.iter().any(|(n, _)| *n == name) {
            continue;
        }
        let reports: Vec<LossReport> = raw.iter().filter(|r| r.method == name).map(|r| r.losses).collect();
        let agg = if reports.len() >= 2 { Some(aggregate(&reports)?) } else { None };
        summary.push((name, agg));
    }
    Ok(SimulationResult { raw, summary })
}

pub fn raw_csv(rows: &[RawRow]) -> String {
    let mut out = format!("rep,method,lambda1,lambda2,{}\n", METRIC_NAMES.join(","));
    for r in rows {
        let vals: Vec<String> = r.losses.values().iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{},{},{},{},{}", r.rep, r.method, fmt_f64(r.lambda1), fmt_f64(r.lambda2), vals.join(","));
    }
    out
}

/// Table layout: a "mean (se)" text column per metric, then the numeric
/// mean and se columns.
pub fn summary_csv(scenario: u8, summary: &[(String, Option<Aggregate>)]) -> String {
    let mut out = format!("scenario,method,{}", METRIC_NAMES.join(","));
    for name in METRIC_NAMES {
        let _ = write!(out, ",{name}_mean,{name}_se");
    }
    out.push('\n');
    for (method, agg) in summary {
        let Some(agg) = agg else { continue };
        let means = agg.mean.values();
        let ses = agg.se.values();
        let text: Vec<String> = means.iter().zip(&ses).map(|(m, s)| format!("\"{m:.3} ({s:.3})\"")).collect();
        let _ = write!(out, "{scenario},{method},{}", text.join(","));
        for (m, s) in means.iter().zip(&ses) {
            let _ = write!(out, ",{},{}", fmt_f64(*m), fmt_f64(*s));
        }
        out.push('\n');
    }
    out
}
