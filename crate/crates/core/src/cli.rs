//! `blockchol` command line: fit, simulate, predict, edges.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::block_model::{GroupPartition, PrecisionEstimate};
use crate::error::{Error, Result};
use crate::estimator::{fit, Dataset, FitConfig, MethodMode};
use crate::io::{
    bic_table_csv, edge_list, edges_csv, estimate_json, fmt_f64, parse_estimate_json, read_csv_matrix, write_text,
};
use crate::linalg::spd_cholesky;
use crate::predict::{evaluate_split, leave_one_out, sqrt_transform, ApeReport};
use crate::selection::{auto_grid_for, select_with, SelectOptions, DEFAULT_GRID_SIZE, DEFAULT_MIN_RATIO};
use crate::simulation::{raw_csv, run_simulation, summary_csv, SimMethod, SimulationConfig};

pub const WORKERS_ENV: &str = "BLOCKCHOL_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "blockchol", version, about = "Sparse precision matrices by block Cholesky decomposition")]
pub struct Cli {
    /// Worker threads (default: available parallelism; BLOCKCHOL_WORKERS overrides).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimate, or tune (λ₁, λ₂) by BIC.
    Fit(FitArgs),
    /// Monte Carlo comparison of methods on a simulation scenario.
    Simulate(SimulateArgs),
    /// Conditional-Gaussian prediction of late coordinates.
    Predict(PredictArgs),
    /// Edge list of an estimate.
    Edges(EdgesArgs),
}

#[derive(Debug, Args, Clone)]
pub struct TuningArgs {
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Choose (λ₁, λ₂) by BIC over an automatic grid.
    #[arg(long)]
    pub auto_bic: bool,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    pub min_ratio: f64,
    /// Reuse the previous λ₂ cell's D⁻¹ as the starting point.
    #[arg(long)]
    pub warm_start: bool,
    /// prop, mcd, glasso, block-diag or banded:K.
    #[arg(long, default_value = "prop")]
    pub method: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Group sizes in order, e.g. "40,40,40".
    #[arg(long)]
    pub groups: Option<String>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Group sizes; defaults to five equal groups.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated: prop, prop*, mcd, glasso, block-diag, banded:K.
    #[arg(long, default_value = "prop,glasso")]
    pub methods: String,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    pub min_ratio: f64,
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub groups: String,
    /// Number of leading (early) coordinates; must be a group boundary.
    #[arg(long)]
    pub split: usize,
    /// Leave-one-out over all rows.
    #[arg(long, conflicts_with = "train")]
    pub loo: bool,
    /// Train on the first K rows, test on the rest.
    #[arg(long)]
    pub train: Option<usize>,
    /// Apply y -> sqrt(y + 1/4) first.
    #[arg(long)]
    pub sqrt_transform: bool,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EdgesArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for an error: 3 for a non-positive-definite failure, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotPositiveDefinite(_) => 3,
        Error::InvalidInput(_) => 2,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn worker_count(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")));
    }
    match flag {
        Some(0) => Err(Error::invalid("--workers must be >= 1")),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let workers = worker_count(cli.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, workers),
        Command::Simulate(a) => cmd_simulate(a, workers),
        Command::Predict(a) => cmd_predict(a, workers),
        Command::Edges(a) => cmd_edges(a),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::invalid(format!("{}: {e}", dir.display())))
}

fn write_manifest(dir: &Path, command: &str, seed: Option<u64>, config: serde_json::Value) -> Result<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "command": command,
        "seed": seed,
        "config": config,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&dir.join("manifest.json"), &(text + "\n"))
}

/// Reads the data and resolves the partition; `glasso` ignores `--groups`.
fn load_dataset(path: &Path, groups: Option<&str>, method: MethodMode) -> Result<Dataset> {
    let data = read_csv_matrix(path)?;
    let p = data.cols();
    let partition = match (groups, method) {
        (Some(_), MethodMode::GlassoOnly) => {
            eprintln!("warning: --method glasso ignores --groups");
            GroupPartition::single(p)?
        }
        (None, MethodMode::GlassoOnly | MethodMode::Mcd) => GroupPartition::single(p)?,
        (Some(g), _) => GroupPartition::parse(g)?,
        (None, _) => return Err(Error::invalid("--groups is required for this method")),
    };
    Dataset::new(data, partition)
}

struct Tuned {
    estimate: PrecisionEstimate,
    bic_table: Option<String>,
}

fn tune(d: &Dataset, t: &TuningArgs) -> Result<Tuned> {
    let method = MethodMode::parse(&t.method)?;
    let template = FitConfig::default().with_method(method);
    match (t.auto_bic, t.lambda1, t.lambda2) {
        (true, None, None) => {
            let grid = auto_grid_for(d, method, t.grid_size, t.min_ratio)?;
            let sel = select_with(d, &grid, &template, SelectOptions { warm_start: t.warm_start, ..Default::default() })?;
            Ok(Tuned {
                estimate: sel.best,
                bic_table: Some(bic_table_csv(&sel.table)),
            })
        }
        (false, l1, Some(l2)) => {
            let l1 = match (l1, method) {
                (Some(v), _) => v,
                (None, MethodMode::GlassoOnly | MethodMode::BlockDiagonal) => 0.0,
                (None, _) => return Err(Error::invalid("--lambda1 is required unless --auto-bic")),
            };
            Ok(Tuned {
                estimate: fit(d, &template.with_lambdas(l1, l2))?,
                bic_table: None,
            })
        }
        (true, _, _) => Err(Error::invalid("--auto-bic cannot be combined with --lambda1/--lambda2")),
        (false, _, None) => Err(Error::invalid("give --lambda2 (and --lambda1) or --auto-bic")),
    }
}

fn tuning_echo(t: &TuningArgs) -> serde_json::Value {
    json!({
        "lambda1": t.lambda1,
        "lambda2": t.lambda2,
        "auto_bic": t.auto_bic,
        "grid_size": t.grid_size,
        "min_ratio": t.min_ratio,
        "warm_start": t.warm_start,
        "method": t.method,
    })
}

fn cmd_fit(a: &FitArgs, workers: usize) -> Result<()> {
    let method = MethodMode::parse(&a.tuning.method)?;
    let d = load_dataset(&a.data, a.groups.as_deref(), method)?;
    let tuned = tune(&d, &a.tuning)?;
    spd_cholesky(&tuned.estimate.omega).map_err(|e| e.context("estimate"))?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("estimate.json"), &estimate_json(&tuned.estimate))?;
    if let Some(table) = &tuned.bic_table {
        write_text(&a.out.join("bic.csv"), table)?;
    }
    write_manifest(
        &a.out,
        "fit",
        None,
        json!({
            "data": a.data.display().to_string(),
            "groups": a.groups,
            "tuning": tuning_echo(&a.tuning),
            "workers": workers,
        }),
    )?;
    let est = &tuned.estimate;
    println!(
        "fit: p = {}, groups = {}, lambda1 = {}, lambda2 = {}, converged = {}",
        est.omega.dim(),
        est.partition.num_groups(),
        est.lambda1,
        est.lambda2,
        est.converged()
    );
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, workers: usize) -> Result<()> {
    let partition = match &a.groups {
        Some(g) => GroupPartition::parse(g)?,
        None => GroupPartition::equal(a.p, 5)?,
    };
    partition.check_total(a.p)?;
    let mut cfg = SimulationConfig::new(a.scenario, a.n, partition, a.reps, a.seed, SimMethod::parse_list(&a.methods)?);
    cfg.grid_size = a.grid_size;
    cfg.min_ratio = a.min_ratio;
    cfg.warm_start = a.warm_start;
    let res = run_simulation(&cfg)?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("raw.csv"), &raw_csv(&res.raw))?;
    write_text(&a.out.join("summary.csv"), &summary_csv(a.scenario, &res.summary))?;
    write_manifest(
        &a.out,
        "simulate",
        Some(a.seed),
        json!({
            "scenario": a.scenario,
            "n": a.n,
            "p": a.p,
            "groups": cfg.partition.sizes(),
            "reps": a.reps,
            "methods": cfg.methods.iter().map(SimMethod::name).collect::<Vec<_>>(),
            "grid_size": a.grid_size,
            "min_ratio": a.min_ratio,
            "warm_start": a.warm_start,
            "workers": workers,
        }),
    )?;
    for (method, agg) in &res.summary {
        if let Some(agg) = agg {
            println!("{method}: KL = {:.4} ({:.4}), QL = {:.4} ({:.4})", agg.mean.kl, agg.se.kl, agg.mean.ql, agg.se.ql);
        }
    }
    Ok(())
}

fn ape_csv(r: &ApeReport) -> String {
    let mut out = String::from("coordinate,ape,se\n");
    for (l, (ape, se)) in r.ape.iter().zip(&r.se).enumerate() {
        out.push_str(&format!("{},{},{}\n", r.split_index + l, fmt_f64(*ape), fmt_f64(*se)));
    }
    out
}

fn cmd_predict(a: &PredictArgs, workers: usize) -> Result<()> {
    let method = MethodMode::parse(&a.tuning.method)?;
    let mut d = load_dataset(&a.data, Some(&a.groups), MethodMode::Bcd)?;
    if a.sqrt_transform {
        d = Dataset::new(sqrt_transform(d.data())?, d.partition().clone())?;
    }
    crate::predict::check_split(d.partition(), a.split)?;

    // λs are chosen once (BIC on the training rows) and reused in every fold.
    let train_rows = match (a.loo, a.train) {
        (true, None) => d.n(),
        (false, Some(k)) if k >= 2 && k < d.n() => k,
        (false, Some(k)) => return Err(Error::invalid(format!("--train must be in 2..{}, got {k}", d.n()))),
        _ => return Err(Error::invalid("give --loo or --train K")),
    };
    let train = Dataset::new(d.data().select_rows(&(0..train_rows).collect::<Vec<_>>()), d.partition().clone())?;
    let fit_data = match method {
        MethodMode::GlassoOnly => train.with_partition(GroupPartition::single(train.p())?)?,
        _ => train.clone(),
    };
    let chosen = tune(&fit_data, &a.tuning)?.estimate;
    let config = FitConfig::new(chosen.lambda1, chosen.lambda2).with_method(method);
    let refit = |t: &Dataset| fit(t, &config);

    let report = if a.loo {
        leave_one_out(&d, a.split, refit)?
    } else {
        let test = d.data().select_rows(&(train_rows..d.n()).collect::<Vec<_>>());
        evaluate_split(&train, &test, a.split, refit)?
    };
    ensure_dir(&a.out)?;
    write_text(&a.out.join("ape.csv"), &ape_csv(&report))?;
    write_manifest(
        &a.out,
        "predict",
        None,
        json!({
            "data": a.data.display().to_string(),
            "groups": a.groups,
            "split": a.split,
            "loo": a.loo,
            "train": a.train,
            "sqrt_transform": a.sqrt_transform,
            "tuning": tuning_echo(&a.tuning),
            "lambda1": chosen.lambda1,
            "lambda2": chosen.lambda2,
            "workers": workers,
        }),
    )?;
    println!("predict: held out {}, overall APE = {:.6}", report.held_out, report.overall);
    Ok(())
}

fn cmd_edges(a: &EdgesArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.estimate).map_err(|e| Error::invalid(format!("{}: {e}", a.estimate.display())))?;
    let omega = parse_estimate_json(&text)?.omega_matrix()?;
    let csv = edges_csv(&edge_list(&omega, a.threshold));
    match &a.out {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
