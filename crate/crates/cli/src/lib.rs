//! The `ocpdl` command-line tool.
//!
//! Subcommands:
//!
//! * `factorize` runs one method and writes `trace.csv`, the final loadings
//!   as DTF1 files and `error_curve.svg`.
//! * `bench` runs several methods over repeated trials and writes
//!   `bench.csv` and `bench.svg` (mean curves with ±1 std bands).
//! * `diagnose` runs the online method with the full history kept and checks
//!   its invariants; the exit status is 1 if any fails.
//! * `patches` cuts random patches from a PPM image into a directory of DTF1
//!   minibatches, usable as `--stream-dir`.
//!
//! Every run setting can come from a `key=value` file given by `--config`;
//! command-line flags override it. Exit status 2 means bad configuration or
//! unreadable input, and nothing is written in that case.

pub mod config;
pub mod data;
pub mod output;
pub mod run;
pub mod svg;

use std::fmt;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ocpdl_core::streams::stream_id;
use ocpdl_core::{check_run, fit, patch_stream, ppm_read, stream_rng, write_dtf, Init, Status, WeightSchedule};
use rayon::prelude::*;

use config::Params;
use run::{Defaults, Method, Settings, RUN_KEYS};

/// Invalid configuration or unreadable input (exit status 2).
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "ocpdl", version, about = "Online nonnegative CP-dictionary learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize one tensor or stream with one method.
    Factorize(RunArgs),
    /// Compare methods over repeated trials.
    Bench(BenchArgs),
    /// Check the online method's invariants on a desk-scale run.
    Diagnose(DiagnoseArgs),
    /// Extract random image patches into a minibatch directory.
    Patches(PatchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ocpdl, als or mu.
    #[arg(long)]
    pub method: Option<String>,
    /// DTF1 tensor file.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Synthetic ground-truth shape, e.g. 30,30,500.
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Rank of the synthetic ground truth (defaults to --rank).
    #[arg(long)]
    pub true_rank: Option<usize>,
    /// Markov chain spec file.
    #[arg(long)]
    pub markov: Option<PathBuf>,
    /// Directory of DTF1 minibatches, used in name order.
    #[arg(long)]
    pub stream_dir: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight exponent β, or `balanced` for w_t = 1/t.
    #[arg(long)]
    pub beta: Option<String>,
    /// Iterations (online) or sweeps (baselines).
    #[arg(long = "T", alias = "iterations")]
    pub t: Option<usize>,
    /// Sweeps for the baselines; overrides --T.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Last-mode slices per minibatch; overrides --batch.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Upper bound on loading entries.
    #[arg(long)]
    pub u_max: Option<f64>,
    #[arg(long)]
    pub coding_tol: Option<f64>,
    #[arg(long)]
    pub coding_iters: Option<usize>,
    #[arg(long)]
    pub factor_tol: Option<f64>,
    #[arg(long)]
    pub factor_sweeps: Option<usize>,
    /// Tolerance of the last-mode refit used for full-tensor errors.
    #[arg(long)]
    pub refit_tol: Option<f64>,
    #[arg(long)]
    pub refit_iters: Option<usize>,
    /// `wall` (elapsed seconds) or `logical` (iteration number).
    #[arg(long)]
    pub clock: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        macro_rules! push {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(x) = &$field { v.push(($key, x.to_string())); })*
            };
        }
        push! {
            "method" => self.method,
            "tensor" => self.tensor.as_ref().map(|p| p.display()),
            "synthetic" => self.synthetic,
            "true_rank" => self.true_rank,
            "markov" => self.markov.as_ref().map(|p| p.display()),
            "stream_dir" => self.stream_dir.as_ref().map(|p| p.display()),
            "rank" => self.rank,
            "lambda" => self.lambda,
            "beta" => self.beta,
            "T" => self.t,
            "sweeps" => self.sweeps,
            "batch" => self.batch,
            "subsample" => self.subsample,
            "seed" => self.seed,
            "u_max" => self.u_max,
            "coding_tol" => self.coding_tol,
            "coding_iters" => self.coding_iters,
            "factor_tol" => self.factor_tol,
            "factor_sweeps" => self.factor_sweeps,
            "refit_tol" => self.refit_tol,
            "refit_iters" => self.refit_iters,
            "clock" => self.clock,
            "out" => self.out.as_ref().map(|p| p.display()),
        }
        v
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated methods.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Freeze the intermediate aggregates within each sweep (negative control).
    #[arg(long, hide = true)]
    pub corrupt_aggregation: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PatchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Binary PPM (P6) image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Patch side length.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Number of patches.
    #[arg(long)]
    pub count: Option<usize>,
    /// Patches per minibatch file.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line and returns the process exit status.
pub fn run_cli(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Factorize(a) => factorize(&a),
        Command::Bench(a) => bench(&a),
        Command::Diagnose(a) => diagnose(&a),
        Command::Patches(a) => patches(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn settings(args: &RunArgs, extra: Vec<(&'static str, String)>, extra_keys: &[&'static str], d: &Defaults) -> Result<(Settings, Params)> {
    let mut keys = RUN_KEYS.to_vec();
    keys.extend_from_slice(extra_keys);
    let mut overrides = args.overrides();
    overrides.extend(extra);
    let params = Params::load(args.config.as_deref(), overrides, &keys)?;
    Ok((Settings::from_params(&params, d)?, params))
}

fn create_out(dir: &std::path::Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// `factorize`: one run of one method.
pub fn factorize(args: &RunArgs) -> Result<i32> {
    let (s, _) = settings(args, vec![], &[], &Defaults::default())?;
    let result = run::run(&s, 0, s.seed)?;
    create_out(&s.out)?;
    output::write_trace(&s.out.join("trace.csv"), &[&result], s.clock)?;
    for (j, u) in result.loadings.factors().iter().enumerate() {
        write_dtf(s.out.join(format!("U{j}.dtf1")), &ocpdl_core::tensor::matrix_to_tensor(u))?;
    }
    fs::write(s.out.join("error_curve.svg"), output::chart(&[&result], s.clock, &s.data.description))?;
    let last = result.trace.last().expect("runs have at least one step");
    match last.rel_error {
        Some(rel) => println!("{} on {}: final rel_error {rel:.6}", s.method, s.data.description),
        None => println!("{} on {}: final surrogate {:.6}", s.method, s.data.description, last.surrogate),
    }
    Ok(0)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("OCPDL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("OCPDL_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// `bench`: every method × trial, trial `k` seeded with `seed + k`. The data
/// itself depends only on `seed`.
pub fn bench(args: &BenchArgs) -> Result<i32> {
    let mut extra = Vec::new();
    if let Some(m) = &args.methods {
        extra.push(("methods", m.clone()));
    }
    if let Some(t) = args.trials {
        extra.push(("trials", t.to_string()));
    }
    let (base, params) = settings(&args.run, extra, &["methods", "trials"], &Defaults::default())?;
    let methods: Vec<Method> = config::parse_list(&params.get("methods", "ocpdl,als,mu".to_string())?)?;
    let trials: usize = params.get("trials", 10)?;
    if methods.is_empty() || trials == 0 {
        return Err(UsageError("need at least one method and one trial".into()).into());
    }
    let per_method: Vec<Settings> = methods
        .iter()
        .map(|&m| {
            let s = Settings { method: m, ..base.clone() };
            if s.data.full.is_none() {
                return Err(UsageError("bench needs a data source with a full tensor".into()));
            }
            Ok(s)
        })
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..trials).map(move |t| (m, t))).collect();
    let pool = thread_pool()?;
    let results = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, t)| run::run(&per_method[m], t, base.seed.wrapping_add(t as u64)))
            .collect::<Result<Vec<_>>>()
    })?;
    create_out(&base.out)?;
    let refs: Vec<&run::RunResult> = results.iter().collect();
    output::write_bench(&base.out.join("bench.csv"), &refs, base.clock)?;
    fs::write(base.out.join("bench.svg"), output::chart(&refs, base.clock, &base.data.description))?;
    for (i, m) in methods.iter().enumerate() {
        let finals: Vec<f64> = results[i * trials..(i + 1) * trials]
            .iter()
            .filter_map(|r| r.trace.last().and_then(|x| x.rel_error))
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
        println!("{m}: mean final rel_error {mean:.6} over {trials} trials");
    }
    Ok(0)
}

/// The default diagnose workload: a subsampled rank-4 synthetic stream of
/// 8×8×8 observations.
pub fn diagnose_defaults() -> Defaults {
    Defaults {
        rank: Some(4),
        lambda: 0.5,
        schedule: WeightSchedule::Balanced,
        iterations: 200,
        batch: 2,
        seed: 42,
        synthetic: Some(("8,8,8,64", 4)),
        out: "diagnose_out",
    }
}

/// `diagnose`: prints one line per invariant; exit status 1 on any failure.
pub fn diagnose(args: &DiagnoseArgs) -> Result<i32> {
    let (s, _) = settings(&args.run, vec![], &[], &diagnose_defaults())?;
    if s.method != Method::Ocpdl {
        return Err(UsageError("diagnose only runs the online method".into()).into());
    }
    let mut cfg = s.run_config(s.seed, true);
    cfg.stale_aggregation = args.corrupt_aggregation;
    println!(
        "diagnose: {}, R={}, lambda={}, weights={}, T={}, b={}",
        s.data.description, s.rank, s.lambda, s.schedule, s.iterations, s.batch
    );
    let out = fit(s.minibatches(s.seed)?, &cfg, Init::Random)?;
    let checks = check_run(&out.trace, &cfg, out.loadings());
    for c in &checks {
        println!("{c}");
    }
    if args.run.out.is_some() {
        create_out(&s.out)?;
        let result = run::RunResult {
            method: Method::Ocpdl,
            trial: 0,
            loadings: out.loadings().clone(),
            trace: out.trace,
        };
        output::write_trace(&s.out.join("trace.csv"), &[&result], s.clock)?;
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failed == 0 {
        println!("all invariants hold");
        Ok(0)
    } else {
        println!("{failed} invariant(s) FAILED");
        Ok(1)
    }
}

/// `patches`: writes `batch_00000.dtf1`, … into the output directory.
pub fn patches(args: &PatchArgs) -> Result<i32> {
    let mut overrides = Vec::new();
    if let Some(p) = &args.image {
        overrides.push(("image", p.display().to_string()));
    }
    for (k, v) in [("patch", args.patch), ("count", args.count), ("batch", args.batch)] {
        if let Some(v) = v {
            overrides.push((k, v.to_string()));
        }
    }
    if let Some(s) = args.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(o) = &args.out {
        overrides.push(("out", o.display().to_string()));
    }
    let p = Params::load(args.config.as_deref(), overrides, &["image", "patch", "count", "batch", "seed", "out"])?;
    let path: PathBuf = p.require("image")?;
    let image = ppm_read(&path).map_err(|e| UsageError(format!("cannot read image {}: {e}", path.display())))?;
    let size: usize = p.get("patch", 20)?;
    let count: usize = p.get("count", 1000)?;
    let batch: usize = p.get("batch", 10)?;
    let seed: u64 = p.get("seed", 0)?;
    let out: PathBuf = p.get("out", PathBuf::from("patches"))?;
    let stream = patch_stream(image, size, count, batch, stream_rng(seed, stream_id::PATCHES))
        .map_err(|e| UsageError(e.to_string()))?;
    create_out(&out)?;
    let mut files = 0;
    for (i, b) in stream.enumerate() {
        write_dtf(out.join(format!("batch_{i:05}.dtf1")), &b)?;
        files += 1;
    }
    println!("wrote {count} {size}×{size} patches in {files} minibatch files to {}", out.display());
    Ok(0)
}
