//! Shared run settings and the three methods behind a common row format.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use ocpdl_core::streams::stream_id;
use ocpdl_core::{
    cp_eval, fit_with, markov_tensor_stream, run_baseline, stream_rng, subsample_stream, Baseline,
    CodeMatrix, CodingProblem, CodingSettings, DenseTensor, FactorSettings, Init, LoadingSet,
    RunConfig, TraceRecord, WeightSchedule,
};

use crate::config::Params;
use crate::data::{self, Data, Feed};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ocpdl,
    Als,
    Mu,
}

impl FromStr for Method {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ocpdl" | "online" => Ok(Method::Ocpdl),
            "als" => Ok(Method::Als),
            "mu" => Ok(Method::Mu),
            other => Err(UsageError(format!("unknown method `{other}` (expected ocpdl, als or mu)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ocpdl => "ocpdl",
            Method::Als => "als",
            Method::Mu => "mu",
        })
    }
}

/// What the `wall_seconds` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Monotonic elapsed seconds spent in the solver.
    Wall,
    /// The iteration number, for byte-stable output.
    Logical,
}

impl FromStr for Clock {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s {
            "wall" => Ok(Clock::Wall),
            "logical" => Ok(Clock::Logical),
            other => Err(UsageError(format!("unknown clock `{other}` (expected wall or logical)"))),
        }
    }
}

/// Settings keys shared by every run-type command.
pub const RUN_KEYS: &[&str] = &[
    "method",
    "tensor",
    "synthetic",
    "true_rank",
    "markov",
    "stream_dir",
    "rank",
    "lambda",
    "beta",
    "T",
    "sweeps",
    "batch",
    "subsample",
    "seed",
    "u_max",
    "coding_tol",
    "coding_iters",
    "factor_tol",
    "factor_sweeps",
    "refit_tol",
    "refit_iters",
    "clock",
    "out",
];

/// Fallbacks for settings absent from both the file and the command line.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub rank: Option<usize>,
    pub lambda: f64,
    pub schedule: WeightSchedule,
    pub iterations: usize,
    pub batch: usize,
    pub seed: u64,
    pub synthetic: Option<(&'static str, usize)>,
    pub out: &'static str,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            rank: None,
            lambda: 0.0,
            schedule: WeightSchedule::Power(1.0),
            iterations: 100,
            batch: 20,
            seed: 0,
            synthetic: None,
            out: "out",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub method: Method,
    pub rank: usize,
    pub lambda: f64,
    pub schedule: WeightSchedule,
    /// Online iterations, or sweeps for the baselines.
    pub iterations: usize,
    pub batch: usize,
    pub seed: u64,
    pub coding: CodingSettings,
    pub factor: FactorSettings,
    pub refit: CodingSettings,
    pub clock: Clock,
    pub out: PathBuf,
    pub data: Data,
}

impl Settings {
    pub fn from_params(p: &Params, d: &Defaults) -> Result<Self, UsageError> {
        let method: Method = p.get("method", Method::Ocpdl)?;
        let rank: usize = match d.rank {
            Some(r) => p.get("rank", r)?,
            None => p.require("rank")?,
        };
        let lambda: f64 = p.get("lambda", d.lambda)?;
        let schedule = match p.opt::<String>("beta")? {
            Some(s) => s.parse::<WeightSchedule>().map_err(|e| UsageError(e.to_string()))?,
            None => d.schedule,
        };
        let iterations = match method {
            Method::Als | Method::Mu if p.has("sweeps") => p.require("sweeps")?,
            _ => p.get("T", d.iterations)?,
        };
        let batch: usize = p.get("subsample", p.get("batch", d.batch)?)?;
        let seed: u64 = p.get("seed", d.seed)?;
        let coding = CodingSettings {
            lambda,
            tol: p.get("coding_tol", 1e-8)?,
            max_iters: p.get("coding_iters", 200)?,
            ..CodingSettings::default()
        };
        let factor = FactorSettings {
            u_max: p.get("u_max", 1e6)?,
            tol: p.get("factor_tol", 1e-8)?,
            max_sweeps: p.get("factor_sweeps", 100)?,
        };
        let refit = CodingSettings {
            lambda,
            tol: p.get("refit_tol", 1e-10)?,
            max_iters: p.get("refit_iters", 2000)?,
            ..CodingSettings::default()
        };
        let with_default_source;
        let params = match d.synthetic {
            Some((shape, true_rank))
                if !["tensor", "synthetic", "markov", "stream_dir"].iter().any(|k| p.has(k)) =>
            {
                with_default_source = p.with_defaults(&[("synthetic", shape.to_string()), ("true_rank", true_rank.to_string())]);
                &with_default_source
            }
            _ => p,
        };
        let data = data::load(params, rank, seed, batch)?;
        let settings = Self {
            method,
            rank,
            lambda,
            schedule,
            iterations,
            batch,
            seed,
            coding,
            factor,
            refit,
            clock: p.get("clock", Clock::Wall)?,
            out: p.get("out", PathBuf::from(d.out))?,
            data,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), UsageError> {
        self.run_config(self.seed, false)
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        self.refit.validate().map_err(|e| UsageError(e.to_string()))?;
        match (&self.data.full, &self.data.feed) {
            (None, _) if self.method != Method::Ocpdl => Err(UsageError(format!(
                "method {} needs a full tensor; a markov stream has none",
                self.method
            ))),
            (Some(full), Feed::Subsample) if self.method == Method::Ocpdl && self.batch > full.last_dim() => {
                Err(UsageError(format!(
                    "subsample size {} exceeds the last mode length {}",
                    self.batch,
                    full.last_dim()
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn run_config(&self, seed: u64, diagnostic: bool) -> RunConfig {
        RunConfig {
            rank: self.rank,
            batch_size: self.batch,
            lambda: self.lambda,
            schedule: self.schedule,
            coding: self.coding.clone(),
            factor: self.factor.clone(),
            iterations: self.iterations,
            seed,
            diagnostic,
            stale_aggregation: false,
        }
    }

    /// The online method's minibatches for `seed`.
    pub fn minibatches(&self, seed: u64) -> Result<Box<dyn Iterator<Item = DenseTensor> + '_>> {
        Ok(match &self.data.feed {
            Feed::Subsample => {
                let full = self.data.full.clone().expect("subsampled feeds have a full tensor");
                let rng = stream_rng(seed, stream_id::SUBSAMPLE);
                Box::new(subsample_stream(full, self.batch, self.iterations, rng)?)
            }
            Feed::Markov(spec) => {
                let rng = stream_rng(seed, stream_id::MARKOV);
                Box::new(markov_tensor_stream(spec, self.iterations, self.batch, rng)?)
            }
            Feed::Sequence(batches) => Box::new(batches.iter().cloned()),
        })
    }
}

/// Output of one run of one method.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub trial: usize,
    /// Loadings over every mode of the full tensor when one exists.
    pub loadings: LoadingSet,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    pub fn wall(&self, r: &TraceRecord, clock: Clock) -> f64 {
        match clock {
            Clock::Wall => r.wall_seconds,
            Clock::Logical => r.t as f64,
        }
    }
}

/// Tracks full-tensor error of an online run by recoding every last-mode
/// slice after each step, warm-started from the previous step's codes.
struct Refit<'a> {
    full: &'a DenseTensor,
    settings: &'a CodingSettings,
    norm: f64,
    code: Option<CodeMatrix>,
}

impl Refit<'_> {
    fn update(&mut self, l: &LoadingSet, record: &mut TraceRecord) -> ocpdl_core::Result<()> {
        let problem = CodingProblem::new(self.full, l, self.settings)?;
        let (code, _) = problem.solve(self.code.as_deref())?;
        let abs = self.full.sub(&cp_eval(l, &code)?)?.norm();
        record.abs_error = Some(abs);
        record.rel_error = Some(if self.norm > 0.0 { abs / self.norm } else { abs });
        self.code = Some(code);
        Ok(())
    }
}

/// Runs `settings.method` with seed `seed`; `trial` only labels the result.
pub fn run(settings: &Settings, trial: usize, seed: u64) -> Result<RunResult> {
    match settings.method {
        Method::Ocpdl => run_online(settings, trial, seed),
        Method::Als | Method::Mu => {
            let full = settings.data.full.as_ref().context("baselines need a full tensor")?;
            let init = LoadingSet::random(full.shape(), settings.rank, &mut stream_rng(seed, stream_id::INIT));
            let which = if settings.method == Method::Als { Baseline::Als } else { Baseline::Mu };
            let (loadings, trace) = run_baseline(which, full, &init, settings.iterations, &settings.factor)?;
            Ok(RunResult {
                method: settings.method,
                trial,
                loadings,
                trace,
            })
        }
    }
}

fn run_online(settings: &Settings, trial: usize, seed: u64) -> Result<RunResult> {
    let cfg = settings.run_config(seed, false);
    let mut refit = settings.data.full.as_ref().map(|full| Refit {
        full,
        settings: &settings.refit,
        norm: full.norm(),
        code: None,
    });
    let out = fit_with(settings.minibatches(seed)?, &cfg, Init::Random, |state, record| {
        match refit.as_mut() {
            Some(r) => r.update(state.loadings(), record),
            None => Ok(()),
        }
    })?;
    let partial = out.state.into_loadings();
    let loadings = match refit.and_then(|r| r.code) {
        Some(code) => partial.with_last(code.t().to_owned())?,
        None => partial,
    };
    Ok(RunResult {
        method: Method::Ocpdl,
        trial,
        loadings,
        trace: out.trace,
    })
}
