//! The online CP-dictionary learning loop.
//!
//! Each minibatch `X_t` (modes `I_1 × … × I_n` plus a sample mode) is coded
//! against the previous dictionary, folded into the aggregates
//!
//! ```text
//! A_t = (1 − w_t) A_{t−1} + w_t C_t C_tᵀ
//! B_t = (1 − w_t) B_{t−1} + w_t X_t ×_{n+1} C_t
//! ```
//!
//! and the loading matrices are then updated one mode at a time against
//! aggregates recomputed from the already-updated modes. Only `A`, `B` and a
//! scalar are carried between steps unless diagnostic mode keeps the history.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use ndarray::Array2;

use crate::coding::{code_gram, frob, CodingProblem, CodingSettings};
use crate::dict::{lindeberg_sweep, min_eigenvalue, stale_sweep, surrogate_g, FactorSettings};
use crate::dtf::{read_dtf, write_dtf};
use crate::error::{shape_err, Error, Result};
use crate::streams::{stream_id, stream_rng};
use crate::tensor::{matrix_to_tensor, mode_product, tensor_to_matrix, DenseTensor, LoadingSet};

/// How much weight the newest minibatch gets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSchedule {
    /// `w_t = 1/t`: the surrogate is a plain running average.
    Balanced,
    /// `w_t = t^{−β}`.
    Power(f64),
}

impl WeightSchedule {
    pub fn validate(&self) -> Result<()> {
        if let WeightSchedule::Power(beta) = *self {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
            }
            if beta <= 0.75 {
                warn!("beta = {beta} is outside (3/4, 1]; convergence is no longer guaranteed");
            }
        }
        Ok(())
    }

    /// `w_t` for `t ≥ 1`.
    pub fn weight(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidArgument("iterations are numbered from 1".into()));
        }
        Ok(match *self {
            WeightSchedule::Balanced => 1.0 / t as f64,
            WeightSchedule::Power(beta) => (t as f64).powf(-beta),
        })
    }
}

impl fmt::Display for WeightSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSchedule::Balanced => write!(f, "balanced"),
            WeightSchedule::Power(beta) => write!(f, "{beta:?}"),
        }
    }
}

impl FromStr for WeightSchedule {
    type Err = Error;

    /// `balanced` or a number β.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("balanced") {
            return Ok(WeightSchedule::Balanced);
        }
        s.parse()
            .map(WeightSchedule::Power)
            .map_err(|_| Error::InvalidArgument(format!("weight schedule must be `balanced` or a number, got `{s}`")))
    }
}

/// `w_t` under `cfg`'s schedule.
pub fn weight(t: usize, cfg: &RunConfig) -> Result<f64> {
    cfg.schedule.weight(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rank: usize,
    /// Minibatch size `b` used when building streams.
    pub batch_size: usize,
    pub lambda: f64,
    pub schedule: WeightSchedule,
    /// Coding solver settings; their `lambda` is replaced by [`lambda`](Self::lambda).
    pub coding: CodingSettings,
    /// Factor update settings, including the box bound `u_max`.
    pub factor: FactorSettings,
    /// Iteration budget `T`.
    pub iterations: usize,
    pub seed: u64,
    /// Keep every minibatch so the empirical loss can be evaluated.
    pub diagnostic: bool,
    /// Freeze the intermediate aggregates at the start of each sweep.
    /// Breaks the algorithm on purpose; used to check that the diagnostics
    /// catch it.
    #[doc(hidden)]
    pub stale_aggregation: bool,
}

impl RunConfig {
    pub fn new(rank: usize, batch_size: usize) -> Self {
        Self {
            rank,
            batch_size,
            lambda: 0.0,
            schedule: WeightSchedule::Balanced,
            coding: CodingSettings::default(),
            factor: FactorSettings::default(),
            iterations: 100,
            seed: 0,
            diagnostic: false,
            stale_aggregation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument("rank, batch size and iteration budget must be ≥ 1".into()));
        }
        self.schedule.validate()?;
        self.coding_settings().validate()?;
        self.factor.validate()
    }

    pub fn coding_settings(&self) -> CodingSettings {
        CodingSettings {
            lambda: self.lambda,
            ..self.coding.clone()
        }
    }
}

/// Starting dictionary.
#[derive(Debug, Clone)]
pub enum Init {
    /// Uniform[0, 1) entries from the run's seeded generator.
    Random,
    Given(LoadingSet),
}

/// One row of the run trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub weight: f64,
    /// `f̂_t(𝒟_t)`, recomputed from the aggregates after the sweep.
    pub surrogate: f64,
    /// `f̂_t(𝒟_{t−1}) = (1 − w_t) f̂_{t−1}(𝒟_{t−1}) + w_t ℓ(X_t, 𝒟_{t−1})`.
    pub surrogate_before: f64,
    /// `ℓ(X_t, 𝒟_{t−1})`.
    pub batch_loss: f64,
    /// `‖𝒟_t − 𝒟_{t−1}‖_F`.
    pub displacement: f64,
    /// `Σ_j λ_min(Ā_j) ‖ΔU_j‖_F²` for the sweep.
    pub growth_margin: f64,
    pub code_norm: f64,
    pub batch_norm: f64,
    /// Largest minibatch norm seen so far.
    pub max_batch_norm: f64,
    pub a_norm: f64,
    pub b_norm: f64,
    pub a_min_eigenvalue: f64,
    /// `‖A − Aᵀ‖_F`.
    pub a_asymmetry: f64,
    pub wall_seconds: f64,
    /// `f_t(𝒟_t)`, diagnostic mode only.
    pub empirical_loss: Option<f64>,
    /// Full-tensor errors, filled in by callers that have a reference tensor.
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

impl TraceRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.weight,
            self.surrogate,
            self.surrogate_before,
            self.batch_loss,
            self.displacement,
            self.growth_margin,
            self.code_norm,
            self.batch_norm,
            self.max_batch_norm,
            self.a_norm,
            self.b_norm,
            self.a_min_eigenvalue,
            self.a_asymmetry,
            self.wall_seconds,
        ]
        .iter()
        .chain(self.empirical_loss.iter())
        .chain(self.abs_error.iter())
        .chain(self.rel_error.iter())
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default)]
struct History {
    batches: Vec<DenseTensor>,
    codes: Vec<Array2<f64>>,
    weights: Vec<f64>,
}

/// Everything carried from one step to the next.
#[derive(Debug, Clone)]
pub struct AggregateState {
    a: Array2<f64>,
    b: DenseTensor,
    t: usize,
    schedule: WeightSchedule,
    loadings: LoadingSet,
    /// Weighted running mean of `‖X_s‖² + λ‖C_s‖₁`.
    constant: f64,
    surrogate: f64,
    max_batch_norm: f64,
    last_code: Option<Array2<f64>>,
    history: Option<History>,
    warned_negative: bool,
}

impl AggregateState {
    /// Zero aggregates and the starting dictionary for data whose non-sample
    /// modes are `dims`.
    pub fn init(cfg: &RunConfig, dims: &[usize], init: Init) -> Result<Self> {
        cfg.validate()?;
        if dims.is_empty() || dims.contains(&0) {
            return Err(shape_err(format!("invalid data dimensions {dims:?}")));
        }
        let loadings = match init {
            Init::Random => {
                let mut rng = stream_rng(cfg.seed, stream_id::INIT);
                LoadingSet::random(dims, cfg.rank, &mut rng)
            }
            Init::Given(l) => {
                if l.dims() != dims || l.rank() != cfg.rank {
                    return Err(shape_err(format!(
                        "initial loadings are {:?} with rank {}, expected {dims:?} with rank {}",
                        l.dims(),
                        l.rank(),
                        cfg.rank
                    )));
                }
                if !l.within_box(cfg.factor.u_max) {
                    return Err(Error::InvalidArgument("initial loadings violate the box constraint".into()));
                }
                l
            }
        };
        let mut b_shape = dims.to_vec();
        b_shape.push(cfg.rank);
        Ok(Self {
            a: Array2::zeros((cfg.rank, cfg.rank)),
            b: DenseTensor::zeros(b_shape),
            t: 0,
            schedule: cfg.schedule,
            loadings,
            constant: 0.0,
            surrogate: 0.0,
            max_batch_norm: 0.0,
            last_code: None,
            history: cfg.diagnostic.then(History::default),
            warned_negative: false,
        })
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &DenseTensor {
        &self.b
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn schedule(&self) -> WeightSchedule {
        self.schedule
    }

    pub fn loadings(&self) -> &LoadingSet {
        &self.loadings
    }

    pub fn into_loadings(self) -> LoadingSet {
        self.loadings
    }

    /// The weighted constant term of the surrogate.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `f̂_t(𝒟_t)`.
    pub fn surrogate(&self) -> f64 {
        self.surrogate
    }

    pub fn max_batch_norm(&self) -> f64 {
        self.max_batch_norm
    }

    pub fn has_history(&self) -> bool {
        self.history.is_some()
    }

    /// `f̂_t(L) = ĝ_t(L) + c_t` for any dictionary `L`.
    pub fn surrogate_at(&self, l: &LoadingSet) -> Result<f64> {
        Ok(surrogate_g(&self.a, &self.b, l)? + self.constant)
    }

    /// One minibatch of the algorithm. On error the state is unchanged.
    pub fn step(&mut self, batch: &DenseTensor, cfg: &RunConfig) -> Result<TraceRecord> {
        let dims = self.loadings.dims();
        let n = dims.len();
        if batch.ndim() != n + 1 || batch.shape()[..n] != dims[..] {
            return Err(shape_err(format!(
                "minibatch {:?} does not match data modes {dims:?} plus a sample mode",
                batch.shape()
            )));
        }
        if !self.warned_negative && !batch.is_nonnegative() {
            warn!("minibatch has negative entries; the nonnegative model cannot fit them");
            self.warned_negative = true;
        }
        let t = self.t + 1;
        let w = self.schedule.weight(t)?;
        let coding = cfg.coding_settings();

        // code against 𝒟_{t−1}
        let problem = CodingProblem::new(batch, &self.loadings, &coding)?;
        let warm = self
            .last_code
            .as_ref()
            .filter(|c| coding.warm_start && c.dim() == problem.rhs().dim());
        let (code, _) = problem.solve(warm)?;
        let code = code.into_inner();
        let batch_loss = problem.objective(&code);

        let mut a = &self.a * (1.0 - w);
        a.scaled_add(w, &code.dot(&code.t()));
        let mut b = self.b.clone();
        b.scale(1.0 - w);
        b.axpy(w, &mode_product(batch, &code, n)?)?;
        let batch_norm_sq = batch.norm_sq();
        let constant = (1.0 - w) * self.constant + w * (batch_norm_sq + coding.lambda * code.sum());
        let surrogate_before = (1.0 - w) * self.surrogate + w * batch_loss;

        let sweep = if cfg.stale_aggregation { stale_sweep } else { lindeberg_sweep };
        let report = sweep(&a, &b, &self.loadings, &cfg.factor)?;
        let surrogate = surrogate_g(&a, &b, &report.loadings)? + constant;
        if !surrogate.is_finite() {
            return Err(Error::NonFinite("surrogate value"));
        }

        let batch_norm = batch_norm_sq.sqrt();
        let max_batch_norm = self.max_batch_norm.max(batch_norm);
        let mut record = TraceRecord {
            t,
            weight: w,
            surrogate,
            surrogate_before,
            batch_loss,
            displacement: report.displacement(),
            growth_margin: report.growth_margin(),
            code_norm: frob(&code),
            batch_norm,
            max_batch_norm,
            a_norm: frob(&a),
            b_norm: b.norm(),
            a_min_eigenvalue: min_eigenvalue(&a),
            a_asymmetry: frob(&(&a - &a.t())),
            ..TraceRecord::default()
        };

        self.a = a;
        self.b = b;
        self.t = t;
        self.loadings = report.loadings;
        self.constant = constant;
        self.surrogate = surrogate;
        self.max_batch_norm = max_batch_norm;
        if let Some(h) = &mut self.history {
            h.weights.iter_mut().for_each(|v| *v *= 1.0 - w);
            h.weights.push(w);
            h.batches.push(batch.clone());
            h.codes.push(code.clone());
        }
        self.last_code = Some(code);
        if self.history.is_some() {
            record.empirical_loss = Some(self.empirical_loss(&self.loadings, cfg)?);
        }
        Ok(record)
    }

    /// `f_t(L) = Σ_s w_{s,t} ℓ(X_s, L)`, where `w_{s,t}` are the weights the
    /// surrogate recursion assigns to batch `s` at time `t`. Each stored batch
    /// is coded afresh against `L`, started from the code it received when it
    /// arrived.
    pub fn empirical_loss(&self, l: &LoadingSet, cfg: &RunConfig) -> Result<f64> {
        let h = self.history.as_ref().ok_or(Error::HistoryUnavailable)?;
        let coding = cfg.coding_settings();
        let gram = code_gram(l);
        let mut total = 0.0;
        for ((x, c0), w) in h.batches.iter().zip(&h.codes).zip(&h.weights) {
            let problem = CodingProblem::with_gram(x, l, &gram, &coding)?;
            let (c, _) = problem.solve(Some(c0))?;
            total += w * problem.objective(&c);
        }
        Ok(total)
    }

    /// Writes `A`, `B`, the factors and a `manifest.txt` into `dir`. The
    /// minibatch history is not saved.
    pub fn save_checkpoint(&self, cfg: &RunConfig, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_dtf(dir.join("A.dtf1"), &matrix_to_tensor(&self.a))?;
        write_dtf(dir.join("B.dtf1"), &self.b)?;
        for (j, u) in self.loadings.factors().iter().enumerate() {
            write_dtf(dir.join(format!("U{j}.dtf1")), &matrix_to_tensor(u))?;
        }
        if let Some(c) = &self.last_code {
            write_dtf(dir.join("code.dtf1"), &matrix_to_tensor(c))?;
        }
        let coding = &cfg.coding;
        let entries = [
            ("t", self.t.to_string()),
            ("ndim", self.loadings.ndim().to_string()),
            ("schedule", self.schedule.to_string()),
            ("lambda", format!("{:?}", cfg.lambda)),
            ("rank", cfg.rank.to_string()),
            ("batch_size", cfg.batch_size.to_string()),
            ("iterations", cfg.iterations.to_string()),
            ("seed", cfg.seed.to_string()),
            ("constant", format!("{:?}", self.constant)),
            ("surrogate", format!("{:?}", self.surrogate)),
            ("max_batch_norm", format!("{:?}", self.max_batch_norm)),
            ("u_max", format!("{:?}", cfg.factor.u_max)),
            ("factor_tol", format!("{:?}", cfg.factor.tol)),
            ("factor_max_sweeps", cfg.factor.max_sweeps.to_string()),
            ("coding_tol", format!("{:?}", coding.tol)),
            ("coding_max_iters", coding.max_iters.to_string()),
            ("coding_c_max", coding.c_max.map_or("none".into(), |v| format!("{v:?}"))),
            ("coding_ridge", format!("{:?}", coding.ridge)),
            ("coding_warm_start", coding.warm_start.to_string()),
        ];
        let mut text = String::new();
        for (k, v) in entries {
            text.push_str(&format!("{k}={v}\n"));
        }
        fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }

    /// Restores a state saved by [`save_checkpoint`](Self::save_checkpoint)
    /// together with the run configuration it was saved with. Continuing the
    /// run on the same remaining minibatches reproduces an uninterrupted run
    /// bit for bit.
    pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Self, RunConfig)> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("manifest.txt"))?;
        let mut map = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line `{line}` is not key=value")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: FromStr>(map: &std::collections::HashMap<String, String>, key: &str) -> Result<T> {
            map.get(key)
                .ok_or_else(|| Error::Format(format!("manifest is missing `{key}`")))?
                .parse()
                .map_err(|_| Error::Format(format!("manifest value for `{key}` is malformed")))
        }
        let c_max: String = get(&map, "coding_c_max")?;
        let cfg = RunConfig {
            rank: get(&map, "rank")?,
            batch_size: get(&map, "batch_size")?,
            lambda: get(&map, "lambda")?,
            schedule: get(&map, "schedule")?,
            coding: CodingSettings {
                lambda: get(&map, "lambda")?,
                tol: get(&map, "coding_tol")?,
                max_iters: get(&map, "coding_max_iters")?,
                c_max: if c_max == "none" {
                    None
                } else {
                    Some(c_max.parse().map_err(|_| Error::Format("malformed coding_c_max".into()))?)
                },
                ridge: get(&map, "coding_ridge")?,
                warm_start: get(&map, "coding_warm_start")?,
            },
            factor: FactorSettings {
                u_max: get(&map, "u_max")?,
                tol: get(&map, "factor_tol")?,
                max_sweeps: get(&map, "factor_max_sweeps")?,
            },
            iterations: get(&map, "iterations")?,
            seed: get(&map, "seed")?,
            diagnostic: false,
            stale_aggregation: false,
        };
        cfg.validate()?;
        let ndim: usize = get(&map, "ndim")?;
        let factors = (0..ndim)
            .map(|j| tensor_to_matrix(&read_dtf(dir.join(format!("U{j}.dtf1")))?))
            .collect::<Result<Vec<_>>>()?;
        let loadings = LoadingSet::new(factors)?;
        let mut state = Self::init(&cfg, &loadings.dims(), Init::Given(loadings))?;
        let a = tensor_to_matrix(&read_dtf(dir.join("A.dtf1"))?)?;
        let b = read_dtf(dir.join("B.dtf1"))?;
        if a.dim() != state.a.dim() || b.shape() != state.b.shape() {
            return Err(Error::Format("checkpoint aggregates do not match the loadings".into()));
        }
        let code_path = dir.join("code.dtf1");
        state.last_code = if code_path.exists() {
            Some(tensor_to_matrix(&read_dtf(code_path)?)?)
        } else {
            None
        };
        state.a = a;
        state.b = b;
        state.t = get(&map, "t")?;
        state.constant = get(&map, "constant")?;
        state.surrogate = get(&map, "surrogate")?;
        state.max_batch_norm = get(&map, "max_batch_norm")?;
        Ok((state, cfg))
    }
}

/// Final state and per-step trace of a run.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub state: AggregateState,
    pub trace: Vec<TraceRecord>,
}

impl FitOutput {
    pub fn loadings(&self) -> &LoadingSet {
        self.state.loadings()
    }
}

/// Runs [`AggregateState::step`] over the first `cfg.iterations` batches.
pub fn fit<I>(stream: I, cfg: &RunConfig, init: Init) -> Result<FitOutput>
where
    I: IntoIterator<Item = DenseTensor>,
{
    fit_with(stream, cfg, init, |_, _| Ok(()))
}

/// Like [`fit`], calling `observe` after every step so callers can attach
/// their own measurements to the trace record. Time spent in `observe` is
/// excluded from `wall_seconds`.
pub fn fit_with<I, F>(stream: I, cfg: &RunConfig, init: Init, mut observe: F) -> Result<FitOutput>
where
    I: IntoIterator<Item = DenseTensor>,
    F: FnMut(&AggregateState, &mut TraceRecord) -> Result<()>,
{
    cfg.validate()?;
    let mut batches = stream.into_iter().take(cfg.iterations);
    let first = batches.next().ok_or(Error::EmptyStream)?;
    if first.ndim() < 2 {
        return Err(shape_err(format!("minibatch {:?} has no sample mode", first.shape())));
    }
    let dims = first.shape()[..first.ndim() - 1].to_vec();
    let mut state = AggregateState::init(cfg, &dims, init)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut elapsed = 0.0;
    for batch in std::iter::once(first).chain(batches) {
        let start = Instant::now();
        let mut record = state.step(&batch, cfg)?;
        elapsed += start.elapsed().as_secs_f64();
        record.wall_seconds = elapsed;
        observe(&state, &mut record)?;
        trace.push(record);
    }
    Ok(FitOutput { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::cp_out;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights() {
        assert_eq!(WeightSchedule::Balanced.weight(1).unwrap(), 1.0);
        assert_eq!(WeightSchedule::Power(1.0).weight(4).unwrap(), 0.25);
        assert_abs_diff_eq!(WeightSchedule::Power(0.8).weight(10).unwrap(), 0.158489, epsilon = 1e-6);
        assert!(WeightSchedule::Balanced.weight(0).is_err());
        assert!(WeightSchedule::Power(1.5).validate().is_err());
        assert!(WeightSchedule::Power(0.5).validate().is_ok());
        assert_eq!("balanced".parse::<WeightSchedule>().unwrap(), WeightSchedule::Balanced);
        assert_eq!("0.9".parse::<WeightSchedule>().unwrap(), WeightSchedule::Power(0.9));
    }

    #[test]
    fn init_is_zero_and_reproducible() {
        let cfg = RunConfig::new(3, 2);
        let s1 = AggregateState::init(&cfg, &[4, 5], Init::Random).unwrap();
        let s2 = AggregateState::init(&cfg, &[4, 5], Init::Random).unwrap();
        assert_eq!(s1.a(), &Array2::zeros((3, 3)));
        assert_eq!(s1.b().shape(), &[4, 5, 3]);
        assert_eq!(s1.loadings(), s2.loadings());
        assert!(AggregateState::init(&cfg, &[4, 5], Init::Given(LoadingSet::random(&[4, 6], 3, &mut stream_rng(0, 0)))).is_err());
    }

    #[test]
    fn first_balanced_step_sets_a_to_code_gram() {
        let cfg = RunConfig {
            lambda: 0.1,
            ..RunConfig::new(2, 3)
        };
        let mut s = AggregateState::init(&cfg, &[3, 3], Init::Random).unwrap();
        let batch = DenseTensor::random_uniform(vec![3, 3, 3], &mut stream_rng(5, 9));
        let l0 = s.loadings().clone();
        s.step(&batch, &cfg).unwrap();
        let c = crate::coding::sparse_code(&batch, &l0, &cfg.coding_settings()).unwrap();
        assert_eq!(s.a(), &c.dot(&c.t()));
    }

    #[test]
    fn zero_batch_shrinks_aggregates() {
        let cfg = RunConfig {
            schedule: WeightSchedule::Power(1.0),
            ..RunConfig::new(2, 2)
        };
        let mut s = AggregateState::init(&cfg, &[3, 2], Init::Random).unwrap();
        s.step(&DenseTensor::random_uniform(vec![3, 2, 2], &mut stream_rng(1, 1)), &cfg).unwrap();
        let (a, b) = (s.a().clone(), s.b().clone());
        let rec = s.step(&DenseTensor::zeros(vec![3, 2, 2]), &cfg).unwrap();
        assert_eq!(rec.code_norm, 0.0);
        assert_eq!(s.a(), &(&a * 0.5));
        let mut half = b;
        half.scale(0.5);
        assert_eq!(s.b(), &half);
    }

    #[test]
    fn history_requires_diagnostic_mode() {
        let cfg = RunConfig::new(1, 1);
        let s = AggregateState::init(&cfg, &[2], Init::Random).unwrap();
        assert!(matches!(s.empirical_loss(s.loadings(), &cfg), Err(Error::HistoryUnavailable)));
    }

    #[test]
    fn single_atom_stream_reaches_zero() {
        let atom = LoadingSet::new(vec![
            ndarray::array![[1.0], [2.0], [0.5]],
            ndarray::array![[0.3], [1.0]],
        ])
        .unwrap();
        let batch = cp_out(&atom);
        let cfg = RunConfig {
            coding: CodingSettings {
                tol: 1e-12,
                max_iters: 2000,
                ..CodingSettings::default()
            },
            iterations: 50,
            ..RunConfig::new(1, 1)
        };
        let out = fit(std::iter::repeat(batch.clone()), &cfg, Init::Random).unwrap();
        assert_eq!(out.trace.len(), 50);
        assert!(out.state.surrogate() < 1e-6, "{}", out.state.surrogate());
        let c = crate::coding::sparse_code(&batch, out.loadings(), &cfg.coding_settings()).unwrap();
        let fit = crate::tensor::cp_eval(out.loadings(), &c).unwrap();
        assert!(batch.sub(&fit).unwrap().norm() < 1e-3);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let cfg = RunConfig::new(1, 1);
        assert!(matches!(fit(Vec::new(), &cfg, Init::Random), Err(Error::EmptyStream)));
    }
}
