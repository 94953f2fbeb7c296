//! Finite-state Markov chains with a tensor-valued observation map.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use rand::Rng;

use crate::dtf::read_dtf;
use crate::error::{shape_err, Error, Result};
use crate::tensor::DenseTensor;

const ROW_SUM_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    State(usize),
    Distribution(Vec<f64>),
}

/// Row-stochastic transition matrix `P` plus one observation tensor per state.
#[derive(Debug, Clone)]
pub struct MarkovChainSpec {
    transition: Array2<f64>,
    observations: Vec<DenseTensor>,
    initial: InitialState,
}

impl MarkovChainSpec {
    pub fn new(
        transition: Array2<f64>,
        observations: Vec<DenseTensor>,
        initial: InitialState,
    ) -> Result<Self> {
        let k = transition.nrows();
        if k == 0 || transition.ncols() != k {
            return Err(shape_err(format!("transition matrix must be square, got {:?}", transition.dim())));
        }
        for (i, row) in transition.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {i} sums to {sum}, not 1")));
            }
        }
        if observations.len() != k {
            return Err(shape_err(format!("{k} states but {} observations", observations.len())));
        }
        if observations.iter().any(|o| o.shape() != observations[0].shape()) {
            return Err(shape_err("observation tensors must share one shape"));
        }
        match &initial {
            InitialState::State(s) if *s >= k => {
                return Err(Error::InvalidArgument(format!("initial state {s} out of range")));
            }
            InitialState::Distribution(d)
                if d.len() != k || d.iter().any(|&p| !(p >= 0.0)) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-9 =>
            {
                return Err(Error::InvalidArgument("initial distribution is not a probability vector".into()));
            }
            _ => {}
        }
        Ok(Self {
            transition,
            observations,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &Array2<f64> {
        &self.transition
    }

    pub fn observations(&self) -> &[DenseTensor] {
        &self.observations
    }

    pub fn observation_shape(&self) -> &[usize] {
        self.observations[0].shape()
    }

    pub fn initial(&self) -> &InitialState {
        &self.initial
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.transition.row(i).into_iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, _)| j).collect::<Vec<_>>().into_iter()
    }

    fn reachable(&self, reverse: bool) -> Vec<bool> {
        let k = self.states();
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..k {
                let p = if reverse { self.transition[[j, i]] } else { self.transition[[i, j]] };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Strong connectivity of the positive-entry graph.
    pub fn is_irreducible(&self) -> bool {
        self.reachable(false).iter().all(|&s| s) && self.reachable(true).iter().all(|&s| s)
    }

    /// Period of an irreducible chain (1 = aperiodic); `None` if reducible.
    pub fn period(&self) -> Option<usize> {
        if !self.is_irreducible() {
            return None;
        }
        let k = self.states();
        let mut level = vec![usize::MAX; k];
        level[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        let mut g = 0usize;
        while let Some(i) = queue.pop_front() {
            for j in self.successors(i) {
                if level[j] == usize::MAX {
                    level[j] = level[i] + 1;
                    queue.push_back(j);
                } else {
                    g = gcd(g, (level[i] + 1).abs_diff(level[j]));
                }
            }
        }
        Some(g.max(1))
    }

    fn warn_on_assumptions(&self) {
        match self.period() {
            None => warn!("markov chain is reducible; it has no unique stationary distribution"),
            Some(p) if p > 1 => warn!("markov chain is periodic with period {p}"),
            _ => {}
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Samples the successor of `state` by inverse CDF on its row with a single
/// uniform draw.
pub fn markov_next<R: Rng + ?Sized>(spec: &MarkovChainSpec, state: usize, rng: &mut R) -> Result<usize> {
    if state >= spec.states() {
        return Err(Error::InvalidArgument(format!("state {state} out of range")));
    }
    Ok(sample_row(spec.transition.row(state).iter().copied(), rng))
}

fn sample_row<R: Rng + ?Sized>(row: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, p) in row.enumerate() {
        if p > 0.0 {
            last_positive = j;
        }
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding gap above the row sum
    last_positive
}

/// Stationary distribution by power iteration on the lazy chain `(I + P)/2`,
/// which has the same fixed point and converges for periodic chains too.
pub fn stationary_dist(spec: &MarkovChainSpec) -> Result<Vec<f64>> {
    if !spec.is_irreducible() {
        return Err(Error::ReducibleChain);
    }
    let k = spec.states();
    let p = &spec.transition;
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..POWER_MAX_ITERS {
        let mut next = vec![0.0; k];
        for (i, &mass) in pi.iter().enumerate() {
            for j in 0..k {
                next[j] += mass * p[[i, j]];
            }
        }
        for (n, &old) in next.iter_mut().zip(&pi) {
            *n = 0.5 * (*n + old);
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff <= POWER_TOL {
            return Ok(pi);
        }
    }
    Err(Error::NotConverged(POWER_MAX_ITERS))
}

/// Fraction of time spent in each state over `steps` transitions from the
/// initial state.
pub fn empirical_occupancy<R: Rng + ?Sized>(spec: &MarkovChainSpec, steps: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; spec.states()];
    let mut state = initial_state(spec, rng);
    for _ in 0..steps {
        state = markov_next(spec, state, rng)?;
        counts[state] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / steps.max(1) as f64).collect())
}

/// `½‖p − q‖₁`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn initial_state<R: Rng + ?Sized>(spec: &MarkovChainSpec, rng: &mut R) -> usize {
    match &spec.initial {
        InitialState::State(s) => *s,
        InitialState::Distribution(d) => sample_row(d.iter().copied(), rng),
    }
}

/// Minibatches `[φ(Y_{t,1}), …, φ(Y_{t,b})]` stacked along a trailing mode;
/// the chain advances once before every observation.
#[derive(Debug, Clone)]
pub struct MarkovStream<R> {
    spec: MarkovChainSpec,
    rng: R,
    state: usize,
    batch: usize,
    remaining: usize,
}

impl<R: Rng> MarkovStream<R> {
    pub fn state(&self) -> usize {
        self.state
    }
}

impl<R: Rng> Iterator for MarkovStream<R> {
    type Item = DenseTensor;

    fn next(&mut self) -> Option<DenseTensor> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut slices = Vec::with_capacity(self.batch);
        for _ in 0..self.batch {
            self.state = sample_row(self.spec.transition.row(self.state).iter().copied(), &mut self.rng);
            slices.push(self.spec.observations[self.state].clone());
        }
        Some(DenseTensor::stack(&slices).expect("observations share one shape"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// A stream of `length` minibatches of `b` observations each. Reducible or
/// periodic chains are accepted with a warning.
pub fn markov_tensor_stream<R: Rng>(spec: &MarkovChainSpec, length: usize, b: usize, mut rng: R) -> Result<MarkovStream<R>> {
    if b == 0 {
        return Err(Error::InvalidArgument("minibatch size must be ≥ 1".into()));
    }
    spec.warn_on_assumptions();
    let state = initial_state(spec, &mut rng);
    Ok(MarkovStream {
        spec: spec.clone(),
        rng,
        state,
        batch: b,
        remaining: length,
    })
}

/// Reads the plain-text chain format: the state count `k`, then `k` rows of
/// `P`, then `k` DTF1 paths (relative paths resolve against the spec file's
/// directory). Blank lines and `#` comments are ignored. The chain starts in
/// state 0.
pub fn read_markov_spec(path: impl AsRef<Path>) -> Result<MarkovChainSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let k: usize = lines
        .next()
        .and_then(|l| l.parse().ok())
        .ok_or_else(|| Error::Format("first line must hold the state count".into()))?;
    if k == 0 {
        return Err(Error::Format("state count must be positive".into()));
    }
    let mut transition = Array2::zeros((k, k));
    for i in 0..k {
        let line = lines.next().ok_or_else(|| Error::Format(format!("missing transition row {i}")))?;
        let row: Vec<f64> = line
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("transition row {i}: {e}")))?;
        if row.len() != k {
            return Err(Error::Format(format!("transition row {i} has {} entries, expected {k}", row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            transition[[i, j]] = v;
        }
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut observations = Vec::with_capacity(k);
    for i in 0..k {
        let p = lines.next().ok_or_else(|| Error::Format(format!("missing observation path {i}")))?;
        observations.push(read_dtf(base.join(p))?);
    }
    MarkovChainSpec::new(transition, observations, InitialState::State(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream_rng;
    use ndarray::array;

    fn obs(k: usize) -> Vec<DenseTensor> {
        (0..k).map(|i| DenseTensor::filled(vec![2, 2], i as f64)).collect()
    }

    fn two_state() -> MarkovChainSpec {
        MarkovChainSpec::new(array![[0.9, 0.1], [0.2, 0.8]], obs(2), InitialState::State(0)).unwrap()
    }

    #[test]
    fn identity_chain_never_moves() {
        let spec = MarkovChainSpec::new(Array2::eye(3), obs(3), InitialState::State(1)).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut s = 1;
        for _ in 0..100 {
            s = markov_next(&spec, s, &mut rng).unwrap();
            assert_eq!(s, 1);
        }
        assert!(matches!(stationary_dist(&spec), Err(Error::ReducibleChain)));
        assert!(markov_next(&spec, 3, &mut rng).is_err());
    }

    #[test]
    fn stationary_two_state() {
        let pi = stationary_dist(&two_state()).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let p = array![[0.2, 0.5, 0.3], [0.3, 0.2, 0.5], [0.5, 0.3, 0.2]];
        let spec = MarkovChainSpec::new(p, obs(3), InitialState::State(0)).unwrap();
        for v in stationary_dist(&spec).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_chain_has_period_two_but_a_stationary_law() {
        let spec = MarkovChainSpec::new(array![[0.0, 1.0], [1.0, 0.0]], obs(2), InitialState::State(0)).unwrap();
        assert_eq!(spec.period(), Some(2));
        assert_eq!(two_state().period(), Some(1));
        let pi = stationary_dist(&spec).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
        let batches: Vec<_> = markov_tensor_stream(&spec, 3, 2, stream_rng(0, 0)).unwrap().collect();
        assert_eq!(batches.len(), 3);
        // alternates 1, 0, 1, 0, …
        assert_eq!(batches[0].last_slice(0)[0], 1.0);
        assert_eq!(batches[0].last_slice(1)[0], 0.0);
    }

    #[test]
    fn validation() {
        assert!(MarkovChainSpec::new(array![[0.5, 0.4], [0.2, 0.8]], obs(2), InitialState::State(0)).is_err());
        assert!(MarkovChainSpec::new(array![[1.5, -0.5], [0.2, 0.8]], obs(2), InitialState::State(0)).is_err());
        assert!(MarkovChainSpec::new(array![[1.0]], obs(2), InitialState::State(0)).is_err());
        assert!(MarkovChainSpec::new(array![[1.0]], obs(1), InitialState::State(1)).is_err());
    }

    #[test]
    fn single_state_stream_is_constant() {
        let spec = MarkovChainSpec::new(array![[1.0]], obs(1), InitialState::State(0)).unwrap();
        let batches: Vec<_> = markov_tensor_stream(&spec, 4, 3, stream_rng(2, 0)).unwrap().collect();
        assert_eq!(batches.len(), 4);
        assert!(batches.iter().all(|b| b.shape() == [2, 2, 3] && b.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn iid_rows_sample_states_uniformly() {
        let spec = MarkovChainSpec::new(array![[0.5, 0.5], [0.5, 0.5]], obs(2), InitialState::State(0)).unwrap();
        let occ = empirical_occupancy(&spec, 100_000, &mut stream_rng(4, 0)).unwrap();
        assert!(total_variation(&occ, &[0.5, 0.5]) < 0.01);
    }
}
