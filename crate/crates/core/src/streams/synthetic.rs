//! Synthetic CP ground truth and last-mode subsampling.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::streams::{stream_id, stream_rng};
use crate::tensor::{cp_reconstruct, DenseTensor, LoadingSet};

/// Ground truth `Out(V_1, …, V_n)` whose last mode has length `N`, sampled
/// `m` coordinates at a time.
#[derive(Debug, Clone)]
pub struct SyntheticCPSpec {
    true_loadings: LoadingSet,
    subsample: usize,
    seed: u64,
}

impl SyntheticCPSpec {
    pub fn new(true_loadings: LoadingSet, subsample: usize, seed: u64) -> Result<Self> {
        if true_loadings.ndim() < 2 {
            return Err(Error::InvalidArgument("ground truth needs at least two modes".into()));
        }
        let n = *true_loadings.dims().last().unwrap();
        if subsample == 0 || subsample > n {
            return Err(Error::InvalidArgument(format!(
                "subsample size {subsample} must lie in 1..={n}"
            )));
        }
        if !true_loadings.within_box(1.0) {
            return Err(Error::InvalidArgument("ground-truth entries must lie in [0, 1]".into()));
        }
        Ok(Self {
            true_loadings,
            subsample,
            seed,
        })
    }

    /// Loadings with independent uniform[0, 1) entries; `shape` includes the
    /// last mode.
    pub fn random(shape: &[usize], rank: usize, subsample: usize, seed: u64) -> Result<Self> {
        if shape.contains(&0) || rank == 0 {
            return Err(Error::InvalidArgument("shape and rank must be positive".into()));
        }
        let mut rng = stream_rng(seed, stream_id::GROUND_TRUTH);
        Self::new(LoadingSet::random(shape, rank, &mut rng), subsample, seed)
    }

    pub fn true_loadings(&self) -> &LoadingSet {
        &self.true_loadings
    }

    pub fn full_last_mode(&self) -> usize {
        *self.true_loadings.dims().last().unwrap()
    }

    pub fn subsample(&self) -> usize {
        self.subsample
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn materialize(&self) -> DenseTensor {
        cp_reconstruct(&self.true_loadings)
    }
}

/// Batches of `m` distinct last-mode slices, drawn afresh for every batch.
#[derive(Debug, Clone)]
pub struct SubsampleStream<R = ChaCha8Rng> {
    full: DenseTensor,
    m: usize,
    remaining: usize,
    rng: R,
}

impl<R: Rng> Iterator for SubsampleStream<R> {
    type Item = DenseTensor;

    fn next(&mut self) -> Option<DenseTensor> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let idx = sample(&mut self.rng, self.full.last_dim(), self.m).into_vec();
        Some(self.full.select_last(&idx).expect("indices are in range"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Subsamples any tensor along its last mode.
pub fn subsample_stream<R: Rng>(full: DenseTensor, m: usize, length: usize, rng: R) -> Result<SubsampleStream<R>> {
    if full.ndim() < 2 {
        return Err(Error::InvalidArgument("need at least two modes to subsample".into()));
    }
    if m == 0 || m > full.last_dim() {
        return Err(Error::InvalidArgument(format!(
            "subsample size {m} must lie in 1..={}",
            full.last_dim()
        )));
    }
    Ok(SubsampleStream {
        full,
        m,
        remaining: length,
        rng,
    })
}

/// The materialized tensor and `length` subsampled batches from it.
pub fn synthetic_stream(spec: &SyntheticCPSpec, length: usize) -> Result<(DenseTensor, SubsampleStream)> {
    let full = spec.materialize();
    let rng = stream_rng(spec.seed, stream_id::SUBSAMPLE);
    let stream = subsample_stream(full.clone(), spec.subsample, length, rng)?;
    Ok((full, stream))
}
