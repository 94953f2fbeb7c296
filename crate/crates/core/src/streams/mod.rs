//! Data sources: Markov-modulated observation streams, synthetic CP ground
//! truth with last-mode subsampling, and image patches.
//!
//! Every stream owns a ChaCha8 generator (`rand_chacha`) built with
//! `seed_from_u64(seed)` and then moved to a numbered stream with
//! `set_stream`, so one seed yields independent, reproducible sequences for
//! each consumer.

pub mod image;
pub mod markov;
pub mod synthetic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use image::{extract_patch, patch_stream, ppm_read, ppm_read_from, ppm_write, ppm_write_to, PatchStream};
pub use markov::{
    empirical_occupancy, markov_next, markov_tensor_stream, read_markov_spec, stationary_dist,
    total_variation, InitialState, MarkovChainSpec, MarkovStream,
};
pub use synthetic::{subsample_stream, synthetic_stream, SubsampleStream, SyntheticCPSpec};

/// Stream ids used by the crate; callers may use any other id freely.
pub mod stream_id {
    pub const INIT: u64 = 0;
    pub const GROUND_TRUTH: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const MARKOV: u64 = 3;
    pub const PATCHES: u64 = 4;
}

/// The generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
