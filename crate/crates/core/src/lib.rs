//! Online nonnegative CP-dictionary learning.
//!
//! Learns nonnegative loading matrices `U_1, …, U_n` whose rank-one atoms
//! reconstruct a stream of tensor minibatches, keeping only `O(R·∏I_j)`
//! state between minibatches. Offline ALS and multiplicative-update
//! baselines, data streams and invariant diagnostics live alongside.
//!
//! ```
//! use ocpdl_core::{fit, synthetic_stream, Init, RunConfig, SyntheticCPSpec};
//!
//! let spec = SyntheticCPSpec::random(&[6, 6, 40], 2, 5, 1).unwrap();
//! let (_, stream) = synthetic_stream(&spec, 20).unwrap();
//! let cfg = RunConfig { iterations: 20, ..RunConfig::new(2, 5) };
//! let out = fit(stream, &cfg, Init::Random).unwrap();
//! assert_eq!(out.trace.len(), 20);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod coding;
pub mod diagnostics;
pub mod dict;
pub mod dtf;
pub mod error;
pub mod online;
pub mod streams;
pub mod tensor;

pub use baselines::{
    als_sweep, full_objective, mttkrp, mu_sweep, refit_last_mode, run_baseline, Baseline,
};
pub use coding::{
    code_gram, code_rhs, coding_objective, loss, sparse_code, sparse_code_from, CodeMatrix,
    CodingProblem, CodingSettings,
};
pub use diagnostics::{check_run, Check, Status};
pub use dict::{
    block_objective, intermediate_aggregation, lindeberg_sweep, surrogate_g, surrogate_g_mode,
    update_factor, FactorSettings, IntermediateAggregates, SweepReport,
};
pub use dtf::{read_dtf, read_dtf_from, write_dtf, write_dtf_to};
pub use error::{Error, Result};
pub use online::{fit, fit_with, weight, AggregateState, FitOutput, Init, RunConfig, TraceRecord, WeightSchedule};
pub use streams::{
    markov_next, markov_tensor_stream, patch_stream, ppm_read, ppm_write, stationary_dist,
    stream_rng, subsample_stream, synthetic_stream, InitialState, MarkovChainSpec, SyntheticCPSpec,
};
pub use tensor::{
    abs_error, cp_eval, cp_out, cp_reconstruct, devectorize, hadamard, khatri_rao, khatri_rao_chain,
    mode_product, refold, rel_error, unfold, vectorize, DenseTensor, LoadingSet,
};
