//! Data sources named on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use ocpdl_core::streams::markov::read_markov_spec;
use ocpdl_core::tensor::concat_last;
use ocpdl_core::{read_dtf, DenseTensor, MarkovChainSpec, SyntheticCPSpec};

use crate::config::{parse_list, Params};
use crate::UsageError;

/// How the online method sees the data.
#[derive(Debug, Clone)]
pub enum Feed {
    /// Random last-mode subsamples of the full tensor.
    Subsample,
    /// Minibatches from a Markov-modulated stream; no full tensor exists.
    Markov(MarkovChainSpec),
    /// A fixed sequence of minibatches, used in order.
    Sequence(Vec<DenseTensor>),
}

#[derive(Debug, Clone)]
pub struct Data {
    /// Reference tensor for error curves and the offline baselines.
    pub full: Option<DenseTensor>,
    pub feed: Feed,
    pub description: String,
}

fn load_tensor(path: &Path) -> Result<DenseTensor, UsageError> {
    read_dtf(path).map_err(|e| UsageError(format!("cannot load tensor {}: {e}", path.display())))
}

/// Minibatch files of a stream directory in name order.
pub fn stream_files(dir: &Path) -> Result<Vec<PathBuf>, UsageError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| UsageError(format!("cannot read stream directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dtf1"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(UsageError(format!("no .dtf1 files in {}", dir.display())));
    }
    Ok(files)
}

/// Resolves exactly one of `tensor`, `synthetic`, `markov`, `stream_dir`.
/// `rank` and `seed` parameterize the synthetic ground truth (the
/// `true_rank` key overrides the rank).
pub fn load(p: &Params, rank: usize, seed: u64, subsample: usize) -> Result<Data, UsageError> {
    let chosen: Vec<&str> = ["tensor", "synthetic", "markov", "stream_dir"]
        .into_iter()
        .filter(|k| p.has(k))
        .collect();
    match chosen.as_slice() {
        ["tensor"] => {
            let path: PathBuf = p.require("tensor")?;
            let full = load_tensor(&path)?;
            if full.ndim() < 2 {
                return Err(UsageError("the tensor needs at least two modes".into()));
            }
            Ok(Data {
                description: format!("{} {:?}", path.display(), full.shape()),
                full: Some(full),
                feed: Feed::Subsample,
            })
        }
        ["synthetic"] => {
            let dims: Vec<usize> = parse_list(&p.require::<String>("synthetic")?)?;
            let true_rank = p.get("true_rank", rank)?;
            if dims.len() < 2 || dims.contains(&0) {
                return Err(UsageError("synthetic shape needs at least two positive modes".into()));
            }
            let m = subsample.clamp(1, dims[dims.len() - 1].max(1));
            let spec = SyntheticCPSpec::random(&dims, true_rank, m, seed)
                .map_err(|e| UsageError(format!("synthetic data: {e}")))?;
            Ok(Data {
                description: format!("synthetic {dims:?}, true rank {true_rank}, seed {seed}"),
                full: Some(spec.materialize()),
                feed: Feed::Subsample,
            })
        }
        ["markov"] => {
            let path: PathBuf = p.require("markov")?;
            let spec = read_markov_spec(&path)
                .map_err(|e| UsageError(format!("cannot load markov spec {}: {e}", path.display())))?;
            Ok(Data {
                description: format!("markov chain {} ({} states)", path.display(), spec.states()),
                full: None,
                feed: Feed::Markov(spec),
            })
        }
        ["stream_dir"] => {
            let dir: PathBuf = p.require("stream_dir")?;
            let batches = stream_files(&dir)?
                .iter()
                .map(|f| load_tensor(f))
                .collect::<Result<Vec<_>, _>>()?;
            let parts: Vec<&DenseTensor> = batches.iter().collect();
            let full = concat_last(&parts)
                .map_err(|e| UsageError(format!("stream directory {}: {e}", dir.display())))?;
            Ok(Data {
                description: format!("{} minibatches from {}", batches.len(), dir.display()),
                full: Some(full),
                feed: Feed::Sequence(batches),
            })
        }
        [] => Err(UsageError(
            "no data source: give one of --tensor, --synthetic, --markov, --stream-dir".into(),
        )),
        many => Err(UsageError(format!("conflicting data sources: {}", many.join(", ")))),
    }
}
