//! End-to-end training: run configuration, seeded collection and update
//! loop, checkpoints, metrics logs, evaluation and plot emission.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod plot;
mod trainer;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{first_difference, EstimatorConfig, Overrides, RunConfig};
pub use eval::{evaluate, skill_usage_by_terrain, EvalOptions, EvalSummary, TerrainCompletion};
pub use metrics::{read_metrics, LogHeader, MetricsLog, MetricsRecord, MetricsWriter};
pub use plot::{emit_plots, CurvePoint, PlotReport};
pub use trainer::{pretrain_estimator, resume, train, TrainSummary, Trainer};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curriculum::CurriculumError;
use crate::dsfpo::DsfPoError;
use crate::policy::PolicyError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint config differs from the supplied config at `{0}`")]
    ConfigMismatch(String),
    #[error("non-finite loss at iteration {iteration}; state saved to {checkpoint}: {detail}")]
    NonFiniteLoss {
        iteration: usize,
        checkpoint: PathBuf,
        detail: String,
    },
    #[error("no parseable metrics records in {0}")]
    EmptyLog(PathBuf),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Update(#[from] DsfPoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Independent generator for the named stream under `seed`.
///
/// Streams are keyed by name, so adding streams (for example more
/// environments) leaves existing ones unchanged.
pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed_by_seed_and_name() {
        let a: u64 = stream_rng(1, "env/0").random();
        assert_eq!(a, stream_rng(1, "env/0").random::<u64>());
        assert_ne!(a, stream_rng(1, "env/1").random::<u64>());
        assert_ne!(a, stream_rng(2, "env/0").random::<u64>());
    }
}
