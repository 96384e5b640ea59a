//! Skill-focused clipped policy optimization with GAE, plus the
//! standard-PPO joint-ratio baseline.

mod buffer;
mod gae;
mod objective;
mod update;

pub use buffer::{RolloutBuffer, Transition, UpdateBatch};
pub use gae::compute_gae;
pub use objective::{
    build_loss, clipped_objective, dsf_log_ratio, entropy_bonus, gaussian_entropy,
    standard_ppo_log_ratio, surrogate_loss, LossNodes, LOG_RATIO_LIMIT,
};
pub use update::{update, LossTerm, UpdateStats, Updater};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::AdError;
use crate::policy::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DsfPo,
    StandardPpo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DsfPo => "dsf_po",
            Algorithm::StandardPpo => "standard_ppo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dsf_po" => Ok(Algorithm::DsfPo),
            "standard_ppo" => Ok(Algorithm::StandardPpo),
            other => Err(format!(
                "unknown algorithm '{other}' (expected dsf_po or standard_ppo)"
            )),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsfPoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub algorithm: Algorithm,
}

impl Default for DsfPoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            learning_rate: 3e-4,
            max_grad_norm: 1.0,
            algorithm: Algorithm::DsfPo,
        }
    }
}

impl DsfPoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return Err("epochs and minibatches must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err("learning_rate and max_grad_norm must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DsfPoError {
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} done flags")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error("rollout buffer holds {have} transitions, expected {want}")]
    IncompleteBuffer { have: usize, want: usize },
    #[error("advantages are not finite")]
    NonFiniteAdvantage,
    #[error("advantages have not been computed")]
    MissingAdvantages,
    #[error("transition {0} is missing old log-probabilities or focus weights")]
    MissingOldRecord(usize),
    #[error("batch of {got} samples cannot be split into {minibatches} minibatches")]
    BatchTooSmall { got: usize, minibatches: usize },
    #[error("non-finite loss at epoch {epoch}, minibatch {minibatch}: {stats:?}")]
    NonFiniteLoss {
        epoch: usize,
        minibatch: usize,
        stats: UpdateStats,
    },
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}
