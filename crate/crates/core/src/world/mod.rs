//! Seeded 2-D dribbling simulator: a point robot and a ball on a strip of
//! terrain zones, four closed-form low-level skills at 50 Hz under 10 Hz
//! high-level decisions, and the dribbling reward suite.

mod config;
mod env;
mod observe;
mod physics;
mod report;
mod reward;
mod state;
mod terrain;

pub use config::{RewardConfig, RewardWeights, SkillKind, SkillSpec, TerrainParams, WorldConfig};
pub use env::{high_level_step, reset, DribbleEnv, EnvSnapshot, FinishedEpisode, StepOutcome};
pub use observe::{
    context_target, estimator_features, observe, policy_dims, Observation, ACTOR_FIELDS,
    ACTOR_OBS_DIM, ESTIMATOR_FIELDS, ESTIMATOR_STEP_DIM, FULL_STATE_DIM, PRIVILEGED_FIELDS,
};
pub use physics::{clip_command, integrate_axis, low_level_step};
pub use report::{skill_usage_report, SkillUsage, StepRecord};
pub use reward::{
    compute_reward, max_step_reward, velocity_angle_term, velocity_error_kernel, RewardBreakdown,
    RewardTerms,
};
pub use state::{clip_norm, wrap_angle, WorldState};
pub use terrain::{zone_at, zone_by_index, zone_index, TerrainKind, TerrainZone};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("skill index {0} is out of range")]
    InvalidSkill(usize),
    #[error("command must hold 5 finite values")]
    InvalidCommand,
}
