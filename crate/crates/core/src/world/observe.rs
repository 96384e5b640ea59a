use serde::{Deserialize, Serialize};

use crate::policy::{EstimatedContext, PolicyDims};

use super::{zone_at, WorldConfig, WorldState};

/// Named blocks of the actor observation, in order.
pub const ACTOR_FIELDS: &[(&str, usize)] = &[
    ("heading_cos_sin", 2),
    ("robot_velocity", 2),
    ("ball_relative_position", 2),
    ("previous_skill_one_hot", 4),
    ("previous_command", 5),
    ("user_command", 2),
    ("estimated_context", 6),
];

/// Blocks appended to the actor observation to form the critic state.
pub const PRIVILEGED_FIELDS: &[(&str, usize)] = &[
    ("ball_velocity", 2),
    ("terrain_slope", 2),
    ("terrain_roughness", 1),
    ("terrain_friction", 1),
    ("stair_drop", 1),
    ("episode_progress", 1),
    ("robot_position", 2),
];

/// Per-step inputs of the context estimator.
pub const ESTIMATOR_FIELDS: &[(&str, usize)] = &[
    ("heading_cos_sin", 2),
    ("robot_velocity", 2),
    ("ball_relative_position", 2),
    ("robot_tilt", 2),
];

const fn width(fields: &[(&str, usize)]) -> usize {
    let mut n = 0;
    let mut i = 0;
    while i < fields.len() {
        n += fields[i].1;
        i += 1;
    }
    n
}

pub const ACTOR_OBS_DIM: usize = width(ACTOR_FIELDS);
pub const FULL_STATE_DIM: usize = ACTOR_OBS_DIM + width(PRIVILEGED_FIELDS);
pub const ESTIMATOR_STEP_DIM: usize = width(ESTIMATOR_FIELDS);

pub fn policy_dims() -> PolicyDims {
    PolicyDims {
        obs_dim: ACTOR_OBS_DIM,
        state_dim: FULL_STATE_DIM,
        estimator_step_dim: ESTIMATOR_STEP_DIM,
        context_dim: EstimatedContext::DIM,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub actor: Vec<f64>,
    pub state: Vec<f64>,
}

/// Actor observation (no privileged fields) and critic state.
pub fn observe(config: &WorldConfig, s: &WorldState, z: &EstimatedContext) -> Observation {
    let mut actor = Vec::with_capacity(ACTOR_OBS_DIM);
    actor.extend([s.heading.cos(), s.heading.sin()]);
    actor.extend(s.robot_vel);
    actor.extend(s.ball_offset());
    let mut onehot = [0.0; 4];
    if let Some(d) = s.last_skill() {
        if d < 4 {
            onehot[d] = 1.0;
        }
    }
    actor.extend(onehot);
    actor.extend(s.prev_command);
    actor.extend(s.user_command);
    actor.extend(z.to_vec());

    let zone = zone_at(config, s.difficulty, s.ball_pos[0]);
    let mut state = actor.clone();
    state.extend(s.ball_vel);
    state.extend(zone.slope);
    state.push(zone.roughness);
    state.push(zone.friction);
    state.push(zone.stair_drop);
    state.push(s.step as f64 / config.episode_steps as f64);
    state.push(2.0 * s.robot_pos[0] / config.arena_length() - 1.0);
    state.push(s.robot_pos[1] / config.half_width);
    Observation { actor, state }
}

/// Non-privileged per-step features fed to the context estimator.
pub fn estimator_features(config: &WorldConfig, s: &WorldState) -> Vec<f64> {
    let tilt = zone_at(config, s.difficulty, s.robot_pos[0]).slope;
    let mut f = Vec::with_capacity(ESTIMATOR_STEP_DIM);
    f.extend([s.heading.cos(), s.heading.sin()]);
    f.extend(s.robot_vel);
    f.extend(s.ball_offset());
    f.extend([tilt[0] / config.gravity, tilt[1] / config.gravity]);
    f
}

/// Ground truth the estimator regresses onto: ball velocity and the
/// parameters of the zone under the ball.
pub fn context_target(config: &WorldConfig, s: &WorldState) -> EstimatedContext {
    let zone = zone_at(config, s.difficulty, s.ball_pos[0]);
    EstimatedContext {
        ball_velocity: s.ball_vel,
        slope: zone.slope,
        roughness: zone.roughness,
        friction: zone.friction,
    }
}
