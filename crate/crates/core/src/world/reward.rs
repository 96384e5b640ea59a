use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::state::wrap_angle;
use super::{RewardWeights, SkillKind, WorldConfig, WorldState};

/// One value per reward term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub robot_ball_distance: f64,
    pub yaw_alignment: f64,
    pub consistent_skill_index: f64,
    pub change_skill_index: f64,
    pub ball_velocity_norm: f64,
    pub ball_velocity_angle: f64,
    pub ball_velocity_error: f64,
    pub dribbling_near_ball: f64,
}

impl RewardTerms {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.robot_ball_distance,
            self.yaw_alignment,
            self.consistent_skill_index,
            self.change_skill_index,
            self.ball_velocity_norm,
            self.ball_velocity_angle,
            self.ball_velocity_error,
            self.dribbling_near_ball,
        ]
    }

    fn weighted(&self, w: &RewardWeights) -> Self {
        Self {
            robot_ball_distance: w.robot_ball_distance * self.robot_ball_distance,
            yaw_alignment: w.yaw_alignment * self.yaw_alignment,
            consistent_skill_index: w.consistent_skill_index * self.consistent_skill_index,
            change_skill_index: w.change_skill_index * self.change_skill_index,
            ball_velocity_norm: w.ball_velocity_norm * self.ball_velocity_norm,
            ball_velocity_angle: w.ball_velocity_angle * self.ball_velocity_angle,
            ball_velocity_error: w.ball_velocity_error * self.ball_velocity_error,
            dribbling_near_ball: w.dribbling_near_ball * self.dribbling_near_ball,
        }
    }
}

/// Raw terms, their weighted contributions and the total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: RewardTerms,
    pub weighted: RewardTerms,
    pub total: f64,
}

/// Upper bound of the per-step total under `config`.
pub fn max_step_reward(config: &WorldConfig) -> f64 {
    let w = &config.reward.weights;
    let window = config.reward.consistency_window as f64;
    [
        w.robot_ball_distance,
        w.yaw_alignment,
        w.consistent_skill_index * window,
        w.change_skill_index,
        w.ball_velocity_norm,
        w.ball_velocity_angle,
        w.ball_velocity_error,
        w.dribbling_near_ball,
    ]
    .iter()
    .filter(|&&x| x > 0.0)
    .sum()
}

fn heading_of(v: [f64; 2]) -> Option<f64> {
    if v[0].hypot(v[1]) < 1e-9 {
        None
    } else {
        Some(v[1].atan2(v[0]))
    }
}

/// 1 - (angle error)^2 / pi^2 between ball velocity and command. A zero
/// command scores 1; a ball at rest under a nonzero command scores the
/// value at a right-angle error.
pub fn velocity_angle_term(ball_vel: [f64; 2], command: [f64; 2]) -> f64 {
    let err = match (heading_of(ball_vel), heading_of(command)) {
        (_, None) => 0.0,
        (None, Some(_)) => PI / 2.0,
        (Some(b), Some(c)) => wrap_angle(b - c),
    };
    1.0 - err * err / (PI * PI)
}

pub fn velocity_error_kernel(config: &WorldConfig, state: &WorldState) -> f64 {
    let dx = state.ball_vel[0] - state.user_command[0];
    let dy = state.ball_vel[1] - state.user_command[1];
    (-config.reward.delta_v * (dx * dx + dy * dy)).exp()
}

/// Table I terms evaluated on the post-step state. The last entry of
/// `state.skill_history` is the skill just executed.
pub fn compute_reward(config: &WorldConfig, state: &WorldState) -> RewardBreakdown {
    let rc = &config.reward;
    let offset = state.ball_offset();
    let dist = state.ball_distance();
    let cmd = state.user_command;

    let (e_cmd, e_base) = match heading_of(offset) {
        Some(to_ball) => (
            heading_of(cmd).map_or(0.0, |c| wrap_angle(to_ball - c)),
            wrap_angle(to_ball - state.heading),
        ),
        None => (0.0, 0.0),
    };

    let hist: Vec<usize> = state.skill_history.iter().copied().collect();
    let comparisons = hist.windows(2).rev().take(rc.consistency_window);
    let consistent = comparisons.filter(|w| w[0] == w[1]).count() as f64;
    let changed = match hist.as_slice() {
        [.., a, b] if a != b => 1.0,
        _ => 0.0,
    };
    let dribbling = state
        .last_skill()
        .is_some_and(|d| config.skills[d].kind == SkillKind::Dribble);

    let speed_gap = cmd[0].hypot(cmd[1]) - state.ball_vel[0].hypot(state.ball_vel[1]);
    let terms = RewardTerms {
        robot_ball_distance: (-rc.delta_p * dist * dist).exp(),
        yaw_alignment: (-rc.delta_psi * (e_cmd * e_cmd + e_base * e_base)).exp(),
        consistent_skill_index: consistent,
        change_skill_index: changed,
        ball_velocity_norm: (-rc.delta_n * speed_gap * speed_gap).exp(),
        ball_velocity_angle: velocity_angle_term(state.ball_vel, cmd),
        ball_velocity_error: velocity_error_kernel(config, state),
        dribbling_near_ball: if dist < rc.d_max && dribbling { 1.0 } else { 0.0 },
    };
    let weighted = terms.weighted(&rc.weights);
    let total = weighted.to_array().iter().sum();
    RewardBreakdown {
        terms,
        weighted,
        total,
    }
}
