use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::WorldConfig;

/// Full simulator state of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot_pos: [f64; 2],
    /// Heading in (-pi, pi].
    pub heading: f64,
    pub robot_vel: [f64; 2],
    pub ball_pos: [f64; 2],
    pub ball_vel: [f64; 2],
    /// High-level steps taken this episode.
    pub step: usize,
    /// Physics substeps taken this episode.
    pub substeps: u64,
    /// Target ball velocity c^H (m/s, world frame).
    pub user_command: [f64; 2],
    pub cell: [usize; 2],
    pub difficulty: usize,
    /// Recent skill indices, oldest first; the last entry is the current skill.
    pub skill_history: VecDeque<usize>,
    /// Clipped command of the previous high-level step.
    pub prev_command: [f64; 5],
    pub kick_cooldown: u32,
}

impl WorldState {
    /// State with robot and ball at rest at the given positions.
    pub fn at_rest(robot_pos: [f64; 2], heading: f64, ball_pos: [f64; 2]) -> Self {
        Self {
            robot_pos,
            heading: wrap_angle(heading),
            robot_vel: [0.0; 2],
            ball_pos,
            ball_vel: [0.0; 2],
            step: 0,
            substeps: 0,
            user_command: [0.0; 2],
            cell: [0, 0],
            difficulty: 0,
            skill_history: VecDeque::new(),
            prev_command: [0.0; 5],
            kick_cooldown: 0,
        }
    }

    pub fn elapsed(&self, config: &WorldConfig) -> f64 {
        self.substeps as f64 * config.dt
    }

    pub fn last_skill(&self) -> Option<usize> {
        self.skill_history.back().copied()
    }

    pub fn ball_offset(&self) -> [f64; 2] {
        [
            self.ball_pos[0] - self.robot_pos[0],
            self.ball_pos[1] - self.robot_pos[1],
        ]
    }

    pub fn ball_distance(&self) -> f64 {
        let [dx, dy] = self.ball_offset();
        dx.hypot(dy)
    }

    pub fn robot_in_arena(&self, config: &WorldConfig) -> bool {
        let [x, y] = self.robot_pos;
        (0.0..=config.arena_length()).contains(&x) && y.abs() <= config.half_width
    }
}

/// Wraps to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Scales `v` down to norm `max` if it is longer.
pub fn clip_norm(v: [f64; 2], max: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > max && n > 0.0 {
        [v[0] * max / n, v[1] * max / n]
    } else {
        v
    }
}
