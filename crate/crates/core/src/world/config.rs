use serde::{Deserialize, Serialize};

use super::TerrainKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Dribble,
    Locomotion,
}

/// Parameters of one closed-form low-level skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillSpec {
    pub kind: SkillKind,
    /// Zero-based command dimensions the skill reads.
    pub command_dims: Vec<usize>,
    /// Fraction of the ball-velocity error corrected per kick.
    pub kick_gain: f64,
    /// Largest velocity change of a single kick (m/s).
    pub kick_cap: f64,
    /// Robot speed limit while the skill runs (m/s).
    pub max_speed: f64,
    /// Multiplier on the terrain roughness noise.
    pub roughness_sensitivity: f64,
}

impl SkillSpec {
    pub fn defaults() -> Vec<SkillSpec> {
        let dribble = |kick_gain, kick_cap| SkillSpec {
            kind: SkillKind::Dribble,
            command_dims: vec![0, 1],
            kick_gain,
            kick_cap,
            max_speed: 1.2,
            roughness_sensitivity: 1.0,
        };
        let walk = |max_speed, roughness_sensitivity| SkillSpec {
            kind: SkillKind::Locomotion,
            command_dims: vec![2, 3, 4],
            kick_gain: 0.0,
            kick_cap: 0.0,
            max_speed,
            roughness_sensitivity,
        };
        vec![dribble(0.3, 0.3), dribble(0.7, 0.8), walk(1.5, 2.0), walk(0.75, 0.5)]
    }
}

/// Per-difficulty-level terrain scalings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    /// Ball friction on every zone (1/s).
    pub base_friction: f64,
    /// Ramp acceleration per level (m/s^2).
    pub ramp_accel: f64,
    /// Rough-zone velocity noise per level (m/s per sqrt(s)).
    pub rough_sigma: f64,
    /// Extra rough-zone friction per level (1/s).
    pub rough_friction: f64,
    pub stair_period: f64,
    /// Stair height per level (m).
    pub stair_drop: f64,
    /// Fraction of the free-fall speed gained when rolling off a stair edge.
    pub stair_boost: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            base_friction: 0.2,
            ramp_accel: 0.2,
            rough_sigma: 0.1,
            rough_friction: 0.04,
            stair_period: 0.5,
            stair_drop: 0.02,
            stair_boost: 0.3,
        }
    }
}

/// Table I weights; Projected Gravity has no point-mass analogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub robot_ball_distance: f64,
    pub yaw_alignment: f64,
    pub consistent_skill_index: f64,
    pub change_skill_index: f64,
    pub ball_velocity_norm: f64,
    pub ball_velocity_angle: f64,
    pub ball_velocity_error: f64,
    pub dribbling_near_ball: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            robot_ball_distance: 4.0,
            yaw_alignment: 4.0,
            consistent_skill_index: 0.1,
            change_skill_index: -0.005,
            ball_velocity_norm: 8.0,
            ball_velocity_angle: 8.0,
            ball_velocity_error: 8.0,
            dribbling_near_ball: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub delta_p: f64,
    pub delta_psi: f64,
    pub delta_n: f64,
    pub delta_v: f64,
    /// Radius for the dribbling-near-ball indicator (m).
    pub d_max: f64,
    /// Number of most recent skill comparisons counted for consistency.
    pub consistency_window: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            delta_p: 0.5,
            delta_psi: 1.0,
            delta_n: 2.0,
            delta_v: 2.0,
            d_max: 0.5,
            consistency_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Zone kinds along +x.
    pub layout: Vec<TerrainKind>,
    pub zone_length: f64,
    /// The arena spans `[-half_width, half_width]` in y.
    pub half_width: f64,
    pub terrain: TerrainParams,
    pub dt: f64,
    pub substeps: usize,
    pub episode_steps: usize,
    pub v_scale: f64,
    pub omega_scale: f64,
    /// Commands are clipped to `[-command_limit, command_limit]` before use.
    pub command_limit: f64,
    pub reach_radius: f64,
    /// Substeps between two kicks.
    pub kick_cooldown: u32,
    /// Distance of the dribbling control point behind the ball (m).
    pub control_offset: f64,
    /// Robot acceleration limit (m/s^2).
    pub robot_accel: f64,
    /// Proportional gain of the dribbling approach (1/s).
    pub approach_gain: f64,
    pub spawn_radius: f64,
    pub wall_restitution: f64,
    pub gravity: f64,
    pub skills: Vec<SkillSpec>,
    pub reward: RewardConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            layout: vec![
                TerrainKind::StairDescent,
                TerrainKind::RampDown,
                TerrainKind::Rough,
                TerrainKind::RampUp,
                TerrainKind::Flat,
            ],
            zone_length: 10.0,
            half_width: 5.0,
            terrain: TerrainParams::default(),
            dt: 0.02,
            substeps: 5,
            episode_steps: 200,
            v_scale: 1.5,
            omega_scale: 2.0,
            command_limit: 1.5,
            reach_radius: 0.4,
            kick_cooldown: 5,
            control_offset: 0.3,
            robot_accel: 4.0,
            approach_gain: 3.0,
            spawn_radius: 2.0,
            wall_restitution: 0.5,
            gravity: 9.81,
            skills: SkillSpec::defaults(),
            reward: RewardConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn arena_length(&self) -> f64 {
        self.zone_length * self.layout.len() as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.layout.is_empty() {
            return Err("terrain layout must contain at least one zone".into());
        }
        if self.skills.is_empty() {
            return Err("at least one skill is required".into());
        }
        for (i, s) in self.skills.iter().enumerate() {
            if s.command_dims.iter().any(|&d| d >= 5) {
                return Err(format!("skill {i} reads a command dimension outside 0..5"));
            }
        }
        if !(self.dt > 0.0) || self.substeps == 0 || self.episode_steps == 0 {
            return Err("dt, substeps and episode_steps must be positive".into());
        }
        if !(self.zone_length > 0.0 && self.half_width > 0.0) {
            return Err("arena dimensions must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skill_ordering() {
        let s = SkillSpec::defaults();
        assert!(s[1].kick_gain > s[0].kick_gain && s[1].kick_cap > s[0].kick_cap);
        assert!(s[2].max_speed > s[3].max_speed);
        assert!(s[2].roughness_sensitivity > s[3].roughness_sensitivity);
    }

    #[test]
    fn default_validates() {
        assert!(WorldConfig::default().validate().is_ok());
        assert_eq!(WorldConfig::default().arena_length(), 50.0);
    }
}
