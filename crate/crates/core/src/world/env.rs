use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumSample, EpisodeTrace};
use crate::policy::{EstimatedContext, HierAction};

use super::physics::{clip_command, low_level_step_in_place};
use super::{
    compute_reward, estimator_features, observe, velocity_error_kernel, zone_by_index, zone_index,
    Observation, RewardBreakdown, StepRecord, TerrainKind, WorldConfig, WorldError, WorldState,
};

/// Fresh episode state for a curriculum draw.
pub fn reset<R: Rng + ?Sized>(
    config: &WorldConfig,
    sample: &CurriculumSample,
    rng: &mut R,
) -> WorldState {
    let zone = zone_by_index(config, sample.difficulty, rng.random_range(0..config.layout.len()));
    let margin = 0.5;
    let x = rng.random_range(zone.x_min.max(margin)..zone.x_max.min(config.arena_length() - margin));
    let y = rng.random_range(-(config.half_width - 1.0)..(config.half_width - 1.0));
    let heading: f64 = rng.random_range(-PI..PI);
    let ball = loop {
        let r = config.spawn_radius * rng.random::<f64>().sqrt();
        let a: f64 = rng.random_range(-PI..PI);
        let b = [x + r * a.cos(), y + r * a.sin()];
        if (0.0..=config.arena_length()).contains(&b[0]) && b[1].abs() <= config.half_width {
            break b;
        }
    };
    let mut s = WorldState::at_rest([x, y], heading, ball);
    s.user_command = sample.command;
    s.cell = sample.cell;
    s.difficulty = sample.difficulty;
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: bool,
    pub out_of_bounds: bool,
    /// Terrain under the robot before the step.
    pub zone: TerrainKind,
}

/// Five physics substeps with the action held, then the reward.
pub fn high_level_step<R: Rng + ?Sized>(
    config: &WorldConfig,
    state: &mut WorldState,
    action: &HierAction,
    rng: &mut R,
) -> Result<StepOutcome, WorldError> {
    if action.skill >= config.skills.len() {
        return Err(WorldError::InvalidSkill(action.skill));
    }
    if action.command.len() != 5 || action.command.iter().any(|c| !c.is_finite()) {
        return Err(WorldError::InvalidCommand);
    }
    let zone = config.layout[zone_index(config, state.robot_pos[0])];
    let cmd = clip_command(config, &action.command);
    let mut out_of_bounds = false;
    for _ in 0..config.substeps {
        low_level_step_in_place(config, state, action.skill, &cmd, rng);
        if !state.robot_in_arena(config) {
            out_of_bounds = true;
            break;
        }
    }
    state.step += 1;
    state.skill_history.push_back(action.skill);
    while state.skill_history.len() > config.reward.consistency_window + 1 {
        state.skill_history.pop_front();
    }
    state.prev_command = cmd;
    let reward = compute_reward(config, state);
    Ok(StepOutcome {
        reward,
        done: out_of_bounds || state.step >= config.episode_steps,
        out_of_bounds,
        zone,
    })
}

/// Serializable part of a [`DribbleEnv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub state: WorldState,
    pub rng: ChaCha8Rng,
    pub history: VecDeque<Vec<f64>>,
    pub trace: EpisodeTrace,
    pub episode_reward: f64,
}

/// One environment with its own random stream, estimator history and
/// running episode trace.
#[derive(Debug, Clone)]
pub struct DribbleEnv {
    config: WorldConfig,
    window: usize,
    inner: EnvSnapshot,
}

/// Bookkeeping returned when an episode ends.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedEpisode {
    pub trace: EpisodeTrace,
    pub length: usize,
    pub total_reward: f64,
}

impl DribbleEnv {
    pub fn new(config: WorldConfig, estimator_window: usize, rng: ChaCha8Rng) -> Self {
        let state = WorldState::at_rest([1.0, 0.0], 0.0, [1.5, 0.0]);
        Self {
            config,
            window: estimator_window,
            inner: EnvSnapshot {
                state,
                rng,
                history: VecDeque::new(),
                trace: EpisodeTrace::default(),
                episode_reward: 0.0,
            },
        }
    }

    pub fn restore(config: WorldConfig, estimator_window: usize, snapshot: EnvSnapshot) -> Self {
        Self {
            config,
            window: estimator_window,
            inner: snapshot,
        }
    }

    pub fn snapshot(&self) -> &EnvSnapshot {
        &self.inner
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.inner.state
    }

    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.inner.state
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner.rng
    }

    pub fn reset(&mut self, sample: &CurriculumSample) {
        let s = reset(&self.config, sample, &mut self.inner.rng);
        let f = estimator_features(&self.config, &s);
        self.inner.history = std::iter::repeat_n(f, self.window).collect();
        self.inner.trace = EpisodeTrace {
            command: sample.command,
            cell: sample.cell,
            difficulty: sample.difficulty,
            velocity_kernels: Vec::new(),
            ball_start: s.ball_pos,
            ball_end: s.ball_pos,
            robot_end: s.robot_pos,
        };
        self.inner.episode_reward = 0.0;
        self.inner.state = s;
    }

    /// Flattened estimator window, oldest step first.
    pub fn estimator_input(&self) -> Vec<f64> {
        self.inner.history.iter().flatten().copied().collect()
    }

    pub fn observe(&self, z: &EstimatedContext) -> Observation {
        observe(&self.config, &self.inner.state, z)
    }

    /// Advances one high-level step. When the episode ends, its trace is
    /// returned; the caller resets.
    pub fn step(
        &mut self,
        action: &HierAction,
    ) -> Result<(StepOutcome, Option<FinishedEpisode>), WorldError> {
        let out = high_level_step(&self.config, &mut self.inner.state, action, &mut self.inner.rng)?;
        let s = &self.inner.state;
        self.inner.history.push_back(estimator_features(&self.config, s));
        while self.inner.history.len() > self.window {
            self.inner.history.pop_front();
        }
        let kernel = velocity_error_kernel(&self.config, s);
        let trace = &mut self.inner.trace;
        trace.velocity_kernels.push(kernel);
        trace.ball_end = s.ball_pos;
        trace.robot_end = s.robot_pos;
        self.inner.episode_reward += out.reward.total;
        let finished = out.done.then(|| FinishedEpisode {
            trace: self.inner.trace.clone(),
            length: self.inner.state.step,
            total_reward: self.inner.episode_reward,
        });
        Ok((out, finished))
    }

    /// Trajectory-dump record of the current state after `action`.
    pub fn record(&self, action: &HierAction, outcome: &StepOutcome) -> StepRecord {
        StepRecord::new(&self.inner.state, action, outcome)
    }
}
