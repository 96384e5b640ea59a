use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::policy::{HierAction, PolicyConfig};

use super::{compute_gae, DsfPoError};

/// One collected high-level step. The sampling record inside `action` is
/// the collection-time policy's and is never recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub state: Vec<f64>,
    pub action: HierAction,
    pub reward: f64,
    pub done: bool,
    pub value: f64,
}

/// Fixed-horizon batch stored time-major: index `t * num_envs + env`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    num_envs: usize,
    horizon: usize,
    transitions: Vec<Transition>,
    bootstrap: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize) -> Self {
        Self {
            num_envs,
            horizon,
            transitions: Vec::with_capacity(num_envs * horizon),
            ..Default::default()
        }
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() == self.num_envs * self.horizon
    }

    /// Appends the next transition in time-major, env-minor order.
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Runs GAE per environment column given V(s_T) for each environment.
    pub fn compute_advantages(
        &mut self,
        bootstrap: &[f64],
        gamma: f64,
        lambda: f64,
    ) -> Result<(), DsfPoError> {
        if !self.is_full() {
            return Err(DsfPoError::IncompleteBuffer {
                have: self.transitions.len(),
                want: self.num_envs * self.horizon,
            });
        }
        if bootstrap.len() != self.num_envs {
            return Err(DsfPoError::LengthMismatch {
                rewards: self.num_envs,
                values: bootstrap.len(),
                dones: self.num_envs,
            });
        }
        let n = self.transitions.len();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        for env in 0..self.num_envs {
            let idx: Vec<usize> = (0..self.horizon).map(|t| t * self.num_envs + env).collect();
            let r: Vec<f64> = idx.iter().map(|&i| self.transitions[i].reward).collect();
            let v: Vec<f64> = idx.iter().map(|&i| self.transitions[i].value).collect();
            let d: Vec<bool> = idx.iter().map(|&i| self.transitions[i].done).collect();
            let (a, ret) = compute_gae(&r, &v, &d, bootstrap[env], gamma, lambda)?;
            for (k, &i) in idx.iter().enumerate() {
                self.advantages[i] = a[k];
                self.returns[i] = ret[k];
            }
        }
        self.bootstrap = bootstrap.to_vec();
        if self.advantages.iter().any(|a| !a.is_finite()) {
            return Err(DsfPoError::NonFiniteAdvantage);
        }
        Ok(())
    }

    /// Advantages shifted and scaled to zero mean and unit standard
    /// deviation over the whole batch.
    pub fn normalized_advantages(&self) -> Vec<f64> {
        normalize(&self.advantages)
    }

    /// Dense tensors for the update graph.
    pub fn to_batch(&self, config: &PolicyConfig) -> Result<UpdateBatch, DsfPoError> {
        if self.advantages.len() != self.transitions.len() {
            return Err(DsfPoError::MissingAdvantages);
        }
        let k = config.num_skills();
        let n = self.transitions.len();
        let adv = self.normalized_advantages();
        let mut onehot = Tensor::zeros(n, k);
        let mut active = Tensor::zeros(n, k);
        let mut old_skill = Tensor::zeros(n, k);
        let mut old_index = Vec::with_capacity(n);
        let mut old_full = Vec::with_capacity(n);
        for (i, t) in self.transitions.iter().enumerate() {
            let a = &t.action;
            if a.skill >= k
                || a.log_prob_command_per_skill.len() != k
                || a.focus_weights.len() != k
                || a.command.len() != config.command_dim
            {
                return Err(DsfPoError::MissingOldRecord(i));
            }
            onehot.set(i, a.skill, 1.0);
            for s in config.active_skills(a.skill) {
                active.set(i, s, 1.0);
            }
            for s in 0..k {
                old_skill.set(i, s, a.log_prob_command_per_skill[s]);
            }
            old_index.push(a.log_prob_index);
            old_full.push(a.log_prob_command_full);
        }
        let rows = |f: &dyn Fn(&Transition) -> &[f64]| {
            let r: Vec<&[f64]> = self.transitions.iter().map(f).collect();
            Tensor::from_rows(&r)
        };
        Ok(UpdateBatch {
            obs: rows(&|t| &t.obs)?,
            state: rows(&|t| &t.state)?,
            command: rows(&|t| &t.action.command)?,
            skill_onehot: onehot,
            active_mask: active,
            old_log_prob_index: Tensor::new(n, 1, old_index)?,
            old_log_prob_skill: old_skill,
            old_log_prob_full: Tensor::new(n, 1, old_full)?,
            advantages: Tensor::new(n, 1, adv)?,
            returns: Tensor::new(n, 1, self.returns.clone())?,
        })
    }
}

pub(crate) fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

/// Column-aligned tensors consumed by the loss graph.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBatch {
    pub obs: Tensor,
    pub state: Tensor,
    pub command: Tensor,
    pub skill_onehot: Tensor,
    /// 1 where skill `k` consumes the same command subset as the executed skill.
    pub active_mask: Tensor,
    pub old_log_prob_index: Tensor,
    pub old_log_prob_skill: Tensor,
    pub old_log_prob_full: Tensor,
    pub advantages: Tensor,
    pub returns: Tensor,
}

impl UpdateBatch {
    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            obs: self.obs.select_rows(idx),
            state: self.state.select_rows(idx),
            command: self.command.select_rows(idx),
            skill_onehot: self.skill_onehot.select_rows(idx),
            active_mask: self.active_mask.select_rows(idx),
            old_log_prob_index: self.old_log_prob_index.select_rows(idx),
            old_log_prob_skill: self.old_log_prob_skill.select_rows(idx),
            old_log_prob_full: self.old_log_prob_full.select_rows(idx),
            advantages: self.advantages.select_rows(idx),
            returns: self.returns.select_rows(idx),
        }
    }

    pub fn inputs(&self) -> [(&'static str, &Tensor); 10] {
        [
            ("obs", &self.obs),
            ("state", &self.state),
            ("command", &self.command),
            ("skill_onehot", &self.skill_onehot),
            ("active_mask", &self.active_mask),
            ("old_log_prob_index", &self.old_log_prob_index),
            ("old_log_prob_skill", &self.old_log_prob_skill),
            ("old_log_prob_full", &self.old_log_prob_full),
            ("advantages", &self.advantages),
            ("returns", &self.returns),
        ]
    }
}
