use crate::ad::{Tape, Tensor, Var};

use super::params::{layer_names, PolicyConfig, COMMAND_HEAD, COMMAND_LOG_STD, INDEX_HEAD};
use super::{PolicyError, PolicyParams};

/// Nodes of the actor graph for a batch of observations.
#[derive(Debug, Clone, Copy)]
pub struct ActorNodes {
    pub logits: Var,
    /// Row-wise log-softmax of the logits, `[n, K]`.
    pub log_probs: Var,
    /// tanh-squashed command mean, `[n, command_dim]`.
    pub mean: Var,
    /// `[1, command_dim]`.
    pub log_std: Var,
}

/// Hidden ELU layers named `{prefix}.{i}.weight/bias`.
pub fn mlp_hidden(tape: &mut Tape, prefix: &str, layers: usize, mut x: Var) -> Var {
    for i in 0..layers {
        let (wn, bn) = layer_names(prefix, i);
        let w = tape.param(&wn);
        let b = tape.param(&bn);
        let h = tape.matmul(x, w);
        let h = tape.add(h, b);
        x = tape.elu(h);
    }
    x
}

fn linear(tape: &mut Tape, prefix: &str, x: Var) -> Var {
    let w = tape.param(&format!("{prefix}.weight"));
    let b = tape.param(&format!("{prefix}.bias"));
    let h = tape.matmul(x, w);
    tape.add(h, b)
}

pub fn build_actor(tape: &mut Tape, config: &PolicyConfig, obs: Var) -> ActorNodes {
    let feat = mlp_hidden(tape, "actor.sfe", config.sfe_widths.len(), obs);
    let logits = linear(tape, INDEX_HEAD, feat);
    let log_probs = tape.log_softmax(logits);
    let pre = linear(tape, COMMAND_HEAD, feat);
    let mean = tape.tanh(pre);
    let log_std = tape.param(COMMAND_LOG_STD);
    ActorNodes {
        logits,
        log_probs,
        mean,
        log_std,
    }
}

/// Value head, `[n, 1]`.
pub fn build_critic(tape: &mut Tape, config: &PolicyConfig, state: Var) -> Var {
    let h = mlp_hidden(tape, "critic", config.critic_widths.len(), state);
    linear(tape, "critic.out", h)
}

/// Context prediction, `[n, context_dim]`.
pub fn build_estimator(tape: &mut Tape, config: &PolicyConfig, history: Var) -> Var {
    let h = mlp_hidden(tape, "estimator", config.estimator_widths.len(), history);
    linear(tape, "estimator.out", h)
}

/// Batched actor outputs for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorBatch {
    pub logits: Tensor,
    pub log_probs: Tensor,
    pub mean: Tensor,
    pub log_std: Vec<f64>,
}

impl ActorBatch {
    pub fn rows(&self) -> usize {
        self.logits.rows()
    }

    /// Skill focus weights (softmax) of row `r`.
    pub fn weights(&self, r: usize) -> Vec<f64> {
        self.log_probs.row_slice(r).iter().map(|l| l.exp()).collect()
    }
}

/// Reusable inference graphs for batched actor, critic and estimator passes
/// under one parameter snapshot.
#[derive(Debug, Clone)]
pub struct PolicyRunner {
    actor_tape: Tape,
    actor: ActorNodes,
    critic_tape: Tape,
    value: Var,
    estimator_tape: Tape,
    context: Var,
    dims: super::PolicyDims,
    window: usize,
}

impl PolicyRunner {
    pub fn new(params: &PolicyParams) -> Self {
        let cfg = &params.config;
        let mut actor_tape = Tape::new();
        let obs = actor_tape.input("obs");
        let actor = build_actor(&mut actor_tape, cfg, obs);
        let mut critic_tape = Tape::new();
        let state = critic_tape.input("state");
        let value = build_critic(&mut critic_tape, cfg, state);
        let mut estimator_tape = Tape::new();
        let hist = estimator_tape.input("history");
        let context = build_estimator(&mut estimator_tape, cfg, hist);
        let mut runner = Self {
            actor_tape,
            actor,
            critic_tape,
            value,
            estimator_tape,
            context,
            dims: params.dims,
            window: cfg.estimator_window,
        };
        runner.set_params(params);
        runner
    }

    pub fn set_params(&mut self, params: &PolicyParams) {
        params.store.bind_into(&mut self.actor_tape);
        params.store.bind_into(&mut self.critic_tape);
        params.store.bind_into(&mut self.estimator_tape);
    }

    pub fn actor(&mut self, obs: Tensor) -> Result<ActorBatch, PolicyError> {
        if obs.cols() != self.dims.obs_dim {
            return Err(PolicyError::ObservationLength {
                got: obs.cols(),
                expected: self.dims.obs_dim,
            });
        }
        if !obs.is_finite() {
            return Err(PolicyError::NonFiniteObservation);
        }
        self.actor_tape.bind("obs", obs)?;
        self.actor_tape.forward()?;
        let t = &self.actor_tape;
        Ok(ActorBatch {
            logits: t.value(self.actor.logits)?.clone(),
            log_probs: t.value(self.actor.log_probs)?.clone(),
            mean: t.value(self.actor.mean)?.clone(),
            log_std: t.value(self.actor.log_std)?.data().to_vec(),
        })
    }

    pub fn values(&mut self, states: Tensor) -> Result<Vec<f64>, PolicyError> {
        if states.cols() != self.dims.state_dim {
            return Err(PolicyError::PrivilegedFieldsMissing {
                got: states.cols(),
                expected: self.dims.state_dim,
            });
        }
        self.critic_tape.bind("state", states)?;
        self.critic_tape.forward()?;
        Ok(self.critic_tape.value(self.value)?.data().to_vec())
    }

    /// Context predictions for flattened history windows, one per row.
    pub fn estimate(&mut self, histories: Tensor) -> Result<Tensor, PolicyError> {
        let expected = self.dims.estimator_step_dim * self.window;
        if histories.cols() != expected {
            return Err(PolicyError::HistoryLength {
                got: histories.cols() / self.dims.estimator_step_dim.max(1),
                expected: self.window,
            });
        }
        self.estimator_tape.bind("history", histories)?;
        self.estimator_tape.forward()?;
        Ok(self.estimator_tape.value(self.context)?.clone())
    }
}
