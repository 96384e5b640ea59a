use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{Adam, Gradients, Tape, Tensor, Var};
use crate::policy::PolicyParams;

use super::{build_loss, DsfPoConfig, DsfPoError, LossNodes, RolloutBuffer, UpdateBatch};

/// Averages over every minibatch step of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Actor and critic gradient norm before clipping.
    pub grad_norm: f64,
    pub steps: usize,
}

impl UpdateStats {
    fn accumulate(&mut self, other: &UpdateStats) {
        self.mean_ratio += other.mean_ratio;
        self.clip_fraction += other.clip_fraction;
        self.surrogate_loss += other.surrogate_loss;
        self.value_loss += other.value_loss;
        self.entropy += other.entropy;
        self.grad_norm += other.grad_norm;
        self.steps += 1;
    }

    fn averaged(mut self) -> Self {
        let n = self.steps.max(1) as f64;
        self.mean_ratio /= n;
        self.clip_fraction /= n;
        self.surrogate_loss /= n;
        self.value_loss /= n;
        self.entropy /= n;
        self.grad_norm /= n;
        self
    }
}

/// Which scalar of the loss graph to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Surrogate,
    Value,
    Entropy,
    Total,
}

/// Persistent optimizer state plus the compiled loss graph.
///
/// Adam tracks only `actor.*` and `critic.*`; the estimator is never
/// touched by policy updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Updater {
    config: DsfPoConfig,
    adam: Adam,
    #[serde(skip)]
    graph: Option<(Tape, LossNodes)>,
}

impl Updater {
    pub fn new(params: &PolicyParams, config: DsfPoConfig) -> Self {
        let adam = Adam::for_store(config.learning_rate, &params.store, |n| {
            PolicyParams::is_actor(n) || PolicyParams::is_critic(n)
        });
        Self {
            config,
            adam,
            graph: None,
        }
    }

    pub fn from_adam(config: DsfPoConfig, adam: Adam) -> Self {
        Self {
            config,
            adam,
            graph: None,
        }
    }

    pub fn config(&self) -> &DsfPoConfig {
        &self.config
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    /// Binds parameters and a batch and runs the forward pass; returns the
    /// tape for inspection together with the loss node handles.
    pub fn bind(
        &mut self,
        params: &PolicyParams,
        batch: &UpdateBatch,
    ) -> Result<(&mut Tape, LossNodes), DsfPoError> {
        let config = self.config.clone();
        let (tape, nodes) = self.graph.get_or_insert_with(|| {
            let mut tape = Tape::new();
            let nodes = build_loss(&mut tape, params, &config);
            (tape, nodes)
        });
        params.store.bind_into(tape);
        for (name, t) in batch.inputs() {
            tape.bind_if_present(name, t);
        }
        tape.forward()?;
        Ok((tape, *nodes))
    }

    /// Gradient of one loss term on `batch` at `params`.
    pub fn gradients(
        &mut self,
        params: &PolicyParams,
        batch: &UpdateBatch,
        term: LossTerm,
    ) -> Result<Gradients, DsfPoError> {
        let (tape, nodes) = self.bind(params, batch)?;
        let out = pick(&nodes, term);
        Ok(tape.backward(out, Tensor::scalar(1.0))?)
    }

    fn step(
        &mut self,
        params: &mut PolicyParams,
        batch: &UpdateBatch,
        epoch: usize,
        minibatch: usize,
    ) -> Result<UpdateStats, DsfPoError> {
        let eps = self.config.clip_eps;
        let max_norm = self.config.max_grad_norm;
        let (tape, nodes) = self.bind(params, batch)?;
        let scalar = |v: Var| tape.value(v).map(|t| t.item());
        let log_ratio = tape.value(nodes.log_ratio)?;
        let n = log_ratio.len().max(1) as f64;
        let (mut ratio_sum, mut clipped) = (0.0, 0usize);
        for &l in log_ratio.data() {
            let r = l.clamp(-super::LOG_RATIO_LIMIT, super::LOG_RATIO_LIMIT).exp();
            ratio_sum += r;
            if (r - 1.0).abs() > eps {
                clipped += 1;
            }
        }
        let mut stats = UpdateStats {
            mean_ratio: ratio_sum / n,
            clip_fraction: clipped as f64 / n,
            surrogate_loss: scalar(nodes.surrogate)?,
            value_loss: scalar(nodes.value_loss)?,
            entropy: scalar(nodes.entropy)?,
            grad_norm: 0.0,
            steps: 1,
        };
        let total = scalar(nodes.total)?;
        if !total.is_finite() {
            return Err(DsfPoError::NonFiniteLoss {
                epoch,
                minibatch,
                stats,
            });
        }
        let mut grads = tape.backward(nodes.total, Tensor::scalar(1.0))?;
        let actor_norm = grads.norm_where(PolicyParams::is_actor);
        let critic_norm = grads.norm_where(PolicyParams::is_critic);
        stats.grad_norm = (actor_norm * actor_norm + critic_norm * critic_norm).sqrt();
        if !stats.grad_norm.is_finite() {
            return Err(DsfPoError::NonFiniteLoss {
                epoch,
                minibatch,
                stats,
            });
        }
        for (name, g) in grads.iter_mut() {
            let norm = if PolicyParams::is_actor(name) {
                actor_norm
            } else if PolicyParams::is_critic(name) {
                critic_norm
            } else {
                continue;
            };
            if norm > max_norm {
                g.scale_in_place(max_norm / norm);
            }
        }
        self.adam.step(&mut params.store, &grads)?;
        Ok(stats)
    }

    /// `epochs` passes of shuffled minibatch steps over a buffer whose
    /// advantages have been computed.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        params: &mut PolicyParams,
        buffer: &RolloutBuffer,
        rng: &mut R,
    ) -> Result<UpdateStats, DsfPoError> {
        let batch = buffer.to_batch(&params.config)?;
        self.update_batch(params, &batch, rng)
    }

    pub fn update_batch<R: Rng + ?Sized>(
        &mut self,
        params: &mut PolicyParams,
        batch: &UpdateBatch,
        rng: &mut R,
    ) -> Result<UpdateStats, DsfPoError> {
        let n = batch.len();
        let m = self.config.minibatches;
        if n < m || n == 0 {
            return Err(DsfPoError::BatchTooSmall {
                got: n,
                minibatches: m,
            });
        }
        let mut total = UpdateStats::default();
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..self.config.epochs {
            order.shuffle(rng);
            for mb in 0..m {
                let lo = mb * n / m;
                let hi = (mb + 1) * n / m;
                let sub = batch.select(&order[lo..hi]);
                let s = self.step(params, &sub, epoch, mb)?;
                total.accumulate(&s);
            }
        }
        Ok(total.averaged())
    }
}

fn pick(nodes: &LossNodes, term: LossTerm) -> Var {
    match term {
        LossTerm::Surrogate => nodes.surrogate,
        LossTerm::Value => nodes.value_loss,
        LossTerm::Entropy => nodes.entropy,
        LossTerm::Total => nodes.total,
    }
}

/// One-shot update with a fresh optimizer.
pub fn update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    buffer: &RolloutBuffer,
    config: &DsfPoConfig,
    rng: &mut R,
) -> Result<UpdateStats, DsfPoError> {
    Updater::new(params, config.clone()).update(params, buffer, rng)
}
