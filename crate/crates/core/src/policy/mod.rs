//! Hierarchical actor (shared feature extractor, skill-index head, command
//! head), privileged critic and supervised context estimator.

mod action;
mod estimator;
mod net;
mod params;

pub use action::{command_log_probs, gaussian_log_density, greedy_row, sample_row, HierAction};
pub use estimator::{EstimatedContext, EstimatorTrainer};
pub use net::{
    build_actor, build_critic, build_estimator, mlp_hidden, ActorBatch, ActorNodes, PolicyRunner,
};
pub use params::{
    orthogonal, PolicyConfig, PolicyDims, PolicyParams, COMMAND_HEAD, COMMAND_LOG_STD, INDEX_HEAD,
};

use rand::Rng;
use thiserror::Error;

use crate::ad::{AdError, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("observation has {got} values, expected {expected}")]
    ObservationLength { got: usize, expected: usize },
    #[error("observation contains non-finite values")]
    NonFiniteObservation,
    #[error("critic input has {got} values, expected the {expected}-value full state (privileged fields missing?)")]
    PrivilegedFieldsMissing { got: usize, expected: usize },
    #[error("estimator history has {got} steps, configured window is {expected}")]
    HistoryLength { got: usize, expected: usize },
    #[error("action is invalid: {0}")]
    InvalidAction(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// Single-observation actor outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub logits: Vec<f64>,
    pub mean: Vec<f64>,
    pub weights: Vec<f64>,
}

fn single_batch(params: &PolicyParams, obs: &[f64]) -> Result<ActorBatch, PolicyError> {
    let mut runner = PolicyRunner::new(params);
    runner.actor(Tensor::row(obs))
}

pub fn actor_forward(params: &PolicyParams, obs: &[f64]) -> Result<ActorOutput, PolicyError> {
    let b = single_batch(params, obs)?;
    Ok(ActorOutput {
        logits: b.logits.data().to_vec(),
        mean: b.mean.data().to_vec(),
        weights: b.weights(0),
    })
}

pub fn sample_action<R: Rng + ?Sized>(
    params: &PolicyParams,
    obs: &[f64],
    rng: &mut R,
) -> Result<HierAction, PolicyError> {
    let b = single_batch(params, obs)?;
    Ok(sample_row(&params.config, &b, 0, rng))
}

/// `(log pi_d(d|o), [log pi_c(c^k|o) for each skill k])` under `params`.
pub fn log_prob(
    params: &PolicyParams,
    obs: &[f64],
    action: &HierAction,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let cfg = &params.config;
    if action.skill >= cfg.num_skills() {
        return Err(PolicyError::InvalidAction(format!(
            "skill {} out of range",
            action.skill
        )));
    }
    if action.command.len() != cfg.command_dim || action.command.iter().any(|c| !c.is_finite()) {
        return Err(PolicyError::InvalidAction(
            "command must be finite with the configured dimension".into(),
        ));
    }
    let b = single_batch(params, obs)?;
    let (per_skill, _) = command_log_probs(cfg, &action.command, b.mean.row_slice(0), &b.log_std);
    Ok((b.log_probs.get(0, action.skill), per_skill))
}

pub fn critic_forward(params: &PolicyParams, state: &[f64]) -> Result<f64, PolicyError> {
    let mut runner = PolicyRunner::new(params);
    Ok(runner.values(Tensor::row(state))?[0])
}

/// Context prediction from the most recent `estimator_window` history steps.
pub fn estimator_forward(
    params: &PolicyParams,
    history: &[Vec<f64>],
) -> Result<EstimatedContext, PolicyError> {
    let flat = estimator::flatten_history(params, history)?;
    let mut runner = PolicyRunner::new(params);
    let z = runner.estimate(Tensor::row(&flat))?;
    Ok(EstimatedContext::from_slice(z.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> PolicyDims {
        PolicyDims {
            obs_dim: 7,
            state_dim: 9,
            estimator_step_dim: 3,
            context_dim: 6,
        }
    }

    fn small() -> PolicyConfig {
        PolicyConfig {
            sfe_widths: vec![8, 8],
            critic_widths: vec![8],
            estimator_widths: vec![8],
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn zero_network_is_uniform_with_zero_mean() {
        let p = PolicyParams::zeros(&small(), dims());
        let out = actor_forward(&p, &[0.3; 7]).unwrap();
        assert_eq!(out.logits, vec![0.0; 4]);
        assert_eq!(out.weights, vec![0.25; 4]);
        assert_eq!(out.mean, vec![0.0; 5]);
        assert_eq!(critic_forward(&p, &[1.0; 9]).unwrap(), 0.0);
    }

    #[test]
    fn critic_rejects_actor_observation() {
        let p = PolicyParams::zeros(&small(), dims());
        assert!(matches!(
            critic_forward(&p, &[0.0; 7]),
            Err(PolicyError::PrivilegedFieldsMissing { .. })
        ));
    }

    #[test]
    fn non_finite_observation_is_rejected() {
        let p = PolicyParams::zeros(&small(), dims());
        let mut obs = [0.0; 7];
        obs[2] = f64::NAN;
        assert_eq!(
            actor_forward(&p, &obs).unwrap_err(),
            PolicyError::NonFiniteObservation
        );
    }

    #[test]
    fn degenerate_categorical_always_picks_dominant_skill() {
        let mut p = PolicyParams::zeros(&small(), dims());
        p.store
            .get_mut("actor.index_head.bias")
            .unwrap()
            .data_mut()[0] = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            assert_eq!(sample_action(&p, &[0.1; 7], &mut rng).unwrap().skill, 0);
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = PolicyParams::init(&small(), dims(), &mut rng);
        let a = sample_action(&p, &[0.2; 7], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_action(&p, &[0.2; 7], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        let s: f64 = a.focus_weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_sampling_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PolicyParams::init(&small(), dims(), &mut rng);
        let obs = [0.5, -0.1, 0.9, 0.0, 0.3, -0.7, 0.2];
        let a = sample_action(&p, &obs, &mut rng).unwrap();
        let (lpd, per) = log_prob(&p, &obs, &a).unwrap();
        assert_eq!(lpd, a.log_prob_index);
        assert_eq!(per, a.log_prob_command_per_skill);
        assert_eq!(per[0], per[1]);
    }

    #[test]
    fn estimator_requires_full_window() {
        let p = PolicyParams::zeros(&small(), dims());
        let short = vec![vec![0.0; 3]; 4];
        assert!(matches!(
            estimator_forward(&p, &short),
            Err(PolicyError::HistoryLength { got: 4, expected: 5 })
        ));
        let full = vec![vec![0.0; 3]; 5];
        assert_eq!(estimator_forward(&p, &full).unwrap().to_vec(), vec![0.0; 6]);
    }
}
