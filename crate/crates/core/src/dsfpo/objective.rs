use std::f64::consts::{E, PI};

use crate::ad::{Tape, Var};
use crate::policy::{
    build_actor, build_critic, command_log_probs, HierAction, PolicyParams, PolicyRunner,
};
use crate::ad::Tensor;

use super::{Algorithm, DsfPoConfig, DsfPoError};

/// Log-ratios beyond this magnitude are clamped before exponentiation.
pub const LOG_RATIO_LIMIT: f64 = 20.0;

struct Evaluated {
    log_probs: Vec<f64>,
    per_skill: Vec<f64>,
    full: f64,
}

fn evaluate(
    params: &PolicyParams,
    old: &HierAction,
    obs: &[f64],
) -> Result<Evaluated, DsfPoError> {
    let cfg = &params.config;
    let k = cfg.num_skills();
    if old.skill >= k
        || old.log_prob_command_per_skill.len() != k
        || old.focus_weights.len() != k
        || old.command.len() != cfg.command_dim
    {
        return Err(DsfPoError::MissingOldRecord(0));
    }
    let mut runner = PolicyRunner::new(params);
    let b = runner.actor(Tensor::row(obs))?;
    let (per_skill, full) = command_log_probs(cfg, &old.command, b.mean.row_slice(0), &b.log_std);
    Ok(Evaluated {
        log_probs: b.log_probs.row_slice(0).to_vec(),
        per_skill,
        full,
    })
}

/// Skill-focused log importance ratio of `old`'s action under `new`.
///
/// The categorical term enters with unit exponent; each skill's command
/// log-ratio is weighted by that skill's current selection probability and
/// counted only when the skill consumes the same command subset as the
/// executed skill.
pub fn dsf_log_ratio(new: &PolicyParams, old: &HierAction, obs: &[f64]) -> Result<f64, DsfPoError> {
    let e = evaluate(new, old, obs)?;
    let cfg = &new.config;
    let mut log_r = e.log_probs[old.skill] - old.log_prob_index;
    for k in cfg.active_skills(old.skill) {
        let w = e.log_probs[k].exp();
        log_r += w * (e.per_skill[k] - old.log_prob_command_per_skill[k]);
    }
    Ok(log_r)
}

/// Log-ratio of the full joint density (categorical plus every command
/// dimension, unit exponents).
pub fn standard_ppo_log_ratio(
    new: &PolicyParams,
    old: &HierAction,
    obs: &[f64],
) -> Result<f64, DsfPoError> {
    let e = evaluate(new, old, obs)?;
    Ok(e.log_probs[old.skill] - old.log_prob_index + e.full - old.log_prob_command_full)
}

/// Clipped-surrogate objective of one sample.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Negated batch mean of the clipped surrogate.
pub fn surrogate_loss(log_ratios: &[f64], advantages: &[f64], eps: f64) -> f64 {
    let n = log_ratios.len().max(1) as f64;
    let obj: f64 = log_ratios
        .iter()
        .zip(advantages)
        .map(|(&l, &a)| clipped_objective(l.clamp(-LOG_RATIO_LIMIT, LOG_RATIO_LIMIT).exp(), a, eps))
        .sum();
    -obj / n
}

/// Entropy of one Gaussian dimension with the given log-std.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 * (2.0 * PI * E).ln() + log_std
}

/// Categorical entropy plus the focus-weighted Gaussian entropy of each
/// skill's command subset.
pub fn entropy_bonus(params: &PolicyParams, obs: &[f64]) -> Result<f64, DsfPoError> {
    let mut runner = PolicyRunner::new(params);
    let b = runner.actor(Tensor::row(obs))?;
    let lp = b.log_probs.row_slice(0);
    let cat: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    let gauss: f64 = params
        .config
        .skill_command_sets
        .iter()
        .enumerate()
        .map(|(k, dims)| {
            lp[k].exp() * dims.iter().map(|&j| gaussian_entropy(b.log_std[j])).sum::<f64>()
        })
        .sum();
    Ok(cat + gauss)
}

/// Nodes of the combined actor-critic loss graph.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    /// Per-sample log importance ratio, `[n, 1]`.
    pub log_ratio: Var,
    /// Per-sample unclipped surrogate `ratio * advantage`, `[n, 1]`.
    pub unclipped: Var,
    pub surrogate: Var,
    pub value_loss: Var,
    pub entropy: Var,
    pub total: Var,
}

/// Builds the loss graph over the named batch inputs of
/// [`super::UpdateBatch`] for the configured algorithm.
pub fn build_loss(tape: &mut Tape, params: &PolicyParams, config: &DsfPoConfig) -> LossNodes {
    let pc = &params.config;
    let obs = tape.input("obs");
    let state = tape.input("state");
    let command = tape.input("command");
    let onehot = tape.input("skill_onehot");
    let old_index = tape.input("old_log_prob_index");
    let adv = tape.input("advantages");
    let returns = tape.input("returns");

    let actor = build_actor(tape, pc, obs);
    let picked = tape.mul(actor.log_probs, onehot);
    let lp_d = tape.row_sum(picked);
    let skill_term = tape.sub(lp_d, old_index);
    let per_dim = tape.gaussian_log_density(command, actor.mean, actor.log_std);
    let weights = tape.exp(actor.log_probs);

    let command_term = match config.algorithm {
        Algorithm::DsfPo => {
            let active = tape.input("active_mask");
            let old_skill = tape.input("old_log_prob_skill");
            let subsets = tape.constant(pc.subset_matrix());
            let per_skill = tape.matmul(per_dim, subsets);
            let delta = tape.sub(per_skill, old_skill);
            let focus = tape.stop_gradient(weights);
            let exponent = tape.mul(focus, active);
            let weighted = tape.mul(exponent, delta);
            tape.row_sum(weighted)
        }
        Algorithm::StandardPpo => {
            let old_full = tape.input("old_log_prob_full");
            let full = tape.row_sum(per_dim);
            tape.sub(full, old_full)
        }
    };
    let log_ratio = tape.add(skill_term, command_term);

    let bounded = tape.clip(log_ratio, -LOG_RATIO_LIMIT, LOG_RATIO_LIMIT);
    let ratio = tape.exp(bounded);
    let clipped_log = tape.clip(
        log_ratio,
        (1.0 - config.clip_eps).ln(),
        (1.0 + config.clip_eps).ln(),
    );
    let clipped = tape.exp(clipped_log);
    let unclipped = tape.mul(ratio, adv);
    let clipped_obj = tape.mul(clipped, adv);
    let obj = tape.minimum(unclipped, clipped_obj);
    let mean_obj = tape.mean(obj);
    let surrogate = tape.scale(mean_obj, -1.0);

    let plogp = tape.mul(weights, actor.log_probs);
    let neg_cat = tape.row_sum(plogp);
    let per_dim_entropy = tape.add_scalar(actor.log_std, 0.5 * (2.0 * PI * E).ln());
    let subsets = tape.constant(pc.subset_matrix());
    let skill_entropy = tape.matmul(per_dim_entropy, subsets);
    let weighted_entropy = tape.mul(weights, skill_entropy);
    let gauss = tape.row_sum(weighted_entropy);
    let ent_rows = tape.sub(gauss, neg_cat);
    let entropy = tape.mean(ent_rows);

    let value = build_critic(tape, pc, state);
    let err = tape.sub(value, returns);
    let sq = tape.mul(err, err);
    let value_loss = tape.mean(sq);

    let v_term = tape.scale(value_loss, config.value_coef);
    let e_term = tape.scale(entropy, -config.entropy_coef);
    let total = tape.add(surrogate, v_term);
    let total = tape.add(total, e_term);
    LossNodes {
        log_ratio,
        unclipped,
        surrogate,
        value_loss,
        entropy,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_spot_values() {
        assert_eq!(clipped_objective(1.0, -3.5, 0.2), -3.5);
        assert!((clipped_objective(1.5, 2.0, 0.2) - 2.4).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, 0.2) - (-0.8)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_entropy_unit_std() {
        assert!((gaussian_entropy(0.0) - 1.4189385332).abs() < 1e-10);
    }

    #[test]
    fn surrogate_is_negated_mean() {
        let l = surrogate_loss(&[0.0, 0.0], &[1.0, 3.0], 0.2);
        assert!((l + 2.0).abs() < 1e-12);
    }
}
