use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::ActorBatch;
use super::PolicyConfig;

/// One high-level decision: a skill index and the full command vector,
/// together with the sampling record needed for importance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierAction {
    /// Zero-based skill index.
    pub skill: usize,
    /// Sampled command, all dimensions, before simulator clipping.
    pub command: Vec<f64>,
    pub log_prob_index: f64,
    /// Gaussian log-density of the command restricted to each skill's subset.
    pub log_prob_command_per_skill: Vec<f64>,
    /// Gaussian log-density over every command dimension.
    pub log_prob_command_full: f64,
    /// Skill focus weights (softmax of the index logits) at sampling time.
    pub focus_weights: Vec<f64>,
}

pub fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Per-skill and full command log-densities for `command`.
pub fn command_log_probs(
    config: &PolicyConfig,
    command: &[f64],
    mean: &[f64],
    log_std: &[f64],
) -> (Vec<f64>, f64) {
    let per_dim: Vec<f64> = command
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&c, &m), &l)| gaussian_log_density(c, m, l))
        .collect();
    let per_skill = config
        .skill_command_sets
        .iter()
        .map(|dims| dims.iter().map(|&j| per_dim[j]).sum())
        .collect();
    (per_skill, per_dim.iter().sum())
}

fn record(
    config: &PolicyConfig,
    batch: &ActorBatch,
    row: usize,
    skill: usize,
    command: Vec<f64>,
) -> HierAction {
    let (per_skill, full) =
        command_log_probs(config, &command, batch.mean.row_slice(row), &batch.log_std);
    HierAction {
        skill,
        command,
        log_prob_index: batch.log_probs.get(row, skill),
        log_prob_command_per_skill: per_skill,
        log_prob_command_full: full,
        focus_weights: batch.weights(row),
    }
}

/// Draws a skill from the categorical head and every command dimension
/// from N(mean, exp(log_std)^2).
pub fn sample_row<R: Rng + ?Sized>(
    config: &PolicyConfig,
    batch: &ActorBatch,
    row: usize,
    rng: &mut R,
) -> HierAction {
    let weights = batch.weights(row);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut skill = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            skill = k;
            break;
        }
    }
    let command = batch
        .mean
        .row_slice(row)
        .iter()
        .zip(&batch.log_std)
        .map(|(&m, &l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    record(config, batch, row, skill, command)
}

/// Most likely skill and the mean command.
pub fn greedy_row(config: &PolicyConfig, batch: &ActorBatch, row: usize) -> HierAction {
    let lp = batch.log_probs.row_slice(row);
    let skill = lp
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > lp[best] { k } else { best });
    let command = batch.mean.row_slice(row).to_vec();
    record(config, batch, row, skill, command)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_mean() {
        assert!((gaussian_log_density(0.3, 0.3, 0.0) - (-0.9189385332)).abs() < 1e-10);
    }

    #[test]
    fn dribbling_skills_share_command_log_prob() {
        let cfg = PolicyConfig::default();
        let (per_skill, full) = command_log_probs(
            &cfg,
            &[0.1, -0.2, 0.5, 0.9, -1.0],
            &[0.0, 0.1, 0.2, 0.3, 0.4],
            &[-0.5, -0.4, -0.3, -0.2, -0.1],
        );
        assert_eq!(per_skill[0], per_skill[1]);
        assert_eq!(per_skill[2], per_skill[3]);
        assert!((per_skill[0] + per_skill[2] - full).abs() < 1e-12);
    }
}
