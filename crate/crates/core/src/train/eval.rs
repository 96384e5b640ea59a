use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::curriculum::CurriculumGrid;
use crate::policy::{greedy_row, sample_row, EstimatedContext, PolicyError, PolicyParams, PolicyRunner};
use crate::world::{skill_usage_report, zone_index, DribbleEnv, SkillUsage, StepRecord, TerrainKind};

use super::{stream_rng, RunConfig, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    /// Argmax skill and mean command instead of sampling.
    pub deterministic: bool,
    pub seed: u64,
    /// JSON-lines trajectory dump, one step per line.
    pub trajectories: Option<PathBuf>,
    /// Episodes simulated side by side.
    pub batch: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 32,
            deterministic: true,
            seed: 0,
            trajectories: None,
            batch: 64,
        }
    }
}

/// Episodes that started on one terrain and how many ran to the time limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainCompletion {
    pub terrain: TerrainKind,
    pub episodes: usize,
    pub completed: usize,
    /// `None` when no episode started here.
    pub fraction: Option<f64>,
}

/// Aggregates over every evaluation episode. Averages are `None` when
/// there is no data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub steps: usize,
    pub deterministic: bool,
    pub mean_reward: Option<f64>,
    pub mean_episode_length: Option<f64>,
    /// Skill frequencies per terrain under the robot.
    pub skill_usage: SkillUsage,
    pub completion: Vec<TerrainCompletion>,
}

#[derive(Serialize)]
struct DumpLine<'a> {
    episode: usize,
    #[serde(flatten)]
    record: &'a StepRecord,
}

/// Rolls out `options.episodes` episodes with commands and difficulties
/// drawn from `grid`.
pub fn evaluate(
    params: &PolicyParams,
    config: &RunConfig,
    grid: &CurriculumGrid,
    options: &EvalOptions,
) -> Result<EvalSummary, TrainError> {
    let mut dump = match &options.trajectories {
        Some(p) => Some((
            BufWriter::new(File::create(p).map_err(|e| TrainError::io(p, e))?),
            p.clone(),
        )),
        None => None,
    };
    let mut runner = PolicyRunner::new(params);
    let mut curriculum_rng = stream_rng(options.seed, "eval/curriculum");
    let mut usage = Vec::new();
    let mut rewards = Vec::new();
    let mut lengths = Vec::new();
    let mut completion: Vec<(usize, usize)> = vec![(0, 0); TerrainKind::ALL.len()];
    let batch = options.batch.max(1);
    let mut next = 0;
    while next < options.episodes {
        let count = batch.min(options.episodes - next);
        let ids: Vec<usize> = (next..next + count).collect();
        next += count;
        let mut envs: Vec<DribbleEnv> = Vec::with_capacity(count);
        let mut samplers: Vec<ChaCha8Rng> = Vec::with_capacity(count);
        let mut start_zone = Vec::with_capacity(count);
        for &e in &ids {
            let mut env = DribbleEnv::new(
                config.world.clone(),
                config.policy.estimator_window,
                stream_rng(options.seed, &format!("eval/env/{e}")),
            );
            env.reset(&grid.sample(&mut curriculum_rng));
            start_zone.push(config.world.layout[zone_index(&config.world, env.state().robot_pos[0])]);
            envs.push(env);
            samplers.push(stream_rng(options.seed, &format!("eval/sampler/{e}")));
        }
        let mut live: Vec<usize> = (0..count).collect();
        while !live.is_empty() {
            let hist: Vec<Vec<f64>> = live.iter().map(|&i| envs[i].estimator_input()).collect();
            let z = runner.estimate(Tensor::from_rows(&hist).map_err(PolicyError::from)?)?;
            let obs: Vec<Vec<f64>> = live
                .iter()
                .enumerate()
                .map(|(r, &i)| envs[i].observe(&EstimatedContext::from_slice(z.row_slice(r))).actor)
                .collect();
            let out = runner.actor(Tensor::from_rows(&obs).map_err(PolicyError::from)?)?;
            let mut still = Vec::with_capacity(live.len());
            for (r, &i) in live.iter().enumerate() {
                let action = if options.deterministic {
                    greedy_row(&config.policy, &out, r)
                } else {
                    sample_row(&config.policy, &out, r, &mut samplers[i])
                };
                let (outcome, fin) = envs[i].step(&action)?;
                usage.push((outcome.zone, action.skill));
                if let Some((w, p)) = dump.as_mut() {
                    let rec = envs[i].record(&action, &outcome);
                    serde_json::to_writer(
                        &mut *w,
                        &DumpLine {
                            episode: ids[i],
                            record: &rec,
                        },
                    )
                    .map_err(|e| TrainError::io(p, e.into()))?;
                    w.write_all(b"\n").map_err(|e| TrainError::io(p, e))?;
                }
                match fin {
                    Some(f) => {
                        rewards.push(f.total_reward);
                        lengths.push(f.length as f64);
                        let c = &mut completion[start_zone[i].index()];
                        c.0 += 1;
                        if !outcome.out_of_bounds {
                            c.1 += 1;
                        }
                    }
                    None => still.push(i),
                }
            }
            live = still;
        }
    }
    if let Some((mut w, p)) = dump {
        w.flush().map_err(|e| TrainError::io(&p, e))?;
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(EvalSummary {
        episodes: rewards.len(),
        steps: usage.len(),
        deterministic: options.deterministic,
        mean_reward: mean(&rewards),
        mean_episode_length: mean(&lengths),
        skill_usage: skill_usage_report(usage, config.policy.num_skills()),
        completion: TerrainKind::ALL
            .iter()
            .zip(completion)
            .map(|(&terrain, (episodes, completed))| TerrainCompletion {
                terrain,
                episodes,
                completed,
                fraction: (episodes > 0).then(|| completed as f64 / episodes as f64),
            })
            .collect(),
    })
}

/// Skill usage with the whole arena set to one terrain at a time, running
/// whole episodes until at least `steps_per_terrain` steps are recorded.
pub fn skill_usage_by_terrain(
    params: &PolicyParams,
    config: &RunConfig,
    grid: &CurriculumGrid,
    steps_per_terrain: usize,
    options: &EvalOptions,
) -> Result<SkillUsage, TrainError> {
    let k = config.policy.num_skills();
    let mut counts = vec![vec![0u64; k]; TerrainKind::ALL.len()];
    for kind in TerrainKind::ALL {
        let mut cfg = config.clone();
        cfg.world.layout = vec![kind; config.world.layout.len()];
        let mut round = 0u64;
        while counts[kind.index()].iter().sum::<u64>() < steps_per_terrain as u64 {
            let opts = EvalOptions {
                seed: options.seed.wrapping_add(round * 7919 + kind.index() as u64),
                trajectories: None,
                ..options.clone()
            };
            let s = evaluate(params, &cfg, grid, &opts)?;
            if s.steps == 0 {
                break;
            }
            for (c, n) in counts[kind.index()].iter_mut().zip(&s.skill_usage.counts[kind.index()]) {
                *c += n;
            }
            round += 1;
        }
    }
    Ok(SkillUsage::from_counts(counts))
}
