use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ad::Tensor;
use crate::curriculum::{evaluate_gates, CurriculumGrid, CurriculumSample};
use crate::dsfpo::{DsfPoError, RolloutBuffer, Transition, Updater};
use crate::policy::{
    sample_row, EstimatedContext, EstimatorTrainer, HierAction, PolicyParams, PolicyRunner,
};
use crate::world::{context_target, policy_dims, DribbleEnv, Observation};

use super::metrics::{append_json_line, LOG_VERSION};
use super::{
    first_difference, stream_rng, Checkpoint, LogHeader, MetricsRecord, MetricsWriter, Overrides,
    RunConfig, TrainError,
};

pub(crate) fn random_action<R: Rng + ?Sized>(num_skills: usize, rng: &mut R) -> HierAction {
    HierAction {
        skill: rng.random_range(0..num_skills),
        command: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
        log_prob_index: 0.0,
        log_prob_command_per_skill: Vec::new(),
        log_prob_command_full: 0.0,
        focus_weights: Vec::new(),
    }
}

/// Fits the context estimator on data from uniformly random skills and
/// commands over every difficulty level. Returns the minibatch loss
/// before each update.
pub fn pretrain_estimator(
    params: &mut PolicyParams,
    config: &RunConfig,
) -> Result<Vec<f64>, TrainError> {
    let est = &config.estimator;
    if est.updates == 0 || est.envs == 0 || est.steps_per_env == 0 {
        return Ok(Vec::new());
    }
    let window = config.policy.estimator_window;
    let range = config.curriculum.command_range;
    let mut rng = stream_rng(config.seed, "estimator/data");
    let draw = |rng: &mut ChaCha8Rng| CurriculumSample {
        command: [rng.random_range(-range..range), rng.random_range(-range..range)],
        cell: [0, 0],
        difficulty: rng.random_range(0..=config.curriculum.max_difficulty),
    };
    let mut envs: Vec<DribbleEnv> = (0..est.envs)
        .map(|i| {
            let mut e = DribbleEnv::new(
                config.world.clone(),
                window,
                stream_rng(config.seed, &format!("estimator/env/{i}")),
            );
            e.reset(&draw(&mut rng));
            e
        })
        .collect();
    let mut inputs = Vec::with_capacity(est.envs * est.steps_per_env);
    let mut targets = Vec::with_capacity(inputs.capacity());
    let k = config.world.skills.len();
    for _ in 0..est.steps_per_env {
        for env in envs.iter_mut() {
            let a = random_action(k, &mut rng);
            let (_, fin) = env.step(&a)?;
            inputs.push(env.estimator_input());
            targets.push(context_target(env.config(), env.state()).to_vec());
            if fin.is_some() {
                env.reset(&draw(&mut rng));
            }
        }
    }

    let mut trainer = EstimatorTrainer::new(params, est.learning_rate);
    let mut batch_rng = stream_rng(config.seed, "estimator/batch");
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(est.updates);
    for _ in 0..est.updates {
        let pick: Vec<usize> = idx
            .choose_multiple(&mut batch_rng, est.batch_size.min(idx.len()))
            .copied()
            .collect();
        let x: Vec<&[f64]> = pick.iter().map(|&i| inputs[i].as_slice()).collect();
        let y: Vec<&[f64]> = pick.iter().map(|&i| targets[i].as_slice()).collect();
        let x = Tensor::from_rows(&x).map_err(crate::policy::PolicyError::from)?;
        let y = Tensor::from_rows(&y).map_err(crate::policy::PolicyError::from)?;
        losses.push(trainer.update(params, &x, &y)?);
    }
    Ok(losses)
}

/// Training state for one run.
pub struct Trainer {
    config: RunConfig,
    params: PolicyParams,
    updater: Updater,
    grid: CurriculumGrid,
    envs: Vec<DribbleEnv>,
    samplers: Vec<ChaCha8Rng>,
    shuffle_rng: ChaCha8Rng,
    curriculum_rng: ChaCha8Rng,
    iteration: usize,
    runner: PolicyRunner,
}

impl Trainer {
    /// Initializes networks and environments. Everything here is
    /// independent of the algorithm choice, so ablation runs share initial
    /// parameters and environment streams.
    pub fn new(config: RunConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut init = stream_rng(config.seed, "init");
        let mut params = PolicyParams::init(&config.policy, policy_dims(), &mut init);
        pretrain_estimator(&mut params, &config)?;
        let grid = CurriculumGrid::new(config.curriculum.clone())?;
        let mut curriculum_rng = stream_rng(config.seed, "curriculum");
        let envs = (0..config.num_envs)
            .map(|i| {
                let mut e = DribbleEnv::new(
                    config.world.clone(),
                    config.policy.estimator_window,
                    stream_rng(config.seed, &format!("env/{i}")),
                );
                e.reset(&grid.sample(&mut curriculum_rng));
                e
            })
            .collect();
        let samplers = (0..config.num_envs)
            .map(|i| stream_rng(config.seed, &format!("sampler/{i}")))
            .collect();
        let updater = Updater::new(&params, config.ppo.clone());
        let runner = PolicyRunner::new(&params);
        Ok(Self {
            shuffle_rng: stream_rng(config.seed, "shuffle"),
            config,
            params,
            updater,
            grid,
            envs,
            samplers,
            curriculum_rng,
            iteration: 0,
            runner,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, TrainError> {
        ck.config.validate()?;
        let window = ck.config.policy.estimator_window;
        let envs = ck
            .envs
            .into_iter()
            .map(|s| DribbleEnv::restore(ck.config.world.clone(), window, s))
            .collect();
        let runner = PolicyRunner::new(&ck.params);
        Ok(Self {
            updater: Updater::from_adam(ck.config.ppo.clone(), ck.adam),
            config: ck.config,
            params: ck.params,
            grid: ck.grid,
            envs,
            samplers: ck.samplers,
            shuffle_rng: ck.shuffle_rng,
            curriculum_rng: ck.curriculum_rng,
            iteration: ck.iteration,
            runner,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration,
            params: self.params.clone(),
            adam: self.updater.adam().clone(),
            grid: self.grid.clone(),
            envs: self.envs.iter().map(|e| e.snapshot().clone()).collect(),
            samplers: self.samplers.clone(),
            shuffle_rng: self.shuffle_rng.clone(),
            curriculum_rng: self.curriculum_rng.clone(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn grid(&self) -> &CurriculumGrid {
        &self.grid
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn observe_all(&mut self) -> Result<Vec<Observation>, TrainError> {
        let hist: Vec<Vec<f64>> = self.envs.iter().map(|e| e.estimator_input()).collect();
        let z = self
            .runner
            .estimate(Tensor::from_rows(&hist).map_err(crate::policy::PolicyError::from)?)?;
        Ok(self
            .envs
            .iter()
            .enumerate()
            .map(|(i, e)| e.observe(&EstimatedContext::from_slice(z.row_slice(i))))
            .collect())
    }

    fn batch(rows: impl Iterator<Item = Vec<f64>>) -> Result<Tensor, TrainError> {
        let rows: Vec<Vec<f64>> = rows.collect();
        Ok(Tensor::from_rows(&rows).map_err(crate::policy::PolicyError::from)?)
    }

    /// One iteration: collect, advantages, policy update, curriculum.
    pub fn step(&mut self) -> Result<MetricsRecord, TrainError> {
        let n = self.envs.len();
        let h = self.config.horizon;
        let k = self.config.policy.num_skills();
        let scale = self.config.reward_scale;
        let mut buffer = RolloutBuffer::new(n, h);
        let mut skill_counts = vec![0u64; k];
        let mut episode_rewards = Vec::new();
        let mut episode_lengths = Vec::new();
        let mut step_reward = 0.0;

        for _ in 0..h {
            let obs = self.observe_all()?;
            let actor = self.runner.actor(Self::batch(obs.iter().map(|o| o.actor.clone()))?)?;
            let values = self
                .runner
                .values(Self::batch(obs.iter().map(|o| o.state.clone()))?)?;
            for (i, o) in obs.into_iter().enumerate() {
                let action = sample_row(&self.config.policy, &actor, i, &mut self.samplers[i]);
                let (out, fin) = self.envs[i].step(&action)?;
                skill_counts[action.skill] += 1;
                step_reward += out.reward.total;
                buffer.push(Transition {
                    obs: o.actor,
                    state: o.state,
                    action,
                    reward: out.reward.total * scale,
                    done: out.done,
                    value: values[i],
                });
                if let Some(f) = fin {
                    episode_rewards.push(f.total_reward);
                    episode_lengths.push(f.length as f64);
                    let outcome = evaluate_gates(&f.trace, self.grid.config());
                    self.grid.update(&outcome)?;
                    let s = self.grid.sample(&mut self.curriculum_rng);
                    self.envs[i].reset(&s);
                }
            }
        }

        let obs = self.observe_all()?;
        let bootstrap = self
            .runner
            .values(Self::batch(obs.into_iter().map(|o| o.state))?)?;
        buffer.compute_advantages(&bootstrap, self.config.ppo.gamma, self.config.ppo.lambda)?;
        let stats = self
            .updater
            .update(&mut self.params, &buffer, &mut self.shuffle_rng)?;
        self.runner.set_params(&self.params);

        let finished = episode_rewards.len();
        if finished == 0 {
            for e in &self.envs {
                episode_rewards.push(e.snapshot().episode_reward);
                episode_lengths.push(e.state().step as f64);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let total_steps = (n * h) as f64;
        let (command_unlocked, difficulty_unlocked) = self.grid.unlocked_fraction();
        let record = MetricsRecord {
            iteration: self.iteration,
            mean_reward: mean(&episode_rewards),
            mean_episode_length: mean(&episode_lengths),
            episodes: finished,
            mean_step_reward: step_reward / total_steps,
            surrogate_loss: stats.surrogate_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            mean_ratio: stats.mean_ratio,
            grad_norm: stats.grad_norm,
            skill_usage: skill_counts.iter().map(|&c| c as f64 / total_steps).collect(),
            command_unlocked,
            difficulty_unlocked,
        };
        self.iteration += 1;
        Ok(record)
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    /// Records produced by this call.
    pub records: Vec<MetricsRecord>,
}

#[derive(Serialize)]
struct Timing {
    iteration: usize,
    seconds: f64,
}

const METRICS_FILE: &str = "metrics.jsonl";
const TIMING_FILE: &str = "timing.jsonl";
const CHECKPOINT_FILE: &str = "checkpoint.bin";
const ABORT_FILE: &str = "abort_checkpoint.bin";

fn prepare_out_dir(dir: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").map_err(|e| TrainError::io(dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| TrainError::io(dir, e))
}

fn header(config: &RunConfig) -> LogHeader {
    LogHeader {
        version: LOG_VERSION,
        config_hash: config.hash(),
        config: config.clone(),
    }
}

fn run_loop(
    trainer: &mut Trainer,
    mut writer: MetricsWriter,
    out: &Path,
) -> Result<TrainSummary, TrainError> {
    let cfg = trainer.config.clone();
    let ck_path = out.join(CHECKPOINT_FILE);
    let mut records = Vec::new();
    while trainer.iteration < cfg.iterations {
        let before = trainer.checkpoint();
        let t0 = Instant::now();
        let record = match trainer.step() {
            Ok(r) => r,
            Err(TrainError::Update(e @ DsfPoError::NonFiniteLoss { .. })) => {
                let path = out.join(ABORT_FILE);
                before.save(&path)?;
                return Err(TrainError::NonFiniteLoss {
                    iteration: before.iteration,
                    checkpoint: path,
                    detail: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        };
        writer.append(&record)?;
        append_json_line(
            &out.join(TIMING_FILE),
            &Timing {
                iteration: record.iteration,
                seconds: t0.elapsed().as_secs_f64(),
            },
        )?;
        log::info!(
            "iter {:>4}  reward {:>9.2}  length {:>6.1}  clip {:.3}  unlocked {:.3}/{:.3}",
            record.iteration,
            record.mean_reward,
            record.mean_episode_length,
            record.clip_fraction,
            record.command_unlocked,
            record.difficulty_unlocked
        );
        records.push(record);
        if cfg.checkpoint_every > 0 && trainer.iteration % cfg.checkpoint_every == 0 {
            trainer.checkpoint().save(&ck_path)?;
        }
    }
    trainer.checkpoint().save(&ck_path)?;
    Ok(TrainSummary {
        out_dir: out.to_path_buf(),
        checkpoint: ck_path,
        metrics: out.join(METRICS_FILE),
        records,
    })
}

/// Trains from scratch into `config.out_dir`: `config.toml`,
/// `metrics.jsonl`, `timing.jsonl` and `checkpoint.bin`.
pub fn train(config: &RunConfig) -> Result<TrainSummary, TrainError> {
    config.validate()?;
    let out = config.out_dir.clone();
    prepare_out_dir(&out)?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, config.to_toml_string()).map_err(|e| TrainError::io(&cfg_path, e))?;
    let _ = std::fs::remove_file(out.join(TIMING_FILE));
    let writer = MetricsWriter::create(&out.join(METRICS_FILE), &header(config))?;
    let mut trainer = Trainer::new(config.clone())?;
    run_loop(&mut trainer, writer, &out)
}

/// Continues a run from a checkpoint. Only the iteration budget and output
/// directory may be overridden.
pub fn resume(checkpoint: &Path, overrides: &Overrides) -> Result<TrainSummary, TrainError> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut config = ck.config.clone();
    config.apply(&Overrides {
        iterations: overrides.iterations,
        out_dir: overrides.out_dir.clone(),
        ..Overrides::default()
    });
    let mut asked = config.clone();
    asked.apply(overrides);
    if let Some(field) = first_difference(&config, &asked) {
        return Err(TrainError::ConfigMismatch(field));
    }
    let out = config.out_dir.clone();
    prepare_out_dir(&out)?;
    let writer = MetricsWriter::resume(&out.join(METRICS_FILE), &header(&config), ck.iteration)?;
    let mut trainer = Trainer::from_checkpoint(Checkpoint { config, ..ck })?;
    run_loop(&mut trainer, writer, &out)
}
