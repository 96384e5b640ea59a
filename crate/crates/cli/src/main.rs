use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dsfpo::dsfpo::Algorithm;
use dsfpo::train::{
    emit_plots, evaluate, first_difference, resume, train, Checkpoint, EvalOptions, EvalSummary,
    Overrides, RunConfig,
};

#[derive(Parser)]
#[command(name = "dsfpo", version, about = "Skill-focused PPO on a 2-D dribbling task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from scratch, or resume with --checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Roll out a checkpointed policy and summarize skill usage.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Must match the config stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Curves with std bands from metrics logs, plus an optional heatmap.
    Plot {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        /// `summary.json` written by `eval`.
        #[arg(long)]
        eval: Option<PathBuf>,
    },
    /// Print what a checkpoint holds.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            algo,
            iterations,
            out,
            checkpoint,
            dry_run,
        } => {
            let overrides = Overrides {
                seed,
                algorithm: algo,
                iterations,
                out_dir: out,
            };
            if let Some(ck) = checkpoint {
                if config.is_some() {
                    bail!("--config cannot be combined with --checkpoint; the checkpoint carries its config");
                }
                let s = resume(&ck, &overrides)?;
                println!("resumed to {} (metrics in {})", s.checkpoint.display(), s.metrics.display());
                return Ok(());
            }
            let cfg = RunConfig::resolve(config.as_deref(), &overrides)?;
            if dry_run {
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            let s = train(&cfg)?;
            println!("checkpoint {}", s.checkpoint.display());
            println!("metrics    {}", s.metrics.display());
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
            deterministic,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            if let Some(p) = config {
                let supplied = RunConfig::load(&p)?;
                if let Some(field) = first_difference(&ck.config, &supplied) {
                    bail!("checkpoint config differs from {} at `{field}`", p.display());
                }
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let opts = EvalOptions {
                episodes,
                deterministic,
                seed,
                trajectories: Some(out.join("trajectories.jsonl")),
                ..EvalOptions::default()
            };
            let summary = evaluate(&ck.params, &ck.config, &ck.grid, &opts)?;
            let path = out.join("summary.json");
            std::fs::write(&path, serde_json::to_string_pretty(&summary)?)
                .with_context(|| format!("writing {}", path.display()))?;
            print_summary(&summary);
        }
        Command::Plot { logs, out, eval } => {
            let summary: Option<EvalSummary> = match eval {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    Some(serde_json::from_str(&text)?)
                }
                None => None,
            };
            let report = emit_plots(&logs, &out, summary.as_ref())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if report.skipped_lines > 0 {
                eprintln!("skipped {} malformed lines", report.skipped_lines);
            }
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::InspectCheckpoint { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (cmd, diff) = ck.grid.unlocked_fraction();
            println!("iteration        {}", ck.iteration);
            println!("algorithm        {}", ck.config.ppo.algorithm);
            println!("seed             {}", ck.config.seed);
            println!("config hash      {}", ck.config.hash());
            println!("parameters       {} tensors, {} values", ck.params.store.len(), ck.params.store.num_values());
            println!("optimizer steps  {}", ck.adam.step_count());
            println!("environments     {}", ck.envs.len());
            println!("unlocked         commands {cmd:.3}, difficulties {diff:.3}");
        }
    }
    Ok(())
}

fn print_summary(s: &EvalSummary) {
    let opt = |v: Option<f64>| v.map_or("no data".to_string(), |x| format!("{x:.3}"));
    println!("episodes {}  steps {}", s.episodes, s.steps);
    println!("mean reward {}  mean length {}", opt(s.mean_reward), opt(s.mean_episode_length));
    for c in &s.completion {
        let row = s.skill_usage.row(c.terrain).map_or("no data".to_string(), |r| {
            r.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
        });
        println!(
            "{:<14} completion {:<8} usage {}",
            c.terrain.name(),
            opt(c.fraction),
            row
        );
    }
}
