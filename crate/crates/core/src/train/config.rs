use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::CurriculumConfig;
use crate::dsfpo::{Algorithm, DsfPoConfig};
use crate::policy::PolicyConfig;
use crate::world::WorldConfig;

use super::TrainError;

/// Supervised pretraining of the context estimator on random-action data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub learning_rate: f64,
    /// Parallel environments used to collect pretraining data.
    pub envs: usize,
    /// High-level steps collected per environment.
    pub steps_per_env: usize,
    pub updates: usize,
    pub batch_size: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            envs: 32,
            steps_per_env: 200,
            updates: 600,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub num_envs: usize,
    /// High-level steps collected per environment per iteration.
    pub horizon: usize,
    pub iterations: usize,
    /// Multiplier applied to rewards before GAE; logged rewards are unscaled.
    pub reward_scale: f64,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub ppo: DsfPoConfig,
    pub policy: PolicyConfig,
    pub world: WorldConfig,
    pub curriculum: CurriculumConfig,
    pub estimator: EstimatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_envs: 64,
            horizon: 200,
            iterations: 300,
            reward_scale: 0.01,
            checkpoint_every: 50,
            out_dir: PathBuf::from("runs/default"),
            ppo: DsfPoConfig::default(),
            policy: PolicyConfig::default(),
            world: WorldConfig::default(),
            curriculum: CurriculumConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Defaults, then the optional file, then overrides.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, TrainError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(a) = o.algorithm {
            self.ppo.algorithm = a;
        }
        if let Some(i) = o.iterations {
            self.iterations = i;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.num_envs == 0 || self.horizon == 0 {
            return bad("num_envs and horizon must be positive".into());
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale must be positive".into());
        }
        if self.num_envs * self.horizon < self.ppo.minibatches {
            return bad("batch is smaller than the minibatch count".into());
        }
        self.ppo.validate().map_err(TrainError::Config)?;
        self.policy.validate().map_err(TrainError::Config)?;
        self.world.validate().map_err(TrainError::Config)?;
        if self.world.skills.len() != self.policy.num_skills() {
            return bad(format!(
                "world defines {} skills but the policy has {}",
                self.world.skills.len(),
                self.policy.num_skills()
            ));
        }
        if self.policy.command_dim != 5 {
            return bad("the dribbling world consumes 5 command dimensions".into());
        }
        if self.curriculum.max_difficulty > 5 {
            return bad("max_difficulty above 5 is not supported".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes to JSON");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Dotted path of the first field where two configs differ.
pub fn first_difference(a: &RunConfig, b: &RunConfig) -> Option<String> {
    let a = serde_json::to_value(a).ok()?;
    let b = serde_json::to_value(b).ok()?;
    diff_value(&a, &b, String::new())
}

fn diff_value(a: &serde_json::Value, b: &serde_json::Value, path: String) -> Option<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match y.get(k) {
                    Some(vb) => {
                        if let Some(d) = diff_value(va, vb, p) {
                            return Some(d);
                        }
                    }
                    None => return Some(p),
                }
            }
            y.keys().find(|k| !x.contains_key(*k)).map(|k| {
                if path.is_empty() { k.clone() } else { format!("{path}.{k}") }
            })
        }
        _ if a == b => None,
        _ => Some(if path.is_empty() { "<root>".into() } else { path }),
    }
}
