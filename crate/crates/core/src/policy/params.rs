use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ad::{ParamStore, Tensor};

/// Network shapes and the skill/command layout of the hierarchical actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Hidden widths of the shared feature extractor.
    pub sfe_widths: Vec<usize>,
    pub critic_widths: Vec<usize>,
    pub estimator_widths: Vec<usize>,
    /// Command dimensions consumed by each skill (zero-based).
    pub skill_command_sets: Vec<Vec<usize>>,
    pub command_dim: usize,
    pub init_std: f64,
    pub estimator_window: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            sfe_widths: vec![512, 256, 128],
            critic_widths: vec![128, 128],
            estimator_widths: vec![128, 128],
            skill_command_sets: vec![vec![0, 1], vec![0, 1], vec![2, 3, 4], vec![2, 3, 4]],
            command_dim: 5,
            init_std: 0.5,
            estimator_window: 5,
        }
    }
}

impl PolicyConfig {
    /// Small networks used by tests and the desk-scale ablation.
    pub fn small() -> Self {
        Self {
            sfe_widths: vec![64, 32, 32],
            critic_widths: vec![64, 64],
            estimator_widths: vec![64, 64],
            ..Self::default()
        }
    }

    pub fn num_skills(&self) -> usize {
        self.skill_command_sets.len()
    }

    /// `[command_dim, K]` 0/1 matrix with a one where skill `k` uses dim `j`.
    pub fn subset_matrix(&self) -> Tensor {
        let k = self.num_skills();
        let mut m = Tensor::zeros(self.command_dim, k);
        for (s, dims) in self.skill_command_sets.iter().enumerate() {
            for &j in dims {
                m.set(j, s, 1.0);
            }
        }
        m
    }

    /// Skills whose command subset equals the one consumed by `skill`.
    pub fn active_skills(&self, skill: usize) -> impl Iterator<Item = usize> + '_ {
        let target = &self.skill_command_sets[skill];
        self.skill_command_sets
            .iter()
            .enumerate()
            .filter(move |(_, s)| *s == target)
            .map(|(k, _)| k)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.skill_command_sets.is_empty() {
            return Err("at least one skill is required".into());
        }
        for (k, dims) in self.skill_command_sets.iter().enumerate() {
            if dims.is_empty() || dims.iter().any(|&d| d >= self.command_dim) {
                return Err(format!("skill {k} has an invalid command subset {dims:?}"));
            }
        }
        if self.sfe_widths.is_empty() || self.sfe_widths.contains(&0) {
            return Err("sfe_widths must be non-empty and positive".into());
        }
        if !(self.init_std > 0.0) {
            return Err("init_std must be positive".into());
        }
        if self.estimator_window == 0 {
            return Err("estimator_window must be positive".into());
        }
        Ok(())
    }
}

/// Input/output sizes supplied by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub obs_dim: usize,
    pub state_dim: usize,
    /// Features per history step fed to the estimator.
    pub estimator_step_dim: usize,
    pub context_dim: usize,
}

pub(crate) fn layer_names(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias"))
}

pub const INDEX_HEAD: &str = "actor.index_head";
pub const COMMAND_HEAD: &str = "actor.command_head";
pub const COMMAND_LOG_STD: &str = "actor.command_log_std";

/// All learnable values of the actor, critic and context estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub dims: PolicyDims,
    pub store: ParamStore,
}

impl PolicyParams {
    /// Orthogonal initialization; hidden layers use gain sqrt(2), the actor
    /// heads 0.01 so the initial skill distribution is near uniform.
    pub fn init<R: Rng + ?Sized>(config: &PolicyConfig, dims: PolicyDims, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let gain = 2f64.sqrt();
        let add_mlp = |store: &mut ParamStore,
                           prefix: &str,
                           input: usize,
                           widths: &[usize],
                           rng: &mut R| {
            let mut fan_in = input;
            for (i, &w) in widths.iter().enumerate() {
                let (wn, bn) = layer_names(prefix, i);
                store.insert(wn, orthogonal(fan_in, w, gain, rng));
                store.insert(bn, Tensor::zeros(1, w));
                fan_in = w;
            }
            fan_in
        };
        let k = config.num_skills();
        let feat = add_mlp(&mut store, "actor.sfe", dims.obs_dim, &config.sfe_widths, rng);
        store.insert(format!("{INDEX_HEAD}.weight"), orthogonal(feat, k, 0.01, rng));
        store.insert(format!("{INDEX_HEAD}.bias"), Tensor::zeros(1, k));
        store.insert(
            format!("{COMMAND_HEAD}.weight"),
            orthogonal(feat, config.command_dim, 0.01, rng),
        );
        store.insert(
            format!("{COMMAND_HEAD}.bias"),
            Tensor::zeros(1, config.command_dim),
        );
        store.insert(
            COMMAND_LOG_STD,
            Tensor::full(1, config.command_dim, config.init_std.ln()),
        );
        let cf = add_mlp(&mut store, "critic", dims.state_dim, &config.critic_widths, rng);
        store.insert("critic.out.weight", orthogonal(cf, 1, 1.0, rng));
        store.insert("critic.out.bias", Tensor::zeros(1, 1));
        let ef = add_mlp(
            &mut store,
            "estimator",
            dims.estimator_step_dim * config.estimator_window,
            &config.estimator_widths,
            rng,
        );
        store.insert("estimator.out.weight", orthogonal(ef, dims.context_dim, 1.0, rng));
        store.insert("estimator.out.bias", Tensor::zeros(1, dims.context_dim));
        Self {
            config: config.clone(),
            dims,
            store,
        }
    }

    /// Same shapes as [`PolicyParams::init`] with every weight, bias and
    /// log-std set to zero.
    pub fn zeros(config: &PolicyConfig, dims: PolicyDims) -> Self {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut p = Self::init(config, dims, &mut rng);
        for (_, t) in p.store.iter_mut() {
            t.scale_in_place(0.0);
        }
        p
    }

    pub fn log_std(&self) -> &Tensor {
        self.store.get(COMMAND_LOG_STD).expect("log-std always present")
    }

    pub fn is_actor(name: &str) -> bool {
        name.starts_with("actor.")
    }

    pub fn is_critic(name: &str) -> bool {
        name.starts_with("critic.")
    }

    pub fn is_estimator(name: &str) -> bool {
        name.starts_with("estimator.")
    }
}

/// Scaled (semi-)orthogonal `[rows, cols]` matrix via modified Gram-Schmidt
/// on a Gaussian draw.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // m vectors of length n
    let mut vecs: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..m {
        for j in 0..i {
            let d: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= d * b;
            }
        }
        let norm = vecs[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            vecs[i].iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut t = Tensor::zeros(rows, cols);
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows >= cols {
                t.set(j, i, gain * x);
            } else {
                t.set(i, j, gain * x);
            }
        }
    }
    t
}
