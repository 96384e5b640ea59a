use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ad::{Adam, Tensor};
use crate::curriculum::CurriculumGrid;
use crate::policy::PolicyParams;
use crate::world::{policy_dims, EnvSnapshot};

use super::RunConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSFPOCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("array `{name}` has shape {found:?}, config expects {expected:?}")]
    Shape {
        name: String,
        expected: [usize; 2],
        found: [usize; 2],
    },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamMeta {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    tracked: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    config_hash: String,
    iteration: usize,
    arrays: Vec<ArrayEntry>,
    adam: AdamMeta,
    grid: CurriculumGrid,
    envs: Vec<EnvSnapshot>,
    samplers: Vec<ChaCha8Rng>,
    shuffle_rng: ChaCha8Rng,
    curriculum_rng: ChaCha8Rng,
}

/// Full training state: enough to resume bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Number of completed iterations.
    pub iteration: usize,
    pub params: PolicyParams,
    pub adam: Adam,
    pub grid: CurriculumGrid,
    pub envs: Vec<EnvSnapshot>,
    /// Per-environment action sampling streams.
    pub samplers: Vec<ChaCha8Rng>,
    pub shuffle_rng: ChaCha8Rng,
    pub curriculum_rng: ChaCha8Rng,
}

const PARAM: &str = "param/";
const ADAM_M: &str = "adam_m/";
const ADAM_V: &str = "adam_v/";

/// Layout: magic, u32 version, u64 header length, JSON header, little-endian
/// f64 arrays in header order, SHA-256 of everything before it.
impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut arrays: Vec<(String, &Tensor)> = Vec::new();
        for (n, t) in self.params.store.iter() {
            arrays.push((format!("{PARAM}{n}"), t));
        }
        for (n, m, v) in self.adam.moments() {
            arrays.push((format!("{ADAM_M}{n}"), m));
            arrays.push((format!("{ADAM_V}{n}"), v));
        }
        let header = Header {
            config: self.config.clone(),
            config_hash: self.config.hash(),
            iteration: self.iteration,
            arrays: arrays
                .iter()
                .map(|(name, t)| ArrayEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
            adam: AdamMeta {
                lr: self.adam.lr,
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                eps: self.adam.eps,
                step: self.adam.step_count(),
                tracked: self.adam.moments().map(|(n, ..)| n.to_string()).collect(),
            },
            grid: self.grid.clone(),
            envs: self.envs.clone(),
            samplers: self.samplers.clone(),
            shuffle_rng: self.shuffle_rng.clone(),
            curriculum_rng: self.curriculum_rng.clone(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 20 {
            return Err(corrupt("truncated before header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if bytes.len() < 20 + 32 {
            return Err(corrupt("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let hlen = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let hend = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&body[20..hend])
            .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
        if header.config_hash != header.config.hash() {
            return Err(corrupt("config hash does not match stored config"));
        }

        let mut payload = &body[hend..];
        let mut tensors = Vec::with_capacity(header.arrays.len());
        for a in &header.arrays {
            let n = a.rows * a.cols;
            if payload.len() < n * 8 {
                return Err(corrupt("array payload truncated"));
            }
            let data = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            payload = &payload[n * 8..];
            let t = Tensor::new(a.rows, a.cols, data).map_err(|e| corrupt(&e.to_string()))?;
            tensors.push((a.name.as_str(), t));
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes after arrays"));
        }

        let mut params = PolicyParams::zeros(&header.config.policy, policy_dims());
        let mut seen = 0;
        for (name, t) in &tensors {
            let Some(p) = name.strip_prefix(PARAM) else { continue };
            let slot = params
                .store
                .get_mut(p)
                .ok_or_else(|| CheckpointError::Corrupt(format!("unknown parameter `{p}`")))?;
            if slot.shape() != t.shape() {
                return Err(CheckpointError::Shape {
                    name: p.to_string(),
                    expected: slot.shape(),
                    found: t.shape(),
                });
            }
            *slot = t.clone();
            seen += 1;
        }
        if seen != params.store.len() {
            return Err(corrupt("parameter arrays missing"));
        }

        let find = |prefix: &str, n: &str| {
            let key = format!("{prefix}{n}");
            tensors
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing array `{key}`")))
        };
        let mut moments = Vec::new();
        for n in &header.adam.tracked {
            let p = params
                .store
                .get(n)
                .ok_or_else(|| CheckpointError::Corrupt(format!("optimizer tracks unknown `{n}`")))?;
            let (m, v) = (find(ADAM_M, n)?, find(ADAM_V, n)?);
            for t in [&m, &v] {
                if t.shape() != p.shape() {
                    return Err(CheckpointError::Shape {
                        name: format!("optimizer moment for {n}"),
                        expected: p.shape(),
                        found: t.shape(),
                    });
                }
            }
            moments.push((n.clone(), m, v));
        }
        let a = &header.adam;
        let adam = Adam::from_parts(a.lr, a.beta1, a.beta2, a.eps, a.step, moments);

        let envs = header.config.num_envs;
        if header.envs.len() != envs || header.samplers.len() != envs {
            return Err(corrupt("environment count does not match config"));
        }
        Ok(Self {
            config: header.config,
            iteration: header.iteration,
            params,
            adam,
            grid: header.grid,
            envs: header.envs,
            samplers: header.samplers,
            shuffle_rng: header.shuffle_rng,
            curriculum_rng: header.curriculum_rng,
        })
    }

    /// Writes via a temporary file and rename, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
