use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunConfig, TrainError};

pub const LOG_VERSION: u32 = 1;

/// First line of every metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: LogHeader,
}

/// One line per training iteration. Wall-clock timings go to a separate
/// `timing.jsonl` so that this log is a pure function of config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Mean unscaled total reward of episodes finished this iteration
    /// (running totals of unfinished episodes when none finished).
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub episodes: usize,
    pub mean_step_reward: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub grad_norm: f64,
    /// Fraction of collected steps on which each skill was selected.
    pub skill_usage: Vec<f64>,
    pub command_unlocked: f64,
    pub difficulty_unlocked: f64,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.mean_reward,
            self.mean_episode_length,
            self.mean_step_reward,
            self.surrogate_loss,
            self.value_loss,
            self.entropy,
            self.clip_fraction,
            self.mean_ratio,
            self.grad_norm,
            self.command_unlocked,
            self.difficulty_unlocked,
        ]
        .iter()
        .chain(&self.skill_usage)
        .all(|v| v.is_finite())
    }
}

/// Append-only JSON-lines writer, flushed after every line.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Starts a new log with `header`, replacing any existing file.
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, TrainError> {
        let f = File::create(path).map_err(|e| TrainError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        };
        w.line(&HeaderLine {
            header: header.clone(),
        })?;
        Ok(w)
    }

    /// Keeps the header and every record before `iteration`, dropping the
    /// rest, and continues appending after them.
    pub fn resume(path: &Path, header: &LogHeader, iteration: usize) -> Result<Self, TrainError> {
        let kept: Vec<MetricsRecord> = match File::open(path) {
            Ok(_) => read_metrics(path)?
                .records
                .into_iter()
                .filter(|r| r.iteration < iteration)
                .collect(),
            Err(_) => Vec::new(),
        };
        let mut w = Self::create(path, header)?;
        for r in &kept {
            w.append(r)?;
        }
        Ok(w)
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<(), TrainError> {
        self.line(record)
    }

    fn line<T: Serialize>(&mut self, v: &T) -> Result<(), TrainError> {
        let io = |e| TrainError::io(&self.path, e);
        serde_json::to_writer(&mut self.out, v).map_err(|e| io(e.into()))?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

/// Appends a raw JSON line to `path`, creating it if needed.
pub(crate) fn append_json_line<T: Serialize>(path: &Path, v: &T) -> Result<(), TrainError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| TrainError::io(path, e))?;
    let mut line = serde_json::to_vec(v).expect("value serializes");
    line.push(b'\n');
    f.write_all(&line).map_err(|e| TrainError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub path: PathBuf,
    pub header: Option<LogHeader>,
    pub records: Vec<MetricsRecord>,
    /// Lines that parsed as neither header nor record.
    pub skipped: usize,
}

/// Parses a metrics log, skipping malformed lines with a warning.
pub fn read_metrics(path: &Path) -> Result<MetricsLog, TrainError> {
    let f = File::open(path).map_err(|e| TrainError::io(path, e))?;
    let mut log = MetricsLog {
        path: path.to_path_buf(),
        header: None,
        records: Vec::new(),
        skipped: 0,
    };
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| TrainError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(r) = serde_json::from_str::<MetricsRecord>(&line) {
            log.records.push(r);
        } else if let (Ok(h), None) = (serde_json::from_str::<HeaderLine>(&line), &log.header) {
            log.header = Some(h.header);
        } else {
            log::warn!("{}:{}: skipping malformed metrics line", path.display(), i + 1);
            log.skipped += 1;
        }
    }
    Ok(log)
}
