use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::agent::IterationStats;
use crate::error::{Error, Result};
use crate::setter::LessonRecord;

/// Bumped whenever a record gains, loses or renames a field.
pub const SCHEMA_VERSION: u32 = 1;

/// First line of every `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunHeader {
    pub schema_version: u32,
    pub arm: String,
    pub method: Method,
    pub seed: u64,
    pub spec_hash: String,
    pub code_version: String,
    pub dr: bool,
    pub ablation: Option<String>,
    pub curriculum: Option<String>,
    pub total_steps: u64,
    pub horizon: u64,
}

/// One training iteration. Lesson columns are present when the method sets them:
/// `level` for hand-designed curricula, `S` for the setter, `alpha` and `beta` for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    pub iteration: u64,
    pub step: u64,
    /// Rollout reward per simulated second, scaled to one episode.
    pub mean_reward: f64,
    pub episodes_finished: usize,
    pub mean_episode_return: Option<f64>,
    pub level: Option<usize>,
    #[serde(rename = "S")]
    pub s: Option<u8>,
    pub alpha: Option<u8>,
    pub beta: Option<u8>,
    pub r_bar: Option<f64>,
    pub setter_loss: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl IterationRecord {
    pub(super) fn new(iteration: u64) -> Self {
        Self {
            iteration,
            step: 0,
            mean_reward: 0.0,
            episodes_finished: 0,
            mean_episode_return: None,
            level: None,
            s: None,
            alpha: None,
            beta: None,
            r_bar: None,
            setter_loss: None,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
        }
    }

    pub(super) fn fill(&mut self, stats: &IterationStats) {
        self.step = stats.total_steps;
        self.mean_reward = stats.reward_rate;
        self.episodes_finished = stats.episode_returns.len();
        self.mean_episode_return = (!stats.episode_returns.is_empty())
            .then(|| stats.episode_returns.iter().sum::<f64>() / stats.episode_returns.len() as f64);
        self.policy_loss = stats.update.policy_loss;
        self.value_loss = stats.update.value_loss;
        self.entropy = stats.update.entropy;
        self.approx_kl = stats.update.approx_kl;
        self.clip_fraction = stats.update.clip_fraction;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(RunHeader),
    Iteration(IterationRecord),
    End { iterations: u64, step: u64 },
    Abort { error: String },
}

#[derive(Serialize)]
struct TimingRecord {
    iteration: u64,
    wall_seconds: f64,
}

/// Line-delimited writer for one run. Every record is flushed as soon as it
/// is written so an interrupted run leaves a readable prefix.
pub struct RunLogWriter {
    log: BufWriter<File>,
    lessons: Option<BufWriter<File>>,
    timing: BufWriter<File>,
    last_step: u64,
}

impl RunLogWriter {
    pub fn create(dir: &Path, header: &RunHeader, with_lessons: bool) -> Result<Self> {
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        let mut w = Self {
            log: open("log.jsonl")?,
            lessons: if with_lessons { Some(open("lessons.jsonl")?) } else { None },
            timing: open("timing.jsonl")?,
            last_step: 0,
        };
        w.write(&LogRecord::Header(header.clone()))?;
        Ok(w)
    }

    fn write(&mut self, record: &LogRecord) -> Result<()> {
        serde_json::to_writer(&mut self.log, record)?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        Ok(())
    }

    pub fn iteration(&mut self, record: &IterationRecord, wall_seconds: f64) -> Result<()> {
        if record.step <= self.last_step {
            return Err(Error::Contract(format!("log step {} does not follow {}", record.step, self.last_step)));
        }
        self.last_step = record.step;
        self.write(&LogRecord::Iteration(record.clone()))?;
        serde_json::to_writer(&mut self.timing, &TimingRecord { iteration: record.iteration, wall_seconds })?;
        self.timing.write_all(b"\n")?;
        self.timing.flush()?;
        Ok(())
    }

    pub fn lesson(&mut self, record: &LessonRecord) -> Result<()> {
        if let Some(w) = &mut self.lessons {
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn finish(&mut self, iterations: u64, step: u64) -> Result<()> {
        self.write(&LogRecord::End { iterations, step })
    }

    pub fn abort(&mut self, error: &Error) -> Result<()> {
        self.write(&LogRecord::Abort { error: error.to_string() })
    }
}

/// A parsed `log.jsonl`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub iterations: Vec<IterationRecord>,
    /// `Some` when the run aborted.
    pub abort: Option<String>,
    pub complete: bool,
}

/// Read and check a run log. Missing or unexpected columns, a wrong schema
/// version and non-increasing steps are schema errors.
pub fn read_log(path: &Path) -> Result<RunLog> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open log {}: {e}", path.display())))?;
    let schema = |line: usize, msg: String| Error::Schema(format!("{} line {line}: {msg}", path.display()));
    let mut header = None;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut abort = None;
    let mut complete = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| schema(n, e.to_string()))?;
        match (record, header.is_some()) {
            (LogRecord::Header(h), false) => {
                if h.schema_version != SCHEMA_VERSION {
                    return Err(schema(n, format!("schema version {} (expected {SCHEMA_VERSION})", h.schema_version)));
                }
                header = Some(h);
            }
            (_, false) => return Err(schema(n, "first record must be the header".into())),
            (LogRecord::Header(_), true) => return Err(schema(n, "duplicate header".into())),
            (LogRecord::Iteration(r), true) => {
                if let Some(prev) = iterations.last() {
                    if r.step <= prev.step {
                        return Err(schema(n, format!("step {} does not follow {}", r.step, prev.step)));
                    }
                }
                iterations.push(r);
            }
            (LogRecord::End { .. }, true) => complete = true,
            (LogRecord::Abort { error }, true) => abort = Some(error),
        }
    }
    let header = header.ok_or_else(|| schema(0, "empty log".into()))?;
    Ok(RunLog { header, iterations, abort, complete })
}
