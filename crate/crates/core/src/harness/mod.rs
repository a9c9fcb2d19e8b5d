//! Experiment orchestration: resolve an experiment, train one run per seed, and
//! write line-delimited logs, lesson traces and checkpoints.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/<arm>/seed-<n>/log.jsonl      header, one record per iteration, end or abort
//! <out>/<arm>/seed-<n>/lessons.jsonl  setter lesson trace (setter runs only)
//! <out>/<arm>/seed-<n>/timing.jsonl   wall-clock seconds per iteration
//! <out>/<arm>/seed-<n>/policy.json    final policy checkpoint
//! ```
//!
//! Wall-clock time lives in its own file so `log.jsonl` is byte-identical
//! across reruns of the same experiment and seed.

mod log;
mod plot;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use log::{read_log, IterationRecord, LogRecord, RunHeader, RunLog, RunLogWriter, SCHEMA_VERSION};
pub use plot::{aggregate, ema, render_plots, Band, SMOOTHING};

use crate::agent::{evaluate, Greedy, Sampled, Trainer, UniformRandom};
use crate::config::RunConfig;
use crate::curricula::{budget_lesson, load_config, CurriculumConfig, StagnancyTracker};
use crate::env::Scenario;
use crate::error::{Error, Result};
use crate::setter::{AblationMask, LessonRecord, Setter};

/// How lessons are chosen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full action set, no adversary, staggered start throughout.
    None,
    Budget,
    Stagnancy,
    Setter,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "budget" => Ok(Method::Budget),
            "stagnancy" => Ok(Method::Stagnancy),
            "setter" => Ok(Method::Setter),
            other => Err(Error::Config(format!("unknown method {other:?} (none, budget, stagnancy, setter)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::None => "none",
            Method::Budget => "budget",
            Method::Stagnancy => "stagnancy",
            Method::Setter => "setter",
        })
    }
}

/// Everything needed to reproduce a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub method: Method,
    /// Run config file with `[env]`, `[dr]`, `[ppo]`, `[setter]` tables.
    #[serde(default)]
    pub config: Option<PathBuf>,
    /// Curriculum file, or the name of a built-in curriculum.
    #[serde(default)]
    pub curriculum: Option<String>,
    #[serde(default)]
    pub ablation: AblationMask,
    /// Overrides `dr.enabled` from the run config.
    #[serde(default = "default_true")]
    pub dr: bool,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Save an intermediate checkpoint every this many iterations; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn default_true() -> bool {
    true
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentSpec {
    pub fn new(method: Method, seeds: Vec<u64>, total_steps: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            method,
            config: None,
            curriculum: None,
            ablation: AblationMask::ALL,
            dr: true,
            seeds,
            total_steps,
            out_dir: out_dir.into(),
            checkpoint_every: 0,
        }
    }

    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { source_name: source_name.to_string(), message: e.to_string() })
    }

    /// Validate the experiment and load every file it references.
    pub fn resolve(&self) -> Result<ResolvedSpec> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        self.ablation.validate()?;
        if self.method != Method::Setter && self.ablation != AblationMask::ALL {
            return Err(Error::Config(format!("ablation applies only to the setter method, not {}", self.method)));
        }
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        run.dr.enabled = self.dr;
        let curriculum = match (self.method, &self.curriculum) {
            (Method::Budget | Method::Stagnancy, Some(c)) => Some(load_config(Path::new(c))?),
            (Method::Budget | Method::Stagnancy, None) => {
                return Err(Error::Config(format!("method {} needs a curriculum", self.method)))
            }
            (_, Some(_)) => return Err(Error::Config(format!("method {} takes no curriculum", self.method))),
            (_, None) => None,
        };
        if let Some(c) = &curriculum {
            if self.method == Method::Budget {
                c.budgets(self.total_steps)?;
            }
        }
        let resolved = ResolvedSpec { spec: self.clone(), run, curriculum };
        Ok(resolved)
    }
}

/// A validated spec with its configs loaded.
#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    pub spec: ExperimentSpec,
    pub run: RunConfig,
    pub curriculum: Option<CurriculumConfig>,
}

#[derive(Serialize)]
struct HashInput<'a> {
    method: Method,
    ablation: AblationMask,
    total_steps: u64,
    checkpoint_every: u64,
    run: &'a RunConfig,
    curriculum: Option<&'a CurriculumConfig>,
}

impl ResolvedSpec {
    /// Arm label: method plus any ablation, curriculum and DR qualifiers.
    pub fn arm(&self) -> String {
        let mut arm = self.spec.method.to_string();
        if let Some(c) = &self.curriculum {
            arm.push('-');
            arm.push_str(&c.name);
        }
        if self.spec.ablation != AblationMask::ALL {
            arm.push('-');
            arm.push_str(&self.spec.ablation.to_string().replace(',', "+"));
        }
        if !self.run.dr.enabled {
            arm.push_str("-nodr");
        }
        arm
    }

    /// SHA-256 over everything that determines a run except the seed and output location.
    pub fn hash(&self) -> String {
        let input = HashInput {
            method: self.spec.method,
            ablation: self.spec.ablation,
            total_steps: self.spec.total_steps,
            checkpoint_every: self.spec.checkpoint_every,
            run: &self.run,
            curriculum: self.curriculum.as_ref(),
        };
        let bytes = serde_json::to_vec(&input).expect("spec serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.spec.out_dir.join(self.arm()).join(format!("seed-{seed}"))
    }

    fn header(&self, seed: u64) -> RunHeader {
        RunHeader {
            schema_version: SCHEMA_VERSION,
            arm: self.arm(),
            method: self.spec.method,
            seed,
            spec_hash: self.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            dr: self.run.dr.enabled,
            ablation: (self.spec.method == Method::Setter).then(|| self.spec.ablation.to_string()),
            curriculum: self.curriculum.as_ref().map(|c| c.name.clone()),
            total_steps: self.spec.total_steps,
            horizon: self.run.ppo.horizon as u64,
        }
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub iterations: u64,
    pub steps: u64,
    pub final_reward: f64,
}

/// Run every seed of the experiment in parallel. All seeds run to completion or
/// abort independently; the first error, if any, is returned afterwards.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunSummary>> {
    let resolved = spec.resolve()?;
    let outcomes: Vec<Result<RunSummary>> = spec.seeds.par_iter().map(|&seed| run_seed(&resolved, seed)).collect();
    outcomes.into_iter().collect()
}

enum Schedule {
    None,
    Budget { budgets: Vec<u64> },
    Stagnancy { tracker: StagnancyTracker },
    Setter { setter: Box<Setter> },
}

/// Train one seed, writing its logs as it goes. On a sub-module error the
/// partial log is closed with an abort record and the error is returned.
pub fn run_seed(resolved: &ResolvedSpec, seed: u64) -> Result<RunSummary> {
    let dir = resolved.run_dir(seed);
    std::fs::create_dir_all(&dir)?;
    let mut log = RunLogWriter::create(&dir, &resolved.header(seed), resolved.spec.method == Method::Setter)?;
    match train_loop(resolved, seed, &dir, &mut log) {
        Ok(summary) => {
            log.finish(summary.iterations, summary.steps)?;
            Ok(summary)
        }
        Err(e) => {
            log.abort(&e)?;
            Err(e)
        }
    }
}

fn train_loop(resolved: &ResolvedSpec, seed: u64, dir: &Path, log: &mut RunLogWriter) -> Result<RunSummary> {
    let run = &resolved.run;
    let spec = &resolved.spec;
    let mut schedule = match spec.method {
        Method::None => Schedule::None,
        Method::Budget => {
            let c = resolved.curriculum.as_ref().expect("resolved budget spec has a curriculum");
            Schedule::Budget { budgets: c.budgets(spec.total_steps)? }
        }
        Method::Stagnancy => Schedule::Stagnancy { tracker: StagnancyTracker::new() },
        Method::Setter => Schedule::Setter { setter: Box::new(Setter::new(run.setter.clone(), spec.ablation, seed)?) },
    };
    let mut trainer = Trainer::new(run.env.clone(), run.dr.clone(), run.ppo.clone(), Scenario::no_curriculum(), seed)?;
    let mut iteration = 0u64;
    let mut final_reward = f64::NAN;
    while trainer.total_steps() < spec.total_steps {
        iteration += 1;
        let started = Instant::now();
        let mut record = IterationRecord::new(iteration);
        let (scenario, proposal) = match &mut schedule {
            Schedule::None => (Scenario::no_curriculum(), None),
            Schedule::Budget { budgets } => {
                let level = budget_lesson(budgets, trainer.total_steps());
                (curriculum_scenario(resolved, level, &mut record)?, None)
            }
            Schedule::Stagnancy { tracker } => (curriculum_scenario(resolved, tracker.level(), &mut record)?, None),
            Schedule::Setter { setter } => {
                let p = setter.propose()?;
                record.s = Some(p.lesson.action_space);
                record.alpha = Some(p.lesson.perturbation);
                record.beta = Some(p.lesson.bunching);
                (Scenario::from_lesson(&p.lesson)?, Some(p))
            }
        };
        let stats = trainer.iterate(scenario)?;
        record.fill(&stats);
        final_reward = stats.reward_rate;
        match &mut schedule {
            Schedule::Stagnancy { tracker } => {
                tracker.push(resolved.curriculum.as_ref().expect("stagnancy has a curriculum"), stats.reward_rate);
            }
            Schedule::Setter { setter } => {
                let p = proposal.expect("setter proposed a lesson");
                let step = setter.observe(&p, stats.reward_rate)?;
                record.r_bar = Some(step.r_bar);
                record.setter_loss = Some(step.loss);
                log.lesson(&LessonRecord {
                    iteration,
                    step: stats.total_steps,
                    s: p.lesson.action_space,
                    alpha: p.lesson.perturbation,
                    beta: p.lesson.bunching,
                    mean_reward: stats.reward_rate,
                    r_bar: step.r_bar,
                    setter_loss: step.loss,
                })?;
            }
            _ => {}
        }
        log.iteration(&record, started.elapsed().as_secs_f64())?;
        if spec.checkpoint_every > 0 && iteration.is_multiple_of(spec.checkpoint_every) {
            let ckpt = dir.join("checkpoints");
            std::fs::create_dir_all(&ckpt)?;
            trainer.policy().save(&ckpt.join(format!("policy-{iteration:06}.json")))?;
        }
    }
    trainer.policy().save(&dir.join("policy.json"))?;
    Ok(RunSummary { seed, dir: dir.to_path_buf(), iterations: iteration, steps: trainer.total_steps(), final_reward })
}

fn curriculum_scenario(resolved: &ResolvedSpec, level: usize, record: &mut IterationRecord) -> Result<Scenario> {
    let c = resolved.curriculum.as_ref().expect("curriculum method has a curriculum");
    let l = &c.levels[level];
    record.level = Some(level + 1);
    record.alpha = Some(l.perturbation);
    record.beta = Some(l.bunching);
    l.scenario(c.mask_semantics)
}

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Greedy,
    Sampled,
    Random,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(EvalMode::Greedy),
            "sampled" => Ok(EvalMode::Sampled),
            "random" => Ok(EvalMode::Random),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?} (greedy, sampled, random)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub episodes: usize,
    pub seed: u64,
    pub dr: bool,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_wait: f64,
    pub returns: Vec<f64>,
}

/// Evaluate a checkpoint (or the uniform-random policy) on the
/// no-curriculum environment.
pub fn evaluate_policy(
    run: &RunConfig,
    checkpoint: Option<&Path>,
    mode: EvalMode,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be positive".into()));
    }
    let policy = match (mode, checkpoint) {
        (EvalMode::Random, _) => None,
        (_, Some(path)) => Some(crate::agent::Policy::load(path)?),
        (_, None) => return Err(Error::Config(format!("{mode:?} evaluation needs a checkpoint"))),
    };
    if let Some(p) = &policy {
        if p.obs_len() != run.env.observation_len() {
            return Err(Error::Config(format!(
                "checkpoint expects observations of length {}, environment produces {}",
                p.obs_len(),
                run.env.observation_len()
            )));
        }
    }
    let scenario = Scenario::no_curriculum();
    let summaries = match (&policy, mode) {
        (Some(p), EvalMode::Greedy) => evaluate(&mut Greedy(p), &run.env, &run.dr, scenario, episodes, seed)?,
        (Some(p), _) => evaluate(&mut Sampled(p), &run.env, &run.dr, scenario, episodes, seed)?,
        (None, _) => evaluate(&mut UniformRandom, &run.env, &run.dr, scenario, episodes, seed)?,
    };
    let returns: Vec<f64> = summaries.iter().map(|s| s.total_reward).collect();
    let n = returns.len() as f64;
    let mean_return = returns.iter().sum::<f64>() / n;
    let std_return = (returns.iter().map(|r| (r - mean_return).powi(2)).sum::<f64>() / n).sqrt();
    let mean_wait = summaries.iter().map(|s| s.mean_wait).sum::<f64>() / n;
    Ok(EvalReport { mode, episodes, seed, dr: run.dr.enabled, mean_return, std_return, mean_wait, returns })
}

/// What kind of file [`validate_file`] recognised.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigKind {
    Run(Box<RunConfig>),
    Curriculum(CurriculumConfig),
    Experiment(Box<ExperimentSpec>),
}

/// Fully validate a run config, curriculum or experiment spec. The kind is
/// picked from the top-level keys: `levels` marks a curriculum, `method` an
/// experiment spec, anything else a run config.
pub fn validate_file(path: &Path) -> Result<ConfigKind> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let name = path.display().to_string();
    let table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::Parse { source_name: name.clone(), message: e.to_string() })?;
    if table.contains_key("levels") {
        Ok(ConfigKind::Curriculum(CurriculumConfig::from_toml(&text, &name)?))
    } else if table.contains_key("method") {
        let spec = ExperimentSpec::from_toml(&text, &name)?;
        spec.resolve()?;
        Ok(ConfigKind::Experiment(Box::new(spec)))
    } else {
        Ok(ConfigKind::Run(Box::new(RunConfig::from_toml(&text, &name)?)))
    }
}
