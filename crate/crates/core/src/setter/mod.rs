//! The lesson setter: a small network that reads the last three lessons and
//! their rewards and proposes the next lesson `(S, α, β)`.
//!
//! Each lesson component has its own softmax head (15, 5 and 10 way). After
//! the agent trains on a proposal, the setter takes one REINFORCE step on
//! `L = -r̄ · Σ log π_h(sampled_h)`, where `r̄` is the mean normalized reward
//! of the last three lessons.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{IterationStats, PpoConfig, Trainer};
use crate::dr::DrConfig;
use crate::env::{EnvConfig, Scenario};
use crate::error::{Error, Result};
use crate::lessons::{Lesson, MAX_ACTION_SPACE, MAX_BUNCHING, MAX_PERTURBATION, MIN_BUNCHING};
use crate::nn::{masked_softmax, Activation, Mlp, Optimizer, OptimizerKind};

#[cfg(test)]
mod tests;

/// Lessons (and rewards) remembered by the setter.
pub const HISTORY_LEN: usize = 3;
/// Three lessons × three components plus three rewards.
pub const SETTER_INPUT: usize = HISTORY_LEN * 3 + HISTORY_LEN;
/// Head widths for `S`, `α`, `β`.
pub const HEAD_SIZES: [usize; 3] = [
    MAX_ACTION_SPACE as usize + 1,
    MAX_PERTURBATION as usize + 1,
    (MAX_BUNCHING - MIN_BUNCHING) as usize + 1,
];
const HEAD_OFFSETS: [usize; 3] = [0, HEAD_SIZES[0], HEAD_SIZES[0] + HEAD_SIZES[1]];
pub const SETTER_OUTPUT: usize = HEAD_SIZES[0] + HEAD_SIZES[1] + HEAD_SIZES[2];

/// Which lesson components the setter controls. The others stay pinned.
/// Serialized in its textual form, e.g. `"all"` or `"alpha,beta"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AblationMask {
    pub control_s: bool,
    pub control_alpha: bool,
    pub control_beta: bool,
}

impl AblationMask {
    pub const ALL: AblationMask = AblationMask { control_s: true, control_alpha: true, control_beta: true };

    pub fn new(control_s: bool, control_alpha: bool, control_beta: bool) -> Result<Self> {
        let m = Self { control_s, control_alpha, control_beta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::Config("ablation must leave at least one component under setter control".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.control_s, self.control_alpha, self.control_beta]
    }

    pub fn count(&self) -> usize {
        self.as_array().iter().filter(|&&c| c).count()
    }
}

impl Default for AblationMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Parses `all`, or a comma-separated subset of `s`, `alpha`, `beta`.
impl FromStr for AblationMask {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim().to_ascii_lowercase();
        if text == "all" {
            return Ok(Self::ALL);
        }
        let mut m = AblationMask { control_s: false, control_alpha: false, control_beta: false };
        for part in text.split(',').map(str::trim) {
            match part {
                "s" => m.control_s = true,
                "alpha" | "a" => m.control_alpha = true,
                "beta" | "b" => m.control_beta = true,
                other => return Err(Error::Config(format!("unknown ablation component {other:?} (use s, alpha, beta or all)"))),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

impl TryFrom<String> for AblationMask {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        text.parse()
    }
}

impl From<AblationMask> for String {
    fn from(m: AblationMask) -> Self {
        m.to_string()
    }
}

impl fmt::Display for AblationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        let names: Vec<&str> = ["s", "alpha", "beta"]
            .iter()
            .zip(self.as_array())
            .filter(|(_, c)| *c)
            .map(|(n, _)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

/// How the per-head log-probabilities combine in the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetterConfig {
    pub hidden: Vec<usize>,
    /// Step size η.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub reduction: LossReduction,
    /// Values used for components the setter does not control.
    pub pinned_s: u8,
    pub pinned_alpha: u8,
    pub pinned_beta: u8,
    /// Decay of the exponentially weighted reward statistics.
    pub reward_decay: f64,
}

impl Default for SetterConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            reduction: LossReduction::Sum,
            pinned_s: 12,
            pinned_alpha: 0,
            pinned_beta: 10,
            reward_decay: 0.95,
        }
    }
}

impl SetterConfig {
    pub fn pinned(&self) -> Result<Lesson> {
        Lesson::new(self.pinned_s, self.pinned_alpha, self.pinned_beta)
    }

    pub fn validate(&self) -> Result<()> {
        self.pinned()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("setter learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.reward_decay) {
            return Err(Error::Config("setter reward_decay must be in [0, 1)".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("setter hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Ring buffer of the last three `(lesson, normalized reward)` pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LessonHistory {
    entries: VecDeque<(Lesson, f64)>,
}

impl LessonHistory {
    pub fn new(initial: [(Lesson, f64); HISTORY_LEN]) -> Self {
        Self { entries: initial.into_iter().collect() }
    }

    pub fn push(&mut self, lesson: Lesson, reward: f64) {
        self.entries.pop_front();
        self.entries.push_back((lesson, reward));
    }

    pub fn entries(&self) -> impl Iterator<Item = &(Lesson, f64)> {
        self.entries.iter()
    }

    /// Mean of the stored (normalized) rewards.
    pub fn mean_reward(&self) -> f64 {
        self.entries.iter().map(|(_, r)| r).sum::<f64>() / HISTORY_LEN as f64
    }

    /// `[S/14, α/4, (β-1)/9]` per lesson, oldest first, then the three rewards.
    pub fn encode(&self) -> [f64; SETTER_INPUT] {
        let mut x = [0.0; SETTER_INPUT];
        for (i, (l, r)) in self.entries.iter().enumerate() {
            x[3 * i] = f64::from(l.action_space) / f64::from(MAX_ACTION_SPACE);
            x[3 * i + 1] = f64::from(l.perturbation) / f64::from(MAX_PERTURBATION);
            x[3 * i + 2] = f64::from(l.bunching - MIN_BUNCHING) / f64::from(MAX_BUNCHING - MIN_BUNCHING);
            x[HISTORY_LEN * 3 + i] = *r;
        }
        x
    }
}

/// Exponentially weighted mean and variance. Recent rewards dominate, so a
/// lesson repeated at a steady reward scores near zero once the statistics
/// catch up, while improvements over the recent level score positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats {
    decay: f64,
    count: u64,
    mean: f64,
    var: f64,
}

impl RunningStats {
    pub fn new(decay: f64) -> Self {
        Self { decay, count: 0, mean: 0.0, var: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if self.count == 1 {
            self.mean = x;
            return;
        }
        // Bias-corrected weight: plain averaging until 1/(1-decay) samples.
        let w = (1.0 / self.count as f64).max(1.0 - self.decay);
        let d = x - self.mean;
        self.mean += w * d;
        self.var = (1.0 - w) * (self.var + w * d * d);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }

    /// `(x - mean) / std` clipped to ±`Z_CLIP`, or 0 until there is spread to measure.
    pub fn z(&self, x: f64) -> f64 {
        let sd = self.std();
        if self.count < 2 || sd < 1e-12 {
            0.0
        } else {
            ((x - self.mean) / sd).clamp(-Z_CLIP, Z_CLIP)
        }
    }
}

const Z_CLIP: f64 = 5.0;

/// One sampled lesson with what the update needs to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub lesson: Lesson,
    /// Sampled index per head (before pinning).
    pub sampled: [usize; 3],
    /// Log-probability of each head's sample.
    pub log_probs: [f64; 3],
    /// Heads that count toward the loss.
    pub controlled: AblationMask,
    pub input: [f64; SETTER_INPUT],
}

fn head_probs(logits: &[f64]) -> [Vec<f64>; 3] {
    std::array::from_fn(|h| {
        let z = &logits[HEAD_OFFSETS[h]..HEAD_OFFSETS[h] + HEAD_SIZES[h]];
        masked_softmax(z, &vec![true; z.len()])
    })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-head distributions for a given history.
pub fn head_distributions(net: &Mlp, history: &LessonHistory) -> Result<[Vec<f64>; 3]> {
    let logits = net.forward(&history.encode());
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::Numerical(format!("setter logit {i} is {}", logits[i])));
    }
    Ok(head_probs(&logits))
}

/// Sample `(S, α, β)` from the heads. Components outside `ablation` are
/// replaced by `pinned` and drop out of the loss. All three heads are sampled
/// regardless, so the random stream does not depend on the ablation.
pub fn propose_lesson<R: Rng + ?Sized>(
    net: &Mlp,
    history: &LessonHistory,
    ablation: AblationMask,
    pinned: Lesson,
    rng: &mut R,
) -> Result<Proposal> {
    let input = history.encode();
    let probs = head_distributions(net, history)?;
    let sampled: [usize; 3] = std::array::from_fn(|h| sample_index(&probs[h], rng));
    let log_probs: [f64; 3] = std::array::from_fn(|h| probs[h][sampled[h]].ln());
    let control = ablation.as_array();
    let pick = |h: usize, pinned_value: u8, base: u8| {
        if control[h] {
            sampled[h] as u8 + base
        } else {
            pinned_value
        }
    };
    let lesson = Lesson::new(
        pick(0, pinned.action_space, 0),
        pick(1, pinned.perturbation, 0),
        pick(2, pinned.bunching, MIN_BUNCHING),
    )?;
    Ok(Proposal { lesson, sampled, log_probs, controlled: ablation, input })
}

/// `-r̄ · Σ_h log π_h` over controlled heads (divided by their count for
/// [`LossReduction::Mean`]), evaluated at the proposal's input.
pub fn setter_loss(net: &Mlp, proposal: &Proposal, r_bar: f64, reduction: LossReduction) -> f64 {
    let probs = head_probs(&net.forward(&proposal.input));
    let c = reduction_factor(proposal.controlled, reduction);
    let control = proposal.controlled.as_array();
    -r_bar * c * (0..3).filter(|&h| control[h]).map(|h| probs[h][proposal.sampled[h]].ln()).sum::<f64>()
}

fn reduction_factor(ablation: AblationMask, reduction: LossReduction) -> f64 {
    match reduction {
        LossReduction::Sum => 1.0,
        LossReduction::Mean => 1.0 / ablation.count() as f64,
    }
}

/// Loss and its gradient with respect to the setter parameters.
pub fn setter_loss_grad(net: &Mlp, proposal: &Proposal, r_bar: f64, reduction: LossReduction) -> (f64, Vec<f64>) {
    let cache = net.forward_cached(&proposal.input);
    let probs = head_probs(cache.output());
    let c = reduction_factor(proposal.controlled, reduction);
    let control = proposal.controlled.as_array();
    let mut g_out = vec![0.0; SETTER_OUTPUT];
    let mut loss = 0.0;
    for h in (0..3).filter(|&h| control[h]) {
        let k = proposal.sampled[h];
        loss -= r_bar * c * probs[h][k].ln();
        for (j, p) in probs[h].iter().enumerate() {
            let onehot = if j == k { 1.0 } else { 0.0 };
            g_out[HEAD_OFFSETS[h] + j] = -r_bar * c * (onehot - p);
        }
    }
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&cache, &g_out, &mut grads);
    (loss, grads)
}

/// Outcome of feeding one lesson reward back to the setter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetterStep {
    /// Normalized reward stored in the history.
    pub z_reward: f64,
    pub r_bar: f64,
    pub loss: f64,
}

/// Setter network, optimizer and the state Algorithm-style training threads through.
pub struct Setter {
    pub net: Mlp,
    pub cfg: SetterConfig,
    pub ablation: AblationMask,
    opt: Optimizer,
    history: LessonHistory,
    reward_stats: RunningStats,
    rng: ChaCha8Rng,
    updates: u64,
}

impl Setter {
    /// Fresh network. The history starts with three lessons drawn uniformly
    /// (pinned components at their pinned values) paired with reward 0.
    pub fn new(cfg: SetterConfig, ablation: AblationMask, seed: u64) -> Result<Self> {
        cfg.validate()?;
        ablation.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(12);
        let mut sizes = vec![SETTER_INPUT];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(SETTER_OUTPUT);
        let net = Mlp::new(&sizes, Activation::Tanh, 0.1, &mut rng);
        Self::with_net(net, cfg, ablation, rng)
    }

    fn with_net(net: Mlp, cfg: SetterConfig, ablation: AblationMask, mut rng: ChaCha8Rng) -> Result<Self> {
        let pinned = cfg.pinned()?;
        let uniform = Mlp::zeros(net.sizes(), net.activation());
        let blank = LessonHistory::new([(pinned, 0.0); HISTORY_LEN]);
        let mut warm = [(pinned, 0.0); HISTORY_LEN];
        for slot in &mut warm {
            slot.0 = propose_lesson(&uniform, &blank, ablation, pinned, &mut rng)?.lesson;
        }
        let opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, net.num_params());
        let reward_stats = RunningStats::new(cfg.reward_decay);
        Ok(Self {
            net,
            cfg,
            ablation,
            opt,
            history: LessonHistory::new(warm),
            reward_stats,
            rng,
            updates: 0,
        })
    }

    /// Setter over a caller-supplied network (zero weights give uniform proposals).
    pub fn from_net(net: Mlp, cfg: SetterConfig, ablation: AblationMask, seed: u64) -> Result<Self> {
        if net.input_len() != SETTER_INPUT || net.output_len() != SETTER_OUTPUT {
            return Err(Error::Config(format!(
                "setter network must map {SETTER_INPUT} inputs to {SETTER_OUTPUT} outputs"
            )));
        }
        cfg.validate()?;
        ablation.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(12);
        Self::with_net(net, cfg, ablation, rng)
    }

    pub fn history(&self) -> &LessonHistory {
        &self.history
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn propose(&mut self) -> Result<Proposal> {
        propose_lesson(&self.net, &self.history, self.ablation, self.cfg.pinned()?, &mut self.rng)
    }

    /// Record the raw reward earned on `proposal` and take one gradient step.
    pub fn observe(&mut self, proposal: &Proposal, reward: f64) -> Result<SetterStep> {
        if !reward.is_finite() {
            return Err(Error::Numerical(format!("setter reward is {reward}")));
        }
        // Scored against the recent level before this reward joins it.
        let z_reward = self.reward_stats.z(reward);
        self.reward_stats.push(reward);
        self.history.push(proposal.lesson, z_reward);
        let r_bar = self.history.mean_reward();
        let loss = self.update(proposal, r_bar)?;
        Ok(SetterStep { z_reward, r_bar, loss })
    }

    /// One step on the setter loss for `proposal` weighted by `r_bar`.
    pub fn update(&mut self, proposal: &Proposal, r_bar: f64) -> Result<f64> {
        let (loss, grads) = setter_loss_grad(&self.net, proposal, r_bar, self.cfg.reduction);
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite setter loss/gradient at update {} (r̄ = {r_bar}, loss = {loss})",
                self.updates
            )));
        }
        self.opt.step(self.net.params_mut(), &grads);
        self.updates += 1;
        Ok(loss)
    }
}

/// One line of a lesson trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonRecord {
    pub iteration: u64,
    pub step: u64,
    #[serde(rename = "S")]
    pub s: u8,
    pub alpha: u8,
    pub beta: u8,
    pub mean_reward: f64,
    pub r_bar: f64,
    pub setter_loss: f64,
}

/// Setter-driven curriculum: propose a lesson, train the agent on one
/// rollout under it, then update the setter with the lesson's reward.
/// `on_iteration` sees every iteration as it completes (for logging).
#[allow(clippy::too_many_arguments)]
pub fn run_curriculum_training(
    env: &EnvConfig,
    dr: &DrConfig,
    ppo: &PpoConfig,
    setter_cfg: &SetterConfig,
    ablation: AblationMask,
    iterations: u64,
    seed: u64,
    on_iteration: &mut dyn FnMut(&LessonRecord, &IterationStats, &Trainer) -> Result<()>,
) -> Result<(Trainer, Setter)> {
    let mut setter = Setter::new(setter_cfg.clone(), ablation, seed)?;
    let mut trainer = Trainer::new(env.clone(), dr.clone(), ppo.clone(), Scenario::no_curriculum(), seed)?;
    for iteration in 1..=iterations {
        let proposal = setter.propose()?;
        let stats = trainer.iterate(Scenario::from_lesson(&proposal.lesson)?)?;
        let step = setter.observe(&proposal, stats.reward_rate)?;
        let record = LessonRecord {
            iteration,
            step: stats.total_steps,
            s: proposal.lesson.action_space,
            alpha: proposal.lesson.perturbation,
            beta: proposal.lesson.bunching,
            mean_reward: stats.reward_rate,
            r_bar: step.r_bar,
            setter_loss: step.loss,
        };
        on_iteration(&record, &stats, &trainer)?;
    }
    Ok((trainer, setter))
}
