use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use super::rollout::RolloutBuffer;
use crate::error::{Error, Result};
use crate::lessons::NUM_ACTIONS;
use crate::nn::{masked_softmax, Activation, Optimizer, OptimizerKind};

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Joint L2 clip over actor and critic gradients.
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
    /// Divide rewards by the running standard deviation of the discounted return.
    pub scale_rewards: bool,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Decision events per rollout.
    pub horizon: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: Some(0.5),
            normalize_advantages: true,
            scale_rewards: true,
            optimizer: OptimizerKind::adam(),
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            horizon: 2048,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gamma and gae_lambda must be in [0, 1]");
        }
        if !(self.clip.is_finite() && self.clip >= 0.0) {
            return fail("clip must be >= 0");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.horizon == 0 {
            return fail("epochs, minibatch and horizon must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// Loss terms averaged over a minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// `-mean(min(r A, clip(r) A))`.
    pub policy: f64,
    /// `mean(0.5 (V - R)^2)`, before `value_coef`.
    pub value: f64,
    pub entropy: f64,
    /// `policy + value_coef * value - entropy_coef * entropy`.
    pub total: f64,
    /// Fraction of samples whose ratio left `[1 - clip, 1 + clip]`.
    pub clip_fraction: f64,
    /// Mean of `old_log_prob - new_log_prob`.
    pub approx_kl: f64,
}

/// Diagnostics from one call to [`PpoLearner::update`], averaged over minibatches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Minibatch PPO loss and, when `grads` is given, its gradient
/// `(actor, critic)` accumulated into the provided slices.
///
/// The policy term passes gradient through the unclipped ratio exactly when
/// `r A < clip(r) A`, or when `r` lies strictly inside `(1 - clip, 1 + clip)`.
pub fn minibatch_loss(
    policy: &Policy,
    buf: &RolloutBuffer,
    advantages: &[f64],
    indices: &[usize],
    cfg: &PpoConfig,
    mut grads: Option<(&mut [f64], &mut [f64])>,
) -> LossParts {
    let n = indices.len() as f64;
    let mut parts = LossParts::default();
    let (lo, hi) = (1.0 - cfg.clip, 1.0 + cfg.clip);
    for &i in indices {
        let obs = &buf.observations[i];
        let legal = buf.masks[i].to_bools();
        let action = buf.actions[i];
        let adv = advantages[i];

        let actor_cache = policy.actor.forward_cached(obs);
        let probs = masked_softmax(actor_cache.output(), &legal);
        let logp = probs[action].ln();
        let ratio = (logp - buf.log_probs[i]).exp();
        let clipped = ratio.clamp(lo, hi);
        let surrogate = (ratio * adv).min(clipped * adv);
        let entropy: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();

        let critic_cache = policy.critic.forward_cached(obs);
        let v = critic_cache.output()[0];
        let ret = buf.returns[i];

        parts.policy -= surrogate / n;
        parts.value += 0.5 * (v - ret) * (v - ret) / n;
        parts.entropy += entropy / n;
        parts.approx_kl += (buf.log_probs[i] - logp) / n;
        if ratio < lo || ratio > hi {
            parts.clip_fraction += 1.0 / n;
        }

        if let Some((ga, gc)) = grads.as_mut() {
            let flows = ratio * adv < clipped * adv || (lo < ratio && ratio < hi);
            // d(-surrogate)/d logp = -A r when the unclipped branch is live.
            let d_logp = if flows { -adv * ratio / n } else { 0.0 };
            let mut g_logits = [0.0; NUM_ACTIONS];
            for k in 0..NUM_ACTIONS {
                if !legal[k] {
                    continue;
                }
                let onehot = if k == action { 1.0 } else { 0.0 };
                // d entropy / d z_k = -p_k (ln p_k + H)
                let d_ent = -probs[k] * (probs[k].ln() + entropy);
                g_logits[k] = d_logp * (onehot - probs[k]) - cfg.entropy_coef * d_ent / n;
            }
            policy.actor.backward(&actor_cache, &g_logits, ga);
            let g_v = cfg.value_coef * (v - ret) / n;
            policy.critic.backward(&critic_cache, &[g_v], gc);
        }
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    parts
}

/// Policy plus optimizer state.
pub struct PpoLearner {
    pub policy: Policy,
    pub cfg: PpoConfig,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    shuffle_rng: ChaCha8Rng,
    scaler: ReturnScaler,
    updates: u64,
}

/// Running variance of the discounted return, fed one reward at a time in
/// rollout order.
#[derive(Debug, Clone, Default)]
pub struct ReturnScaler {
    ret: f64,
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    pub fn observe(&mut self, reward: f64, gamma: f64, done: bool) {
        self.ret = self.ret * gamma + reward;
        self.count += 1.0;
        let d = self.ret - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (self.ret - self.mean);
        if done {
            self.ret = 0.0;
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt().max(1e-8)
        }
    }
}

impl PpoLearner {
    pub fn new(policy: Policy, cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, policy.actor.num_params());
        let critic_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, policy.critic.num_params());
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        shuffle_rng.set_stream(10);
        Ok(Self { policy, cfg, actor_opt, critic_opt, shuffle_rng, scaler: ReturnScaler::default(), updates: 0 })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Scale rewards (if enabled, in place), compute GAE on `buf`, then run the configured epochs of minibatch updates.
    pub fn update(&mut self, buf: &mut RolloutBuffer) -> Result<UpdateStats> {
        if buf.is_empty() {
            return Err(Error::Contract("ppo update on an empty buffer".into()));
        }
        if self.cfg.scale_rewards {
            for (&r, &d) in buf.rewards.iter().zip(&buf.dones) {
                self.scaler.observe(r, self.cfg.gamma, d);
            }
            let sd = self.scaler.std();
            buf.rewards.iter_mut().for_each(|r| *r /= sd);
        }
        buf.compute_gae(self.cfg.gamma, self.cfg.gae_lambda)?;
        self.update_prepared(buf)
    }

    /// Like [`update`](Self::update) but uses the buffer's existing advantages and returns.
    pub fn update_prepared(&mut self, buf: &RolloutBuffer) -> Result<UpdateStats> {
        if buf.is_empty() || buf.advantages.len() != buf.len() || buf.returns.len() != buf.len() {
            return Err(Error::Contract("buffer has no advantages; run GAE first".into()));
        }
        let advantages = if self.cfg.normalize_advantages { normalized(&buf.advantages) } else { buf.advantages.clone() };
        let mut order: Vec<usize> = (0..buf.len()).collect();
        let mut stats = UpdateStats::default();
        let mut ga = vec![0.0; self.policy.actor.num_params()];
        let mut gc = vec![0.0; self.policy.critic.num_params()];
        for epoch in 0..self.cfg.epochs {
            order.shuffle(&mut self.shuffle_rng);
            for (mb, chunk) in order.chunks(self.cfg.minibatch).enumerate() {
                ga.iter_mut().for_each(|g| *g = 0.0);
                gc.iter_mut().for_each(|g| *g = 0.0);
                let parts = minibatch_loss(&self.policy, buf, &advantages, chunk, &self.cfg, Some((&mut ga, &mut gc)));
                if !parts.total.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite PPO loss at update {} epoch {epoch} minibatch {mb}: {parts:?}",
                        self.updates
                    )));
                }
                let norm = match self.cfg.max_grad_norm {
                    Some(max) => joint_clip(&mut ga, &mut gc, max),
                    None => (sq(&ga) + sq(&gc)).sqrt(),
                };
                if !norm.is_finite() {
                    return Err(Error::Numerical(format!("non-finite gradient norm at update {}", self.updates)));
                }
                self.actor_opt.step(self.policy.actor.params_mut(), &ga);
                self.critic_opt.step(self.policy.critic.params_mut(), &gc);
                stats.policy_loss += parts.policy;
                stats.value_loss += parts.value;
                stats.entropy += parts.entropy;
                stats.clip_fraction += parts.clip_fraction;
                stats.approx_kl += parts.approx_kl;
                stats.grad_norm += norm;
                stats.minibatches += 1;
            }
        }
        if !self.policy.is_finite() {
            return Err(Error::Numerical(format!("parameters became non-finite at update {}", self.updates)));
        }
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
        stats.approx_kl /= k;
        stats.grad_norm /= k;
        self.updates += 1;
        Ok(stats)
    }
}

fn sq(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum()
}

fn joint_clip(ga: &mut [f64], gc: &mut [f64], max: f64) -> f64 {
    let norm = (sq(ga) + sq(gc)).sqrt();
    if norm > max {
        let scale = max / norm;
        ga.iter_mut().chain(gc.iter_mut()).for_each(|g| *g *= scale);
    }
    norm
}

/// Zero-mean, unit-variance copy. A constant column maps to zeros.
pub fn normalized(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    xs.iter().map(|x| (x - mean) / (sd + 1e-8)).collect()
}
