use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lessons::{ActionMask, NUM_ACTIONS};
use crate::nn::{masked_softmax, Activation, Mlp};

/// Actor and critic networks. The critic is a separate MLP of the same shape
/// with a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Masked categorical distribution over the 14 actions plus a value estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: [f64; NUM_ACTIONS],
    /// Exactly zero for masked actions.
    pub probs: [f64; NUM_ACTIONS],
    pub mask: ActionMask,
    pub value: f64,
}

impl PolicyOutput {
    pub fn log_prob(&self, action: usize) -> f64 {
        self.probs[action].ln()
    }

    /// Entropy over the legal actions.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Inverse-CDF sample. Zero-probability actions are never returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            cum += p;
            last = a;
            if u < cum {
                return a;
            }
        }
        last
    }

    /// Most probable legal action (lowest index on ties).
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for a in 0..NUM_ACTIONS {
            if self.probs[a] > self.probs[best] {
                best = a;
            }
        }
        best
    }
}

impl Policy {
    /// Fresh networks: `hidden` tanh layers for both heads. The actor's last
    /// layer starts small so the initial policy is close to uniform.
    pub fn new<R: Rng + ?Sized>(obs_len: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut actor_sizes = vec![obs_len];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(NUM_ACTIONS);
        critic_sizes.push(1);
        Self {
            actor: Mlp::new(&actor_sizes, activation, 0.01, rng),
            critic: Mlp::new(&critic_sizes, activation, 1.0, rng),
        }
    }

    pub fn zeros(obs_len: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut sizes = vec![obs_len];
        sizes.extend_from_slice(hidden);
        let mut critic = sizes.clone();
        sizes.push(NUM_ACTIONS);
        critic.push(1);
        Self { actor: Mlp::zeros(&sizes, activation), critic: Mlp::zeros(&critic, activation) }
    }

    pub fn obs_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64> {
        check_observation(self, observation)?;
        Ok(self.critic.forward(observation)[0])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, policy: self.clone() };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "{}: expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        let p = ckpt.policy;
        let shapes_ok = p.actor.input_len() == p.critic.input_len()
            && p.actor.output_len() == NUM_ACTIONS
            && p.critic.output_len() == 1;
        if !shapes_ok || !p.is_finite() {
            return Err(Error::Schema(format!("{}: malformed policy networks", path.display())));
        }
        Ok(p)
    }
}

pub const CHECKPOINT_FORMAT: &str = "bunching-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk layout: a JSON object with a format tag and version ahead of the networks.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    policy: Policy,
}

fn check_observation(policy: &Policy, observation: &[f64]) -> Result<()> {
    if observation.len() != policy.obs_len() {
        return Err(Error::Input(format!(
            "observation has length {}, network expects {}",
            observation.len(),
            policy.obs_len()
        )));
    }
    if let Some(i) = observation.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!("observation[{i}] is {}", observation[i])));
    }
    Ok(())
}

/// Masked action distribution and value for one observation.
pub fn policy_forward(policy: &Policy, observation: &[f64], mask: ActionMask) -> Result<PolicyOutput> {
    check_observation(policy, observation)?;
    if mask.is_empty() {
        return Err(Error::Contract("empty action mask".into()));
    }
    let raw = policy.actor.forward(observation);
    let mut logits = [0.0; NUM_ACTIONS];
    logits.copy_from_slice(&raw);
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical(format!("non-finite policy logits {logits:?}")));
    }
    let legal = mask.to_bools();
    let mut probs = [0.0; NUM_ACTIONS];
    probs.copy_from_slice(&masked_softmax(&logits, &legal));
    let value = policy.critic.forward(observation)[0];
    Ok(PolicyOutput { logits, probs, mask, value })
}

/// `log π(action | observation)` and its gradient with respect to the actor parameters.
pub fn log_prob_grad(policy: &Policy, observation: &[f64], mask: ActionMask, action: usize) -> Result<(f64, Vec<f64>)> {
    check_observation(policy, observation)?;
    if !mask.allows(action) {
        return Err(Error::Contract(format!("action {action} is masked")));
    }
    let cache = policy.actor.forward_cached(observation);
    let probs = masked_softmax(cache.output(), &mask.to_bools());
    let grad_logits: Vec<f64> = (0..NUM_ACTIONS)
        .map(|k| if mask.allows(k) { f64::from(u8::from(k == action)) - probs[k] } else { 0.0 })
        .collect();
    let mut grads = vec![0.0; policy.actor.num_params()];
    policy.actor.backward(&cache, &grad_logits, &mut grads);
    Ok((probs[action].ln(), grads))
}
