//! PPO over masked discrete actions.
//!
//! The actor and critic are separate tanh MLPs. Rollouts run the simulator
//! from decision event to decision event; each transition's reward covers the
//! simulated time until the next decision anywhere on the corridor, and GAE
//! discounts along that global event sequence.

mod policy;
mod ppo;
mod rollout;
mod trainer;


pub use policy::{log_prob_grad, policy_forward, Policy, PolicyOutput, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use ppo::{minibatch_loss, normalized, LossParts, PpoConfig, PpoLearner, ReturnScaler, UpdateStats};
pub use rollout::{
    ActionSource, EpisodeSummary, Fixed, Greedy, RolloutBuffer, RolloutWorker, Sampled, UniformRandom,
};
pub use trainer::{IterationStats, Trainer};

use crate::dr::DrConfig;
use crate::env::{EnvConfig, Scenario};
use crate::error::Result;

/// Play `episodes` complete episodes with `source` and summarize each.
pub fn evaluate(
    source: &mut dyn ActionSource,
    cfg: &EnvConfig,
    dr: &DrConfig,
    scenario: Scenario,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeSummary>> {
    let mut worker = RolloutWorker::new(cfg.clone(), dr.clone(), scenario, seed)?;
    let mut done = Vec::with_capacity(episodes);
    while done.len() < episodes {
        worker.collect(source, 512)?;
        done.extend(worker.take_finished());
    }
    done.truncate(episodes);
    Ok(done)
}
