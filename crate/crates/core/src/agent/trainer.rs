use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use super::ppo::{PpoConfig, PpoLearner, UpdateStats};
use super::rollout::{EpisodeSummary, RolloutWorker, Sampled};
use crate::dr::DrConfig;
use crate::env::{EnvConfig, Scenario};
use crate::error::Result;

/// What one rollout-and-update iteration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Decision steps taken so far, including this iteration.
    pub total_steps: u64,
    pub decisions: usize,
    /// Rollout reward per simulated second, scaled to one episode.
    pub reward_rate: f64,
    /// Mean per-decision reward of the rollout.
    pub mean_step_reward: f64,
    /// Returns of episodes that ended during the rollout.
    pub episode_returns: Vec<f64>,
    pub update: UpdateStats,
}

/// A PPO learner bound to its rollout worker.
pub struct Trainer {
    pub learner: PpoLearner,
    pub worker: RolloutWorker,
    total_steps: u64,
    finished: Vec<EpisodeSummary>,
}

impl Trainer {
    pub fn new(env: EnvConfig, dr: DrConfig, ppo: PpoConfig, scenario: Scenario, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(11);
        let policy = Policy::new(env.observation_len(), &ppo.hidden, ppo.activation, &mut rng);
        Self::with_policy(policy, env, dr, ppo, scenario, seed)
    }

    pub fn with_policy(
        policy: Policy,
        env: EnvConfig,
        dr: DrConfig,
        ppo: PpoConfig,
        scenario: Scenario,
        seed: u64,
    ) -> Result<Self> {
        let learner = PpoLearner::new(policy, ppo, seed)?;
        let worker = RolloutWorker::new(env, dr, scenario, seed)?;
        Ok(Self { learner, worker, total_steps: 0, finished: Vec::new() })
    }

    pub fn policy(&self) -> &Policy {
        &self.learner.policy
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Episodes finished since the last call, across iterations.
    pub fn take_finished(&mut self) -> Vec<EpisodeSummary> {
        std::mem::take(&mut self.finished)
    }

    /// Collect one rollout of the configured horizon under `scenario`, then update.
    pub fn iterate(&mut self, scenario: Scenario) -> Result<IterationStats> {
        self.worker.set_scenario(scenario);
        let horizon = self.learner.cfg.horizon;
        let mut buf = self.worker.collect(&mut Sampled(&self.learner.policy), horizon)?;
        let decisions = buf.len();
        let reward_rate = buf.episode_rate(self.worker.config().episode_length);
        let mean_step_reward = buf.rewards.iter().sum::<f64>() / decisions as f64;
        let finished = self.worker.take_finished();
        let episode_returns = finished.iter().map(|e| e.total_reward).collect();
        self.finished.extend(finished);
        let update = self.learner.update(&mut buf)?;
        self.total_steps += decisions as u64;
        Ok(IterationStats { total_steps: self.total_steps, decisions, reward_rate, mean_step_reward, episode_returns, update })
    }
}
