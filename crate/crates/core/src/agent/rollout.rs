use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{policy_forward, Policy};
use crate::dr::{draw_episode, DrConfig, DrDraw};
use crate::env::{compute_reward, DecisionEvent, EnvConfig, RewardWeights, Scenario, SimState, Step};
use crate::error::{Error, Result};
use crate::lessons::ActionMask;

/// Anything that can choose an action at a decision event.
pub trait ActionSource {
    /// Returns `(action, log_prob, value)`.
    fn act(&mut self, event: &DecisionEvent, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)>;

    /// Value estimate used to bootstrap a truncated rollout.
    fn value(&mut self, _event: &DecisionEvent) -> Result<f64> {
        Ok(0.0)
    }
}

/// Samples from the policy's masked distribution.
pub struct Sampled<'a>(pub &'a Policy);

impl ActionSource for Sampled<'_> {
    fn act(&mut self, event: &DecisionEvent, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        let out = policy_forward(self.0, &event.observation, event.mask)?;
        let a = out.sample(rng);
        Ok((a, out.log_prob(a), out.value))
    }

    fn value(&mut self, event: &DecisionEvent) -> Result<f64> {
        self.0.value(&event.observation)
    }
}

/// Takes the policy's most probable action.
pub struct Greedy<'a>(pub &'a Policy);

impl ActionSource for Greedy<'_> {
    fn act(&mut self, event: &DecisionEvent, _rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        let out = policy_forward(self.0, &event.observation, event.mask)?;
        let a = out.greedy();
        Ok((a, out.log_prob(a), out.value))
    }
}

/// Uniform over the legal actions.
pub struct UniformRandom;

impl ActionSource for UniformRandom {
    fn act(&mut self, event: &DecisionEvent, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        let legal: Vec<usize> = event.mask.actions().collect();
        let a = legal[rng.random_range(0..legal.len())];
        Ok((a, -(legal.len() as f64).ln(), 0.0))
    }
}

/// Always the same action (falls back to hold 0 when it is masked).
pub struct Fixed(pub usize);

impl ActionSource for Fixed {
    fn act(&mut self, event: &DecisionEvent, _rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        let a = if event.mask.allows(self.0) { self.0 } else { 0 };
        Ok((a, 0.0, 0.0))
    }
}

/// Trajectory storage for one PPO update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// True when the transition ended its episode.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Value of the state following the last transition (0 if it ended an episode).
    pub bootstrap_value: f64,
    /// Simulated seconds covered by the transitions.
    pub sim_seconds: u64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, obs: Vec<f64>, mask: ActionMask, action: usize, log_prob: f64, reward: f64, value: f64, done: bool) {
        self.observations.push(obs);
        self.masks.push(mask);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    /// Generalized advantage estimation over the buffer's transition order.
    /// Episode boundaries (`dones`) stop both bootstrapping and the trace.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let n = self.len();
        self.advantages = vec![0.0; n];
        let mut next_value = self.bootstrap_value;
        let mut running = 0.0;
        for t in (0..n).rev() {
            let live = if self.dones[t] { 0.0 } else { 1.0 };
            let delta = self.rewards[t] + gamma * next_value * live - self.values[t];
            running = delta + gamma * lambda * live * running;
            self.advantages[t] = running;
            next_value = self.values[t];
        }
        if let Some(i) = self.advantages.iter().position(|a| !a.is_finite()) {
            return Err(Error::Numerical(format!("advantage {i} is {}", self.advantages[i])));
        }
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        Ok(())
    }

    /// Reward per simulated second scaled to one episode length, so rollouts
    /// with different decision frequencies compare on the same footing.
    pub fn episode_rate(&self, episode_length: u32) -> f64 {
        self.rewards.iter().sum::<f64>() / self.sim_seconds.max(1) as f64 * f64::from(episode_length)
    }

    pub fn check_columns(&self) -> bool {
        let n = self.len();
        [self.observations.len(), self.masks.len(), self.log_probs.len(), self.rewards.len(), self.values.len(), self.dones.len()]
            .iter()
            .all(|&l| l == n)
            && (self.advantages.is_empty() || self.advantages.len() == n)
            && (self.returns.is_empty() || self.returns.len() == n)
    }
}

/// Summary of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    /// Sum of per-decision rewards.
    pub total_reward: f64,
    pub decisions: usize,
    /// Mean wait per passenger that waited (seconds).
    pub mean_wait: f64,
    pub demand_multiplier: f64,
}

/// Owns a live environment that persists across rollouts, so a horizon may
/// end mid-episode and the next rollout picks up where it stopped.
pub struct RolloutWorker {
    cfg: EnvConfig,
    dr: DrConfig,
    scenario: Scenario,
    episode_seeds: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    live: Option<Live>,
    episodes_started: u64,
    finished: Vec<EpisodeSummary>,
}

struct Live {
    state: SimState,
    event: DecisionEvent,
    total_reward: f64,
    decisions: usize,
}

const EPISODE_SEED_STREAM: u64 = 7;
const ACTION_STREAM: u64 = 8;
const DR_STREAM: u64 = 9;

impl RolloutWorker {
    pub fn new(cfg: EnvConfig, dr: DrConfig, scenario: Scenario, seed: u64) -> Result<Self> {
        cfg.validate()?;
        dr.validate()?;
        let mut episode_seeds = ChaCha8Rng::seed_from_u64(seed);
        episode_seeds.set_stream(EPISODE_SEED_STREAM);
        let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
        action_rng.set_stream(ACTION_STREAM);
        Ok(Self {
            cfg,
            dr,
            scenario,
            episode_seeds,
            action_rng,
            live: None,
            episodes_started: 0,
            finished: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Switch scenario. A change abandons the current episode so the next
    /// decision already happens under the new one.
    pub fn set_scenario(&mut self, scenario: Scenario) {
        if scenario != self.scenario {
            self.scenario = scenario;
            self.live = None;
        }
    }

    pub fn episodes_started(&self) -> u64 {
        self.episodes_started
    }

    /// Episodes completed since the last call.
    pub fn take_finished(&mut self) -> Vec<EpisodeSummary> {
        std::mem::take(&mut self.finished)
    }

    fn start_episode(&mut self) -> Result<()> {
        loop {
            let seed = self.episode_seeds.next_u64();
            let mut dr_rng = ChaCha8Rng::seed_from_u64(seed);
            dr_rng.set_stream(DR_STREAM);
            let draw: DrDraw = draw_episode(&self.dr, &mut dr_rng);
            let mut state = SimState::reset(&self.cfg, &self.scenario, draw, seed)?;
            self.episodes_started += 1;
            if let Step::Decision(event) = state.step_until_decision() {
                self.live = Some(Live { state, event, total_reward: 0.0, decisions: 0 });
                return Ok(());
            }
            // An episode with no decision at all contributes nothing; try the next seed.
        }
    }

    /// Run `horizon` decisions, resetting episodes as they finish.
    pub fn collect(&mut self, source: &mut dyn ActionSource, horizon: usize) -> Result<RolloutBuffer> {
        if horizon == 0 {
            return Err(Error::Contract("rollout horizon must be >= 1".into()));
        }
        let weights = RewardWeights::from_config(&self.cfg);
        let norm = self.cfg.reward_normalization;
        let mut buf = RolloutBuffer::default();
        while buf.len() < horizon {
            if self.live.is_none() {
                self.start_episode()?;
            }
            let live = self.live.as_mut().expect("episode started");
            let (action, log_prob, value) = source.act(&live.event, &mut self.action_rng)?;
            let mask = live.event.mask;
            let before = *live.state.counters();
            let tick_before = live.state.tick();
            live.state.apply_action(&live.event, action)?;
            let step = live.state.step_until_decision();
            buf.sim_seconds += u64::from(live.state.tick() - tick_before);
            let reward = compute_reward(&before, live.state.counters(), weights, norm);
            live.total_reward += reward;
            live.decisions += 1;
            let done = matches!(step, Step::EpisodeEnd);
            let obs = match step {
                Step::Decision(next) => std::mem::replace(&mut live.event, next).observation,
                Step::EpisodeEnd => std::mem::take(&mut live.event.observation),
            };
            buf.push(obs, mask, action, log_prob, reward, value, done);
            if done {
                let live = self.live.take().expect("live episode");
                let c = live.state.counters();
                self.finished.push(EpisodeSummary {
                    total_reward: live.total_reward,
                    decisions: live.decisions,
                    mean_wait: c.wait_secs as f64 / c.waited.max(1) as f64,
                    demand_multiplier: live.state.dr_draw().demand_multiplier,
                });
            }
        }
        buf.bootstrap_value = match (&self.live, buf.dones.last()) {
            (Some(live), Some(false)) => source.value(&live.event)?,
            _ => 0.0,
        };
        Ok(buf)
    }
}
