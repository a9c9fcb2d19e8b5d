use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, RewardNormalization};

/// Running delay totals. All fields are non-decreasing within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Passenger-seconds spent waiting at stations (`T_w`).
    pub wait_secs: u64,
    /// Passenger-seconds spent aboard buses (`T_b`).
    pub onbus_secs: u64,
    /// Distinct passengers that have waited so far this episode.
    pub waited: u64,
    /// Distinct passengers that have boarded so far this episode.
    pub rode: u64,
    /// Sum over decision intervals of the distinct waiting passengers in each.
    pub waited_interval_marks: u64,
    /// Sum over decision intervals of the distinct riding passengers in each.
    pub rode_interval_marks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub wait: f64,
    pub onbus: f64,
}

impl RewardWeights {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        Self { wait: cfg.reward_weight_wait, onbus: cfg.reward_weight_onbus }
    }
}

/// `w_w · ΔT_w / max(N_w, 1) + w_b · ΔT_b / max(N_b, 1)`.
pub fn reward_from_increments(
    wait_secs: u64,
    waiting: u64,
    onbus_secs: u64,
    onbus: u64,
    weights: RewardWeights,
) -> f64 {
    weights.wait * wait_secs as f64 / waiting.max(1) as f64
        + weights.onbus * onbus_secs as f64 / onbus.max(1) as f64
}

/// Reward earned between two counter snapshots of the same episode.
pub fn compute_reward(
    before: &Counters,
    after: &Counters,
    weights: RewardWeights,
    normalization: RewardNormalization,
) -> f64 {
    let d_wait = after.wait_secs - before.wait_secs;
    let d_onbus = after.onbus_secs - before.onbus_secs;
    let (n_wait, n_onbus) = match normalization {
        RewardNormalization::Cumulative => (after.waited, after.rode),
        RewardNormalization::Interval => (
            after.waited_interval_marks - before.waited_interval_marks,
            after.rode_interval_marks - before.rode_interval_marks,
        ),
    };
    reward_from_increments(d_wait, n_wait, d_onbus, n_onbus, weights)
}
