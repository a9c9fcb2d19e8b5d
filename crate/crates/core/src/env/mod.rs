//! Discrete-event simulation of a loop bus corridor.
//!
//! Time advances in one-second ticks. Passengers arrive at each station as
//! a Poisson process and ride toward a stop a few stations ahead. Whenever
//! a bus finishes dwelling at a station the simulation pauses and hands a
//! [`DecisionEvent`] to the caller, who picks one of 14 discrete actions:
//! hold for `0..=11` × 10 s, skip the next station, or turn around.

mod config;
mod observation;
mod reward;
mod state;
mod trace;

#[cfg(test)]
mod tests;

pub use config::{EnvConfig, RewardNormalization, DEFAULT_ARRIVAL_RATE};
pub use observation::{observation_len, FEATURES_PER_BUS};
pub use reward::{compute_reward, reward_from_increments, Counters, RewardWeights};
pub use state::{
    dwell_seconds, Bus, BusId, BusInit, BusPhase, DecisionEvent, LegKind, Passenger, PassengerId,
    PassengerStatus, Scenario, SimState, SimStats, Step,
};
pub use trace::{TraceRecord, TraceWriter};
