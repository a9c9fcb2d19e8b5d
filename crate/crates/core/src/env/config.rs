use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lessons::HOLD_QUANTUM_SECS;

/// How the per-decision reward normalizes accumulated delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNormalization {
    /// Divide by the number of distinct passengers seen so far in the episode.
    #[default]
    Cumulative,
    /// Divide by the number of distinct passengers seen during the interval.
    Interval,
}

/// Static description of the corridor. Every field can be set from the
/// `[env]` table of a config file; omitted keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_stations: usize,
    pub num_buses: usize,
    pub bus_capacity: usize,
    /// Meters between consecutive stations.
    pub station_spacing: f64,
    /// Meters per second.
    pub bus_speed: f64,
    /// Passengers per second per station, before any demand multiplier.
    pub arrival_rate: f64,
    /// Optional per-station rates; overrides `arrival_rate` when non-empty.
    pub station_arrival_rates: Vec<f64>,
    /// Seconds per boarding passenger.
    pub board_time: f64,
    /// Seconds per alighting passenger.
    pub alight_time: f64,
    /// Scheduled headway in seconds; derived from the loop time when absent.
    pub headway: Option<f64>,
    /// Episode length in one-second ticks.
    pub episode_length: u32,
    pub reward_weight_wait: f64,
    pub reward_weight_onbus: f64,
    pub reward_normalization: RewardNormalization,
    /// Chance that a passenger gives up once their wait first exceeds the headway.
    pub long_wait_leave_prob: f64,
    /// Ticks added per unit of perturbation strength.
    pub perturbation_unit: u32,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_stations: 10,
            num_buses: 14,
            bus_capacity: 60,
            station_spacing: 1000.0,
            bus_speed: 1000.0 / 60.0,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
            station_arrival_rates: Vec::new(),
            board_time: 3.0,
            alight_time: 1.8,
            headway: None,
            episode_length: 3600,
            reward_weight_wait: -1.0,
            reward_weight_onbus: -1.0,
            reward_normalization: RewardNormalization::Cumulative,
            long_wait_leave_prob: 0.5,
            perturbation_unit: HOLD_QUANTUM_SECS,
            seed: 0,
        }
    }
}

/// Base per-station arrival rate. Under zero-hold operation at demand
/// multiplier 1.25 this puts the 95th-percentile departure load at roughly
/// 75% of capacity (see `peak_load_calibration` in the environment tests).
pub const DEFAULT_ARRIVAL_RATE: f64 = 0.125;

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_stations < 2 {
            return fail(format!("num_stations must be >= 2, got {}", self.num_stations));
        }
        if self.num_buses < 1 {
            return fail("num_buses must be >= 1".into());
        }
        if self.bus_capacity < 1 {
            return fail("bus_capacity must be >= 1".into());
        }
        let positive = [
            ("station_spacing", self.station_spacing),
            ("bus_speed", self.bus_speed),
            ("board_time", self.board_time),
            ("alight_time", self.alight_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return fail(format!("arrival_rate must be >= 0, got {}", self.arrival_rate));
        }
        if !self.station_arrival_rates.is_empty() {
            if self.station_arrival_rates.len() != self.num_stations {
                return fail(format!(
                    "station_arrival_rates has {} entries for {} stations",
                    self.station_arrival_rates.len(),
                    self.num_stations
                ));
            }
            if self.station_arrival_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return fail("station_arrival_rates must be finite and >= 0".into());
            }
        }
        if let Some(h) = self.headway {
            if !(h > 0.0 && h.is_finite()) {
                return fail(format!("headway must be positive, got {h}"));
            }
        }
        if self.episode_length == 0 {
            return fail("episode_length must be positive".into());
        }
        if self.reward_weight_wait > 0.0 || self.reward_weight_onbus > 0.0 {
            return fail("reward weights must be <= 0".into());
        }
        if !(0.0..=1.0).contains(&self.long_wait_leave_prob) {
            return fail(format!(
                "long_wait_leave_prob must be in [0, 1], got {}",
                self.long_wait_leave_prob
            ));
        }
        Ok(())
    }

    /// Ticks to drive between adjacent stations (at least one).
    pub fn travel_ticks(&self) -> u32 {
        (self.station_spacing / self.bus_speed).round().max(1.0) as u32
    }

    /// Headway in seconds: configured, or one loop of driving divided among the buses.
    pub fn headway_secs(&self) -> f64 {
        self.headway.unwrap_or_else(|| {
            (f64::from(self.travel_ticks()) * self.num_stations as f64 / self.num_buses as f64).round()
        })
    }

    pub fn loop_length(&self) -> f64 {
        self.station_spacing * self.num_stations as f64
    }

    /// Base arrival rate at station `j`, before demand randomization.
    pub fn base_rate(&self, j: usize) -> f64 {
        self.station_arrival_rates.get(j).copied().unwrap_or(self.arrival_rate)
    }

    /// Length of the observation vector for this corridor.
    pub fn observation_len(&self) -> usize {
        super::observation::observation_len(self.num_stations, self.num_buses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_derived_values_match() {
        let cfg = EnvConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.travel_ticks(), 60);
        assert_eq!(cfg.headway_secs(), 43.0);
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let bad = [
            EnvConfig { num_stations: 1, ..Default::default() },
            EnvConfig { num_buses: 0, ..Default::default() },
            EnvConfig { bus_capacity: 0, ..Default::default() },
            EnvConfig { bus_speed: 0.0, ..Default::default() },
            EnvConfig { long_wait_leave_prob: 1.5, ..Default::default() },
            EnvConfig { reward_weight_wait: 0.5, ..Default::default() },
            EnvConfig { station_arrival_rates: vec![0.1; 3], ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
