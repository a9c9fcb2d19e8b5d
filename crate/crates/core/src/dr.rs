//! Episode-level domain randomization: demand multipliers and per-departure delays.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrConfig {
    pub enabled: bool,
    /// Demand multipliers applied to the base arrival rate.
    pub demand_levels: Vec<f64>,
    /// Standard deviation of the Gaussian noise added to the chosen level.
    pub demand_noise_sigma: f64,
    /// Inclusive bounds, in seconds, of the uniform delay added at each departure.
    pub min_delay: u32,
    pub max_delay: u32,
}

impl Default for DrConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            demand_levels: vec![1.25, 1.0, 0.75],
            demand_noise_sigma: 0.1,
            min_delay: 0,
            max_delay: 30,
        }
    }
}

impl DrConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.demand_levels.is_empty() {
            return Err(Error::Config("demand_levels must not be empty".into()));
        }
        if let Some(l) = self.demand_levels.iter().find(|l| !(0.0..=2.0).contains(*l)) {
            return Err(Error::Config(format!("demand level {l} outside [0, 2]")));
        }
        if !(self.demand_noise_sigma >= 0.0 && self.demand_noise_sigma.is_finite()) {
            return Err(Error::Config("demand_noise_sigma must be finite and >= 0".into()));
        }
        if self.min_delay > self.max_delay {
            return Err(Error::Config(format!(
                "min_delay {} exceeds max_delay {}",
                self.min_delay, self.max_delay
            )));
        }
        Ok(())
    }

    fn clip_bounds(&self) -> (f64, f64) {
        self.demand_levels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)))
    }
}

/// The randomization drawn for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrDraw {
    pub demand_multiplier: f64,
    pub min_delay: u32,
    pub max_delay: u32,
}

impl DrDraw {
    /// The draw used when randomization is off.
    pub const IDENTITY: DrDraw = DrDraw { demand_multiplier: 1.0, min_delay: 0, max_delay: 0 };

    pub fn delays_enabled(&self) -> bool {
        self.max_delay > 0
    }
}

impl Default for DrDraw {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Pick a demand level uniformly, add Gaussian noise, and clip into the level range.
pub fn draw_episode<R: Rng + ?Sized>(cfg: &DrConfig, rng: &mut R) -> DrDraw {
    if !cfg.enabled || cfg.demand_levels.is_empty() {
        return DrDraw::IDENTITY;
    }
    let (lo, hi) = cfg.clip_bounds();
    let level = cfg.demand_levels[rng.random_range(0..cfg.demand_levels.len())];
    let noisy = if cfg.demand_noise_sigma > 0.0 {
        level + Normal::new(0.0, cfg.demand_noise_sigma).expect("sigma checked").sample(rng)
    } else {
        level
    };
    DrDraw {
        demand_multiplier: noisy.clamp(lo, hi),
        min_delay: cfg.min_delay,
        max_delay: cfg.max_delay,
    }
}

/// Uniform integer delay in `[min_delay, max_delay]` seconds.
/// Draws nothing from `rng` when the range is the single value 0.
pub fn departure_delay<R: Rng + ?Sized>(draw: &DrDraw, rng: &mut R) -> u32 {
    if !draw.delays_enabled() {
        return 0;
    }
    rng.random_range(draw.min_delay..=draw.max_delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_hits_levels_exactly() {
        let cfg = DrConfig { demand_noise_sigma: 0.0, ..DrConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = [false; 3];
        for _ in 0..300 {
            let m = draw_episode(&cfg, &mut rng).demand_multiplier;
            let idx = cfg.demand_levels.iter().position(|&l| l == m).expect("exact level");
            seen[idx] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn disabled_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draw = draw_episode(&DrConfig::disabled(), &mut rng);
        assert_eq!(draw, DrDraw::IDENTITY);
        for _ in 0..100 {
            assert_eq!(departure_delay(&draw, &mut rng), 0);
        }
    }

    #[test]
    fn zero_delay_range_is_always_zero() {
        let draw = DrDraw { demand_multiplier: 1.0, min_delay: 0, max_delay: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..1000).all(|_| departure_delay(&draw, &mut rng) == 0));
    }

    #[test]
    fn validation() {
        assert!(DrConfig::default().validate().is_ok());
        let bad = DrConfig { min_delay: 5, max_delay: 1, ..DrConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DrConfig { demand_levels: vec![2.5], ..DrConfig::default() };
        assert!(bad.validate().is_err());
    }
}
