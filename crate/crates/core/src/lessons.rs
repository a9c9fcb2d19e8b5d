//! Lesson parameters: the action-space catalog, the perturbation adversary,
//! and bunched bus initialization.
//!
//! A [`Lesson`] is the triple `(S, α, β)`:
//!
//! - `S` indexes [`ACTION_SPACE_CATALOG`], a fixed list of 15 action subsets
//!   built from a holding range plus skip/turn flags.
//! - `α` is the strength of random travel-time perturbations.
//! - `β` is the number of Gaussian centers used to scatter buses at reset;
//!   fewer centers means tighter initial bunching.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of discrete actions: holds 0..=11 (×10 s), skip = 12, turn = 13.
pub const NUM_ACTIONS: usize = 14;
pub const SKIP_ACTION: usize = 12;
pub const TURN_ACTION: usize = 13;
/// Seconds per holding step.
pub const HOLD_QUANTUM_SECS: u32 = 10;

pub const MAX_ACTION_SPACE: u8 = 14;
pub const MAX_PERTURBATION: u8 = 4;
pub const MIN_BUNCHING: u8 = 1;
pub const MAX_BUNCHING: u8 = 10;

/// Per-tick probability that the adversary strikes.
pub const PERTURBATION_PROBABILITY: f64 = 0.01;
/// Dispersion of each initialization Gaussian, used as a standard deviation.
pub const INIT_SPREAD: f64 = 2.5;

/// One curriculum stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lesson {
    /// Action-space catalog index `S` in `0..=14`.
    pub action_space: u8,
    /// Perturbation strength `α` in `0..=4`.
    pub perturbation: u8,
    /// Bunching strength `β` in `1..=10`.
    pub bunching: u8,
}

impl Lesson {
    pub fn new(action_space: u8, perturbation: u8, bunching: u8) -> Result<Self> {
        let lesson = Self { action_space, perturbation, bunching };
        lesson.validate()?;
        Ok(lesson)
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_space > MAX_ACTION_SPACE {
            return Err(Error::Config(format!(
                "action space index {} outside 0..={MAX_ACTION_SPACE}",
                self.action_space
            )));
        }
        if self.perturbation > MAX_PERTURBATION {
            return Err(Error::Config(format!(
                "perturbation strength {} outside 0..={MAX_PERTURBATION}",
                self.perturbation
            )));
        }
        if !(MIN_BUNCHING..=MAX_BUNCHING).contains(&self.bunching) {
            return Err(Error::Config(format!(
                "bunching strength {} outside {MIN_BUNCHING}..={MAX_BUNCHING}",
                self.bunching
            )));
        }
        Ok(())
    }

    pub fn mask(&self) -> Result<ActionMask> {
        mask_for(self.action_space)
    }
}

impl fmt::Display for Lesson {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(S={}, α={}, β={})", self.action_space, self.perturbation, self.bunching)
    }
}

/// Set of legal discrete actions, one bit per action.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionMask(u16);

impl ActionMask {
    pub const ALL: ActionMask = ActionMask((1 << NUM_ACTIONS) - 1);
    pub const EMPTY: ActionMask = ActionMask(0);

    pub fn from_bits(bits: u16) -> Self {
        Self(bits & Self::ALL.0)
    }

    pub fn from_actions<I: IntoIterator<Item = usize>>(actions: I) -> Result<Self> {
        let mut bits = 0u16;
        for a in actions {
            if a >= NUM_ACTIONS {
                return Err(Error::Config(format!("action {a} outside 0..{NUM_ACTIONS}")));
            }
            bits |= 1 << a;
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn allows(self, action: usize) -> bool {
        action < NUM_ACTIONS && self.0 & (1 << action) != 0
    }

    pub fn with(self, action: usize) -> Self {
        Self(self.0 | (1 << action))
    }

    pub fn without(self, action: usize) -> Self {
        Self(self.0 & !(1 << action))
    }

    pub fn union(self, other: ActionMask) -> Self {
        Self(self.0 | other.0)
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn actions(self) -> impl Iterator<Item = usize> {
        (0..NUM_ACTIONS).filter(move |&a| self.allows(a))
    }

    pub fn to_bools(self) -> [bool; NUM_ACTIONS] {
        std::array::from_fn(|a| self.allows(a))
    }
}

impl fmt::Debug for ActionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.actions()).finish()
    }
}

/// Largest hold (in quanta) permitted by an action-space entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldingRange {
    None,
    UpTo40,
    UpTo80,
    UpTo120,
}

impl HoldingRange {
    /// Highest legal hold action index.
    pub fn max_action(self) -> usize {
        match self {
            HoldingRange::None => 0,
            HoldingRange::UpTo40 => 4,
            HoldingRange::UpTo80 => 8,
            HoldingRange::UpTo120 => 11,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HoldingRange::None => "0 holding",
            HoldingRange::UpTo40 => "0-40 holding",
            HoldingRange::UpTo80 => "0-80 holding",
            HoldingRange::UpTo120 => "0-120 holding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpaceEntry {
    pub holding: HoldingRange,
    pub skipping: bool,
    pub turning: bool,
}

impl ActionSpaceEntry {
    pub fn mask(&self) -> ActionMask {
        let mut mask = ActionMask::EMPTY;
        for a in 0..=self.holding.max_action() {
            mask = mask.with(a);
        }
        if self.skipping {
            mask = mask.with(SKIP_ACTION);
        }
        if self.turning {
            mask = mask.with(TURN_ACTION);
        }
        mask
    }
}

const fn entry(holding: HoldingRange, skipping: bool, turning: bool) -> ActionSpaceEntry {
    ActionSpaceEntry { holding, skipping, turning }
}

/// The 15 action subsets a lesson may select, indexed by `S`.
pub const ACTION_SPACE_CATALOG: [ActionSpaceEntry; 15] = {
    use HoldingRange::*;
    [
        entry(None, true, true),
        entry(None, true, false),
        entry(None, false, true),
        entry(UpTo40, true, false),
        entry(UpTo40, true, true),
        entry(UpTo40, false, false),
        entry(UpTo40, false, true),
        entry(UpTo80, true, false),
        entry(UpTo80, true, true),
        entry(UpTo80, false, false),
        entry(UpTo80, false, true),
        entry(UpTo120, true, false),
        entry(UpTo120, true, true),
        entry(UpTo120, false, false),
        entry(UpTo120, false, true),
    ]
};

/// Legal-action mask for catalog index `s`.
pub fn mask_for(s: u8) -> Result<ActionMask> {
    ACTION_SPACE_CATALOG
        .get(s as usize)
        .map(ActionSpaceEntry::mask)
        .ok_or_else(|| Error::Config(format!("action space index {s} outside 0..={MAX_ACTION_SPACE}")))
}

/// Render the catalog as a pipe-separated table, one row per index.
pub fn catalog_table() -> String {
    let yes_no = |b: bool| if b { "Yes" } else { "No" };
    let mut out = String::from("Action Space (S) | Holding | Skipping | Turning\n");
    for (s, e) in ACTION_SPACE_CATALOG.iter().enumerate() {
        out.push_str(&format!(
            "{s} | {} | {} | {}\n",
            e.holding.label(),
            yes_no(e.skipping),
            yes_no(e.turning)
        ));
    }
    out
}

/// A single adversary strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strike {
    /// Index into the caller's list of driving buses; `None` when no bus was driving.
    pub target: Option<usize>,
    pub delay_ticks: u32,
}

/// Random travel-time perturbations applied to driving buses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationAdversary {
    pub strength: u8,
    /// Ticks added per unit of strength.
    pub unit_ticks: u32,
    pub probability: f64,
}

impl PerturbationAdversary {
    pub fn new(strength: u8, unit_ticks: u32) -> Self {
        Self { strength, unit_ticks, probability: PERTURBATION_PROBABILITY }
    }

    pub fn delay_ticks(&self) -> u32 {
        u32::from(self.strength) * self.unit_ticks
    }

    /// Roll once for this tick. The trigger draw never depends on the
    /// strength, so runs that differ only in `α` consume the stream identically.
    pub fn maybe_perturb<R: Rng + ?Sized>(&self, driving: usize, rng: &mut R) -> Option<Strike> {
        if !rng.random_bool(self.probability) {
            return None;
        }
        let target = (driving > 0).then(|| rng.random_range(0..driving));
        Some(Strike { target, delay_ticks: self.delay_ticks() })
    }
}

/// Starting station of each bus under bunching strength `beta`.
///
/// Draws `beta` centers uniformly with replacement, then for every bus picks
/// one center uniformly and samples `N(center, 2.5)`, rounded and wrapped
/// onto the loop.
pub fn initialize_buses<R: Rng + ?Sized>(
    beta: u8,
    num_stations: usize,
    num_buses: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(MIN_BUNCHING..=MAX_BUNCHING).contains(&beta) {
        return Err(Error::Config(format!("bunching strength {beta} outside 1..=10")));
    }
    if num_stations == 0 {
        return Err(Error::Config("need at least one station".into()));
    }
    let m = num_stations as i64;
    let centers: Vec<usize> = (0..beta).map(|_| rng.random_range(0..num_stations)).collect();
    let gaussians: Vec<Normal<f64>> = centers
        .iter()
        .map(|&c| Normal::new(c as f64, INIT_SPREAD).expect("positive spread"))
        .collect();
    let stations = (0..num_buses)
        .map(|_| {
            let g = &gaussians[rng.random_range(0..gaussians.len())];
            let x = g.sample(rng).round() as i64;
            x.rem_euclid(m) as usize
        })
        .collect();
    Ok(stations)
}

/// Length of the mean resultant vector of stations placed on a circle.
/// 1.0 when all buses share a station, near 0 when they are evenly spread.
pub fn resultant_length(stations: &[usize], num_stations: usize) -> f64 {
    if stations.is_empty() {
        return 0.0;
    }
    let (s, c) = stations.iter().fold((0.0, 0.0), |(s, c), &j| {
        let theta = std::f64::consts::TAU * j as f64 / num_stations as f64;
        (s + theta.sin(), c + theta.cos())
    });
    let n = stations.len() as f64;
    ((s / n).powi(2) + (c / n).powi(2)).sqrt()
}
