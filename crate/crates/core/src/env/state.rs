use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::reward::Counters;
use crate::dr::{departure_delay, DrDraw};
use crate::error::{Error, Result};
use crate::lessons::{
    initialize_buses, ActionMask, Lesson, PerturbationAdversary, HOLD_QUANTUM_SECS, NUM_ACTIONS,
    SKIP_ACTION, TURN_ACTION,
};

pub type PassengerId = u32;
pub type BusId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PassengerStatus {
    Waiting = 0,
    OnBus = 1,
    AlightedWaiting = 2,
    AlightedArrived = 3,
    LeftAfterLongWait = 4,
}

impl PassengerStatus {
    pub const ALL: [PassengerStatus; 5] = [
        PassengerStatus::Waiting,
        PassengerStatus::OnBus,
        PassengerStatus::AlightedWaiting,
        PassengerStatus::AlightedArrived,
        PassengerStatus::LeftAfterLongWait,
    ];

    pub fn is_waiting(self) -> bool {
        matches!(self, PassengerStatus::Waiting | PassengerStatus::AlightedWaiting)
    }

    /// Whether `self -> next` is an allowed status change.
    pub fn can_become(self, next: PassengerStatus) -> bool {
        use PassengerStatus::*;
        matches!(
            (self, next),
            (Waiting, OnBus)
                | (OnBus, AlightedWaiting)
                | (OnBus, AlightedArrived)
                | (AlightedWaiting, OnBus)
                | (Waiting, LeftAfterLongWait)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passenger {
    pub id: PassengerId,
    pub origin: usize,
    pub destination: usize,
    pub arrival_tick: u32,
    pub board_tick: Option<u32>,
    pub alight_tick: Option<u32>,
    pub status: PassengerStatus,
    leave_checked: bool,
    wait_mark: u64,
    ride_mark: u64,
}

/// Where a bus is going and how long it will take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegKind {
    Forward,
    Skip,
    Turn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusPhase {
    Driving { kind: LegKind, from: usize, to: usize, remaining: u32, total: u32 },
    Dwelling { remaining: u32, decided: bool },
    HeldAtStation { remaining: u32 },
    AwaitingDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    /// Current station, or the station most recently departed while driving.
    pub station: usize,
    pub phase: BusPhase,
    pub onboard: Vec<PassengerId>,
}

impl Bus {
    pub fn is_driving(&self) -> bool {
        matches!(self.phase, BusPhase::Driving { .. })
    }

    /// Station the bus is at, or heading to when driving.
    pub fn next_station(&self) -> usize {
        match self.phase {
            BusPhase::Driving { to, .. } => to,
            _ => self.station,
        }
    }

    /// Meters along the loop, in `[0, loop_length)`.
    pub fn position(&self, spacing: f64, num_stations: usize) -> f64 {
        let loop_len = spacing * num_stations as f64;
        let pos = match self.phase {
            BusPhase::Driving { kind, to, remaining, total, .. } => {
                let leg_stations = match kind {
                    LegKind::Forward => 1.0,
                    LegKind::Skip => 2.0,
                    LegKind::Turn => 1.0,
                };
                let frac_left = if total == 0 { 0.0 } else { (remaining as f64 / total as f64).min(1.0) };
                to as f64 * spacing - leg_stations * spacing * frac_left
            }
            _ => self.station as f64 * spacing,
        };
        let p = pos.rem_euclid(loop_len);
        if p >= loop_len { 0.0 } else { p }
    }
}

/// How buses are placed at reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "beta")]
pub enum BusInit {
    /// All buses at station 0, released one headway apart.
    Staggered,
    /// Scattered by the Gaussian-mixture initializer with this bunching strength.
    Bunched(u8),
}

/// Everything about an episode that a curriculum controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub mask: ActionMask,
    /// `None` disables the adversary entirely.
    pub perturbation: Option<u8>,
    pub init: BusInit,
}

impl Scenario {
    /// Full action set, no adversary, staggered start.
    pub fn no_curriculum() -> Self {
        Self { mask: ActionMask::ALL, perturbation: None, init: BusInit::Staggered }
    }

    pub fn from_lesson(lesson: &Lesson) -> Result<Self> {
        lesson.validate()?;
        Ok(Self {
            mask: lesson.mask()?,
            perturbation: Some(lesson.perturbation),
            init: BusInit::Bunched(lesson.bunching),
        })
    }

    fn validate(&self) -> Result<()> {
        if !self.mask.allows(0) {
            return Err(Error::Config("scenario mask must allow action 0".into()));
        }
        if let Some(a) = self.perturbation {
            if a > crate::lessons::MAX_PERTURBATION {
                return Err(Error::Config(format!("perturbation strength {a} outside 0..=4")));
            }
        }
        if let BusInit::Bunched(b) = self.init {
            if !(1..=10).contains(&b) {
                return Err(Error::Config(format!("bunching strength {b} outside 1..=10")));
            }
        }
        Ok(())
    }
}

/// A bus ready to leave a station, waiting for the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEvent {
    pub bus_id: BusId,
    pub station: usize,
    pub mask: ActionMask,
    pub observation: Vec<f64>,
    pub tick: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Decision(DecisionEvent),
    EpisodeEnd,
}

/// Tallies kept for calibration and diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub arrivals_per_station: Vec<u64>,
    pub perturbation_triggers: u64,
    pub perturbation_hits: u64,
    pub departures: u64,
    pub departure_delay_secs: u64,
    pub skips: u64,
    pub turns: u64,
    /// `transitions[from][to]` counts every passenger status change.
    pub transitions: [[u64; 5]; 5],
    /// Highest onboard count seen on any bus.
    pub peak_load: usize,
}

#[derive(Debug, Clone)]
struct Streams {
    arrivals: ChaCha8Rng,
    leaving: ChaCha8Rng,
    adversary: ChaCha8Rng,
    delays: ChaCha8Rng,
    boarding: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> (Self, ChaCha8Rng) {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        let streams = Self {
            arrivals: stream(1),
            leaving: stream(2),
            adversary: stream(3),
            delays: stream(4),
            boarding: stream(5),
        };
        (streams, stream(6))
    }
}

/// Full world state of one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    pub(super) cfg: EnvConfig,
    pub(super) scenario: Scenario,
    pub(super) dr: DrDraw,
    pub(super) time: u32,
    pub(super) buses: Vec<Bus>,
    pub(super) queues: Vec<VecDeque<PassengerId>>,
    pub(super) passengers: Vec<Passenger>,
    counters: Counters,
    /// Decision-interval index; starts at 1 so a zero mark means "never counted".
    epoch: u64,
    ready: VecDeque<BusId>,
    pending: Option<BusId>,
    status_counts: [u64; 5],
    stats: SimStats,
    rngs: Streams,
    arrival_dists: Vec<Option<Poisson<f64>>>,
    travel_ticks: u32,
    headway: f64,
    adversary: Option<PerturbationAdversary>,
}

impl SimState {
    /// Start a fresh episode.
    pub fn reset(cfg: &EnvConfig, scenario: &Scenario, dr: DrDraw, seed: u64) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        let m = cfg.num_stations;
        let (rngs, mut init_rng) = Streams::new(seed);
        let headway = cfg.headway_secs();

        let buses = match scenario.init {
            BusInit::Staggered => {
                let gap = headway.round() as u32;
                (0..cfg.num_buses)
                    .map(|id| Bus {
                        id,
                        station: 0,
                        phase: BusPhase::HeldAtStation { remaining: gap * id as u32 },
                        onboard: Vec::new(),
                    })
                    .collect()
            }
            BusInit::Bunched(beta) => initialize_buses(beta, m, cfg.num_buses, &mut init_rng)?
                .into_iter()
                .enumerate()
                .map(|(id, station)| Bus {
                    id,
                    station,
                    phase: BusPhase::HeldAtStation { remaining: 0 },
                    onboard: Vec::new(),
                })
                .collect(),
        };

        let arrival_dists = (0..m)
            .map(|j| {
                let rate = cfg.base_rate(j) * dr.demand_multiplier;
                (rate > 0.0).then(|| Poisson::new(rate).expect("positive rate"))
            })
            .collect();

        Ok(Self {
            cfg: cfg.clone(),
            scenario: *scenario,
            dr,
            time: 0,
            buses,
            queues: vec![VecDeque::new(); m],
            passengers: Vec::new(),
            counters: Counters::default(),
            epoch: 1,
            ready: VecDeque::new(),
            pending: None,
            status_counts: [0; 5],
            stats: SimStats { arrivals_per_station: vec![0; m], ..Default::default() },
            rngs,
            arrival_dists,
            travel_ticks: cfg.travel_ticks(),
            headway,
            adversary: scenario
                .perturbation
                .map(|a| PerturbationAdversary::new(a, cfg.perturbation_unit)),
        })
    }

    /// Reset with a curriculum lesson; the lesson is range-checked first.
    pub fn reset_with_lesson(cfg: &EnvConfig, lesson: &Lesson, dr: DrDraw, seed: u64) -> Result<Self> {
        Self::reset(cfg, &Scenario::from_lesson(lesson)?, dr, seed)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn dr_draw(&self) -> &DrDraw {
        &self.dr
    }

    /// Seconds since reset.
    pub fn tick(&self) -> u32 {
        self.time
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn queue(&self, station: usize) -> &VecDeque<PassengerId> {
        &self.queues[station]
    }

    pub fn queue_lengths(&self) -> Vec<usize> {
        self.queues.iter().map(VecDeque::len).collect()
    }

    pub fn passengers(&self) -> &[Passenger] {
        &self.passengers
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn status_counts(&self) -> [u64; 5] {
        self.status_counts
    }

    pub fn is_done(&self) -> bool {
        self.time >= self.cfg.episode_length
    }

    pub fn bus_positions(&self) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| b.position(self.cfg.station_spacing, self.cfg.num_stations))
            .collect()
    }

    /// Legal actions for a bus about to leave `station`.
    pub fn decision_mask(&self, station: usize) -> ActionMask {
        let mut mask = self.scenario.mask;
        if station > self.cfg.num_stations / 2 {
            mask = mask.without(TURN_ACTION);
        }
        mask
    }

    /// Advance until some bus needs a decision or the episode ends.
    pub fn step_until_decision(&mut self) -> Step {
        self.step_until_decision_observed(|_| {})
    }

    /// Like [`step_until_decision`](Self::step_until_decision), calling
    /// `on_tick` after every simulated second.
    pub fn step_until_decision_observed<F: FnMut(&SimState)>(&mut self, mut on_tick: F) -> Step {
        loop {
            if let Some(bus) = self.pending {
                return Step::Decision(self.decision_for(bus));
            }
            if let Some(bus) = self.ready.pop_front() {
                self.pending = Some(bus);
                self.epoch += 1;
                return Step::Decision(self.decision_for(bus));
            }
            if self.is_done() {
                return Step::EpisodeEnd;
            }
            self.advance_tick();
            on_tick(self);
        }
    }

    fn decision_for(&self, bus: BusId) -> DecisionEvent {
        let station = self.buses[bus].station;
        DecisionEvent {
            bus_id: bus,
            station,
            mask: self.decision_mask(station),
            observation: self.observe(bus),
            tick: self.time,
        }
    }

    /// Carry out the policy's choice for the pending bus.
    pub fn apply_action(&mut self, event: &DecisionEvent, action: usize) -> Result<()> {
        let bus = match self.pending {
            Some(b) if b == event.bus_id => b,
            _ => {
                return Err(Error::Contract(format!(
                    "bus {} is not awaiting a decision",
                    event.bus_id
                )))
            }
        };
        let station = self.buses[bus].station;
        let mask = self.decision_mask(station);
        if action >= NUM_ACTIONS || !mask.allows(action) {
            return Err(Error::Contract(format!("action {action} is masked at station {station}")));
        }
        self.pending = None;
        let m = self.cfg.num_stations;
        match action {
            SKIP_ACTION => {
                self.stats.skips += 1;
                let skipped = (station + 1) % m;
                self.force_alight(bus, |dest| dest == skipped);
                self.depart(bus, LegKind::Skip);
            }
            TURN_ACTION => {
                self.stats.turns += 1;
                let half = m / 2;
                self.force_alight(bus, |dest| {
                    let offset = (dest + m - station) % m;
                    (1..=half).contains(&offset)
                });
                self.depart(bus, LegKind::Turn);
            }
            hold => {
                let secs = hold as u32 * HOLD_QUANTUM_SECS;
                if secs == 0 {
                    self.depart(bus, LegKind::Forward);
                } else {
                    self.buses[bus].phase = BusPhase::HeldAtStation { remaining: secs };
                }
            }
        }
        Ok(())
    }

    fn set_status(&mut self, pid: PassengerId, next: PassengerStatus) {
        let p = &mut self.passengers[pid as usize];
        debug_assert!(p.status.can_become(next), "{:?} -> {:?}", p.status, next);
        self.stats.transitions[p.status as usize][next as usize] += 1;
        self.status_counts[p.status as usize] -= 1;
        self.status_counts[next as usize] += 1;
        p.status = next;
    }

    /// Move onboard passengers matching `dest_pred` back into the current station's queue.
    fn force_alight<F: Fn(usize) -> bool>(&mut self, bus: BusId, dest_pred: F) {
        let station = self.buses[bus].station;
        let onboard = std::mem::take(&mut self.buses[bus].onboard);
        let (off, stay): (Vec<_>, Vec<_>) = onboard
            .into_iter()
            .partition(|&pid| dest_pred(self.passengers[pid as usize].destination));
        self.buses[bus].onboard = stay;
        for pid in off {
            self.set_status(pid, PassengerStatus::AlightedWaiting);
            self.passengers[pid as usize].alight_tick = Some(self.time);
            self.queues[station].push_back(pid);
        }
    }

    fn depart(&mut self, bus: BusId, kind: LegKind) {
        let m = self.cfg.num_stations;
        let from = self.buses[bus].station;
        let (to, base) = match kind {
            LegKind::Forward => ((from + 1) % m, self.travel_ticks),
            LegKind::Skip => ((from + 2) % m, 2 * self.travel_ticks),
            LegKind::Turn => ((from + m / 2) % m, self.travel_ticks),
        };
        let delay = departure_delay(&self.dr, &mut self.rngs.delays);
        self.stats.departures += 1;
        self.stats.departure_delay_secs += u64::from(delay);
        let total = base + delay;
        self.buses[bus].phase = BusPhase::Driving { kind, from, to, remaining: total, total };
    }

    /// One simulated second.
    fn advance_tick(&mut self) {
        self.accrue();
        self.time += 1;
        let now = self.time;
        self.generate_arrivals(now);
        self.check_long_waits(now);
        self.perturb();

        let mut arriving = Vec::new();
        let mut releasing = Vec::new();
        for bus in &mut self.buses {
            match &mut bus.phase {
                BusPhase::Driving { to, remaining, .. } => {
                    *remaining = remaining.saturating_sub(1);
                    if *remaining == 0 {
                        bus.station = *to;
                        arriving.push(bus.id);
                    }
                }
                BusPhase::Dwelling { remaining, decided } => {
                    *remaining = remaining.saturating_sub(1);
                    if *remaining == 0 {
                        if *decided {
                            releasing.push((bus.id, true));
                        } else {
                            bus.phase = BusPhase::AwaitingDecision;
                            self.ready.push_back(bus.id);
                        }
                    }
                }
                BusPhase::HeldAtStation { remaining } => {
                    *remaining = remaining.saturating_sub(1);
                    if *remaining == 0 {
                        releasing.push((bus.id, false));
                    }
                }
                BusPhase::AwaitingDecision => {}
            }
        }
        // Dwell-complete buses that already decided leave without another boarding pass.
        let mut topping_up = Vec::new();
        for (bus, dwell_done) in releasing {
            if dwell_done {
                self.depart(bus, LegKind::Forward);
            } else {
                topping_up.push(bus);
            }
        }
        self.serve_stations(&arriving, &topping_up);
    }

    fn accrue(&mut self) {
        let epoch = self.epoch;
        let c = &mut self.counters;
        for q in &self.queues {
            for &pid in q {
                let p = &mut self.passengers[pid as usize];
                c.wait_secs += 1;
                if p.wait_mark != epoch {
                    p.wait_mark = epoch;
                    c.waited_interval_marks += 1;
                }
            }
        }
        for bus in &self.buses {
            for &pid in &bus.onboard {
                let p = &mut self.passengers[pid as usize];
                c.onbus_secs += 1;
                if p.ride_mark != epoch {
                    p.ride_mark = epoch;
                    c.rode_interval_marks += 1;
                }
            }
        }
    }

    fn generate_arrivals(&mut self, now: u32) {
        let m = self.cfg.num_stations;
        for j in 0..m {
            let Some(dist) = &self.arrival_dists[j] else { continue };
            let count = dist.sample(&mut self.rngs.arrivals) as u64;
            let reach = ((m - j) / 2).max(1);
            for _ in 0..count {
                let offset = self.rngs.arrivals.random_range(1..=reach);
                let id = self.passengers.len() as PassengerId;
                self.passengers.push(Passenger {
                    id,
                    origin: j,
                    destination: (j + offset) % m,
                    arrival_tick: now,
                    board_tick: None,
                    alight_tick: None,
                    status: PassengerStatus::Waiting,
                    leave_checked: false,
                    wait_mark: 0,
                    ride_mark: 0,
                });
                self.queues[j].push_back(id);
                self.status_counts[PassengerStatus::Waiting as usize] += 1;
                self.counters.waited += 1;
            }
            self.stats.arrivals_per_station[j] += count;
        }
    }

    /// Each never-boarded passenger gets one chance to leave, on the first
    /// tick their wait exceeds the headway.
    fn check_long_waits(&mut self, now: u32) {
        let prob = self.cfg.long_wait_leave_prob;
        let headway = self.headway;
        for j in 0..self.queues.len() {
            let mut leavers = Vec::new();
            for &pid in &self.queues[j] {
                let p = &mut self.passengers[pid as usize];
                if p.status != PassengerStatus::Waiting || p.leave_checked {
                    continue;
                }
                if f64::from(now - p.arrival_tick) > headway {
                    p.leave_checked = true;
                    if self.rngs.leaving.random_bool(prob) {
                        leavers.push(pid);
                    }
                }
            }
            if leavers.is_empty() {
                continue;
            }
            self.queues[j].retain(|pid| !leavers.contains(pid));
            for pid in leavers {
                self.set_status(pid, PassengerStatus::LeftAfterLongWait);
            }
        }
    }

    fn perturb(&mut self) {
        let Some(adversary) = self.adversary else { return };
        let driving: Vec<BusId> = self.buses.iter().filter(|b| b.is_driving()).map(|b| b.id).collect();
        let Some(strike) = adversary.maybe_perturb(driving.len(), &mut self.rngs.adversary) else {
            return;
        };
        self.stats.perturbation_triggers += 1;
        if let Some(idx) = strike.target {
            self.stats.perturbation_hits += 1;
            if let BusPhase::Driving { remaining, total, .. } = &mut self.buses[driving[idx]].phase {
                *remaining += strike.delay_ticks;
                *total += strike.delay_ticks;
            }
        }
    }

    /// Alight and board every bus that reached a station or finished a hold this tick.
    fn serve_stations(&mut self, arriving: &[BusId], topping_up: &[BusId]) {
        if arriving.is_empty() && topping_up.is_empty() {
            return;
        }
        let mut stations: Vec<usize> = arriving
            .iter()
            .chain(topping_up)
            .map(|&b| self.buses[b].station)
            .collect();
        stations.sort_unstable();
        stations.dedup();

        let mut newly_ready = Vec::new();
        for station in stations {
            let mut group: Vec<(BusId, bool)> = arriving
                .iter()
                .filter(|&&b| self.buses[b].station == station)
                .map(|&b| (b, true))
                .chain(
                    topping_up
                        .iter()
                        .filter(|&&b| self.buses[b].station == station)
                        .map(|&b| (b, false)),
                )
                .collect();
            group.sort_unstable_by_key(|&(b, _)| b);
            let ids: Vec<BusId> = group.iter().map(|&(b, _)| b).collect();
            let dwells = self.boarding_alighting(station, &ids, &group.iter().map(|g| g.1).collect::<Vec<_>>());
            for ((bus, arrived), dwell) in group.into_iter().zip(dwells) {
                match (dwell, arrived) {
                    (0, true) => {
                        self.buses[bus].phase = BusPhase::AwaitingDecision;
                        newly_ready.push(bus);
                    }
                    (0, false) => self.depart(bus, LegKind::Forward),
                    (d, arrived) => {
                        self.buses[bus].phase = BusPhase::Dwelling { remaining: d, decided: !arrived }
                    }
                }
            }
        }
        newly_ready.sort_unstable();
        self.ready.extend(newly_ready);
    }

    /// Serve one station for a group of co-located buses and return each
    /// bus's dwell in whole seconds. `alight[i]` says whether bus `i` just
    /// arrived (and so drops off riders destined here).
    ///
    /// Waiting passengers board first-come first-served; each picks uniformly
    /// among the group's buses that still have room. Dwell is the longer of
    /// the boarding and alighting times.
    pub(super) fn boarding_alighting(&mut self, station: usize, buses: &[BusId], alight: &[bool]) -> Vec<u32> {
        let now = self.time;
        let cap = self.cfg.bus_capacity;
        let mut alighted = vec![0usize; buses.len()];
        let mut boarded = vec![0usize; buses.len()];

        for (i, &b) in buses.iter().enumerate() {
            if !alight[i] {
                continue;
            }
            let onboard = std::mem::take(&mut self.buses[b].onboard);
            let (off, stay): (Vec<_>, Vec<_>) = onboard
                .into_iter()
                .partition(|&pid| self.passengers[pid as usize].destination == station);
            self.buses[b].onboard = stay;
            alighted[i] = off.len();
            for pid in off {
                self.set_status(pid, PassengerStatus::AlightedArrived);
                self.passengers[pid as usize].alight_tick = Some(now);
            }
        }

        let mut open: Vec<usize> = (0..buses.len()).filter(|&i| self.buses[buses[i]].onboard.len() < cap).collect();
        while !open.is_empty() {
            let Some(pid) = self.queues[station].pop_front() else { break };
            let slot = if open.len() == 1 { 0 } else { self.rngs.boarding.random_range(0..open.len()) };
            let i = open[slot];
            let b = buses[i];
            let first_ride = self.passengers[pid as usize].board_tick.is_none();
            self.set_status(pid, PassengerStatus::OnBus);
            self.passengers[pid as usize].board_tick = Some(now);
            if first_ride {
                self.counters.rode += 1;
            }
            self.buses[b].onboard.push(pid);
            boarded[i] += 1;
            let load = self.buses[b].onboard.len();
            self.stats.peak_load = self.stats.peak_load.max(load);
            if load >= cap {
                open.remove(slot);
            }
        }

        buses
            .iter()
            .enumerate()
            .map(|(i, _)| {
                dwell_seconds(boarded[i], alighted[i], self.cfg.board_time, self.cfg.alight_time).ceil() as u32
            })
            .collect()
    }

    /// Check the structural invariants: capacity, conservation, and that the
    /// location index agrees with passenger statuses.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let cap = self.cfg.bus_capacity;
        if let Some(b) = self.buses.iter().find(|b| b.onboard.len() > cap) {
            return Err(format!("bus {} carries {} > {cap}", b.id, b.onboard.len()));
        }
        let waiting: u64 = self.queues.iter().map(|q| q.len() as u64).sum();
        let onbus: u64 = self.buses.iter().map(|b| b.onboard.len() as u64).sum();
        let s = self.status_counts;
        if waiting != s[0] + s[2] {
            return Err(format!("{waiting} queued but {} waiting statuses", s[0] + s[2]));
        }
        if onbus != s[1] {
            return Err(format!("{onbus} aboard but {} on-bus statuses", s[1]));
        }
        let total = self.passengers.len() as u64;
        if waiting + onbus + s[3] + s[4] != total {
            return Err(format!("conservation broken: {waiting}+{onbus}+{}+{} != {total}", s[3], s[4]));
        }
        let loop_len = self.cfg.loop_length();
        for (b, pos) in self.bus_positions().into_iter().enumerate() {
            if !(0.0..loop_len).contains(&pos) {
                return Err(format!("bus {b} at {pos} outside the loop"));
            }
        }
        Ok(())
    }

    /// Exhaustive check that every passenger sits in exactly one place
    /// consistent with its status. Linear in the number of passengers.
    pub fn check_locations(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0u8; self.passengers.len()];
        for (j, q) in self.queues.iter().enumerate() {
            for &pid in q {
                seen[pid as usize] += 1;
                let p = &self.passengers[pid as usize];
                if !p.status.is_waiting() {
                    return Err(format!("passenger {pid} queued at {j} with status {:?}", p.status));
                }
            }
        }
        for bus in &self.buses {
            for &pid in &bus.onboard {
                seen[pid as usize] += 1;
                if self.passengers[pid as usize].status != PassengerStatus::OnBus {
                    return Err(format!("passenger {pid} aboard bus {} but not on-bus", bus.id));
                }
            }
        }
        for p in &self.passengers {
            let placed = seen[p.id as usize];
            let departed = matches!(p.status, PassengerStatus::AlightedArrived | PassengerStatus::LeftAfterLongWait);
            if departed && placed != 0 || !departed && placed != 1 {
                return Err(format!("passenger {} placed {placed} times with status {:?}", p.id, p.status));
            }
            if p.destination == p.origin {
                return Err(format!("passenger {} travels to its own origin", p.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
impl SimState {
    /// Place a passenger directly at a station queue or aboard a bus.
    pub(super) fn inject_passenger(&mut self, origin: usize, destination: usize, aboard: Option<BusId>) -> PassengerId {
        let id = self.passengers.len() as PassengerId;
        let status = if aboard.is_some() { PassengerStatus::OnBus } else { PassengerStatus::Waiting };
        self.passengers.push(Passenger {
            id,
            origin,
            destination,
            arrival_tick: self.time,
            board_tick: aboard.map(|_| self.time),
            alight_tick: None,
            status,
            leave_checked: false,
            wait_mark: 0,
            ride_mark: 0,
        });
        self.status_counts[status as usize] += 1;
        self.counters.waited += 1;
        match aboard {
            Some(b) => {
                self.counters.rode += 1;
                self.buses[b].onboard.push(id);
            }
            None => self.queues[origin].push_back(id),
        }
        id
    }
}

/// Stop duration when boarding and alighting run concurrently.
pub fn dwell_seconds(boarded: usize, alighted: usize, board_time: f64, alight_time: f64) -> f64 {
    (boarded as f64 * board_time).max(alighted as f64 * alight_time)
}
