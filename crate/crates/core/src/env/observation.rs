//! Ego-centric observation vector for the deciding bus.
//!
//! Layout (all entries finite, roughly in `[0, 1]`):
//!
//! ```text
//! [ per bus × n : position/L, forward gap/L, backward gap/L, load/C ]
//! [ per station × m : queue length / C ]
//! [ tick / episode_length ]
//! ```
//!
//! Buses are listed starting with the deciding bus and then in order of
//! distance ahead of it; stations start at the deciding bus's station.

use super::state::{BusId, SimState};

pub const FEATURES_PER_BUS: usize = 4;

pub fn observation_len(num_stations: usize, num_buses: usize) -> usize {
    FEATURES_PER_BUS * num_buses + num_stations + 1
}

impl SimState {
    pub fn observe(&self, ego: BusId) -> Vec<f64> {
        let cfg = &self.cfg;
        let m = cfg.num_stations;
        let n = self.buses.len();
        let loop_len = cfg.loop_length();
        let cap = cfg.bus_capacity as f64;
        let positions = self.bus_positions();

        // Circular gaps: sort by position (ties by id) and look at neighbours.
        let mut order: Vec<BusId> = (0..n).collect();
        order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));
        let mut forward = vec![loop_len; n];
        let mut backward = vec![loop_len; n];
        if n > 1 {
            for k in 0..n {
                let here = order[k];
                let ahead = order[(k + 1) % n];
                let gap = (positions[ahead] - positions[here]).rem_euclid(loop_len);
                forward[here] = gap;
                backward[ahead] = gap;
            }
        }

        let ego_pos = positions[ego];
        let mut others: Vec<BusId> = (0..n).filter(|&b| b != ego).collect();
        others.sort_by(|&a, &b| {
            let da = (positions[a] - ego_pos).rem_euclid(loop_len);
            let db = (positions[b] - ego_pos).rem_euclid(loop_len);
            da.total_cmp(&db).then(a.cmp(&b))
        });

        let mut obs = Vec::with_capacity(observation_len(m, n));
        for b in std::iter::once(ego).chain(others) {
            obs.push(positions[b] / loop_len);
            obs.push(forward[b] / loop_len);
            obs.push(backward[b] / loop_len);
            obs.push(self.buses[b].onboard.len() as f64 / cap);
        }
        let start = self.buses[ego].station;
        for k in 0..m {
            obs.push(self.queues[(start + k) % m].len() as f64 / cap);
        }
        obs.push(f64::from(self.time) / f64::from(cfg.episode_length));
        obs
    }
}
