use std::io::Write;

use serde::{Deserialize, Serialize};

use super::state::SimState;
use crate::error::Result;

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u32,
    pub bus_positions: Vec<f64>,
    pub queue_lengths: Vec<usize>,
    /// Reward credited at this record, when it marks a decision.
    pub reward: Option<f64>,
}

impl TraceRecord {
    pub fn capture(state: &SimState, reward: Option<f64>) -> Self {
        Self {
            tick: state.tick(),
            bus_positions: state.bus_positions(),
            queue_lengths: state.queue_lengths(),
            reward,
        }
    }
}

/// Writes trace records as JSON lines.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
