//! Bus-corridor simulation and curriculum-learning toolkit for bus-bunching control.
//!
//! - [`env`]: discrete-event loop corridor with hold/skip/turn actions.
//! - [`lessons`]: action-space catalog, perturbation adversary, bunched initialization.
//! - [`dr`]: demand and departure-delay randomization.
//! - [`nn`]: small dense networks with hand-written backpropagation and optimizers.
//! - [`agent`]: masked-action PPO, rollout collection and checkpoints.
//! - [`setter`]: the lesson-proposing network and its REINFORCE update.
//! - [`curricula`]: hand-designed difficulty tables with budget and stagnancy schedules.
//! - [`config`]: the combined run configuration file.
//! - [`harness`]: experiment runs, line-delimited logs and plots.

pub mod agent;
pub mod config;
pub mod curricula;
pub mod dr;
pub mod env;
pub mod error;
pub mod harness;
pub mod lessons;
pub mod nn;
pub mod setter;

pub use error::{Error, Result};
