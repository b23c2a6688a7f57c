pub mod classifier;
pub mod cli;
pub mod error;
pub mod grid_env;
pub mod nn;
pub mod opponent_zoo;
pub mod orchestrator;
pub mod probe_agent;
pub mod rollout;

pub use error::{Error, Result};
