//! Scenario configuration, the coupled simulation loop and its outputs.

pub mod config;
pub mod runner;
pub mod summary;
pub mod trace;

pub use config::{parse_scenario, Scenario, ScenarioError, Transport};
pub use runner::{run_simulation, run_simulation_with, RunOptions, RunOutput, SimError};
pub use summary::{summarize, EpisodeRecord, EpisodeStats, EventSettling, Summary, SETTLING_BAND};
pub use trace::{write_trace, write_trace_csv, TraceIoError, TraceRecord};
