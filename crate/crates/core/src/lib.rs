//! Islanded microgrid simulator with distributed secondary frequency control.
//!
//! Five droop-controlled inverters share a single bus. Each has an agent that
//! measures the local frequency deviation and runs Metropolis-weighted average
//! consensus with its graph neighbors over a simulated (or loopback TCP)
//! network. The agreed average feeds a per-DG PI controller that shifts the
//! droop line until nominal frequency is restored.
//!
//! - [`topology`]: communication graph and Metropolis weights
//! - [`consensus`]: per-agent round-barrier state machine and batch oracle
//! - [`plant`]: quasi-static droop/power-balance model
//! - [`control`]: PI secondary controller
//! - [`netsim`]: event queue, latency/loss model, wire codec, TCP transport
//! - [`scenario`]: configuration, the coupled run loop, trace and summary

pub mod consensus;
pub mod control;
pub mod netsim;
pub mod plant;
pub mod scenario;
pub mod topology;

pub use consensus::{local_update, run_episode_sync, AgentState, EpisodeResult, StateMsg};
pub use control::{PiGains, PiState};
pub use netsim::{Envelope, EventQueue, QosConfig};
pub use plant::{droop_frequency, solve_bus, DgParams, LoadSchedule, PlantState};
pub use scenario::{parse_scenario, run_simulation, RunOutput, Scenario, Summary, TraceRecord};
pub use topology::{metropolis_weights, CommGraph, WeightMatrix};
