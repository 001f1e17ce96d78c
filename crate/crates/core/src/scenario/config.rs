//! Scenario files.
//!
//! A scenario is a flat TOML document. Every key is optional; omitted keys
//! take the defaults below.
//!
//! | key                  | type             | default                      |
//! |----------------------|------------------|------------------------------|
//! | `seed`               | integer          | 1                            |
//! | `duration`           | seconds          | 90                           |
//! | `dt`                 | seconds          | 0.01                         |
//! | `consensus_rounds`   | integer          | 50                           |
//! | `noise_sigma`        | Hz               | 0                            |
//! | `transport`          | `"sim"`/`"tcp"`  | `"sim"`                      |
//! | `tcp_base_port`      | integer          | 47100                        |
//! | `adjacency`          | rows of 0/1      | reference 5-node network     |
//! | `rated_frequency`    | Hz               | 50                           |
//! | `p0`                 | kW per DG        | 35 each                      |
//! | `droop`              | Hz/kW per DG     | 0.002 0.0022 0.0025 0.0027 0.003 |
//! | `tau_p`              | seconds          | 0.2                          |
//! | `rated_voltage`      | V                | 230                          |
//! | `reactive_setpoint`  | kvar             | 0                            |
//! | `voltage_droop`      | V/kvar           | 0                            |
//! | `pi_kp`              | Hz/Hz            | 0.05                         |
//! | `pi_ki`              | 1/s              | 0.05                         |
//! | `pi_out_min`         | Hz               | -0.5                         |
//! | `pi_out_max`         | Hz               | 0.5                          |
//! | `latency_min`        | seconds          | 0.002                        |
//! | `latency_max`        | seconds          | 0.010                        |
//! | `loss_prob`          | probability      | 0                            |
//! | `retransmit_timeout` | seconds          | 0.05                         |
//! | `load_initial`       | kW               | 175                          |
//! | `load_steps`         | `[[t, kW], ...]` | `[[30, 200], [60, 175]]`     |

use serde::Deserialize;
use thiserror::Error;

use crate::control::PiGains;
use crate::netsim::QosConfig;
use crate::plant::{self, DgParams, LoadSchedule, LoadStep};
use crate::topology::CommGraph;

pub const DEFAULT_DURATION: f64 = 90.0;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_ROUNDS: u64 = 50;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TCP_BASE_PORT: u16 = 47100;
pub const DEFAULT_PI_KP: f64 = 0.05;
pub const DEFAULT_PI_KI: f64 = 0.05;
pub const DEFAULT_PI_LIMIT: f64 = 0.5;

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "duration",
    "dt",
    "consensus_rounds",
    "noise_sigma",
    "transport",
    "tcp_base_port",
    "adjacency",
    "rated_frequency",
    "p0",
    "droop",
    "tau_p",
    "rated_voltage",
    "reactive_setpoint",
    "voltage_droop",
    "pi_kp",
    "pi_ki",
    "pi_out_min",
    "pi_out_max",
    "latency_min",
    "latency_max",
    "loss_prob",
    "retransmit_timeout",
    "load_initial",
    "load_steps",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("unknown scenario key `{0}`")]
    UnknownKey(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("dimension mismatch: `{field}` has {found} entries but the graph has {expected} nodes")]
    Dimension { field: &'static str, expected: usize, found: usize },
}

fn invalid(field: &'static str, reason: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field, reason: reason.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Sim,
    Tcp,
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sim" => Ok(Transport::Sim),
            "tcp" => Ok(Transport::Tcp),
            other => Err(format!("unknown transport `{other}` (expected sim or tcp)")),
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: CommGraph,
    pub dgs: Vec<DgParams>,
    pub gains: PiGains,
    pub qos: QosConfig,
    pub schedule: LoadSchedule,
    pub rounds: u64,
    pub noise_sigma: f64,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub transport: Transport,
    pub tcp_base_port: u16,
}

impl Default for Scenario {
    fn default() -> Self {
        parse_scenario("").expect("defaults are valid")
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: Option<u64>,
    duration: Option<f64>,
    dt: Option<f64>,
    consensus_rounds: Option<u64>,
    noise_sigma: Option<f64>,
    transport: Option<Transport>,
    tcp_base_port: Option<u16>,
    adjacency: Option<Vec<Vec<i64>>>,
    rated_frequency: Option<f64>,
    p0: Option<Vec<f64>>,
    droop: Option<Vec<f64>>,
    tau_p: Option<f64>,
    rated_voltage: Option<f64>,
    reactive_setpoint: Option<f64>,
    voltage_droop: Option<f64>,
    pi_kp: Option<f64>,
    pi_ki: Option<f64>,
    pi_out_min: Option<f64>,
    pi_out_max: Option<f64>,
    latency_min: Option<f64>,
    latency_max: Option<f64>,
    loss_prob: Option<f64>,
    retransmit_timeout: Option<f64>,
    load_initial: Option<f64>,
    load_steps: Option<Vec<(f64, f64)>>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
    if let Some(key) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(ScenarioError::UnknownKey(key.clone()));
    }
    let raw: RawScenario = table.try_into().map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
    raw.build()
}

fn per_dg(field: &'static str, values: Option<Vec<f64>>, default: impl Fn(usize) -> f64, n: usize) -> Result<Vec<f64>, ScenarioError> {
    match values {
        None => Ok((0..n).map(default).collect()),
        Some(v) if v.len() != n => Err(ScenarioError::Dimension { field, expected: n, found: v.len() }),
        Some(v) => Ok(v),
    }
}

impl RawScenario {
    fn build(self) -> Result<Scenario, ScenarioError> {
        let graph = match &self.adjacency {
            None => CommGraph::reference(),
            Some(rows) => CommGraph::from_rows(rows).map_err(|e| invalid("adjacency", e))?,
        };
        let n = graph.len();

        let f0 = self.rated_frequency.unwrap_or(plant::RATED_FREQUENCY);
        let default_droop = |i: usize| {
            if n == plant::REFERENCE_DROOP.len() {
                plant::REFERENCE_DROOP[i]
            } else {
                plant::REFERENCE_DROOP[0]
            }
        };
        let droop = per_dg("droop", self.droop, default_droop, n)?;
        let p0 = per_dg("p0", self.p0, |_| plant::REFERENCE_P0, n)?;
        let tau_p = self.tau_p.unwrap_or(plant::DEFAULT_TAU_P);
        let dgs: Vec<DgParams> = droop
            .iter()
            .zip(&p0)
            .map(|(&kp, &p0)| DgParams {
                f0,
                p0,
                kp,
                tau_p,
                v0: self.rated_voltage.unwrap_or(plant::RATED_VOLTAGE),
                q0: self.reactive_setpoint.unwrap_or(0.0),
                kq: self.voltage_droop.unwrap_or(0.0),
            })
            .collect();
        for (i, dg) in dgs.iter().enumerate() {
            dg.validate(i).map_err(|e| {
                let field = match e {
                    plant::PlantError::NonPositive { field: "kp", .. } => "droop",
                    plant::PlantError::NonPositive { field: "tau_p", .. } => "tau_p",
                    _ => "rated_frequency",
                };
                invalid(field, e)
            })?;
        }

        let gains = PiGains {
            kp: self.pi_kp.unwrap_or(DEFAULT_PI_KP),
            ki: self.pi_ki.unwrap_or(DEFAULT_PI_KI),
            out_min: self.pi_out_min.unwrap_or(-DEFAULT_PI_LIMIT),
            out_max: self.pi_out_max.unwrap_or(DEFAULT_PI_LIMIT),
        };
        gains.validate().map_err(|e| {
            let field = if !gains.kp.is_finite() {
                "pi_kp"
            } else if !(gains.ki >= 0.0) {
                "pi_ki"
            } else {
                "pi_out_min"
            };
            invalid(field, e)
        })?;

        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let defaults = QosConfig::default();
        let qos = QosConfig {
            latency_min: self.latency_min.unwrap_or(defaults.latency_min),
            latency_max: self.latency_max.unwrap_or(defaults.latency_max),
            loss_prob: self.loss_prob.unwrap_or(defaults.loss_prob),
            retransmit_timeout: self.retransmit_timeout.unwrap_or(defaults.retransmit_timeout),
            seed,
        };
        qos.validate().map_err(|e| invalid("latency_min", e.0))?;

        let reference = LoadSchedule::reference();
        let steps = match self.load_steps {
            None => reference.steps().to_vec(),
            Some(v) => v.into_iter().map(|(time, load)| LoadStep { time, load }).collect(),
        };
        let schedule = LoadSchedule::new(self.load_initial.unwrap_or(reference.initial()), steps)
            .map_err(|e| invalid("load_steps", e))?;

        let dt = self.dt.unwrap_or(DEFAULT_DT);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let limit = plant::max_step(&dgs);
        if dt > limit * (1.0 + 1e-12) {
            return Err(invalid("dt", format!("{dt} s exceeds tau_p / 5 = {limit} s")));
        }
        let duration = self.duration.unwrap_or(DEFAULT_DURATION);
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid("duration", format!("must be positive, got {duration}")));
        }
        let ticks = duration / dt;
        if (ticks - ticks.round()).abs() > 1e-6 {
            return Err(invalid("duration", format!("{duration} s is not a whole number of {dt} s steps")));
        }
        if let Some(last) = schedule.steps().last() {
            if duration <= last.time {
                return Err(invalid("duration", format!("{duration} s must exceed the last load step at {} s", last.time)));
            }
        }
        let noise_sigma = self.noise_sigma.unwrap_or(0.0);
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", format!("must be non-negative, got {noise_sigma}")));
        }

        Ok(Scenario {
            graph,
            dgs,
            gains,
            qos,
            schedule,
            rounds: self.consensus_rounds.unwrap_or(DEFAULT_ROUNDS),
            noise_sigma,
            dt,
            duration,
            seed,
            transport: self.transport.unwrap_or_default(),
            tcp_base_port: self.tcp_base_port.unwrap_or(DEFAULT_TCP_BASE_PORT),
        })
    }
}

impl Scenario {
    /// Reseeds every random stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.qos.seed = seed;
        self
    }

    /// Changes the duration, keeping it a whole number of steps and past the
    /// last load step.
    pub fn with_duration(mut self, duration: f64) -> Result<Self, ScenarioError> {
        let ticks = duration / self.dt;
        if !(duration > 0.0) || (ticks - ticks.round()).abs() > 1e-6 {
            return Err(invalid("duration", format!("{duration} s is not a positive whole number of {} s steps", self.dt)));
        }
        if let Some(last) = self.schedule.steps().last() {
            if duration <= last.time {
                return Err(invalid("duration", format!("{duration} s must exceed the last load step at {} s", last.time)));
            }
        }
        self.duration = duration;
        Ok(self)
    }

    /// Number of plant steps in the run.
    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// Same scenario with the secondary controller switched off.
    pub fn primary_only(mut self) -> Self {
        self.gains = self.gains.disabled();
        self
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed ^ 0x05EE_D0FA_015E
    }
}
