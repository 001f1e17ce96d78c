use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgsim_core::scenario::{self, Scenario, ScenarioError, SimError, Transport, TraceIoError};
use mgsim_core::metropolis_weights;

#[derive(Parser)]
#[command(name = "mgsim", version, about = "Islanded microgrid with consensus-based secondary frequency control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv plus summaries to the output directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        transport: Option<Transport>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the Metropolis weight matrix for the scenario's topology.
    Weights {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum CliError {
    Scenario(ScenarioError),
    Io { path: PathBuf, source: std::io::Error },
    Simulation(SimError),
}

impl CliError {
    fn class(&self) -> &'static str {
        match self {
            CliError::Scenario(_) => "scenario",
            CliError::Io { .. } => "io",
            CliError::Simulation(_) => "simulation",
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Scenario(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Simulation(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Scenario(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Simulation(e) => write!(f, "{e}"),
        }
    }
}

impl From<TraceIoError> for CliError {
    fn from(e: TraceIoError) -> Self {
        CliError::Io { path: e.path, source: e.source }
    }
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    scenario::parse_scenario(&text).map_err(CliError::Scenario)
}

fn write(path: PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            println!(
                "ok: {} DGs, {} links, {} rounds/episode, {} s at dt = {} s, seed {}",
                sc.dgs.len(),
                sc.graph.edges().count(),
                sc.rounds,
                sc.duration,
                sc.dt,
                sc.seed
            );
        }
        Command::Weights { scenario } => {
            let sc = load(&scenario)?;
            print!("{}", metropolis_weights(&sc.graph));
        }
        Command::Run { scenario, out, seed, transport, duration } => {
            let mut sc = load(&scenario)?;
            if let Some(seed) = seed {
                sc = sc.with_seed(seed);
            }
            if let Some(t) = transport {
                sc.transport = t;
            }
            if let Some(d) = duration {
                sc = sc.with_duration(d).map_err(CliError::Scenario)?;
            }
            let output = scenario::run_simulation(&sc).map_err(CliError::Simulation)?;
            fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
            scenario::write_trace_csv(&output.trace, sc.dgs.len(), &out.join("trace.csv"))?;
            write(out.join("summary.txt"), &format!("{}\n", output.summary))?;
            write(out.join("summary.kv"), &output.summary.to_key_values())?;
            println!("{}", output.summary);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.code())
        }
    }
}
