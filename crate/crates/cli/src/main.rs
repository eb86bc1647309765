//! `imbed` — batch front door for the parameter-marching solver.
//!
//! Usage: `imbed <scenario> --config <file> [--out <prefix>] [--seed N]`
//!
//! Exit codes: 0 success, 2 config error, 3 singularity, 4 non-convergence
//! (also step-size stalls, missing brackets, failed selftests), 5 I/O.

mod config;
mod scenarios;

use clap::Parser;
use serde_json::json;

use imbed_core::ImbedError;

use config::{RunConfig, Scenario};
use scenarios::Outputs;

#[derive(Parser, Debug)]
#[command(
    name = "imbed",
    version,
    about = "March determinants and resolvents in a complex parameter"
)]
struct Args {
    /// Scenario to run.
    #[arg(value_enum)]
    scenario: Scenario,
    /// JSON run configuration.
    #[arg(long)]
    config: String,
    /// Output path prefix, overriding the config.
    #[arg(long)]
    out: Option<String>,
    /// Seed override for randomized scenarios.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Engine(ImbedError),
}

impl CliError {
    fn engine(e: ImbedError) -> Self {
        match e {
            ImbedError::InvalidInput(msg) => CliError::Config(msg),
            ImbedError::DomainMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Engine(other),
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 5,
            CliError::Engine(e) => match e {
                ImbedError::Singularity { .. } => 3,
                _ => 4,
            },
        }
    }

    fn record(&self) -> serde_json::Value {
        let (kind, lambda, message) = match self {
            CliError::Config(m) => ("config".to_string(), None, m.clone()),
            CliError::Io(m) => ("io".to_string(), None, m.clone()),
            CliError::Engine(e) => (e.kind().to_string(), e.lambda(), e.to_string()),
        };
        json!({
            "error_kind": kind,
            "lambda": lambda.map(|l| json!([l.re, l.im])),
            "message": message,
        })
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.config)))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(declared) = config.scenario {
        if declared != args.scenario {
            return Err(CliError::Config(format!(
                "config declares scenario {declared:?}, command line asked for {:?}",
                args.scenario
            )));
        }
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let outputs = Outputs::new(config.output.as_ref(), args.out.as_deref());
    scenarios::run_scenario(args.scenario, &config, &outputs)
}

fn main() {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.record());
            std::process::exit(e.exit_code());
        }
    }
}
