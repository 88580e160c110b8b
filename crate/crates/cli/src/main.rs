use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osc_cli::config::parse_config;
use osc_cli::sweep::sweep_to_dir;
use osc_cli::tools::{fit_csv, lower_bound_experiment, pareto_curves, single_run};
use osc_cli::CliError;
use osc_core::concentration::{validate_alln, validate_lil, Stress};
use osc_core::learner::{Algorithm, LearnerConfig};

#[derive(Parser)]
#[command(name = "osc", version, about = "Online selective classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one game and print its summary as JSON.
    Run {
        config: PathBuf,
        /// Index into the expanded parameter grid.
        #[arg(long, default_value_t = 0)]
        point: usize,
        /// Replicate index; the seed is derived from it and the base seed.
        #[arg(long, default_value_t = 0)]
        replicate: u32,
        /// Write the transcript CSV here ("-" for stdout, replacing the JSON).
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run the full grid and write summary.csv and aggregate.csv.
    Sweep {
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (default: OSC_WORKERS, else all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Monte Carlo check of the fixed-horizon deviation threshold.
    Alln(ValidateArgs),
    /// Monte Carlo check of the anytime deviation boundary.
    Lil(ValidateArgs),
    /// Coupled two-process experiment against the mistake/abstention lower bound.
    Lowerbound {
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, default_value_t = 5000)]
        horizon: u32,
        #[arg(long, default_value_t = 400)]
        seeds: u32,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Exploration rate (default: sqrt(2/T)).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Fit log-log slopes to a CSV with a `T` column.
    Rates {
        csv: PathBuf,
        /// Value column to fit, e.g. mean_excess_abstentions.
        #[arg(long, default_value = "value")]
        column: String,
    },
    /// Boundary curves of the achievable rate region as CSV.
    Paretodata {
        #[arg(long, default_value_t = 1.0)]
        alpha_star: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// all_ones, adaptive_stop or random(q).
    #[arg(long, default_value = "all_ones")]
    stress: Stress,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|e| e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            point,
            replicate,
            transcript,
        } => {
            let spec = parse_config(&config)?;
            let (tr, report) = single_run(&spec, point, replicate)?;
            match transcript {
                Some(p) if p.as_os_str() == "-" => print!("{}", tr.to_csv()),
                Some(p) => {
                    std::fs::write(&p, tr.to_csv())?;
                    println!("{}", json(&report));
                }
                None => println!("{}", json(&report)),
            }
        }
        Command::Sweep { config, output, workers } => {
            let spec = parse_config(&config)?;
            let result = sweep_to_dir(&spec, output, workers)?;
            eprintln!("{} rows written", result.rows.len());
        }
        Command::Alln(a) => {
            let report = validate_alln(a.p, a.delta, a.horizon, a.trials, a.stress, a.seed)?;
            println!("{}", json(&report));
            if !report.passed() {
                return Err(CliError::Check(format!("violation fraction {} exceeds {}", report.fraction, report.bound)));
            }
        }
        Command::Lil(a) => {
            let report = validate_lil(a.p, a.delta, a.horizon, a.trials, a.stress, a.seed)?;
            println!("{}", json(&report));
            if !report.passed() {
                return Err(CliError::Check(format!("violation fraction {} exceeds {}", report.fraction, report.bound)));
            }
        }
        Command::Lowerbound {
            algorithm,
            gamma,
            horizon,
            seeds,
            base_seed,
            p,
            eta,
            lambda,
            epsilon,
        } => {
            let mut cfg = LearnerConfig::new(algorithm, horizon);
            cfg.p = p.unwrap_or_else(|| (2.0 / horizon as f64).sqrt().min(0.5));
            if let Some(v) = eta {
                cfg.eta = v;
            }
            cfg.lambda = lambda.unwrap_or(cfg.lambda.min(cfg.p));
            if let Some(v) = epsilon {
                cfg.epsilon = v;
            }
            cfg.validate()?;
            let report = lower_bound_experiment(&cfg, gamma, seeds, base_seed)?;
            println!("{}", json(&report));
            if !report.pass {
                return Err(CliError::Check(format!("M = {} below bound {} − {}", report.m_hat, report.bound, report.margin)));
            }
        }
        Command::Rates { csv, column } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| CliError::Input(format!("{}: {e}", csv.display())))?;
            println!("{}", json(&fit_csv(&text, &column)?));
        }
        Command::Paretodata { alpha_star, points } => print!("{}", pareto_curves(alpha_star, points)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
