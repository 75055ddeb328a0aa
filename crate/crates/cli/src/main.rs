//! `postcheck` — statistical verification of temporal properties of
//! parametric ODE models under posterior parameter uncertainty.
//!
//! Exit codes: 0 = H0 (or plain success), 1 = H1, 2 = Undecided, 3+ = error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use postcheck_cli::{
    cmd_estimate, cmd_gap, cmd_pipeline, cmd_plot_data, cmd_sample, cmd_simulate, cmd_verify,
    LoadedRun, TestMode, VerifyArgs,
};
use postcheck_core::smc::Decision;

#[derive(Parser)]
#[command(name = "postcheck", version, about)]
struct Cli {
    /// Bound on parallel verification workers.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (default: config entry, then POSTCHECK_OUT_DIR, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write state/output tables.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Parameter vector, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        /// Input condition (defaults to the first one in the model file).
        #[arg(long)]
        condition: Option<String>,
    },
    /// Run the chain and store multiplicity-compressed samples.
    Sample {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the spectral gap from a sample store.
    Gap {
        /// Sample store file.
        #[arg(long)]
        store: PathBuf,
        /// Use distinct records without multiplicity expansion.
        #[arg(long)]
        no_expand: bool,
        /// Report path (JSON); also printed to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one hypothesis test; the exit code carries the decision.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// Property name from the property file.
        #[arg(long)]
        property: String,
        /// fixed | sequential (default: config).
        #[arg(long)]
        mode: Option<String>,
        /// Spectral gap to plan with.
        #[arg(long, conflicts_with = "gap_from_store")]
        gamma: Option<f64>,
        /// Estimate the gap from the store before testing.
        #[arg(long)]
        gap_from_store: bool,
        /// Sample store; without it the test runs against a live chain.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Samples verified between sequential boundary checks.
        #[arg(long)]
        batch: Option<u64>,
        /// Sample cap for sequential runs.
        #[arg(long)]
        cap: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Ground truth (H0|H1) recorded for synthetic error-rate studies.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Multiplicity-weighted satisfaction probability over a whole store.
    Estimate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        property: String,
        #[arg(long)]
        store: PathBuf,
    },
    /// Full run: sample, estimate the gap, verify every property.
    Pipeline {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate a results directory into plot-ready CSV tables.
    PlotData {
        /// Directory holding outcome JSONs and/or sample stores.
        #[arg(long)]
        results: PathBuf,
        /// Output directory for the tables.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(text: &str) -> Result<TestMode, String> {
    match text {
        "fixed" => Ok(TestMode::Fixed),
        "sequential" => Ok(TestMode::Sequential),
        other => Err(format!("test mode must be fixed or sequential, got {other:?}")),
    }
}

fn parse_truth(text: &str) -> Result<Decision, String> {
    match text {
        "H0" => Ok(Decision::H0),
        "H1" => Ok(Decision::H1),
        other => Err(format!("truth must be H0 or H1, got {other:?}")),
    }
}

fn decision_code(decision: Decision) -> ExitCode {
    match decision {
        Decision::H0 => ExitCode::from(0),
        Decision::H1 => ExitCode::from(1),
        Decision::Undecided => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| format!("setting worker count: {e}"))?;
    }
    match cli.command {
        Command::Simulate { config, theta, condition } => {
            let run = LoadedRun::load(&config.config).map_err(|e| e.to_string())?;
            let out_dir = run.output_dir(config.out.as_deref());
            let condition = match &condition {
                Some(name) => name.clone(),
                None => run
                    .built
                    .system
                    .conditions()
                    .first()
                    .map(|c| c.name.clone())
                    .ok_or("model has no conditions")?,
            };
            let (states, outputs) =
                cmd_simulate(&run, &theta, &condition, &out_dir).map_err(|e| e.to_string())?;
            println!("{}", states.display());
            println!("{}", outputs.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { config, seed } => {
            let run = LoadedRun::load(&config.config).map_err(|e| e.to_string())?;
            let out_dir = run.output_dir(config.out.as_deref());
            let report = cmd_sample(&run, seed, None, &out_dir).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Gap { store, no_expand, out } => {
            let report =
                cmd_gap(&store, !no_expand, out.as_deref()).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            property,
            mode,
            gamma,
            gap_from_store,
            store,
            r,
            delta,
            epsilon,
            batch,
            cap,
            seed,
            truth,
        } => {
            let run = LoadedRun::load(&config.config).map_err(|e| e.to_string())?;
            let out_dir = run.output_dir(config.out.as_deref());
            let mode = match mode {
                Some(text) => parse_mode(&text)?,
                None => run.config.test.mode,
            };
            let truth = truth.as_deref().map(parse_truth).transpose()?;
            let args = VerifyArgs {
                property: &property,
                mode,
                gamma,
                gap_from_store,
                store: store.as_deref(),
                r_override: r,
                delta_override: delta,
                epsilon_override: epsilon,
                batch_size: batch,
                max_samples: cap,
                seed,
                truth,
            };
            let report = cmd_verify(&run, &args, &out_dir).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(decision_code(report.decision))
        }
        Command::Estimate { config, property, store } => {
            let run = LoadedRun::load(&config.config).map_err(|e| e.to_string())?;
            let out_dir = run.output_dir(config.out.as_deref());
            let report =
                cmd_estimate(&run, &property, &store, &out_dir).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline { config, seed } => {
            let run = LoadedRun::load(&config.config).map_err(|e| e.to_string())?;
            let out_dir = run.output_dir(config.out.as_deref());
            let report = cmd_pipeline(&run, seed, &out_dir).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData { results, out } => {
            let written = cmd_plot_data(&results, &out).map_err(|e| e.to_string())?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Exit code 2 is reserved for Undecided; usage errors use 3.
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(4)
        }
    }
}
