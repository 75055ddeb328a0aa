//! Implementations of the CLI subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use postcheck_core::bltl::Formula;
use postcheck_core::config::{ConfigError, PropertyEntry};
use postcheck_core::diagnostics::{estimate_gap, GapError};
use postcheck_core::model::{integrate, observe, IntegrationError, ModelError, ParameterVector};
use postcheck_core::posterior::{
    Chain, OdePosterior, PosteriorError, Prior, ProposalSpec, SampleStore, StoreBuilder,
    StoreError,
};
use postcheck_core::smc::{
    estimate_probability, fixed_test_live, fixed_test_store, sequential_test_live,
    sequential_test_store, Decision, FixedTestPlan, SequentialTestPlan, SmcError, Verifier,
};

use crate::runconfig::{LoadedRun, TestMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ModelConfig(#[from] ConfigError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| CliError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, contents)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Simulate one trajectory and write `states.csv` (every state at every grid
/// time) and `outputs.csv` (every observable at every grid time).
pub fn cmd_simulate(
    run: &LoadedRun,
    theta: &[f64],
    condition: &str,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), CliError> {
    let theta = ParameterVector::new(theta.to_vec());
    run.built.space.validate(&theta)?;
    let traj = integrate(&run.built.system, &theta, condition, &run.built.grid, &run.control)?;

    let mut states = String::from("time_min");
    for name in run.built.system.state_names() {
        states.push(',');
        states.push_str(name);
    }
    states.push('\n');
    for (i, &t) in run.built.grid.times().iter().enumerate() {
        states.push_str(&t.to_string());
        for v in traj.row(i) {
            states.push(',');
            states.push_str(&v.to_string());
        }
        states.push('\n');
    }
    let states_path = out_dir.join("states.csv");
    write_file(&states_path, states.as_bytes())?;

    let outputs = observe(&run.built.system, &traj, run.built.grid.times())?;
    let mut table = String::from("time_min");
    for obs in run.built.system.observables() {
        table.push(',');
        table.push_str(&obs.name);
    }
    table.push('\n');
    for (i, &t) in run.built.grid.times().iter().enumerate() {
        table.push_str(&t.to_string());
        for row in &outputs {
            table.push(',');
            table.push_str(&row[i].to_string());
        }
        table.push('\n');
    }
    let outputs_path = out_dir.join("outputs.csv");
    write_file(&outputs_path, table.as_bytes())?;
    Ok((states_path, outputs_path))
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleReport {
    pub seed: u64,
    pub config_hash: String,
    pub burn_in: u64,
    pub samples: u64,
    pub distinct: usize,
    pub acceptance_rate: f64,
    pub integration_failures: u64,
    pub store_path: String,
    pub wall_time_s: f64,
}

/// Run the chain and persist the multiplicity-compressed store plus a JSON
/// summary. Progress goes to standard error. `samples_override` supports the
/// pipeline's restart path when the gap estimate asks for a longer series.
pub fn cmd_sample(
    run: &LoadedRun,
    seed_override: Option<u64>,
    samples_override: Option<u64>,
    out_dir: &Path,
) -> Result<SampleReport, CliError> {
    let start = Instant::now();
    let seed = seed_override.unwrap_or(run.config.chain.seed);
    let prior = Prior::uniform(run.built.space.clone());
    let proposal = ProposalSpec::diagonal(run.proposal_sigmas.clone())?;
    let target =
        OdePosterior::new(&run.built.system, &prior, &run.data, &run.built.grid, run.control)?;

    let burn_in = run.config.chain.burn_in;
    let samples = samples_override.unwrap_or(run.config.chain.samples);
    let mut chain = Chain::init_from_prior(&target, &proposal, &run.built.space, seed, 100)?;
    let mut progress = Progress::new(burn_in + samples);
    for _ in 0..burn_in {
        chain.step();
        progress.tick(chain.steps(), chain.acceptance_rate(), "burn-in");
    }
    let mut builder = StoreBuilder::new(run.built.space.dims(), burn_in, Some(seed));
    for _ in 0..samples {
        chain.step();
        builder.push(chain.state().theta.as_slice(), chain.state().log_posterior());
        progress.tick(chain.steps(), chain.acceptance_rate(), "sampling");
    }
    let store = builder.finish();

    let store_path = out_dir.join("store.txt");
    if let Some(parent) = store_path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| CliError::Io { path: parent.display().to_string(), source })?;
    }
    store
        .save(&store_path)
        .map_err(|source| CliError::Io { path: store_path.display().to_string(), source })?;

    let report = SampleReport {
        seed,
        config_hash: run.config_hash.clone(),
        burn_in,
        samples,
        distinct: store.records().len(),
        acceptance_rate: chain.acceptance_rate(),
        integration_failures: target.integration_failures(),
        store_path: store_path.display().to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("sample_report.json"), &report)?;
    Ok(report)
}

/// Periodic step-count and acceptance-rate lines on standard error.
struct Progress {
    total: u64,
    last: Instant,
}

impl Progress {
    fn new(total: u64) -> Self {
        Self { total, last: Instant::now() }
    }

    fn tick(&mut self, step: u64, acceptance: f64, phase: &str) {
        if self.last.elapsed().as_secs_f64() >= 5.0 {
            eprintln!(
                "{phase}: step {step}/{} acceptance {:.1}%",
                self.total,
                acceptance * 100.0
            );
            let _ = std::io::stderr().flush();
            self.last = Instant::now();
        }
    }
}

// ---------------------------------------------------------------------------
// gap
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub gamma_hat: f64,
    pub eta: usize,
    pub iterations: usize,
    pub n: usize,
    pub expanded: bool,
    pub restarted: bool,
    pub store_path: String,
}

/// Estimate the spectral gap from a stored chain. `expand` replays
/// multiplicities so the series matches the raw step sequence (the default;
/// disabling it is only useful for diagnostics on distinct states).
pub fn cmd_gap(store_path: &Path, expand: bool, out: Option<&Path>) -> Result<GapReport, CliError> {
    let store = SampleStore::load(store_path)?;
    let columns = if expand {
        store.expanded_columns()
    } else {
        let mut columns = vec![Vec::with_capacity(store.records().len()); store.dims()];
        for rec in store.records() {
            for (k, col) in columns.iter_mut().enumerate() {
                col.push(rec.theta[k]);
            }
        }
        columns
    };
    let estimate = estimate_gap(&columns)?;
    let report = GapReport {
        gamma_hat: estimate.gamma_hat,
        eta: estimate.eta,
        iterations: estimate.iterations,
        n: estimate.n_used,
        expanded: expand,
        restarted: estimate.restarted,
        store_path: store_path.display().to_string(),
    };
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub property: String,
    pub condition: String,
    pub formula: String,
    pub mode: TestMode,
    pub decision: Decision,
    pub n: u64,
    #[serde(rename = "S")]
    pub successes: u64,
    pub p_hat: f64,
    /// Planned sample count (fixed mode) or boundary offset (sequential).
    pub n_or_m: f64,
    pub gamma_used: f64,
    pub r: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub config_hash: String,
    pub integration_failures: u64,
    pub wall_time_s: f64,
    /// Ground truth for synthetic studies; consumed by plot-data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Decision>,
}

/// How `cmd_verify` obtains its verdict stream and its gap estimate.
pub struct VerifyArgs<'a> {
    pub property: &'a str,
    pub mode: TestMode,
    /// Explicit spectral gap, unless `gap_from_store` is set.
    pub gamma: Option<f64>,
    /// Estimate the gap from the store before testing.
    pub gap_from_store: bool,
    pub store: Option<&'a Path>,
    pub r_override: Option<f64>,
    pub delta_override: Option<f64>,
    pub epsilon_override: Option<f64>,
    pub batch_size: Option<u64>,
    pub max_samples: Option<u64>,
    pub seed: Option<u64>,
    pub truth: Option<Decision>,
}

fn resolve_spec(
    run: &LoadedRun,
    entry: &PropertyEntry,
    args: &VerifyArgs<'_>,
) -> Result<(Formula, f64, f64, f64), CliError> {
    let formula = entry.compile(run.built.system.state_names())?;
    let r = args.r_override.or(run.config.test.r).unwrap_or(entry.r);
    let delta = args.delta_override.or(run.config.test.delta).unwrap_or(entry.delta);
    let epsilon = args.epsilon_override.unwrap_or(run.config.test.epsilon);
    Ok((formula, r, delta, epsilon))
}

/// Run one hypothesis test, either against a stored chain (decoupled, with
/// parallel verification of distinct parameters) or against a live chain.
pub fn cmd_verify(
    run: &LoadedRun,
    args: &VerifyArgs<'_>,
    out_dir: &Path,
) -> Result<VerifyReport, CliError> {
    let start = Instant::now();
    let entry = run.property(args.property)?;
    let (formula, r, delta, epsilon) = resolve_spec(run, entry, args)?;
    let seed = args.seed.unwrap_or(run.config.chain.seed);
    let batch_size = args.batch_size.unwrap_or(run.config.test.batch_size);
    let max_samples = args.max_samples.or(run.config.test.max_samples);

    let store = match args.store {
        Some(path) => Some(SampleStore::load(path)?),
        None => None,
    };

    let gamma = if args.gap_from_store {
        let store = store.as_ref().ok_or_else(|| {
            CliError::Config("--gap-from-store needs --store".into())
        })?;
        estimate_gap(&store.expanded_columns())?.gamma_hat
    } else {
        args.gamma.ok_or_else(|| {
            CliError::Config("no spectral gap: pass --gamma or --gap-from-store".into())
        })?
    };

    let verifier = Verifier::new(
        &run.built.system,
        &run.built.grid,
        &formula,
        &entry.condition,
        run.control,
    )?;

    let (outcome, n_or_m) = match (args.mode, &store) {
        (TestMode::Fixed, Some(store)) => {
            let plan = FixedTestPlan::from_error_bound(epsilon, delta, gamma)?;
            (fixed_test_store(r, plan.samples, store, &verifier)?, plan.samples as f64)
        }
        (TestMode::Sequential, Some(store)) => {
            let plan =
                SequentialTestPlan::from_error_bound(epsilon, delta, gamma, r, max_samples, batch_size)?;
            (sequential_test_store(r, &plan, store, &verifier)?, plan.threshold)
        }
        (mode, None) => {
            // Live chain: burn in, then test while stepping.
            let prior = Prior::uniform(run.built.space.clone());
            let proposal = ProposalSpec::diagonal(run.proposal_sigmas.clone())?;
            let target = OdePosterior::new(
                &run.built.system,
                &prior,
                &run.data,
                &run.built.grid,
                run.control,
            )?;
            let mut chain =
                Chain::init_from_prior(&target, &proposal, &run.built.space, seed, 100)?;
            chain.burn_in(run.config.chain.burn_in);
            match mode {
                TestMode::Fixed => {
                    let plan = FixedTestPlan::from_error_bound(epsilon, delta, gamma)?;
                    (fixed_test_live(r, plan.samples, &mut chain, &verifier)?, plan.samples as f64)
                }
                TestMode::Sequential => {
                    let cap = max_samples.ok_or_else(|| {
                        CliError::Config(
                            "sequential live runs need an explicit --cap (or [test] max_samples)"
                                .into(),
                        )
                    })?;
                    let plan = SequentialTestPlan::from_error_bound(
                        epsilon, delta, gamma, r, Some(cap), batch_size,
                    )?;
                    (sequential_test_live(r, &plan, &mut chain, &verifier), plan.threshold)
                }
            }
        }
    };

    let report = VerifyReport {
        property: entry.name.clone(),
        condition: entry.condition.clone(),
        formula: formula.to_string(),
        mode: args.mode,
        decision: outcome.decision,
        n: outcome.samples_used,
        successes: outcome.successes,
        p_hat: outcome.p_hat,
        n_or_m,
        gamma_used: gamma,
        r,
        delta,
        epsilon,
        seed,
        config_hash: run.config_hash.clone(),
        integration_failures: verifier.failures(),
        wall_time_s: start.elapsed().as_secs_f64(),
        truth: args.truth,
    };
    write_json(&out_dir.join(format!("verify_{}.json", entry.name)), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub property: String,
    pub condition: String,
    pub p_hat: f64,
    pub n: u64,
    pub integration_failures: u64,
    pub seed: u64,
    pub config_hash: String,
}

/// Multiplicity-weighted satisfaction probability of one property over a
/// whole stored chain.
pub fn cmd_estimate(
    run: &LoadedRun,
    property: &str,
    store_path: &Path,
    out_dir: &Path,
) -> Result<EstimateReport, CliError> {
    let entry = run.property(property)?;
    let formula = entry.compile(run.built.system.state_names())?;
    let store = SampleStore::load(store_path)?;
    let verifier = Verifier::new(
        &run.built.system,
        &run.built.grid,
        &formula,
        &entry.condition,
        run.control,
    )?;
    let (p_hat, n) = estimate_probability(&store, &verifier)?;
    let report = EstimateReport {
        property: entry.name.clone(),
        condition: entry.condition.clone(),
        p_hat,
        n,
        integration_failures: verifier.failures(),
        seed: store.seed().unwrap_or(run.config.chain.seed),
        config_hash: run.config_hash.clone(),
    };
    write_json(&out_dir.join(format!("estimate_{}.json", entry.name)), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub config_hash: String,
    pub store_path: String,
    pub gamma_hat: f64,
    pub gap_restarted: bool,
    pub acceptance_rate: f64,
    pub decisions: Vec<VerifyReport>,
    pub wall_time_s: f64,
}

/// The recommended offline workflow: run the chain once, estimate the gap
/// (extending the chain if the estimate asks for more data), then verify
/// every property against the stored samples. Partial artifacts are kept on
/// failure.
pub fn cmd_pipeline(
    run: &LoadedRun,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<PipelineReport, CliError> {
    let start = Instant::now();
    let mut sample_report = cmd_sample(run, seed_override, None, out_dir)
        .map_err(|e| CliError::Stage { stage: "sample", message: e.to_string() })?;
    let mut store_path = PathBuf::from(&sample_report.store_path);

    let gap_path = out_dir.join("gap.json");
    let mut restarted = false;
    let gap_report = loop {
        match cmd_gap(&store_path, true, Some(&gap_path)) {
            Ok(mut report) => {
                report.restarted = restarted;
                write_json(&gap_path, &report)?;
                break report;
            }
            Err(CliError::Gap(GapError::InsufficientData { required, .. })) if !restarted => {
                // One restart with the requested series length.
                let longer = required.max(run.config.chain.samples);
                eprintln!("gap: estimate needs {longer} samples; restarting the chain");
                restarted = true;
                sample_report = cmd_sample(run, seed_override, Some(longer), out_dir)
                    .map_err(|e| CliError::Stage { stage: "sample", message: e.to_string() })?;
                store_path = PathBuf::from(&sample_report.store_path);
            }
            Err(e) => {
                return Err(CliError::Stage { stage: "gap", message: e.to_string() });
            }
        }
    };

    let mut decisions = Vec::new();
    for entry in &run.properties {
        let args = VerifyArgs {
            property: &entry.name,
            mode: run.config.test.mode,
            gamma: Some(gap_report.gamma_hat),
            gap_from_store: false,
            store: Some(&store_path),
            r_override: None,
            delta_override: None,
            epsilon_override: None,
            batch_size: None,
            max_samples: None,
            seed: seed_override,
            truth: None,
        };
        let report = cmd_verify(run, &args, out_dir)
            .map_err(|e| CliError::Stage { stage: "verify", message: format!("{}: {e}", entry.name) })?;
        eprintln!(
            "{}: {:?} (p_hat {:.4}, n {}, gamma {:.5})",
            entry.name, report.decision, report.p_hat, report.n, report.gamma_used
        );
        decisions.push(report);
    }

    let report = PipelineReport {
        seed: seed_override.unwrap_or(run.config.chain.seed),
        config_hash: run.config_hash.clone(),
        store_path: store_path.display().to_string(),
        gamma_hat: gap_report.gamma_hat,
        gap_restarted: gap_report.restarted,
        acceptance_rate: sample_report.acceptance_rate,
        decisions,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("pipeline_report.json"), &report)?;
    Ok(report)
}
