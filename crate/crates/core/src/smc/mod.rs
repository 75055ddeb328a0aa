//! Hypothesis tests over chain samples.
//!
//! Decides between `H0: P >= r + delta` and `H1: P <= r - delta`, where `P`
//! is the probability (under the parameter posterior) that a sampled
//! trajectory satisfies a property. Samples are dependent chain states, so
//! the sample-size bounds take the chain's spectral gap into account.
//!
//! Two test shapes: a fixed-sample-size test (`H0` iff `S >= N*r` after
//! exactly `N` samples) and a sequential test stopping at the first `n` with
//! `S >= n*r + M` (`H0`) or `S <= n*r - M` (`H1`). Both run against a live
//! chain or against a recorded [`SampleStore`]; store-based runs verify each
//! distinct parameter once, in parallel, and weight by multiplicity.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bltl::{satisfies, Formula};
use crate::model::{
    integrate, OdeSystem, ParameterVector, StepControl, TimeGrid,
};
use crate::posterior::{Chain, SampleStore};

#[derive(Debug, Error, PartialEq)]
pub enum SmcError {
    #[error("{name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("source yields {available} samples but the test needs {needed}")]
    ShortSource { needed: u64, available: u64 },
    #[error("sample store is empty")]
    EmptyStore,
    #[error("store carries {got}-dimensional parameters, the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("formula references state index {index} but the system has {dims} states")]
    FormulaVarOutOfRange { index: usize, dims: usize },
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("batch size must be positive")]
    ZeroBatch,
}

/// Test verdict. `Undecided` only occurs when a sequential run hits its
/// sample cap (or exhausts a finite store) before crossing a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
    Undecided,
}

/// Outcome of a hypothesis test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub decision: Decision,
    /// Samples consumed (for batched sequential runs: rounded up to the
    /// batch boundary containing the deciding step).
    pub samples_used: u64,
    pub successes: u64,
    /// Empirical satisfaction ratio over the consumed samples.
    pub p_hat: f64,
}

impl TestOutcome {
    fn new(decision: Decision, samples_used: u64, successes: u64) -> Self {
        let p_hat = if samples_used == 0 {
            0.0
        } else {
            successes as f64 / samples_used as f64
        };
        Self { decision, samples_used, successes, p_hat }
    }
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<(), SmcError> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(SmcError::OutOfRange { name, value, range })
    }
}

/// Smallest sample count `N` with `exp(-gamma * delta^2 * N) <= epsilon`,
/// the error bound of the fixed-sample-size test for a chain with spectral
/// gap `gamma` and indifference half-width `delta`.
pub fn fixed_sample_size(epsilon: f64, delta: f64, gamma: f64) -> Result<u64, SmcError> {
    check_range("epsilon", epsilon, 0.0, 1.0, "(0, 1)")?;
    check_range("delta", delta, 0.0, 1.0, "(0, 1)")?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(SmcError::OutOfRange { name: "gamma", value: gamma, range: "(0, 1]" });
    }
    Ok(((1.0 / epsilon).ln() / (gamma * delta * delta)).ceil() as u64)
}

/// Boundary offset `M` of the sequential test guaranteeing error probability
/// at most `epsilon`:
/// `M = log(2 / (epsilon * gamma * delta^2)) / (2*gamma*delta + gamma*delta^2 / (1 - r))`.
pub fn sequential_threshold(
    epsilon: f64,
    delta: f64,
    gamma: f64,
    r: f64,
) -> Result<f64, SmcError> {
    check_range("epsilon", epsilon, 0.0, 1.0, "(0, 1)")?;
    check_range("delta", delta, 0.0, 1.0, "(0, 1)")?;
    check_range("r", r, 0.0, 1.0, "(0, 1)")?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(SmcError::OutOfRange { name: "gamma", value: gamma, range: "(0, 1]" });
    }
    let numerator = (2.0 / (epsilon * gamma * delta * delta)).ln();
    let denominator = 2.0 * gamma * delta + gamma * delta * delta / (1.0 - r);
    Ok(numerator / denominator)
}

/// A property to test: the formula, the probability threshold `r`, the
/// indifference half-width `delta`, the error budget `epsilon` and the input
/// condition the trajectories are simulated under.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpec {
    pub formula: Formula,
    pub r: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub condition: String,
}

impl HypothesisSpec {
    pub fn new(
        formula: Formula,
        r: f64,
        delta: f64,
        epsilon: f64,
        condition: impl Into<String>,
    ) -> Result<Self, SmcError> {
        check_range("r", r, 0.0, 1.0, "(0, 1)")?;
        check_range("epsilon", epsilon, 0.0, 1.0, "(0, 1)")?;
        if !(delta > 0.0 && delta < r.min(1.0 - r)) {
            return Err(SmcError::OutOfRange {
                name: "delta",
                value: delta,
                range: "(0, min(r, 1 - r))",
            });
        }
        Ok(Self { formula, r, delta, epsilon, condition: condition.into() })
    }
}

/// Fixed-sample-size test plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedTestPlan {
    pub samples: u64,
    pub gamma_used: f64,
}

impl FixedTestPlan {
    /// Derive the sample count from the error budget and the gap estimate.
    pub fn from_error_bound(epsilon: f64, delta: f64, gamma: f64) -> Result<Self, SmcError> {
        Ok(Self { samples: fixed_sample_size(epsilon, delta, gamma)?, gamma_used: gamma })
    }
}

/// Sequential test plan. `max_samples` caps the run (`None` = unbounded);
/// `batch_size` is the number of samples verified between boundary checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequentialTestPlan {
    pub threshold: f64,
    pub gamma_used: f64,
    pub max_samples: Option<u64>,
    pub batch_size: u64,
}

impl SequentialTestPlan {
    pub fn from_error_bound(
        epsilon: f64,
        delta: f64,
        gamma: f64,
        r: f64,
        max_samples: Option<u64>,
        batch_size: u64,
    ) -> Result<Self, SmcError> {
        if batch_size == 0 {
            return Err(SmcError::ZeroBatch);
        }
        Ok(Self {
            threshold: sequential_threshold(epsilon, delta, gamma, r)?,
            gamma_used: gamma,
            max_samples,
            batch_size,
        })
    }
}

// ---------------------------------------------------------------------------
// Decision folds over verdict streams.
// ---------------------------------------------------------------------------

/// Fixed-sample-size decision rule over a verdict stream: `H0` iff
/// `S >= N*r` after exactly `N` verdicts (ties go to `H0`). Errors if the
/// stream runs short.
pub fn fixed_test_verdicts(
    r: f64,
    n_samples: u64,
    verdicts: impl IntoIterator<Item = bool>,
) -> Result<TestOutcome, SmcError> {
    let mut n = 0u64;
    let mut s = 0u64;
    for v in verdicts {
        if n == n_samples {
            break;
        }
        n += 1;
        if v {
            s += 1;
        }
    }
    if n < n_samples {
        return Err(SmcError::ShortSource { needed: n_samples, available: n });
    }
    let decision = if s as f64 >= n_samples as f64 * r { Decision::H0 } else { Decision::H1 };
    Ok(TestOutcome::new(decision, n_samples, s))
}

/// Sequential decision rule over a verdict stream.
///
/// The crossing conditions are evaluated at every step, so the decision is
/// the one the step-by-step test would make; with `batch_size > 1` the run
/// keeps consuming to the end of the batch containing the deciding step
/// (samples verified in parallel are paid for in full), which is where the
/// reported sample count stops. Exhaustion of the stream or the cap without
/// a crossing yields `Undecided`.
pub fn sequential_test_verdicts(
    r: f64,
    threshold: f64,
    batch_size: u64,
    max_samples: Option<u64>,
    verdicts: impl IntoIterator<Item = bool>,
) -> TestOutcome {
    assert!(batch_size > 0, "batch size must be positive");
    let mut n = 0u64;
    let mut s = 0u64;
    let mut decision: Option<Decision> = None;
    for v in verdicts {
        if max_samples.is_some_and(|cap| n >= cap) {
            break;
        }
        n += 1;
        if v {
            s += 1;
        }
        if decision.is_none() {
            let drift = s as f64 - n as f64 * r;
            if drift >= threshold {
                decision = Some(Decision::H0);
            } else if drift <= -threshold {
                decision = Some(Decision::H1);
            }
        }
        if decision.is_some() && n % batch_size == 0 {
            break;
        }
    }
    TestOutcome::new(decision.unwrap_or(Decision::Undecided), n, s)
}

// ---------------------------------------------------------------------------
// Trajectory verification.
// ---------------------------------------------------------------------------

/// Simulate the trajectory for `theta` under `condition` and evaluate the
/// formula on it. Integration failure counts as non-satisfaction.
pub fn verify_sample(
    system: &OdeSystem,
    theta: &ParameterVector,
    grid: &TimeGrid,
    formula: &Formula,
    condition: &str,
    control: &StepControl,
) -> bool {
    integrate(system, theta, condition, grid, control)
        .map(|traj| satisfies(formula, &traj))
        .unwrap_or(false)
}

/// Binds a model, grid, formula and condition into a reusable verification
/// closure. Immutable and callable from parallel workers; integration
/// failures are counted and a few offending parameters retained for audit.
pub struct Verifier<'a> {
    system: &'a OdeSystem,
    grid: &'a TimeGrid,
    formula: &'a Formula,
    condition: String,
    control: StepControl,
    failures: AtomicU64,
    failed_examples: Mutex<Vec<ParameterVector>>,
}

const MAX_FAILURE_EXAMPLES: usize = 16;

impl<'a> Verifier<'a> {
    pub fn new(
        system: &'a OdeSystem,
        grid: &'a TimeGrid,
        formula: &'a Formula,
        condition: &str,
        control: StepControl,
    ) -> Result<Self, SmcError> {
        system
            .condition(condition)
            .map_err(|_| SmcError::UnknownCondition(condition.to_string()))?;
        if let Some(max_var) = formula.max_var() {
            if max_var >= system.state_dim() {
                return Err(SmcError::FormulaVarOutOfRange {
                    index: max_var,
                    dims: system.state_dim(),
                });
            }
        }
        Ok(Self {
            system,
            grid,
            formula,
            condition: condition.to_string(),
            control,
            failures: AtomicU64::new(0),
            failed_examples: Mutex::new(Vec::new()),
        })
    }

    pub fn verify(&self, theta: &ParameterVector) -> bool {
        match integrate(self.system, theta, &self.condition, self.grid, &self.control) {
            Ok(traj) => satisfies(self.formula, &traj),
            Err(_) => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                let mut examples = self.failed_examples.lock().unwrap();
                if examples.len() < MAX_FAILURE_EXAMPLES {
                    examples.push(theta.clone());
                }
                false
            }
        }
    }

    /// Integration failures seen so far.
    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }

    /// Parameters whose trajectories failed to integrate (bounded sample).
    pub fn failed_parameters(&self) -> Vec<ParameterVector> {
        self.failed_examples.lock().unwrap().clone()
    }
}

// ---------------------------------------------------------------------------
// Store-based (decoupled) testing.
// ---------------------------------------------------------------------------

fn check_store(store: &SampleStore, verifier: &Verifier<'_>) -> Result<(), SmcError> {
    if store.is_empty() {
        return Err(SmcError::EmptyStore);
    }
    if store.dims() != verifier.system.param_count() {
        return Err(SmcError::DimensionMismatch {
            expected: verifier.system.param_count(),
            got: store.dims(),
        });
    }
    Ok(())
}

/// Fixed test over a recorded store: the records covering the first `N`
/// steps are verified once each (in parallel) and their verdicts weighted by
/// multiplicity.
pub fn fixed_test_store(
    r: f64,
    n_samples: u64,
    store: &SampleStore,
    verifier: &Verifier<'_>,
) -> Result<TestOutcome, SmcError> {
    check_store(store, verifier)?;
    if store.total_steps() < n_samples {
        return Err(SmcError::ShortSource {
            needed: n_samples,
            available: store.total_steps(),
        });
    }
    let mut needed = Vec::new();
    let mut consumed = 0u64;
    for rec in store.records() {
        if consumed >= n_samples {
            break;
        }
        let weight = rec.multiplicity.min(n_samples - consumed);
        needed.push((rec, weight));
        consumed += weight;
    }
    let verdicts: Vec<bool> =
        needed.par_iter().map(|(rec, _)| verifier.verify(&rec.theta)).collect();
    let s: u64 = needed
        .iter()
        .zip(&verdicts)
        .map(|((_, weight), &v)| if v { *weight } else { 0 })
        .sum();
    let decision = if s as f64 >= n_samples as f64 * r { Decision::H0 } else { Decision::H1 };
    Ok(TestOutcome::new(decision, n_samples, s))
}

/// Sequential test over a recorded store. Batches of `batch_size` expanded
/// samples are verified in parallel (each distinct record once), then the
/// boundary conditions are checked step by step within the batch. A finite
/// store acts as an implicit cap: exhausting it without a crossing yields
/// `Undecided`.
pub fn sequential_test_store(
    r: f64,
    plan: &SequentialTestPlan,
    store: &SampleStore,
    verifier: &Verifier<'_>,
) -> Result<TestOutcome, SmcError> {
    check_store(store, verifier)?;
    if plan.batch_size == 0 {
        return Err(SmcError::ZeroBatch);
    }
    let records = store.records();
    let mut verdicts: Vec<Option<bool>> = vec![None; records.len()];

    let limit = plan
        .max_samples
        .map_or(store.total_steps(), |cap| cap.min(store.total_steps()));

    let mut n = 0u64;
    let mut s = 0u64;
    let mut decision: Option<Decision> = None;
    let mut rec = 0usize;
    let mut offset = 0u64;

    while n < limit && decision.is_none() {
        let batch_end = (n + plan.batch_size).min(limit);

        // Records covering (n..batch_end], verified in parallel.
        let first = rec;
        let mut cover = n;
        let mut last = rec;
        while cover < batch_end {
            let avail = records[last].multiplicity - if last == rec { offset } else { 0 };
            cover += avail;
            last += 1;
        }
        verdicts[first..last]
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, slot)| {
                if slot.is_none() {
                    *slot = Some(verifier.verify(&records[first + i].theta));
                }
            });

        while n < batch_end {
            let v = verdicts[rec].expect("verified above");
            n += 1;
            offset += 1;
            if v {
                s += 1;
            }
            if decision.is_none() {
                let drift = s as f64 - n as f64 * r;
                if drift >= plan.threshold {
                    decision = Some(Decision::H0);
                } else if drift <= -plan.threshold {
                    decision = Some(Decision::H1);
                }
            }
            if offset == records[rec].multiplicity {
                rec += 1;
                offset = 0;
            }
        }
    }
    Ok(TestOutcome::new(decision.unwrap_or(Decision::Undecided), n, s))
}

/// Multiplicity-weighted satisfaction ratio over the whole store: each
/// distinct parameter verified once (in parallel), weights applied.
pub fn estimate_probability(
    store: &SampleStore,
    verifier: &Verifier<'_>,
) -> Result<(f64, u64), SmcError> {
    check_store(store, verifier)?;
    let successes: u64 = store
        .records()
        .par_iter()
        .map(|rec| if verifier.verify(&rec.theta) { rec.multiplicity } else { 0 })
        .sum();
    let n = store.total_steps();
    Ok((successes as f64 / n as f64, n))
}

// ---------------------------------------------------------------------------
// Live-chain testing.
// ---------------------------------------------------------------------------

/// Steps the chain and verifies each visited state, re-using the verdict
/// while the chain stays in place so each distinct parameter is verified
/// once.
struct LiveVerdicts<'a, 'b, 'c> {
    chain: &'a mut Chain<'b>,
    verifier: &'a Verifier<'c>,
    last: Option<(ParameterVector, bool)>,
}

impl Iterator for LiveVerdicts<'_, '_, '_> {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        self.chain.step();
        let theta = self.chain.state().theta.clone();
        if let Some((prev, verdict)) = &self.last {
            if *prev == theta {
                return Some(*verdict);
            }
        }
        let verdict = self.verifier.verify(&theta);
        self.last = Some((theta, verdict));
        Some(verdict)
    }
}

/// Fixed test over a live (already burned-in) chain.
pub fn fixed_test_live(
    r: f64,
    n_samples: u64,
    chain: &mut Chain<'_>,
    verifier: &Verifier<'_>,
) -> Result<TestOutcome, SmcError> {
    let verdicts = LiveVerdicts { chain, verifier, last: None };
    fixed_test_verdicts(r, n_samples, verdicts)
}

/// Sequential test over a live (already burned-in) chain. Without a cap the
/// chain is stepped until a boundary is crossed.
pub fn sequential_test_live(
    r: f64,
    plan: &SequentialTestPlan,
    chain: &mut Chain<'_>,
    verifier: &Verifier<'_>,
) -> TestOutcome {
    let verdicts = LiveVerdicts { chain, verifier, last: None };
    sequential_test_verdicts(r, plan.threshold, plan.batch_size, plan.max_samples, verdicts)
}

#[cfg(test)]
mod tests;
