//! Prior, likelihood and the Metropolis-Hastings chain over parameter space.
//!
//! All density arithmetic is in log space; the Gaussian per-point likelihood
//! exponents underflow otherwise. The posterior normalizing constant is never
//! computed: the acceptance ratio only needs prior and likelihood values at
//! the current and proposed points.

mod store;

pub use store::{SampleStore, StoreBuilder, StoreError, StoreRecord};

use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{
    integrate, ModelError, OdeSystem, ParameterSpace, ParameterVector, StepControl, TimeGrid,
};

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("proposal needs one standard deviation per parameter")]
    EmptyProposal,
    #[error("proposal standard deviation {index} must be positive, got {value}")]
    BadProposalSigma { index: usize, value: f64 },
    #[error("observation sigma must be positive, got {value} (condition {condition:?}, t = {time})")]
    BadSigma { condition: String, time: f64, value: f64 },
    #[error("observable index {index} out of range 1..={d_y}")]
    BadObservableIndex { index: usize, d_y: usize },
    #[error("observation at t = {time} (condition {condition:?}) is not on the simulation grid")]
    TimeOffGrid { condition: String, time: f64 },
    #[error("no usable initial point after {attempts} prior draws (every draw failed to integrate)")]
    InitFailed { attempts: usize },
    #[error("reading observations: {0}")]
    Csv(#[from] csv::Error),
    #[error("observation file column {column}: {message}")]
    BadField { column: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform prior over a parameter box. The log-density is the negated
/// log-volume inside the box and negative infinity outside, so it integrates
/// to one.
#[derive(Debug, Clone)]
pub struct Prior {
    space: ParameterSpace,
    log_c: f64,
}

impl Prior {
    pub fn uniform(space: ParameterSpace) -> Self {
        let log_c = -space.volume().ln();
        Self { space, log_c }
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.space.contains(theta) {
            self.log_c
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Log prior density at a point.
pub fn log_prior(prior: &Prior, theta: &ParameterVector) -> f64 {
    prior.log_density(theta.as_slice())
}

/// One observation: observable index (1-based), measurement time, value and
/// per-point standard deviation, grouped by experimental condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub condition: String,
    /// 1-based observable index, matching the on-disk format.
    pub observable: usize,
    pub time: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Measurement data across one or more experimental conditions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    records: Vec<ObservationRecord>,
}

impl ObservationSet {
    pub fn new(records: Vec<ObservationRecord>) -> Result<Self, PosteriorError> {
        for rec in &records {
            if !(rec.sigma > 0.0) {
                return Err(PosteriorError::BadSigma {
                    condition: rec.condition.clone(),
                    time: rec.time,
                    value: rec.sigma,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Condition names in first-appearance order.
    pub fn condition_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for rec in &self.records {
            if !names.contains(&rec.condition.as_str()) {
                names.push(&rec.condition);
            }
        }
        names
    }

    /// Read the CSV format `condition,observable,time_min,value,sigma`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, PosteriorError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut records = Vec::new();
        for row in reader.deserialize::<(String, usize, f64, f64, f64)>() {
            let (condition, observable, time, value, sigma) = row?;
            if observable == 0 {
                return Err(PosteriorError::BadField {
                    column: "observable",
                    message: "index is 1-based".into(),
                });
            }
            records.push(ObservationRecord { condition, observable, time, value, sigma });
        }
        Self::new(records)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), PosteriorError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["condition", "observable", "time_min", "value", "sigma"])?;
        for rec in &self.records {
            writer.write_record([
                rec.condition.clone(),
                rec.observable.to_string(),
                rec.time.to_string(),
                rec.value.to_string(),
                rec.sigma.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Random-walk proposal with independent Gaussian steps per coordinate.
///
/// The Gaussian is symmetric, so the forward/backward density ratio is one;
/// [`ProposalSpec::log_ratio`] keeps the general code path open for
/// asymmetric proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    diag_sigmas: Vec<f64>,
}

impl ProposalSpec {
    pub fn diagonal(diag_sigmas: Vec<f64>) -> Result<Self, PosteriorError> {
        if diag_sigmas.is_empty() {
            return Err(PosteriorError::EmptyProposal);
        }
        for (index, &value) in diag_sigmas.iter().enumerate() {
            if !(value > 0.0) {
                return Err(PosteriorError::BadProposalSigma { index, value });
            }
        }
        Ok(Self { diag_sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.diag_sigmas
    }

    pub fn propose(&self, current: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        current
            .iter()
            .zip(&self.diag_sigmas)
            .map(|(&x, &s)| x + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// `log q(to -> from) - log q(from -> to)`; zero for this symmetric
    /// proposal.
    pub fn log_ratio(&self, _from: &[f64], _to: &[f64]) -> f64 {
        0.0
    }
}

/// Unnormalized log target split into its prior and likelihood parts.
pub trait LogTarget: Sync {
    fn dims(&self) -> usize;
    fn log_prior(&self, theta: &[f64]) -> f64;
    fn log_likelihood(&self, theta: &[f64]) -> f64;
}

struct ResolvedPoint {
    observable: usize, // 0-based
    grid_index: usize,
    value: f64,
    sigma: f64,
}

/// Gaussian observation likelihood of an ODE system, with data grouped by
/// condition and grid indices resolved once up front.
pub struct LikelihoodContext<'a> {
    system: &'a OdeSystem,
    grid: &'a TimeGrid,
    control: StepControl,
    groups: Vec<(String, Vec<ResolvedPoint>)>,
    integration_failures: AtomicU64,
}

impl<'a> LikelihoodContext<'a> {
    pub fn new(
        system: &'a OdeSystem,
        data: &ObservationSet,
        grid: &'a TimeGrid,
        control: StepControl,
    ) -> Result<Self, PosteriorError> {
        let d_y = system.observables().len();
        let mut groups: Vec<(String, Vec<ResolvedPoint>)> = Vec::new();
        for rec in data.records() {
            system.condition(&rec.condition)?;
            if rec.observable == 0 || rec.observable > d_y {
                return Err(PosteriorError::BadObservableIndex { index: rec.observable, d_y });
            }
            let grid_index = grid.index_of(rec.time).ok_or(PosteriorError::TimeOffGrid {
                condition: rec.condition.clone(),
                time: rec.time,
            })?;
            let point = ResolvedPoint {
                observable: rec.observable - 1,
                grid_index,
                value: rec.value,
                sigma: rec.sigma,
            };
            match groups.iter_mut().find(|(name, _)| *name == rec.condition) {
                Some((_, points)) => points.push(point),
                None => groups.push((rec.condition.clone(), vec![point])),
            }
        }
        Ok(Self { system, grid, control, groups, integration_failures: AtomicU64::new(0) })
    }

    /// Negated weighted sum of squared residuals across all conditions, up to
    /// the additive normalization constant (constant in theta, so it cancels
    /// in the acceptance ratio). Integration failure yields negative
    /// infinity: the proposal is rejected and the failure counted.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let theta = ParameterVector::new(theta.to_vec());
        let mut total = 0.0;
        for (condition, points) in &self.groups {
            let traj = match integrate(self.system, &theta, condition, self.grid, &self.control) {
                Ok(traj) => traj,
                Err(_) => {
                    self.integration_failures.fetch_add(1, Ordering::Relaxed);
                    return f64::NEG_INFINITY;
                }
            };
            for p in points {
                let predicted = self.system.observables()[p.observable].apply(traj.row(p.grid_index));
                let z = (p.value - predicted) / (std::f64::consts::SQRT_2 * p.sigma);
                total -= z * z;
            }
        }
        total
    }

    /// Number of integration failures seen so far (for audit output).
    pub fn integration_failures(&self) -> u64 {
        self.integration_failures.load(Ordering::Relaxed)
    }
}

/// Gaussian data log-likelihood of `theta` for a one-off evaluation.
pub fn log_likelihood(
    system: &OdeSystem,
    theta: &ParameterVector,
    data: &ObservationSet,
    grid: &TimeGrid,
    control: &StepControl,
) -> Result<f64, PosteriorError> {
    let ctx = LikelihoodContext::new(system, data, grid, *control)?;
    Ok(ctx.log_likelihood(theta.as_slice()))
}

/// Posterior target for an ODE system: uniform box prior plus Gaussian
/// observation likelihood.
pub struct OdePosterior<'a> {
    prior: &'a Prior,
    likelihood: LikelihoodContext<'a>,
}

impl<'a> OdePosterior<'a> {
    pub fn new(
        system: &'a OdeSystem,
        prior: &'a Prior,
        data: &ObservationSet,
        grid: &'a TimeGrid,
        control: StepControl,
    ) -> Result<Self, PosteriorError> {
        Ok(Self { prior, likelihood: LikelihoodContext::new(system, data, grid, control)? })
    }

    pub fn integration_failures(&self) -> u64 {
        self.likelihood.integration_failures()
    }
}

impl LogTarget for OdePosterior<'_> {
    fn dims(&self) -> usize {
        self.prior.space().dims()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.likelihood.log_likelihood(theta)
    }
}

/// Current chain position with cached density parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: ParameterVector,
    pub log_prior: f64,
    pub log_likelihood: f64,
}

impl ChainState {
    pub fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_likelihood
    }
}

/// Log acceptance ratio of a proposed move given unnormalized log posterior
/// values and the proposal density ratio. Swapping current and proposed
/// inverts the sign. The clamp of the acceptance probability at one is
/// implicit in the comparison `ln(eta) < log_alpha` with `eta` in `[0, 1)`.
pub fn log_accept_ratio(
    current_log_posterior: f64,
    proposed_log_posterior: f64,
    log_proposal_ratio: f64,
) -> f64 {
    proposed_log_posterior - current_log_posterior + log_proposal_ratio
}

/// Metropolis-Hastings chain. Strictly sequential: each step depends on the
/// previous one. Independent chains with distinct seeds may run in parallel.
pub struct Chain<'a> {
    target: &'a dyn LogTarget,
    proposal: &'a ProposalSpec,
    rng: ChaCha8Rng,
    state: ChainState,
    steps: u64,
    accepted: u64,
}

impl<'a> Chain<'a> {
    /// Start from an explicit point (its density parts are evaluated here).
    pub fn from_point(
        target: &'a dyn LogTarget,
        proposal: &'a ProposalSpec,
        seed: u64,
        theta: ParameterVector,
    ) -> Self {
        let log_prior = target.log_prior(theta.as_slice());
        let log_likelihood = if log_prior.is_finite() {
            target.log_likelihood(theta.as_slice())
        } else {
            f64::NEG_INFINITY
        };
        Self {
            target,
            proposal,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: ChainState { theta, log_prior, log_likelihood },
            steps: 0,
            accepted: 0,
        }
    }

    /// Draw the initial point uniformly from the prior box, retrying a
    /// bounded number of times if the likelihood cannot be evaluated there.
    pub fn init_from_prior(
        target: &'a dyn LogTarget,
        proposal: &'a ProposalSpec,
        space: &ParameterSpace,
        seed: u64,
        max_attempts: usize,
    ) -> Result<Self, PosteriorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_attempts {
            let theta: Vec<f64> =
                space.bounds().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            let log_prior = target.log_prior(&theta);
            let log_likelihood = target.log_likelihood(&theta);
            if log_likelihood.is_finite() {
                return Ok(Self {
                    target,
                    proposal,
                    rng,
                    state: ChainState {
                        theta: ParameterVector::new(theta),
                        log_prior,
                        log_likelihood,
                    },
                    steps: 0,
                    accepted: 0,
                });
            }
        }
        Err(PosteriorError::InitFailed { attempts: max_attempts })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    /// One Metropolis-Hastings transition: propose, evaluate, accept or keep
    /// the current state. Returns whether the proposal was accepted. The
    /// likelihood is only evaluated for proposals inside the prior support.
    pub fn step(&mut self) -> bool {
        let proposed = self.proposal.propose(self.state.theta.as_slice(), &mut self.rng);
        let prop_log_prior = self.target.log_prior(&proposed);
        let prop_log_likelihood = if prop_log_prior.is_finite() {
            self.target.log_likelihood(&proposed)
        } else {
            f64::NEG_INFINITY
        };
        let log_alpha = log_accept_ratio(
            self.state.log_posterior(),
            prop_log_prior + prop_log_likelihood,
            self.proposal.log_ratio(self.state.theta.as_slice(), &proposed),
        );
        let eta: f64 = self.rng.gen();
        self.steps += 1;
        if eta.ln() < log_alpha {
            self.state = ChainState {
                theta: ParameterVector::new(proposed),
                log_prior: prop_log_prior,
                log_likelihood: prop_log_likelihood,
            };
            self.accepted += 1;
            true
        } else {
            false
        }
    }

    /// Take `t0` steps without recording anything.
    pub fn burn_in(&mut self, t0: u64) {
        for _ in 0..t0 {
            self.step();
        }
    }
}

/// Run a full chain: draw the initial point from the prior, discard `burn_in`
/// steps, then record `samples` post-burn-in states into a
/// multiplicity-compressed store. The callback sees every post-burn-in step.
/// Deterministic given the seed.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    target: &dyn LogTarget,
    proposal: &ProposalSpec,
    space: &ParameterSpace,
    burn_in: u64,
    samples: u64,
    seed: u64,
    mut callback: impl FnMut(u64, &ChainState),
) -> Result<SampleStore, PosteriorError> {
    let mut chain = Chain::init_from_prior(target, proposal, space, seed, 100)?;
    chain.burn_in(burn_in);
    let mut builder = StoreBuilder::new(space.dims(), burn_in, Some(seed));
    for i in 0..samples {
        chain.step();
        callback(i, chain.state());
        builder.push(chain.state().theta.as_slice(), chain.state().log_posterior());
    }
    Ok(builder.finish())
}
