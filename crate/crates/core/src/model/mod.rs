//! Parametric ODE systems with linear observation maps and external inputs.
//!
//! A system couples a vector field `dx/dt = f(x, u(t), theta, t)` with a set
//! of named input signals (deterministic interpolation tables), a set of
//! linear observation forms, and a box of admissible parameter values.
//! Integration on a [`TimeGrid`] produces a [`Trajectory`] holding the state
//! at exactly the grid times.

mod expr;
mod integrate;
mod jakstat;

pub use expr::{compile_expression, CompiledField, ExprError, Program, Scope};
pub use integrate::{integrate, IntegrationError, StepControl};
pub use jakstat::{
    jakstat_equations, jakstat_model, jakstat_parameter_names, jakstat_parameter_space,
    jakstat_proposal_sigmas, JakStatField,
};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Errors from model construction, validation and observation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter space needs at least one dimension")]
    EmptySpace,
    #[error("bound {index}: lower {low} must be strictly below upper {high}")]
    InvalidBound { index: usize, low: f64, high: f64 },
    #[error("expected {expected} parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter {index} = {value} outside [{low}, {high}]")]
    OutOfBounds { index: usize, value: f64, low: f64, high: f64 },
    #[error("time grid must start at 0, got {0}")]
    GridStart(f64),
    #[error("time grid must be strictly increasing at entry {0}")]
    GridNotIncreasing(usize),
    #[error("time grid needs at least 2 points")]
    GridTooShort,
    #[error("input signal needs at least one breakpoint")]
    EmptySignal,
    #[error("input signal breakpoints must be strictly increasing at entry {0}")]
    SignalNotIncreasing(usize),
    #[error("observation form {form} references state index {index} but the system has {dims} states")]
    BadObservationIndex { form: String, index: usize, dims: usize },
    #[error("requested time {0} is not on the trajectory grid")]
    TimeNotOnGrid(f64),
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("delay chain needs at least one stage")]
    NoDelayStages,
    #[error("trajectory has {rows} rows but the grid has {grid} points")]
    TrajectoryShape { rows: usize, grid: usize },
}

/// Box of admissible parameter values: the product of per-coordinate
/// closed intervals `[low_i, high_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    bounds: Vec<(f64, f64)>,
}

impl ParameterSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if bounds.is_empty() {
            return Err(ModelError::EmptySpace);
        }
        for (i, &(low, high)) in bounds.iter().enumerate() {
            if !(low < high) {
                return Err(ModelError::InvalidBound { index: i, low, high });
            }
        }
        Ok(Self { bounds })
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Check dimension and box membership.
    pub fn validate(&self, theta: &ParameterVector) -> Result<(), ModelError> {
        if theta.len() != self.dims() {
            return Err(ModelError::DimensionMismatch { expected: self.dims(), got: theta.len() });
        }
        for (i, (&v, &(low, high))) in theta.as_slice().iter().zip(&self.bounds).enumerate() {
            if !(low <= v && v <= high) {
                return Err(ModelError::OutOfBounds { index: i, value: v, low, high });
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims()
            && theta.iter().zip(&self.bounds).all(|(&v, &(low, high))| low <= v && v <= high)
    }

    /// Volume of the box, used by the uniform prior normalization.
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|&(low, high)| high - low).product()
    }
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// How an [`InputSignal`] interpolates between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Linear interpolation between neighbouring breakpoints.
    Linear,
    /// The value of the most recent breakpoint holds until the next one.
    Constant,
}

/// Deterministic input signal defined by an interpolation table.
/// Evaluation outside the breakpoint range clamps to the nearest endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    points: Vec<(f64, f64)>,
    interpolation: Interpolation,
}

impl InputSignal {
    pub fn new(points: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptySignal);
        }
        for i in 1..points.len() {
            if !(points[i - 1].0 < points[i].0) {
                return Err(ModelError::SignalNotIncreasing(i));
            }
        }
        Ok(Self { points, interpolation })
    }

    pub fn constant(value: f64) -> Self {
        Self { points: vec![(0.0, value)], interpolation: Interpolation::Constant }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        // Index of the first breakpoint strictly after t.
        let hi = pts.partition_point(|&(tp, _)| tp <= t);
        let (t0, v0) = pts[hi - 1];
        match self.interpolation {
            Interpolation::Constant => v0,
            Interpolation::Linear => {
                let (t1, v1) = pts[hi];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Discrete time grid the trajectories are reported on. Starts at 0,
/// strictly increasing; the final entry is the verification horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, ModelError> {
        if times.len() < 2 {
            return Err(ModelError::GridTooShort);
        }
        if times[0] != 0.0 {
            return Err(ModelError::GridStart(times[0]));
        }
        for i in 1..times.len() {
            if !(times[i - 1] < times[i]) {
                return Err(ModelError::GridNotIncreasing(i));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Horizon: the last grid time.
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of the grid entry matching `t` up to a small tolerance that
    /// absorbs decimal-parsing differences.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&g| (g - t).abs() <= tol)
    }
}

/// State trajectory on a time grid, stored row-major (one row per grid time).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    state_dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, state_dim: usize, states: Vec<f64>) -> Result<Self, ModelError> {
        if states.len() != grid.len() * state_dim {
            return Err(ModelError::TrajectoryShape {
                rows: if state_dim == 0 { 0 } else { states.len() / state_dim },
                grid: grid.len(),
            });
        }
        Ok(Self { grid, state_dim, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.states[index * self.state_dim..(index + 1) * self.state_dim]
    }

    /// Value of state `var` at grid index `index`.
    pub fn value(&self, index: usize, var: usize) -> f64 {
        self.states[index * self.state_dim + var]
    }
}

/// Right-hand side of the ODE system. Implementations are immutable and
/// evaluated concurrently from many workers.
pub trait VectorField: Send + Sync {
    /// Write `f(state, inputs, params, t)` into `out` (length = state dim).
    fn eval(&self, t: f64, state: &[f64], inputs: &[f64], params: &[f64], out: &mut [f64]);
}

/// Linear observation form: `scale * sum(coeff_k * x_{index_k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub scale: f64,
    /// Sparse (state index, coefficient) pairs.
    pub coeffs: Vec<(usize, f64)>,
}

impl Observable {
    pub fn apply(&self, state: &[f64]) -> f64 {
        self.scale * self.coeffs.iter().map(|&(i, c)| c * state[i]).sum::<f64>()
    }
}

/// A named experimental condition: one input signal per input variable,
/// aligned with the system's input names.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub signals: Vec<InputSignal>,
}

/// Parametric ODE system: vector field, initial state, named input
/// conditions and linear observation forms. Immutable after construction.
#[derive(Clone)]
pub struct OdeSystem {
    state_names: Vec<String>,
    initial_state: Vec<f64>,
    param_count: usize,
    input_names: Vec<String>,
    field: Arc<dyn VectorField>,
    observables: Vec<Observable>,
    conditions: Vec<Condition>,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("state_names", &self.state_names)
            .field("initial_state", &self.initial_state)
            .field("param_count", &self.param_count)
            .field("input_names", &self.input_names)
            .field("observables", &self.observables)
            .field("conditions", &self.conditions.iter().map(|c| &c.name).collect::<Vec<_>>())
            .finish()
    }
}

impl OdeSystem {
    pub fn new(
        state_names: Vec<String>,
        initial_state: Vec<f64>,
        param_count: usize,
        input_names: Vec<String>,
        field: Arc<dyn VectorField>,
        observables: Vec<Observable>,
        mut conditions: Vec<Condition>,
    ) -> Result<Self, ModelError> {
        if state_names.len() != initial_state.len() {
            return Err(ModelError::DimensionMismatch {
                expected: state_names.len(),
                got: initial_state.len(),
            });
        }
        let dims = state_names.len();
        for obs in &observables {
            for &(i, _) in &obs.coeffs {
                if i >= dims {
                    return Err(ModelError::BadObservationIndex {
                        form: obs.name.clone(),
                        index: i,
                        dims,
                    });
                }
            }
        }
        // Systems without inputs get a single empty condition so that every
        // caller can name one.
        if input_names.is_empty() && conditions.is_empty() {
            conditions.push(Condition { name: "default".into(), signals: Vec::new() });
        }
        for cond in &conditions {
            if cond.signals.len() != input_names.len() {
                return Err(ModelError::DimensionMismatch {
                    expected: input_names.len(),
                    got: cond.signals.len(),
                });
            }
        }
        Ok(Self {
            state_names,
            initial_state,
            param_count,
            input_names,
            field,
            observables,
            conditions,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn state_index(&self, name: &str) -> Result<usize, ModelError> {
        self.state_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ModelError::UnknownState(name.into()))
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn field(&self) -> &dyn VectorField {
        self.field.as_ref()
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn condition(&self, name: &str) -> Result<&Condition, ModelError> {
        self.conditions
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| ModelError::UnknownCondition(name.into()))
    }

    pub fn validate_theta(&self, theta: &ParameterVector) -> Result<(), ModelError> {
        if theta.len() != self.param_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.param_count,
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// Noiseless model outputs `y_i(t_j)` for the requested times, as a
/// `d_y x times.len()` row-major matrix.
pub fn observe(
    system: &OdeSystem,
    traj: &Trajectory,
    times: &[f64],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut indices = Vec::with_capacity(times.len());
    for &t in times {
        indices.push(traj.grid().index_of(t).ok_or(ModelError::TimeNotOnGrid(t))?);
    }
    Ok(system
        .observables()
        .iter()
        .map(|obs| indices.iter().map(|&j| obs.apply(traj.row(j))).collect())
        .collect())
}

#[cfg(test)]
mod tests;
