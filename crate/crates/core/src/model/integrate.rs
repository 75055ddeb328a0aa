//! Adaptive Dormand-Prince 4(5) integration with dense output.
//!
//! States are reported at exactly the requested grid times via the method's
//! fourth-order continuous extension, never at stepper-chosen times. The
//! stepper itself is free-running between grid points.

use thiserror::Error;

use super::{Condition, ModelError, OdeSystem, ParameterVector, TimeGrid, Trajectory};

/// Step-size and tolerance settings for the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial step; 0 selects a span-based default.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            initial_step: 0.0,
            min_step: 1e-12,
            max_steps: 200_000,
        }
    }
}

impl StepControl {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

/// Integration failure, carrying the time at which the solution diverged.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

// Dormand-Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

// Fifth-order weights (the advancing solution; also row 7 of the tableau).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Error weights: fifth-order minus embedded fourth-order solution.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense-output weights for the fourth-order continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Workspace {
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
    inputs: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize, n_inputs: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            cont: std::array::from_fn(|_| vec![0.0; dim]),
            inputs: vec![0.0; n_inputs],
        }
    }
}

struct Rhs<'a> {
    system: &'a OdeSystem,
    condition: &'a Condition,
    theta: &'a [f64],
}

impl Rhs<'_> {
    fn eval(&self, t: f64, y: &[f64], inputs: &mut [f64], out: &mut [f64]) {
        for (slot, signal) in inputs.iter_mut().zip(&self.condition.signals) {
            *slot = signal.value_at(t);
        }
        self.system.field().eval(t, y, inputs, self.theta, out);
    }
}

/// Integrate the system under the named condition and report states at
/// exactly the grid times. Pure: identical arguments produce bit-identical
/// trajectories.
pub fn integrate(
    system: &OdeSystem,
    theta: &ParameterVector,
    condition: &str,
    grid: &TimeGrid,
    control: &StepControl,
) -> Result<Trajectory, IntegrationError> {
    system.validate_theta(theta)?;
    let condition = system.condition(condition)?;
    let dim = system.state_dim();
    let times = grid.times();
    let t_end = grid.horizon();

    let mut ws = Workspace::new(dim, system.input_names().len());
    let rhs = Rhs { system, condition, theta: theta.as_slice() };

    let mut states = Vec::with_capacity(times.len() * dim);
    let mut y: Vec<f64> = system.initial_state().to_vec();
    states.extend_from_slice(&y); // grid starts at t = 0
    let mut next_grid = 1usize;

    let mut t = 0.0f64;
    let mut h = if control.initial_step > 0.0 {
        control.initial_step.min(t_end)
    } else {
        (t_end * 1e-3).max(control.min_step)
    };

    // FSAL: k[0] always holds f(t, y).
    let (k, y_stage, y_new) = (&mut ws.k, &mut ws.y_stage, &mut ws.y_new);
    rhs.eval(t, &y, &mut ws.inputs, &mut k[0]);

    let mut steps = 0usize;
    while next_grid < times.len() {
        if steps >= control.max_steps {
            return Err(IntegrationError::MaxStepsExceeded { t, max_steps: control.max_steps });
        }
        steps += 1;
        if h < control.min_step {
            return Err(IntegrationError::StepSizeUnderflow { t });
        }
        let mut final_step = false;
        if t + h >= t_end {
            h = t_end - t;
            final_step = true;
        }

        for i in 0..dim {
            y_stage[i] = y[i] + h * A21 * k[0][i];
        }
        rhs.eval(t + C2 * h, y_stage, &mut ws.inputs, &mut k[1]);
        for i in 0..dim {
            y_stage[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        rhs.eval(t + C3 * h, y_stage, &mut ws.inputs, &mut k[2]);
        for i in 0..dim {
            y_stage[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        rhs.eval(t + C4 * h, y_stage, &mut ws.inputs, &mut k[3]);
        for i in 0..dim {
            y_stage[i] =
                y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        rhs.eval(t + C5 * h, y_stage, &mut ws.inputs, &mut k[4]);
        for i in 0..dim {
            y_stage[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        rhs.eval(t + h, y_stage, &mut ws.inputs, &mut k[5]);
        for i in 0..dim {
            y_new[i] = y[i]
                + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        rhs.eval(t + h, y_new, &mut ws.inputs, &mut k[6]);

        let mut err_norm = 0.0f64;
        for i in 0..dim {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = control.abs_tol + control.rel_tol * y[i].abs().max(y_new[i].abs());
            err_norm += (e / sc) * (e / sc);
        }
        err_norm = (err_norm / dim as f64).sqrt();
        if !err_norm.is_finite() {
            return Err(IntegrationError::NonFiniteState { t });
        }

        if err_norm <= 1.0 {
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFiniteState { t: t + h });
            }

            // Fourth-order continuous extension over [t, t + h]. An accepted
            // final step covers every remaining grid point regardless of
            // rounding in t + h.
            let step_end = if final_step { f64::INFINITY } else { t + h };
            let grid_in_step = next_grid < times.len() && times[next_grid] <= step_end;
            if grid_in_step {
                for i in 0..dim {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    ws.cont[0][i] = y[i];
                    ws.cont[1][i] = ydiff;
                    ws.cont[2][i] = bspl;
                    ws.cont[3][i] = ydiff - h * k[6][i] - bspl;
                    ws.cont[4][i] = h
                        * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i]
                            + D6 * k[5][i] + D7 * k[6][i]);
                }
                while next_grid < times.len() && times[next_grid] <= step_end {
                    let s = ((times[next_grid] - t) / h).min(1.0);
                    let s1 = 1.0 - s;
                    for i in 0..dim {
                        let v = ws.cont[0][i]
                            + s * (ws.cont[1][i]
                                + s1 * (ws.cont[2][i]
                                    + s * (ws.cont[3][i] + s1 * ws.cont[4][i])));
                        states.push(v);
                    }
                    next_grid += 1;
                }
            }

            t += h;
            y.copy_from_slice(y_new);
            let (head, tail) = k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
        }

        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }

    let traj = Trajectory::new(grid.clone(), dim, states)?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CompiledField, Observable};
    use std::sync::Arc;

    fn scalar_system(equation: &str, x0: f64) -> OdeSystem {
        let states = vec!["x".to_string()];
        let params = vec!["k".to_string()];
        let field = CompiledField::compile(&[equation.to_string()], &states, &params, &[]).unwrap();
        OdeSystem::new(
            states,
            vec![x0],
            1,
            vec![],
            Arc::new(field),
            vec![Observable { name: "y".into(), scale: 1.0, coeffs: vec![(0, 1.0)] }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn zero_field_stays_constant() {
        let sys = scalar_system("0", 2.0);
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 5.0]).unwrap();
        let traj = integrate(
            &sys,
            &ParameterVector::new(vec![0.0]),
            "default",
            &grid,
            &StepControl::default(),
        )
        .unwrap();
        for i in 0..grid.len() {
            assert_eq!(traj.value(i, 0), 2.0);
        }
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let sys = scalar_system("-x", 1.0);
        let grid = TimeGrid::new((0..=10).map(f64::from).collect()).unwrap();
        let traj = integrate(
            &sys,
            &ParameterVector::new(vec![0.0]),
            "default",
            &grid,
            &StepControl::default(),
        )
        .unwrap();
        for (i, &t) in grid.times().iter().enumerate() {
            let expect = (-t).exp();
            assert!(
                (traj.value(i, 0) - expect).abs() < 1e-6,
                "t = {t}: {} vs {expect}",
                traj.value(i, 0)
            );
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let states = vec!["p".to_string(), "q".to_string()];
        let field =
            CompiledField::compile(&["q".into(), "-p".into()], &states, &[], &[]).unwrap();
        let sys = OdeSystem::new(
            states,
            vec![1.0, 0.0],
            0,
            vec![],
            Arc::new(field),
            vec![],
            vec![],
        )
        .unwrap();
        // Irregular grid; interior points exercise the interpolant.
        let grid = TimeGrid::new(vec![0.0, 0.3, 0.7, 1.1, 2.9, 3.1, 5.5, 6.283]).unwrap();
        let traj = integrate(
            &sys,
            &ParameterVector::new(vec![]),
            "default",
            &grid,
            &StepControl::default(),
        )
        .unwrap();
        for (i, &t) in grid.times().iter().enumerate() {
            assert!((traj.value(i, 0) - t.cos()).abs() < 1e-6, "p at t = {t}");
            assert!((traj.value(i, 1) + t.sin()).abs() < 1e-6, "q at t = {t}");
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let sys = scalar_system("-k*x", 1.0);
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.7, 4.0]).unwrap();
        let theta = ParameterVector::new(vec![0.35]);
        let a = integrate(&sys, &theta, "default", &grid, &StepControl::default()).unwrap();
        let b = integrate(&sys, &theta, "default", &grid, &StepControl::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reports_time() {
        // Finite-time blow-up: x' = x^2, x(0) = 1 diverges at t = 1.
        let sys = scalar_system("x^2", 1.0);
        let grid = TimeGrid::new(vec![0.0, 2.0]).unwrap();
        let err = integrate(
            &sys,
            &ParameterVector::new(vec![0.0]),
            "default",
            &grid,
            &StepControl::default(),
        )
        .unwrap_err();
        match err {
            IntegrationError::NonFiniteState { t }
            | IntegrationError::StepSizeUnderflow { t }
            | IntegrationError::MaxStepsExceeded { t, .. } => {
                assert!(t <= 1.05, "divergence reported at t = {t}");
            }
            IntegrationError::Model(e) => panic!("unexpected model error: {e}"),
        }
    }

    #[test]
    fn wrong_theta_dimension_rejected() {
        let sys = scalar_system("-x", 1.0);
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let err = integrate(
            &sys,
            &ParameterVector::new(vec![1.0, 2.0]),
            "default",
            &grid,
            &StepControl::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IntegrationError::Model(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn halving_tolerances_is_stable() {
        let sys = scalar_system("-k*x", 1.0);
        let grid = TimeGrid::new(vec![0.0, 1.0, 3.0, 7.0, 10.0]).unwrap();
        let theta = ParameterVector::new(vec![0.8]);
        let c1 = StepControl::with_tolerances(1e-8, 1e-6);
        let c2 = StepControl::with_tolerances(0.5e-8, 0.5e-6);
        let a = integrate(&sys, &theta, "default", &grid, &c1).unwrap();
        let b = integrate(&sys, &theta, "default", &grid, &c2).unwrap();
        for i in 0..grid.len() {
            let tol = 10.0 * (c1.abs_tol + c1.rel_tol * a.value(i, 0).abs());
            assert!((a.value(i, 0) - b.value(i, 0)).abs() < tol);
        }
    }
}
