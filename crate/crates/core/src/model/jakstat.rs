//! JAK-STAT signalling pathway model with a K-stage nuclear export delay.
//!
//! Species layout: `STAT, STATp, STATpd, X1..XK, STATn`, with the
//! erythropoietin stimulus `Epo` supplied as an external input. Four kinetic
//! rates `k1..k4` drive phosphorylation, dimerization, nuclear import and the
//! delay chain. The quantity `STAT + STATp + 2*STATpd + 2*(X1+..+XK)` is
//! conserved along every trajectory.

use std::sync::Arc;

use super::{
    Condition, ModelError, Observable, OdeSystem, ParameterSpace, VectorField,
};

/// Native vector field for the pathway; `stages` is the delay chain length K.
#[derive(Debug, Clone, Copy)]
pub struct JakStatField {
    stages: usize,
}

impl JakStatField {
    pub fn new(stages: usize) -> Result<Self, ModelError> {
        if stages == 0 {
            return Err(ModelError::NoDelayStages);
        }
        Ok(Self { stages })
    }
}

impl VectorField for JakStatField {
    fn eval(&self, _t: f64, state: &[f64], inputs: &[f64], params: &[f64], out: &mut [f64]) {
        let k = self.stages;
        let (k1, k2, k3, k4) = (params[0], params[1], params[2], params[3]);
        let epo = inputs[0];
        let stat = state[0];
        let statp = state[1];
        let statpd = state[2];
        let x_first = state[3];
        let x_last = state[2 + k];

        let phospho = k1 * stat * epo;
        let dimer = k2 * statp * statp;

        out[0] = -phospho + 2.0 * k4 * x_last;
        out[1] = phospho - dimer;
        out[2] = -k3 * statpd + 0.5 * dimer;
        out[3] = k3 * statpd - k4 * x_first;
        for j in 1..k {
            out[3 + j] = k4 * (state[2 + j] - state[3 + j]);
        }
        out[3 + k] = k3 * statpd - k4 * x_last;
    }
}

/// Parameter names, in vector order.
pub fn jakstat_parameter_names() -> Vec<String> {
    vec!["k1".into(), "k2".into(), "k3".into(), "k4".into()]
}

/// Box constraints for the four kinetic rates.
pub fn jakstat_parameter_space() -> ParameterSpace {
    ParameterSpace::new(vec![(0.0, 5.0), (0.0, 30.0), (0.0, 1.0), (0.0, 5.0)]).unwrap()
}

/// Random-walk proposal standard deviations matched to the rate scales.
pub fn jakstat_proposal_sigmas() -> Vec<f64> {
    vec![0.02, 0.5, 0.01, 0.02]
}

/// Build the pathway system with `stages` delay compartments, the given Epo
/// stimulation conditions, observation forms and initial cytoplasmic STAT
/// amount. All other species start at zero.
pub fn jakstat_model(
    stages: usize,
    conditions: Vec<Condition>,
    observables: Vec<Observable>,
    initial_stat: f64,
) -> Result<OdeSystem, ModelError> {
    if stages == 0 {
        return Err(ModelError::NoDelayStages);
    }
    let mut state_names = vec!["STAT".to_string(), "STATp".to_string(), "STATpd".to_string()];
    for j in 1..=stages {
        state_names.push(format!("X{j}"));
    }
    state_names.push("STATn".to_string());

    let mut initial_state = vec![0.0; state_names.len()];
    initial_state[0] = initial_stat;

    OdeSystem::new(
        state_names,
        initial_state,
        4,
        vec!["Epo".to_string()],
        Arc::new(JakStatField { stages }),
        observables,
        conditions,
    )
}

/// Equation strings equivalent to [`JakStatField`], usable in configuration
/// files and for cross-checking the expression compiler.
pub fn jakstat_equations(stages: usize) -> Vec<String> {
    let mut eqs = Vec::with_capacity(stages + 4);
    eqs.push(format!("-k1*STAT*Epo + 2*k4*X{stages}"));
    eqs.push("k1*STAT*Epo - k2*STATp^2".to_string());
    eqs.push("-k3*STATpd + 0.5*k2*STATp^2".to_string());
    eqs.push("k3*STATpd - k4*X1".to_string());
    for j in 2..=stages {
        eqs.push(format!("k4*X{} - k4*X{j}", j - 1));
    }
    eqs.push(format!("k3*STATpd - k4*X{stages}"));
    eqs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        integrate, CompiledField, InputSignal, Interpolation, ParameterVector, StepControl,
        TimeGrid,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn epo_pulse() -> Condition {
        Condition {
            name: "pulse".into(),
            signals: vec![InputSignal::new(
                vec![(0.0, 0.0), (2.0, 2.0), (10.0, 1.0), (20.0, 0.0)],
                Interpolation::Linear,
            )
            .unwrap()],
        }
    }

    #[test]
    fn zero_stages_rejected() {
        assert!(matches!(
            jakstat_model(0, vec![epo_pulse()], vec![], 1.0),
            Err(ModelError::NoDelayStages)
        ));
    }

    #[test]
    fn state_layout() {
        let sys = jakstat_model(10, vec![epo_pulse()], vec![], 1.0).unwrap();
        assert_eq!(sys.state_dim(), 14);
        assert_eq!(sys.state_names()[0], "STAT");
        assert_eq!(sys.state_names()[3], "X1");
        assert_eq!(sys.state_names()[12], "X10");
        assert_eq!(sys.state_names()[13], "STATn");
    }

    #[test]
    fn zero_pools_stay_zero() {
        let sys = jakstat_model(10, vec![epo_pulse()], vec![], 0.0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 10.0, 30.0, 60.0]).unwrap();
        let theta = ParameterVector::new(vec![0.5, 2.0, 0.2, 0.4]);
        let traj = integrate(&sys, &theta, "pulse", &grid, &StepControl::default()).unwrap();
        for i in 0..grid.len() {
            for v in traj.row(i) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn without_epo_mass_drains_from_delay_chain_into_stat() {
        // Start with mass parked in the delay stages and no stimulus: the
        // phosphorylation term is zero and STAT can only grow.
        let zero_epo = Condition {
            name: "off".into(),
            signals: vec![InputSignal::constant(0.0)],
        };
        let mut sys = jakstat_model(10, vec![zero_epo], vec![], 1.0).unwrap();
        let field = JakStatField { stages: 10 };
        let mut state = vec![0.0; 14];
        state[0] = 1.0;
        for j in 3..13 {
            state[j] = 0.1;
        }
        let mut out = vec![0.0; 14];
        field.eval(0.0, &state, &[0.0], &[0.5, 2.0, 0.2, 0.4], &mut out);
        assert_eq!(out[0], 2.0 * 0.4 * 0.1); // influx from X10 only
        assert_eq!(out[1], 0.0); // no phosphorylation without Epo

        sys = OdeSystem::new(
            sys.state_names().to_vec(),
            state.clone(),
            4,
            vec!["Epo".into()],
            std::sync::Arc::new(field),
            vec![],
            vec![Condition { name: "off".into(), signals: vec![InputSignal::constant(0.0)] }],
        )
        .unwrap();
        let grid = TimeGrid::new(vec![0.0, 5.0, 20.0, 60.0]).unwrap();
        let theta = ParameterVector::new(vec![0.5, 2.0, 0.2, 0.4]);
        let traj = integrate(&sys, &theta, "off", &grid, &StepControl::default()).unwrap();
        let mut prev = traj.value(0, 0);
        for i in 1..grid.len() {
            let cur = traj.value(i, 0);
            assert!(cur > prev, "STAT should grow as the chain drains");
            prev = cur;
        }
        let x_total_start: f64 = (3..13).map(|j| traj.value(0, j)).sum();
        let x_total_end: f64 = (3..13).map(|j| traj.value(grid.len() - 1, j)).sum();
        assert!(x_total_end < x_total_start);
    }

    fn conserved(traj: &crate::model::Trajectory, row: usize) -> f64 {
        let r = traj.row(row);
        let x_sum: f64 = (3..3 + 10).map(|j| r[j]).sum();
        r[0] + r[1] + 2.0 * r[2] + 2.0 * x_sum
    }

    #[test]
    fn conservation_over_random_draws() {
        let space = jakstat_parameter_space();
        let sys = jakstat_model(10, vec![epo_pulse()], vec![], 2.5).unwrap();
        let grid = TimeGrid::new(vec![0.0, 5.0, 15.0, 30.0, 45.0, 60.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let theta: Vec<f64> =
                space.bounds().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            let traj =
                integrate(&sys, &theta.clone().into(), "pulse", &grid, &StepControl::default())
                    .unwrap();
            let q0 = conserved(&traj, 0);
            for i in 1..grid.len() {
                let q = conserved(&traj, i);
                assert!(
                    ((q - q0) / q0).abs() < 1e-6,
                    "conservation violated for theta {theta:?}: {q} vs {q0}"
                );
            }
        }
    }

    #[test]
    fn native_and_compiled_fields_agree() {
        let stages = 10;
        let sys = jakstat_model(stages, vec![epo_pulse()], vec![], 2.5).unwrap();
        let compiled = CompiledField::compile(
            &jakstat_equations(stages),
            sys.state_names(),
            &jakstat_parameter_names(),
            &["Epo".to_string()],
        )
        .unwrap();
        let native = JakStatField { stages };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = vec![0.0; 14];
        let mut b = vec![0.0; 14];
        for _ in 0..200 {
            let state: Vec<f64> = (0..14).map(|_| rng.gen_range(0.0..3.0)).collect();
            let params: Vec<f64> = vec![
                rng.gen_range(0.0..5.0),
                rng.gen_range(0.0..30.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..5.0),
            ];
            let epo = [rng.gen_range(0.0..2.0)];
            native.eval(0.0, &state, &epo, &params, &mut a);
            compiled.eval(0.0, &state, &epo, &params, &mut b);
            for i in 0..14 {
                assert!((a[i] - b[i]).abs() <= 1e-12 * a[i].abs().max(1.0));
            }
        }
    }
}
