use super::*;
use std::sync::Arc;

struct ZeroField(usize);

impl VectorField for ZeroField {
    fn eval(&self, _t: f64, _state: &[f64], _inputs: &[f64], _params: &[f64], out: &mut [f64]) {
        out[..self.0].fill(0.0);
    }
}

fn two_state_system(observables: Vec<Observable>) -> OdeSystem {
    OdeSystem::new(
        vec!["a".into(), "b".into()],
        vec![3.0, 4.0],
        0,
        vec![],
        Arc::new(ZeroField(2)),
        observables,
        vec![],
    )
    .unwrap()
}

#[test]
fn parameter_space_validation() {
    assert!(ParameterSpace::new(vec![]).is_err());
    assert!(ParameterSpace::new(vec![(1.0, 1.0)]).is_err());
    assert!(ParameterSpace::new(vec![(2.0, 1.0)]).is_err());

    let space = ParameterSpace::new(vec![(0.0, 5.0), (0.0, 30.0)]).unwrap();
    assert_eq!(space.dims(), 2);
    assert_eq!(space.volume(), 150.0);
    assert!(space.validate(&ParameterVector::new(vec![1.0, 1.0])).is_ok());
    assert!(space.validate(&ParameterVector::new(vec![1.0])).is_err());
    assert!(space.validate(&ParameterVector::new(vec![1.0, 31.0])).is_err());
    assert!(space.contains(&[0.0, 30.0]));
    assert!(!space.contains(&[-0.1, 1.0]));
}

#[test]
fn input_signal_interpolation_and_clamping() {
    let sig = InputSignal::new(
        vec![(0.0, 0.0), (10.0, 2.0), (20.0, 1.0)],
        Interpolation::Linear,
    )
    .unwrap();
    assert_eq!(sig.value_at(-5.0), 0.0);
    assert_eq!(sig.value_at(5.0), 1.0);
    assert_eq!(sig.value_at(10.0), 2.0);
    assert_eq!(sig.value_at(15.0), 1.5);
    assert_eq!(sig.value_at(25.0), 1.0);

    let step = InputSignal::new(
        vec![(0.0, 0.0), (10.0, 2.0), (20.0, 1.0)],
        Interpolation::Constant,
    )
    .unwrap();
    assert_eq!(step.value_at(9.99), 0.0);
    assert_eq!(step.value_at(10.0), 2.0);
    assert_eq!(step.value_at(19.0), 2.0);
    assert_eq!(step.value_at(99.0), 1.0);

    assert!(InputSignal::new(vec![], Interpolation::Linear).is_err());
    assert!(InputSignal::new(vec![(0.0, 1.0), (0.0, 2.0)], Interpolation::Linear).is_err());
}

#[test]
fn time_grid_invariants() {
    assert!(TimeGrid::new(vec![0.0]).is_err());
    assert!(TimeGrid::new(vec![1.0, 2.0]).is_err());
    assert!(TimeGrid::new(vec![0.0, 2.0, 2.0]).is_err());
    let grid = TimeGrid::new(vec![0.0, 2.0, 5.0]).unwrap();
    assert_eq!(grid.horizon(), 5.0);
    assert_eq!(grid.index_of(2.0), Some(1));
    assert_eq!(grid.index_of(2.1), None);
}

#[test]
fn observe_identity_map_returns_states() {
    let sys = two_state_system(vec![
        Observable { name: "a".into(), scale: 1.0, coeffs: vec![(0, 1.0)] },
        Observable { name: "b".into(), scale: 1.0, coeffs: vec![(1, 1.0)] },
    ]);
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let traj = integrate(
        &sys,
        &ParameterVector::new(vec![]),
        "default",
        &grid,
        &StepControl::default(),
    )
    .unwrap();
    let out = observe(&sys, &traj, &[0.0, 1.0]).unwrap();
    assert_eq!(out, vec![vec![3.0, 3.0], vec![4.0, 4.0]]);
}

#[test]
fn observe_linear_combination() {
    let sys = two_state_system(vec![Observable {
        name: "sum".into(),
        scale: 1.0,
        coeffs: vec![(0, 1.0), (1, 2.0)],
    }]);
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let traj = integrate(
        &sys,
        &ParameterVector::new(vec![]),
        "default",
        &grid,
        &StepControl::default(),
    )
    .unwrap();
    let out = observe(&sys, &traj, &[1.0]).unwrap();
    assert_eq!(out[0][0], 11.0);
}

#[test]
fn observe_rejects_off_grid_time() {
    let sys = two_state_system(vec![Observable {
        name: "a".into(),
        scale: 1.0,
        coeffs: vec![(0, 1.0)],
    }]);
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let traj = integrate(
        &sys,
        &ParameterVector::new(vec![]),
        "default",
        &grid,
        &StepControl::default(),
    )
    .unwrap();
    match observe(&sys, &traj, &[0.5]) {
        Err(ModelError::TimeNotOnGrid(t)) => assert_eq!(t, 0.5),
        other => panic!("expected off-grid error, got {other:?}"),
    }
}

#[test]
fn observation_form_index_validated() {
    let err = OdeSystem::new(
        vec!["a".into()],
        vec![0.0],
        0,
        vec![],
        Arc::new(ZeroField(1)),
        vec![Observable { name: "bad".into(), scale: 1.0, coeffs: vec![(3, 1.0)] }],
        vec![],
    )
    .unwrap_err();
    assert!(matches!(err, ModelError::BadObservationIndex { index: 3, .. }));
}

#[test]
fn jakstat_observation_spot_check() {
    // Total phospho form on a simulated trajectory matches the dot product
    // computed by hand at a few times.
    let pulse = Condition {
        name: "pulse".into(),
        signals: vec![
            InputSignal::new(vec![(0.0, 0.0), (2.0, 2.0), (15.0, 0.0)], Interpolation::Linear)
                .unwrap(),
        ],
    };
    let sys = jakstat_model(
        10,
        vec![pulse],
        vec![Observable {
            name: "total_phospho_stat".into(),
            scale: 1.0,
            coeffs: vec![(1, 1.0), (2, 2.0)],
        }],
        2.5,
    )
    .unwrap();
    let grid = TimeGrid::new(vec![0.0, 10.0, 30.0, 60.0]).unwrap();
    let theta = ParameterVector::new(vec![0.1, 2.0, 0.2, 0.35]);
    let traj = integrate(&sys, &theta, "pulse", &grid, &StepControl::default()).unwrap();
    let out = observe(&sys, &traj, &[10.0, 30.0, 60.0]).unwrap();
    for (col, &idx) in [1usize, 2, 3].iter().enumerate() {
        let expect = traj.value(idx, 1) + 2.0 * traj.value(idx, 2);
        assert!((out[0][col] - expect).abs() < 1e-12);
    }
}
