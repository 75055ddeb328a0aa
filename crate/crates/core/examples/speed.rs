// quick timing probe for integration cost
use postcheck_core::model::*;
use std::time::Instant;

fn main() {
    let pulse = Condition {
        name: "pulse".into(),
        signals: vec![InputSignal::new(
            vec![(0.0, 0.0), (2.5, 1.7), (5.0, 2.0), (10.0, 1.4), (15.0, 0.65), (20.0, 0.22), (30.0, 0.02), (35.0, 0.0)],
            Interpolation::Linear,
        ).unwrap()],
    };
    let native = jakstat_model(10, vec![pulse.clone()], vec![], 2.5).unwrap();
    let compiled_field = CompiledField::compile(
        &jakstat_equations(10),
        native.state_names(),
        &jakstat_parameter_names(),
        &["Epo".to_string()],
    ).unwrap();
    let compiled = OdeSystem::new(
        native.state_names().to_vec(),
        native.initial_state().to_vec(),
        4,
        vec!["Epo".into()],
        std::sync::Arc::new(compiled_field),
        vec![],
        vec![pulse],
    ).unwrap();
    let grid = TimeGrid::new(vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0, 36.0, 42.0, 48.0, 54.0, 60.0]).unwrap();
    let control = StepControl::default();
    let theta = ParameterVector::new(vec![0.1, 2.0, 0.2, 0.35]);

    for (name, sys) in [("native", &native), ("compiled", &compiled)] {
        let t0 = Instant::now();
        let reps = 2000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let traj = integrate(sys, &theta, "pulse", &grid, &control).unwrap();
            acc += traj.value(15, 13);
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("{name}: {:.3} ms/integration (acc {acc:.3})", dt / reps as f64 * 1e3);
    }
    // harder corner: large k2
    let theta = ParameterVector::new(vec![4.5, 28.0, 0.9, 4.5]);
    let t0 = Instant::now();
    let reps = 500;
    for _ in 0..reps {
        let _ = integrate(&compiled, &theta, "pulse", &grid, &control).unwrap();
    }
    println!("compiled extreme corner: {:.3} ms/integration", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
    // trajectory sanity print
    let theta = ParameterVector::new(vec![0.1, 2.0, 0.2, 0.35]);
    let traj = integrate(&compiled, &theta, "pulse", &grid, &control).unwrap();
    for (i, &t) in grid.times().iter().enumerate() {
        println!("t={t:5.1} STAT={:.3} STATp={:.3} STATpd={:.3} STATn={:.3}", traj.value(i,0), traj.value(i,1), traj.value(i,2), traj.value(i,13));
    }
}
