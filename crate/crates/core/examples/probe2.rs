use postcheck_core::config::ModelConfig;
use postcheck_core::model::*;
use std::time::Instant;

fn main() {
    let built = ModelConfig::load("crates/cli/assets/jakstat_model.toml").unwrap().build().unwrap();
    let theta = vec![0.8, 5.0, 0.98, 0.89];
    let state: Vec<f64> = (0..14).map(|i| 0.1 + 0.05 * i as f64).collect();
    let inputs = [1.2];
    let mut out = vec![0.0; 14];

    let reps = 2_000_000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for i in 0..reps {
        built.system.field().eval(i as f64 * 1e-7, &state, &inputs, &theta, &mut out);
        acc += out[13];
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("compiled RHS: {:.1} ns/eval ({acc:.1})", per * 1e9);

    let native = JakStatField::new(10).unwrap();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for i in 0..reps {
        native.eval(i as f64 * 1e-7, &state, &inputs, &theta, &mut out);
        acc += out[13];
    }
    println!("native RHS: {:.1} ns/eval ({acc:.1})", t0.elapsed().as_secs_f64() / reps as f64 * 1e9);

    // Step count over the transient window.
    let control = StepControl::default();
    let tv = ParameterVector::new(theta.clone());
    for cond in ["epo_transient", "epo_two_round"] {
        let t0 = Instant::now();
        for _ in 0..500 {
            let _ = integrate(&built.system, &tv, cond, &built.grid, &control).unwrap();
        }
        println!("{cond}: {:.3} ms/integration", t0.elapsed().as_secs_f64() / 500.0 * 1e3);
    }
}
