use postcheck_core::config::ModelConfig;
use postcheck_core::model::*;

fn main() {
    let toml = std::fs::read_to_string("/root/crate/crates/cli/assets/jakstat_model.toml").unwrap();
    let built = ModelConfig::from_toml_str(&toml, "m").unwrap().build().unwrap();
    let control = StepControl::default();
    for th in [
        vec![0.60, 5.0, 0.98, 0.65],
        vec![0.60, 5.0, 0.98, 0.70],
        vec![0.70, 5.0, 0.98, 0.70],
        vec![0.70, 5.0, 0.98, 0.75],
        vec![0.80, 5.0, 0.98, 0.75],
        vec![0.55, 5.0, 0.98, 0.70],
    ] {
        let theta = ParameterVector::new(th.clone());
        let tr = integrate(&built.system, &theta, "epo_transient", &built.grid, &control).unwrap();
        let two = integrate(&built.system, &theta, "epo_two_round", &built.grid, &control).unwrap();
        let sus = integrate(&built.system, &theta, "epo_sustained", &built.grid, &control).unwrap();
        let n = built.grid.len();
        let peak = (0..n).map(|i| tr.value(i, 13)).fold(0.0f64, f64::max);
        let sus_max = (0..n).map(|i| sus.value(i, 13)).fold(0.0f64, f64::max);
        println!(
            "th={th:?} peak={peak:.3} tail60={:.3} | two: 42={:.3} 48={:.3} 54={:.3} 60={:.3} | sus_max={sus_max:.3}",
            tr.value(n - 1, 13),
            two.value(11, 13), two.value(12, 13), two.value(13, 13), two.value(15, 13),
        );
    }
}
