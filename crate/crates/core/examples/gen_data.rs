// Scratch asset generator (not shipped): synthesize the observation CSV.
use postcheck_core::config::ModelConfig;
use postcheck_core::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model_path = &args[1];
    let out_path = &args[2];
    let theta: Vec<f64> = args[3].split(',').map(|s| s.parse().unwrap()).collect();
    let built = ModelConfig::load(model_path).unwrap().build().unwrap();
    let control = StepControl::default();
    let theta = ParameterVector::new(theta);
    let mut rng = ChaCha8Rng::seed_from_u64(20140213);
    let mut csv = String::from("condition,observable,time_min,value,sigma\n");
    for cond in ["epo_transient", "epo_two_round"] {
        let traj = integrate(&built.system, &theta, cond, &built.grid, &control).unwrap();
        for (obs_idx, obs) in built.system.observables().iter().enumerate() {
            for (gi, &t) in built.grid.times().iter().enumerate() {
                let clean = obs.apply(traj.row(gi));
                let base = if obs_idx == 0 { (0.012, 0.012) } else { (0.035, 0.035) };
                let late = if obs_idx == 1 && t >= 26.0 { 2.0 } else { 1.0 };
                let sigma = late * (base.0 + base.1 * clean.abs());
                let value = clean + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
                csv.push_str(&format!(
                    "{cond},{},{t},{},{}\n",
                    obs_idx + 1,
                    (value * 1000.0).round() / 1000.0,
                    (sigma * 1000.0).round() / 1000.0
                ));
            }
        }
    }
    std::fs::write(out_path, csv).unwrap();
    println!("wrote {out_path}");
}
