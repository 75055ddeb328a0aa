// Scratch calibration harness for the reference assets (not shipped).
use postcheck_core::bltl;
use postcheck_core::config::ModelConfig;
use postcheck_core::diagnostics::estimate_gap_from_store;
use postcheck_core::model::*;
use postcheck_core::posterior::*;
use postcheck_core::smc::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const MODEL_TOML: &str = r#"
name = "jakstat-k10"
inputs = ["Epo"]

[[parameters]]
name = "k1"
bounds = [0.0, 5.0]
proposal_sigma = 0.02

[[parameters]]
name = "k2"
bounds = [0.0, 30.0]
proposal_sigma = 0.5

[[parameters]]
name = "k3"
bounds = [0.0, 1.0]
proposal_sigma = 0.01

[[parameters]]
name = "k4"
bounds = [0.0, 5.0]
proposal_sigma = 0.02

[[states]]
name = "STAT"
initial = 2.5
equation = "-k1*STAT*Epo + 2*k4*X10"

[[states]]
name = "STATp"
initial = 0.0
equation = "k1*STAT*Epo - k2*STATp^2"

[[states]]
name = "STATpd"
initial = 0.0
equation = "-k3*STATpd + 0.5*k2*STATp^2"

[[states]]
name = "X1"
initial = 0.0
equation = "k3*STATpd - k4*X1"

[[states]]
name = "X2"
initial = 0.0
equation = "k4*X1 - k4*X2"

[[states]]
name = "X3"
initial = 0.0
equation = "k4*X2 - k4*X3"

[[states]]
name = "X4"
initial = 0.0
equation = "k4*X3 - k4*X4"

[[states]]
name = "X5"
initial = 0.0
equation = "k4*X4 - k4*X5"

[[states]]
name = "X6"
initial = 0.0
equation = "k4*X5 - k4*X6"

[[states]]
name = "X7"
initial = 0.0
equation = "k4*X6 - k4*X7"

[[states]]
name = "X8"
initial = 0.0
equation = "k4*X7 - k4*X8"

[[states]]
name = "X9"
initial = 0.0
equation = "k4*X8 - k4*X9"

[[states]]
name = "X10"
initial = 0.0
equation = "k4*X9 - k4*X10"

[[states]]
name = "STATn"
initial = 0.0
equation = "k3*STATpd - k4*X10"

[[observables]]
name = "total_phospho_stat"
coefficients = { STATp = 1.0, STATpd = 2.0 }

[[observables]]
name = "total_cyto_stat"
coefficients = { STAT = 1.0, STATp = 1.0, STATpd = 2.0 }

[[conditions]]
name = "epo_transient"
[conditions.signals.Epo]
interpolation = "linear"
points = [[0.0, 0.0], [1.0, 0.8], [2.5, 1.7], [5.0, 2.0], [7.5, 1.85], [10.0, 1.4], [12.5, 1.0], [15.0, 0.65], [17.5, 0.4], [20.0, 0.22], [25.0, 0.07], [30.0, 0.02], [35.0, 0.0]]

[[conditions]]
name = "epo_two_round"
[conditions.signals.Epo]
interpolation = "linear"
points = [[0.0, 0.0], [1.0, 0.8], [2.5, 1.7], [5.0, 2.0], [7.5, 1.8], [10.0, 1.3], [12.5, 0.85], [15.0, 0.5], [17.5, 0.25], [20.0, 0.1], [22.5, 0.03], [25.0, 0.0], [32.0, 0.0], [34.0, 0.5], [36.0, 1.3], [38.0, 1.85], [40.0, 2.0], [42.5, 1.85], [45.0, 1.4], [47.5, 0.95], [50.0, 0.6], [53.0, 0.3], [56.0, 0.1], [60.0, 0.0]]

[[conditions]]
name = "epo_sustained"
[conditions.signals.Epo]
interpolation = "linear"
points = [[0.0, 0.0], [1.0, 1.2], [2.0, 1.9], [3.0, 2.0], [60.0, 2.0]]

[grid]
times = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0, 36.0, 42.0, 48.0, 54.0, 60.0]
"#;

const PROPS: &[(&str, f64, &str, &str)] = &[
    ("psi1", 0.7, "epo_transient",
     "G<=60 ([0 <= STATn <= 1.2]) & F<=60 ([1 <= STATn <= 1.2] & F<=60 (G<=60 ([0 <= STATn <= 0.5])))"),
    ("psi2", 0.8, "epo_two_round",
     "F<=60 ([1 <= STATn <= 2] & F<=60 (G<=60 ([0.5 <= STATn <= 1])))"),
    ("psi3", 0.8, "epo_sustained",
     "F<=60 (G<=60 ([1.5 <= STATn <= 2]))"),
];

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let theta_star = ParameterVector::new(vec![0.8, 5.0, 0.98, 0.9]);
    let noise_scale: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let n_steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let burn_in: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let n_seeds: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(3);

    let config = ModelConfig::from_toml_str(MODEL_TOML, "inline").unwrap();
    let built = config.build().unwrap();
    let control = StepControl::default();

    // --- reference trajectories under theta* ---
    for cond in ["epo_transient", "epo_two_round", "epo_sustained"] {
        let traj = integrate(&built.system, &theta_star, cond, &built.grid, &control).unwrap();
        let statn: Vec<String> =
            (0..built.grid.len()).map(|i| format!("{:.2}", traj.value(i, 13))).collect();
        println!("{cond:16} STATn: {}", statn.join(" "));
    }

    // --- synthetic data from theta* ---
    let mut rng = ChaCha8Rng::seed_from_u64(20140213);
    let mut records = Vec::new();
    for cond in ["epo_transient", "epo_two_round"] {
        let traj = integrate(&built.system, &theta_star, cond, &built.grid, &control).unwrap();
        for (obs_idx, obs) in built.system.observables().iter().enumerate() {
            for (gi, &t) in built.grid.times().iter().enumerate() {
                let clean = obs.apply(traj.row(gi));
                let base = if obs_idx == 0 { (0.015, 0.015) } else { (0.035, 0.035) };
                let late = if obs_idx == 1 && t >= 26.0 { 2.0 } else { 1.0 };
                let sigma = noise_scale * late * (base.0 + base.1 * clean.abs());
                let value = clean + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
                records.push(ObservationRecord {
                    condition: cond.into(),
                    observable: obs_idx + 1,
                    time: t,
                    value: (value * 1000.0).round() / 1000.0,
                    sigma: (sigma * 1000.0).round() / 1000.0,
                });
            }
        }
    }
    println!("data: {} records", records.len());
    let data = ObservationSet::new(records).unwrap();

    let prior = Prior::uniform(built.space.clone());
    let proposal = ProposalSpec::diagonal(built.proposal_sigmas.clone().unwrap()).unwrap();

    let formulas: Vec<(&str, f64, &str, bltl::Formula)> = PROPS
        .iter()
        .map(|&(name, r, cond, text)| {
            (name, r, cond, bltl::parse(text, built.system.state_names()).unwrap())
        })
        .collect();

    for seed in 0..n_seeds {
        let t0 = Instant::now();
        let target =
            OdePosterior::new(&built.system, &prior, &data, &built.grid, control).unwrap();
        let store = run_chain(&target, &proposal, &built.space, burn_in, n_steps, seed, |_, _| {})
            .unwrap();
        let chain_time = t0.elapsed().as_secs_f64();

        // posterior summary
        let n = store.total_steps() as f64;
        let mut mean = [0.0f64; 4];
        let mut m2 = [0.0f64; 4];
        for rec in store.records() {
            for k in 0..4 {
                mean[k] += rec.theta[k] * rec.multiplicity as f64;
                m2[k] += rec.theta[k] * rec.theta[k] * rec.multiplicity as f64;
            }
        }
        for k in 0..4 {
            mean[k] /= n;
            m2[k] = (m2[k] / n - mean[k] * mean[k]).sqrt();
        }
        let distinct = store.records().len() as f64;
        println!(
            "seed {seed}: chain {chain_time:.0}s acc={:.3} mean=({:.3},{:.2},{:.3},{:.3}) sd=({:.3},{:.2},{:.3},{:.3})",
            distinct / n, mean[0], mean[1], mean[2], mean[3], m2[0], m2[1], m2[2], m2[3]
        );

        let gap = estimate_gap_from_store(&store);
        match &gap {
            Ok(g) => {
                let n_fixed = fixed_sample_size(0.01, 0.05, g.gamma_hat).unwrap();
                println!(
                    "  gap: gamma={:.4} eta={} iters={} -> N(0.01,0.05)={}",
                    g.gamma_hat, g.eta, g.iterations, n_fixed
                );
            }
            Err(e) => println!("  gap error: {e}"),
        }

        let vt = Instant::now();
        for (name, r, cond, phi) in &formulas {
            let verifier = Verifier::new(&built.system, &built.grid, phi, cond, control).unwrap();
            let (p_hat, _) = estimate_probability(&store, &verifier).unwrap();
            let decision = if let Ok(g) = &gap {
                match fixed_sample_size(0.01, 0.05, g.gamma_hat) {
                    Ok(nfix) if nfix <= store.total_steps() => {
                        format!("{:?}", fixed_test_store(*r, nfix, &store, &verifier).unwrap().decision)
                    }
                    Ok(nfix) => format!("N={nfix} too large"),
                    Err(e) => format!("{e}"),
                }
            } else {
                "no gap".into()
            };
            println!("  {name}: p_hat={p_hat:.4} r={r} -> {decision} (fail={})", verifier.failures());
        }
        println!("  verify time {:.0}s", vt.elapsed().as_secs_f64());
    }
}
