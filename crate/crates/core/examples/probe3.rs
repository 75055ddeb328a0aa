// Scratch design scan: posterior satisfaction probabilities per pulse shape.
use postcheck_core::bltl;
use postcheck_core::diagnostics::estimate_gap_from_store;
use postcheck_core::model::*;
use postcheck_core::posterior::*;
use postcheck_core::smc::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn observables() -> Vec<Observable> {
    vec![
        Observable { name: "total_phospho_stat".into(), scale: 1.0, coeffs: vec![(1, 1.0), (2, 2.0)] },
        Observable { name: "total_cyto_stat".into(), scale: 1.0, coeffs: vec![(0, 1.0), (1, 1.0), (2, 2.0)] },
    ]
}

fn two_round() -> Vec<(f64, f64)> {
    vec![(0.0,0.0),(1.0,0.8),(2.5,1.7),(5.0,2.0),(7.5,1.8),(10.0,1.3),(12.5,0.85),(15.0,0.5),(17.5,0.25),(20.0,0.1),(22.5,0.03),(25.0,0.0),(32.0,0.0),(34.0,0.5),(36.0,1.3),(38.0,1.85),(40.0,2.0),(42.5,1.85),(45.0,1.4),(47.5,0.95),(50.0,0.6),(53.0,0.3),(56.0,0.1),(60.0,0.0)]
}

fn sustained() -> Vec<(f64, f64)> {
    vec![(0.0, 0.0), (1.0, 1.2), (2.0, 1.9), (3.0, 2.0), (60.0, 2.0)]
}

fn main() {
    let grid = TimeGrid::new(vec![
        0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0, 36.0, 42.0, 48.0, 54.0, 60.0,
    ])
    .unwrap();
    let control = StepControl::default();
    let space = jakstat_parameter_space();
    let prior = Prior::uniform(space.clone());
    let proposal = ProposalSpec::diagonal(jakstat_proposal_sigmas()).unwrap();
    let props = [
        ("psi1", "epo_transient",
         "G<=60 ([0 <= STATn <= 1.2]) & F<=60 ([1 <= STATn <= 1.2] & F<=60 (G<=60 ([0 <= STATn <= 0.5])))"),
        ("psi2", "epo_two_round",
         "F<=60 ([1 <= STATn <= 2] & F<=60 (G<=60 ([0.5 <= STATn <= 1])))"),
        ("psi3", "epo_sustained", "F<=60 (G<=60 ([1.5 <= STATn <= 2]))"),
    ];

    let designs: Vec<(&str, Vec<(f64, f64)>, Vec<f64>)> = vec![
        ("k4 .895", vec![(0.0,0.0),(1.5,0.8),(4.0,1.7),(7.0,2.0),(11.0,1.85),(15.0,1.4),(19.0,1.0),(23.0,0.75),(27.0,0.6),(32.0,0.52),(40.0,0.5),(50.0,0.48),(52.0,0.35),(54.0,0.1),(55.0,0.0)],
         vec![0.8, 5.0, 0.98, 0.895]),
        ("k4 .89", vec![(0.0,0.0),(1.5,0.8),(4.0,1.7),(7.0,2.0),(11.0,1.85),(15.0,1.4),(19.0,1.0),(23.0,0.75),(27.0,0.6),(32.0,0.52),(40.0,0.5),(50.0,0.48),(52.0,0.35),(54.0,0.1),(55.0,0.0)],
         vec![0.8, 5.0, 0.98, 0.89]),
        ("k4 .885", vec![(0.0,0.0),(1.5,0.8),(4.0,1.7),(7.0,2.0),(11.0,1.85),(15.0,1.4),(19.0,1.0),(23.0,0.75),(27.0,0.6),(32.0,0.52),(40.0,0.5),(50.0,0.48),(52.0,0.35),(54.0,0.1),(55.0,0.0)],
         vec![0.8, 5.0, 0.98, 0.885]),
    ];

    for (label, transient, theta_star) in designs {
        let conditions = vec![
            Condition { name: "epo_transient".into(), signals: vec![InputSignal::new(transient, Interpolation::Linear).unwrap()] },
            Condition { name: "epo_two_round".into(), signals: vec![InputSignal::new(two_round(), Interpolation::Linear).unwrap()] },
            Condition { name: "epo_sustained".into(), signals: vec![InputSignal::new(sustained(), Interpolation::Linear).unwrap()] },
        ];
        let system = jakstat_model(10, conditions, observables(), 2.5).unwrap();
        let theta_star = ParameterVector::new(theta_star);

        // Synthetic data, same recipe as the shipped asset.
        let mut rng = ChaCha8Rng::seed_from_u64(20140213);
        let mut records = Vec::new();
        for cond in ["epo_transient", "epo_two_round"] {
            let traj = integrate(&system, &theta_star, cond, &grid, &control).unwrap();
            for (obs_idx, obs) in system.observables().iter().enumerate() {
                for (gi, &t) in grid.times().iter().enumerate() {
                    let clean = obs.apply(traj.row(gi));
                    let base = if obs_idx == 0 { (0.012, 0.012) } else { (0.035, 0.035) };
                    let late = if obs_idx == 1 && t >= 26.0 { 2.0 } else { 1.0 };
                    let sigma = late * (base.0 + base.1 * clean.abs());
                    let value = clean + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    records.push(ObservationRecord { condition: cond.into(), observable: obs_idx + 1,
                        time: t, value: (value*1000.0).round()/1000.0, sigma: (sigma*1000.0).round()/1000.0 });
                }
            }
        }
        let data = ObservationSet::new(records).unwrap();
        let target = OdePosterior::new(&system, &prior, &data, &grid, control).unwrap();
        let mut chain = Chain::from_point(&target, &proposal, 11, theta_star.clone());
        let mut builder = StoreBuilder::new(4, 0, None);
        let n = 20_000u64;
        for _ in 0..n {
            chain.step();
            builder.push(chain.state().theta.as_slice(), chain.state().log_posterior());
        }
        let store = builder.finish();
        let gap = estimate_gap_from_store(&store);

        // Conjunct breakdown for psi1 over distinct records.
        let mut peak_low = 0u64;
        let mut peak_high = 0u64;
        let mut tail_high = 0u64;
        let mut peaks: Vec<(f64, u64)> = Vec::new();
        let mut tails: Vec<(f64, u64)> = Vec::new();
        for rec in store.records() {
            let traj = integrate(&system, &rec.theta, "epo_transient", &grid, &control).unwrap();
            let peak = (0..grid.len()).map(|i| traj.value(i, 13)).fold(0.0f64, f64::max);
            let tail = traj.value(grid.len() - 1, 13);
            peaks.push((peak, rec.multiplicity));
            tails.push((tail, rec.multiplicity));
            if peak < 1.0 { peak_low += rec.multiplicity; }
            if peak > 1.2 { peak_high += rec.multiplicity; }
            if tail > 0.5 { tail_high += rec.multiplicity; }
        }
        let frac = |c: u64| c as f64 / n as f64;
        let quantile = |values: &mut Vec<(f64, u64)>, q: f64| -> f64 {
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            let target = (q * n as f64) as u64;
            let mut acc = 0u64;
            for &(v, w) in values.iter() {
                acc += w;
                if acc >= target { return v; }
            }
            values.last().unwrap().0
        };
        let t05 = quantile(&mut tails, 0.05);
        let t50 = quantile(&mut tails, 0.5);
        let t95 = quantile(&mut tails, 0.95);
        let p05 = quantile(&mut peaks, 0.05);
        let p95 = quantile(&mut peaks, 0.95);
        print!("tails[{t05:.3}/{t50:.3}/{t95:.3}] peaks[{p05:.3}/{p95:.3}] ");

        let traj = integrate(&system, &theta_star, "epo_transient", &grid, &control).unwrap();
        let peak_star = (0..grid.len()).map(|i| traj.value(i, 13)).fold(0.0f64, f64::max);
        let tail_star = traj.value(grid.len() - 1, 13);

        print!("{label:12} acc={:.2} peak*={peak_star:.3} tail*={tail_star:.3} ", chain.acceptance_rate());
        print!("P(pk<1)={:.3} P(pk>1.2)={:.3} P(tail>.5)={:.3} ", frac(peak_low), frac(peak_high), frac(tail_high));
        match &gap {
            Ok(g) => print!("gamma={:.4} ", g.gamma_hat),
            Err(e) => print!("gap_err({e:.30}) ", ),
        }
        for (name, cond, text) in &props {
            let phi = bltl::parse(text, system.state_names()).unwrap();
            let verifier = Verifier::new(&system, &grid, &phi, cond, control).unwrap();
            let (p_hat, _) = estimate_probability(&store, &verifier).unwrap();
            print!("{name}={p_hat:.3} ");
        }
        println!();
    }
}
