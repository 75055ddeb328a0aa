use super::*;
use crate::bltl::parse;
use crate::model::{CompiledField, Observable, OdeSystem, ParameterSpace};
use crate::posterior::{
    run_chain, Chain, ObservationRecord, ObservationSet, OdePosterior, Prior, ProposalSpec,
    StoreBuilder,
};
use std::sync::Arc;

use proptest::prelude::*;

#[test]
fn fixed_sample_size_closed_form() {
    assert_eq!(fixed_sample_size(0.01, 0.05, 1.0).unwrap(), 1843);
    // log(1/0.01) / (0.025 * 0.05^2) = 73682.72..., so the ceiling is 73683.
    assert_eq!(fixed_sample_size(0.01, 0.05, 0.025).unwrap(), 73683);
    assert_eq!(fixed_sample_size(0.05, 0.1, 0.1).unwrap(), 2996);

    assert!(fixed_sample_size(0.0, 0.05, 1.0).is_err());
    assert!(fixed_sample_size(0.01, 1.0, 1.0).is_err());
    assert!(fixed_sample_size(0.01, 0.05, 0.0).is_err());
    assert!(fixed_sample_size(0.01, 0.05, 1.5).is_err());
}

#[test]
fn fixed_sample_size_is_tight() {
    // N is the smallest integer satisfying the bound.
    for &(eps, delta, gamma) in
        &[(0.01, 0.05, 1.0), (0.01, 0.05, 0.025), (0.05, 0.1, 0.1), (0.2, 0.02, 0.7)]
    {
        let n = fixed_sample_size(eps, delta, gamma).unwrap();
        assert!((-gamma * delta * delta * n as f64).exp() <= eps);
        assert!((-gamma * delta * delta * (n - 1) as f64).exp() > eps);
    }
}

#[test]
fn sequential_threshold_closed_form() {
    let m = sequential_threshold(0.01, 0.05, 0.025, 0.7).unwrap();
    assert!((m - 5530.6).abs() < 0.1, "M = {m}");
    let m = sequential_threshold(0.01, 0.1, 1.0, 0.5).unwrap();
    assert!((m - 45.02).abs() < 0.01, "M = {m}");

    // Strictly decreasing in epsilon.
    let mut last = f64::INFINITY;
    for eps in [0.001, 0.01, 0.1, 0.5] {
        let m = sequential_threshold(eps, 0.05, 0.1, 0.7).unwrap();
        assert!(m < last);
        last = m;
    }

    assert!(sequential_threshold(0.01, 0.05, 0.1, 1.0).is_err());
    assert!(sequential_threshold(0.01, 0.05, 1.1, 0.5).is_err());
}

#[test]
fn hypothesis_spec_validation() {
    let phi = Formula::True;
    assert!(HypothesisSpec::new(phi.clone(), 0.7, 0.05, 0.01, "c").is_ok());
    // delta must stay below min(r, 1 - r).
    assert!(HypothesisSpec::new(phi.clone(), 0.9, 0.2, 0.01, "c").is_err());
    assert!(HypothesisSpec::new(phi.clone(), 1.0, 0.05, 0.01, "c").is_err());
    assert!(HypothesisSpec::new(phi, 0.7, 0.05, 0.0, "c").is_err());
}

#[test]
fn fixed_decision_boundary() {
    // S = 70 of 100 at r = 0.7 ties into H0; 69 falls to H1.
    let seventy = (0..100).map(|i| i < 70);
    let outcome = fixed_test_verdicts(0.7, 100, seventy).unwrap();
    assert_eq!(outcome.decision, Decision::H0);
    assert_eq!(outcome.successes, 70);
    assert_eq!(outcome.p_hat, 0.7);

    let sixty_nine = (0..100).map(|i| i < 69);
    let outcome = fixed_test_verdicts(0.7, 100, sixty_nine).unwrap();
    assert_eq!(outcome.decision, Decision::H1);
}

#[test]
fn fixed_all_satisfying_accepts_any_threshold() {
    let outcome = fixed_test_verdicts(0.99, 500, std::iter::repeat(true)).unwrap();
    assert_eq!(outcome.decision, Decision::H0);
    assert_eq!(outcome.p_hat, 1.0);
}

#[test]
fn fixed_short_stream_errors_with_shortfall() {
    let outcome = fixed_test_verdicts(0.5, 10, vec![true; 7]);
    assert_eq!(outcome.unwrap_err(), SmcError::ShortSource { needed: 10, available: 7 });
}

#[test]
fn sequential_hand_simulations() {
    // r = 0.5, M = 2: four successes cross the upper boundary at n = 4.
    let outcome = sequential_test_verdicts(0.5, 2.0, 1, None, vec![true; 4]);
    assert_eq!(outcome.decision, Decision::H0);
    assert_eq!(outcome.samples_used, 4);

    let outcome = sequential_test_verdicts(0.5, 2.0, 1, None, vec![false; 4]);
    assert_eq!(outcome.decision, Decision::H1);
    assert_eq!(outcome.samples_used, 4);

    // Alternating stream stays within |S - n/2| <= 0.5 forever.
    let alternating = (0..20_000).map(|i| i % 2 == 0);
    let outcome = sequential_test_verdicts(0.5, 2.0, 1, Some(10_000), alternating);
    assert_eq!(outcome.decision, Decision::Undecided);
    assert_eq!(outcome.samples_used, 10_000);
}

proptest! {
    /// Batched runs make the step-mode decision whenever step mode decides,
    /// and stop within one batch of the step-mode stopping time.
    #[test]
    fn batch_mode_agrees_with_step_mode(
        verdicts in prop::collection::vec(any::<bool>(), 1..300),
        r in 0.1f64..0.9,
        threshold in 0.5f64..5.0,
        batch in 1u64..20,
    ) {
        let step = sequential_test_verdicts(r, threshold, 1, None, verdicts.iter().copied());
        let batched = sequential_test_verdicts(r, threshold, batch, None, verdicts.iter().copied());
        if step.decision != Decision::Undecided {
            prop_assert_eq!(batched.decision, step.decision);
            prop_assert!(batched.samples_used >= step.samples_used);
            prop_assert!(batched.samples_used < step.samples_used + batch);
        } else {
            prop_assert_eq!(batched.decision, Decision::Undecided);
        }
    }
}

// ---------------------------------------------------------------------------
// Model-backed tests.
// ---------------------------------------------------------------------------

/// One state integrating its rate parameter: x(t) = k*t on the unit grid.
fn ramp_system() -> OdeSystem {
    let states = vec!["x".to_string()];
    let params = vec!["k".to_string()];
    let field = CompiledField::compile(&["k".to_string()], &states, &params, &[]).unwrap();
    OdeSystem::new(
        states,
        vec![0.0],
        1,
        vec![],
        Arc::new(field),
        vec![Observable { name: "y".into(), scale: 1.0, coeffs: vec![(0, 1.0)] }],
        vec![],
    )
    .unwrap()
}

fn unit_grid() -> TimeGrid {
    TimeGrid::new(vec![0.0, 1.0]).unwrap()
}

/// Satisfied iff the rate stays at or below 0.5.
fn low_band_formula() -> Formula {
    parse("G<=1 ([0 <= x <= 0.5])", &["x".to_string()]).unwrap()
}

#[test]
fn verifier_verdict_tracks_parameter() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();
    assert!(verifier.verify(&ParameterVector::new(vec![0.3])));
    assert!(verifier.verify(&ParameterVector::new(vec![0.5])));
    assert!(!verifier.verify(&ParameterVector::new(vec![0.7])));
    assert_eq!(verifier.failures(), 0);
}

#[test]
fn integration_failure_counts_as_unsatisfied() {
    // x' = x^2 from x(0) = 1 blows up before t = 2.
    let states = vec!["x".to_string()];
    let field =
        CompiledField::compile(&["x^2".to_string()], &states, &["k".to_string()], &[]).unwrap();
    let system = OdeSystem::new(
        states,
        vec![1.0],
        1,
        vec![],
        Arc::new(field),
        vec![],
        vec![],
    )
    .unwrap();
    let grid = TimeGrid::new(vec![0.0, 2.0]).unwrap();
    let phi = Formula::True;
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();
    let theta = ParameterVector::new(vec![0.0]);
    assert!(!verifier.verify(&theta));
    assert_eq!(verifier.failures(), 1);
    assert_eq!(verifier.failed_parameters(), vec![theta]);
    // The free function agrees.
    assert!(!verify_sample(&system, &ParameterVector::new(vec![0.0]), &grid, &phi, "default", &StepControl::default()));
}

fn store_from_rates(rates_and_mults: &[(f64, u64)]) -> SampleStore {
    let mut builder = StoreBuilder::new(1, 0, None);
    for &(rate, mult) in rates_and_mults {
        for _ in 0..mult {
            builder.push(&[rate], 0.0);
        }
    }
    builder.finish()
}

#[test]
fn estimate_probability_weights_by_multiplicity() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();

    // Satisfying parameter with weight 3, violating one with weight 1.
    let store = store_from_rates(&[(0.2, 3), (0.9, 1)]);
    let (p_hat, n) = estimate_probability(&store, &verifier).unwrap();
    assert_eq!(p_hat, 0.75);
    assert_eq!(n, 4);

    let all_sat = store_from_rates(&[(0.1, 2), (0.4, 5)]);
    let (p_hat, _) = estimate_probability(&all_sat, &verifier).unwrap();
    assert_eq!(p_hat, 1.0);

    let empty = StoreBuilder::new(1, 0, None).finish();
    assert!(matches!(estimate_probability(&empty, &verifier), Err(SmcError::EmptyStore)));
}

#[test]
fn fixed_test_store_counts_prefix_weights() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();

    // First 4 of the 6 steps: rates 0.2 (x3) and 0.9 (x1) -> S = 3 of 4.
    let store = store_from_rates(&[(0.2, 3), (0.9, 2), (0.1, 1)]);
    let outcome = fixed_test_store(0.7, 4, &store, &verifier).unwrap();
    assert_eq!(outcome.successes, 3);
    assert_eq!(outcome.decision, Decision::H0);

    let err = fixed_test_store(0.7, 10, &store, &verifier).unwrap_err();
    assert_eq!(err, SmcError::ShortSource { needed: 10, available: 6 });
}

#[test]
fn sequential_store_exhaustion_is_undecided() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();

    let store = store_from_rates(&[(0.2, 2), (0.9, 2), (0.3, 2)]);
    let plan = SequentialTestPlan {
        threshold: 50.0,
        gamma_used: 1.0,
        max_samples: None,
        batch_size: 2,
    };
    let outcome = sequential_test_store(0.5, &plan, &store, &verifier).unwrap();
    assert_eq!(outcome.decision, Decision::Undecided);
    assert_eq!(outcome.samples_used, 6);
    assert_eq!(outcome.successes, 4);
}

#[test]
fn sequential_store_matches_verdict_fold() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let verifier = Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();

    let runs: Vec<(f64, u64)> =
        vec![(0.2, 3), (0.9, 1), (0.1, 4), (0.8, 2), (0.05, 5), (0.6, 1), (0.3, 2)];
    let store = store_from_rates(&runs);
    let expanded: Vec<bool> = runs
        .iter()
        .flat_map(|&(rate, mult)| std::iter::repeat(rate <= 0.5).take(mult as usize))
        .collect();
    for batch in [1u64, 3, 5] {
        let plan = SequentialTestPlan {
            threshold: 2.0,
            gamma_used: 1.0,
            max_samples: Some(1_000),
            batch_size: batch,
        };
        let from_store = sequential_test_store(0.5, &plan, &store, &verifier).unwrap();
        let from_fold =
            sequential_test_verdicts(0.5, 2.0, batch, Some(1_000), expanded.iter().copied());
        assert_eq!(from_store, from_fold, "batch {batch}");
    }
}

#[test]
fn live_and_store_replay_agree() {
    let system = ramp_system();
    let grid = unit_grid();
    let phi = low_band_formula();
    let prior = Prior::uniform(ParameterSpace::new(vec![(-2.0, 2.0)]).unwrap());
    let data = ObservationSet::new(vec![ObservationRecord {
        condition: "default".into(),
        observable: 1,
        time: 1.0,
        value: 0.4,
        sigma: 0.5,
    }])
    .unwrap();
    let target = OdePosterior::new(&system, &prior, &data, &grid, StepControl::default()).unwrap();
    let proposal = ProposalSpec::diagonal(vec![0.6]).unwrap();

    for seed in [1u64, 7, 42] {
        let n = 60;
        let burn = 20;
        let store = run_chain(&target, &proposal, prior.space(), burn, n, seed, |_, _| {}).unwrap();
        let verifier =
            Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();
        let from_store = fixed_test_store(0.5, n, &store, &verifier).unwrap();

        let mut chain =
            Chain::init_from_prior(&target, &proposal, prior.space(), seed, 100).unwrap();
        chain.burn_in(burn);
        let verifier2 =
            Verifier::new(&system, &grid, &phi, "default", StepControl::default()).unwrap();
        let live = fixed_test_live(0.5, n, &mut chain, &verifier2).unwrap();

        assert_eq!(from_store, live, "seed {seed}");
    }
}
