use super::*;
use crate::model::{TimeGrid, Trajectory};

use proptest::prelude::*;

fn trace1(values: &[f64], times: Vec<f64>) -> Trajectory {
    let grid = TimeGrid::new(times).unwrap();
    Trajectory::new(grid, 1, values.to_vec()).unwrap()
}

fn unit_trace(values: &[f64]) -> Trajectory {
    trace1(values, (0..values.len()).map(|i| i as f64).collect())
}

fn names() -> Vec<String> {
    vec!["x".to_string(), "STATn".to_string()]
}

#[test]
fn parse_constants() {
    assert_eq!(parse("true", &names()).unwrap(), Formula::True);
    assert_eq!(parse("false", &names()).unwrap(), Formula::False);
}

#[test]
fn parse_reach_and_stay_property() {
    let phi = parse("F<=60 (G<=60 ([1.5 <= STATn <= 2]))", &names()).unwrap();
    assert_eq!(
        phi,
        Formula::finally(60.0, Formula::globally(60.0, Formula::atom(1, "STATn", 1.5, 2.0)))
    );
}

#[test]
fn truncated_atom_is_a_syntax_error() {
    match parse("[1 <= STATn", &names()) {
        Err(ParseError::UnexpectedEnd { .. }) => {}
        other => panic!("expected end-of-input error, got {other:?}"),
    }
}

#[test]
fn unknown_state_is_reported_with_position() {
    match parse("[0 <= bogus <= 1]", &names()) {
        Err(ParseError::UnknownIdent { name, col, .. }) => {
            assert_eq!(name, "bogus");
            assert_eq!(col, 7);
        }
        other => panic!("expected unknown identifier, got {other:?}"),
    }
}

#[test]
fn empty_band_rejected() {
    assert!(matches!(
        parse("[2 <= x <= 1]", &names()),
        Err(ParseError::EmptyBand { low, high, .. }) if low == 2.0 && high == 1.0
    ));
}

#[test]
fn negative_bound_rejected() {
    assert!(matches!(
        parse("F<=-1 (true)", &names()),
        Err(ParseError::NegativeBound { bound, .. }) if bound == -1.0
    ));
}

#[test]
fn implication_desugars() {
    let phi = parse("true -> false", &names()).unwrap();
    assert_eq!(phi, Formula::or(Formula::not(Formula::True), Formula::False));
}

#[test]
fn precedence_shape() {
    // ! > temporal > & > | > ->
    let phi = parse("!true & false | true -> false", &names()).unwrap();
    assert_eq!(
        phi,
        Formula::or(
            Formula::not(Formula::or(
                Formula::and(Formula::not(Formula::True), Formula::False),
                Formula::True
            )),
            Formula::False
        )
    );

    let phi = parse("true U<=5 true & false", &names()).unwrap();
    assert_eq!(
        phi,
        Formula::and(Formula::until(5.0, Formula::True, Formula::True), Formula::False)
    );
}

#[test]
fn globally_band_on_constant_trace() {
    let traj = unit_trace(&[0.5; 61]);
    let phi = Formula::globally(60.0, Formula::atom(0, "x", 0.0, 1.2));
    assert!(satisfies(&phi, &traj));
}

#[test]
fn until_window_boundary() {
    let phi = Formula::until(2.0, Formula::True, Formula::atom(0, "x", 1.0, 1.0));
    let hit = unit_trace(&[0.0, 0.0, 1.0]);
    assert!(eval(&phi, &hit, 0));
    let late = unit_trace(&[0.0, 0.0, 0.0, 1.0]);
    assert!(!eval(&phi, &late, 0));
}

#[test]
fn until_requires_lhs_up_to_witness() {
    // rhs holds at index 2 but lhs fails at index 1.
    let lhs = Formula::atom(0, "x", 0.0, 0.5);
    let rhs = Formula::atom(0, "x", 2.0, 3.0);
    let phi = Formula::until(10.0, lhs, rhs);
    let traj = unit_trace(&[0.0, 1.0, 2.0]);
    assert!(!eval(&phi, &traj, 0));
    let ok = unit_trace(&[0.0, 0.3, 2.0]);
    assert!(eval(&phi, &ok, 0));
}

fn reach_then_settle() -> Formula {
    // Stays in the low band, reaches the high band, then settles low.
    Formula::and(
        Formula::globally(60.0, Formula::atom(0, "x", 0.0, 1.2)),
        Formula::finally(
            60.0,
            Formula::and(
                Formula::atom(0, "x", 1.0, 1.2),
                Formula::finally(60.0, Formula::globally(60.0, Formula::atom(0, "x", 0.0, 0.5))),
            ),
        ),
    )
}

#[test]
fn peak_then_settle_trace_satisfies() {
    let values = [0.0, 0.4, 0.9, 1.1, 0.8, 0.5, 0.3, 0.3, 0.3];
    let traj = trace1(&values, vec![0.0, 5.0, 10.0, 15.0, 25.0, 35.0, 45.0, 55.0, 60.0]);
    assert!(satisfies(&reach_then_settle(), &traj));
}

#[test]
fn overshoot_violates_band_conjunct() {
    let values = [0.0, 0.4, 1.3, 1.1, 0.8, 0.5, 0.3, 0.3, 0.3];
    let traj = trace1(&values, vec![0.0, 5.0, 10.0, 15.0, 25.0, 35.0, 45.0, 55.0, 60.0]);
    assert!(!satisfies(&reach_then_settle(), &traj));
}

#[test]
fn round_trip_on_property_corpus() {
    let corpus = [
        "G<=60 ([0 <= STATn <= 1.2]) & F<=60 ([1 <= STATn <= 1.2] & F<=60 (G<=60 ([0 <= STATn <= 0.5])))",
        "F<=60 ([1 <= STATn <= 2] & F<=60 (G<=60 ([0.5 <= STATn <= 1])))",
        "F<=60 (G<=60 ([1.5 <= STATn <= 2]))",
        "true U<=12.5 ([0 <= x <= 1] | !false)",
        "[-2.5 <= x <= -0.5] -> G<=3 (true)",
    ];
    for text in corpus {
        let phi = parse(text, &names()).unwrap();
        let printed = phi.to_string();
        let reparsed = parse(&printed, &names()).unwrap();
        assert_eq!(phi, reparsed, "round trip changed {text:?} -> {printed:?}");
    }
}

// ---------------------------------------------------------------------------
// Property tests: random formulas and traces.
// ---------------------------------------------------------------------------

fn arb_formula(depth: u32, negation_free: bool) -> BoxedStrategy<Formula> {
    let atom = (0usize..1, -1.0f64..2.0, 0.0f64..2.0).prop_map(|(var, low, width)| {
        Formula::atom(var, "x", low, low + width)
    });
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        atom,
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let sub = arb_formula(depth - 1, negation_free);
    let sub2 = arb_formula(depth - 1, negation_free);
    let bound = 0.0f64..20.0;
    let mut choices = vec![
        leaf.boxed(),
        (sub.clone(), sub2.clone())
            .prop_map(|(a, b)| Formula::or(a, b))
            .boxed(),
        (sub.clone(), sub2.clone())
            .prop_map(|(a, b)| Formula::and(a, b))
            .boxed(),
        (bound.clone(), sub.clone(), sub2)
            .prop_map(|(t, a, b)| Formula::until(t, a, b))
            .boxed(),
        (bound.clone(), sub.clone())
            .prop_map(|(t, a)| Formula::finally(t, a))
            .boxed(),
        (bound.clone(), sub.clone())
            .prop_map(|(t, a)| Formula::globally(t, a))
            .boxed(),
    ];
    if !negation_free {
        choices.push(sub.prop_map(Formula::not).boxed());
    }
    proptest::strategy::Union::new(choices).boxed()
}

fn arb_trace() -> BoxedStrategy<Trajectory> {
    (2usize..16, any::<u64>())
        .prop_map(|(len, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut times = vec![0.0f64];
            for _ in 1..len {
                times.push(times.last().unwrap() + rng.gen_range(0.25..3.0));
            }
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.5..2.5)).collect();
            trace1(&values, times)
        })
        .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// G equals !F! on random formulas and traces.
    #[test]
    fn globally_is_dual_of_finally(
        inner in arb_formula(2, false),
        bound in 0.0f64..20.0,
        traj in arb_trace(),
    ) {
        let g = Formula::globally(bound, inner.clone());
        let dual = Formula::not(Formula::finally(bound, Formula::not(inner)));
        for i in 0..traj.grid().len() {
            prop_assert_eq!(eval(&g, &traj, i), eval(&dual, &traj, i));
        }
    }

    /// Normalization to the {Not, Or, Until} core preserves evaluation.
    #[test]
    fn normalize_preserves_evaluation(
        phi in arb_formula(3, false),
        traj in arb_trace(),
    ) {
        let norm = phi.normalize();
        for i in 0..traj.grid().len() {
            prop_assert_eq!(eval(&phi, &traj, i), eval(&norm, &traj, i));
        }
    }

    /// Widening atom bands in a negation-free formula preserves satisfaction.
    #[test]
    fn widening_preserves_satisfaction(
        phi in arb_formula(3, true),
        traj in arb_trace(),
        widen_low in 0.0f64..1.0,
        widen_high in 0.0f64..1.0,
    ) {
        fn widen(phi: &Formula, dl: f64, dh: f64) -> Formula {
            match phi {
                Formula::Atom { var, name, low, high } => {
                    Formula::atom(*var, name.clone(), low - dl, high + dh)
                }
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                Formula::Not(a) => Formula::not(widen(a, dl, dh)),
                Formula::Or(a, b) => Formula::or(widen(a, dl, dh), widen(b, dl, dh)),
                Formula::And(a, b) => Formula::and(widen(a, dl, dh), widen(b, dl, dh)),
                Formula::Until { bound, lhs, rhs } => {
                    Formula::until(*bound, widen(lhs, dl, dh), widen(rhs, dl, dh))
                }
                Formula::Finally { bound, inner } => Formula::finally(*bound, widen(inner, dl, dh)),
                Formula::Globally { bound, inner } => {
                    Formula::globally(*bound, widen(inner, dl, dh))
                }
            }
        }
        if satisfies(&phi, &traj) {
            prop_assert!(satisfies(&widen(&phi, widen_low, widen_high), &traj));
        }
    }

    /// Printing and re-parsing yields an equal tree.
    #[test]
    fn print_parse_round_trip(phi in arb_formula(3, false)) {
        let printed = phi.to_string();
        let reparsed = parse(&printed, &names()).unwrap();
        prop_assert_eq!(phi, reparsed, "printed form: {}", printed);
    }
}
