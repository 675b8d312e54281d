mod common;

use common::{arb_trace, brute_force_bounded, brute_force_unbounded, trace};
use grq::charging::check_charging;
use grq::invariants::{check_grq_transcript, check_rejection_timing};
use grq::model::check_transcript;
use grq::oracle::{enumerate_feasible, optimal_bounded, optimal_unbounded, verify_schedule};
use grq::schedulers::{run_grq, run_grq_with, run_naive_greedy, SchedulerConfig, TieBreak};
use grq::weight::Rational;
use grq::workbench::format::{emit_trace, parse_trace};
use grq::workbench::generate::{gen_killer, gen_random, GeneratorParams};
use grq::Weight;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bounded_oracle_matches_brute_force(tr in arb_trace(5, 4, 3)) {
        let opt = optimal_bounded(&tr).unwrap();
        prop_assert_eq!(opt.value, brute_force_bounded(&tr));
        prop_assert!(verify_schedule(&tr, &opt).unwrap().is_empty());
    }

    #[test]
    fn unbounded_oracle_matches_brute_force(tr in arb_trace(5, 4, 1)) {
        prop_assert_eq!(optimal_unbounded(&tr).value, brute_force_unbounded(&tr));
    }

    #[test]
    fn enumeration_is_feasible_and_reaches_the_optimum(tr in arb_trace(4, 4, 2)) {
        let all = enumerate_feasible(&tr, usize::MAX);
        let mut seen = std::collections::HashSet::new();
        for s in &all {
            prop_assert!(verify_schedule(&tr, s).unwrap().is_empty());
            prop_assert!(seen.insert(s.assignment.clone()), "duplicate schedule");
        }
        let best = all.iter().map(|s| s.value).max().unwrap();
        prop_assert_eq!(best, optimal_bounded(&tr).unwrap().value);
    }

    #[test]
    fn oracle_orderings(tr in arb_trace(8, 6, 3)) {
        let bounded = optimal_bounded(&tr).unwrap();
        let unbounded = optimal_unbounded(&tr);
        prop_assert!(bounded.value <= unbounded.value);
        let bigger = tr.with_buffer_size(tr.buffer_size() + 1).unwrap();
        prop_assert!(bounded.value <= optimal_bounded(&bigger).unwrap().value);
        let wide = tr.with_buffer_size(tr.len().max(1) as u32).unwrap();
        prop_assert_eq!(optimal_bounded(&wide).unwrap().value, unbounded.value);
        prop_assert!(run_grq(&tr).total <= bounded.value);
        prop_assert!(run_naive_greedy(&tr).total <= bounded.value);
    }

    #[test]
    fn grq_structural_invariants(tr in arb_trace(10, 8, 4)) {
        let grq = run_grq(&tr);
        let v = check_grq_transcript(&tr, &grq);
        prop_assert!(v.is_empty(), "{:?}", v);
        prop_assert!(check_transcript(&tr, &run_naive_greedy(&tr)).is_empty());
    }

    #[test]
    fn grq_invariants_hold_for_other_tie_break(tr in arb_trace(8, 6, 3)) {
        let cfg = SchedulerConfig { tie_break: TieBreak::LaterDeadline };
        let grq = run_grq_with(&tr, &cfg);
        prop_assert!(check_grq_transcript(&tr, &grq).is_empty());
        let opt = optimal_bounded(&tr).unwrap();
        prop_assert!(opt.value <= grq.total * 2);
        prop_assert!(check_charging(&tr, &grq, &opt).passed());
    }

    #[test]
    fn charging_holds_against_every_adversary(tr in arb_trace(5, 5, 3)) {
        let grq = run_grq(&tr);
        for adv in enumerate_feasible(&tr, 60) {
            let report = check_charging(&tr, &grq, &adv);
            prop_assert!(report.passed(), "{:?}", report.failures());
            prop_assert!(check_rejection_timing(&tr, &grq, &adv).is_empty());
            prop_assert!(adv.value <= grq.total * 2);
        }
    }

    #[test]
    fn trace_text_round_trips(seed in any::<u64>(), n in 0usize..12, b in 1u32..5) {
        let tr = gen_random(&GeneratorParams { n, buffer_size: b, weight_den: 4, seed, ..GeneratorParams::default() }).unwrap();
        let text = emit_trace(&tr);
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(&back, &tr);
        prop_assert_eq!(emit_trace(&back), text);
    }
}

#[test]
fn round_trip_seed_seven() {
    let tr = gen_random(&GeneratorParams {
        seed: 7,
        ..GeneratorParams::default()
    })
    .unwrap();
    assert_eq!(parse_trace(&emit_trace(&tr)).unwrap(), tr);
}

#[test]
fn greedy_collapses_on_killer_family() {
    let eps = Rational::new(1, 10);
    for b in [3u32, 5, 10] {
        let tr = gen_killer(b, eps).unwrap();
        let expected = Weight::integer(1) + Weight(Rational::new(9, 10)) * (b as i128 - 1);
        assert_eq!(run_naive_greedy(&tr).total, Weight::integer(1));
        assert_eq!(run_grq(&tr).total, expected);
        assert_eq!(optimal_bounded(&tr).unwrap().value, expected);
    }
}

#[test]
fn killer_examples() {
    let cases = [(3, Rational::new(1, 4), Weight::ratio(5, 2)), (2, Rational::new(1, 2), Weight::ratio(3, 2)), (10, Rational::new(1, 10), Weight::ratio(91, 10))];
    for (b, eps, opt) in cases {
        let tr = gen_killer(b, eps).unwrap();
        assert_eq!(optimal_bounded(&tr).unwrap().value, opt);
        assert_eq!(brute_force_bounded_if_small(&tr), opt);
        assert_eq!(run_naive_greedy(&tr).total, Weight::integer(1));
    }
}

fn brute_force_bounded_if_small(tr: &grq::Trace) -> Weight {
    if tr.len() <= 5 {
        brute_force_bounded(tr)
    } else {
        optimal_bounded(tr).unwrap().value
    }
}

#[test]
fn random_example_is_within_factor_two() {
    let tr = gen_random(&GeneratorParams {
        n: 8,
        horizon: 6,
        buffer_size: 2,
        weight_max: 16,
        seed: 1,
        ..GeneratorParams::default()
    })
    .unwrap();
    assert_eq!(tr.len(), 8);
    let opt = optimal_bounded(&tr).unwrap();
    assert!(run_grq(&tr).total * 2 >= opt.value);
}

#[test]
fn b1_two_packet_example() {
    let one = Weight::integer(1);
    let tr = trace(1, &[(1, 1, 1, one), (2, 1, 2, one)]);
    assert_eq!(brute_force_bounded(&tr), one);
    let grq = run_grq(&tr);
    assert_eq!(grq.total, one);
    let report = check_charging(&tr, &grq, &optimal_bounded(&tr).unwrap());
    assert!(report.passed());
}
