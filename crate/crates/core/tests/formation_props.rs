//! Game-level invariants on random networks.

use coalsense::formation::{audit_with, form_with, optimal_partition, welfare, FormationConfig, HistorySet};
use coalsense::partition::Coalition;
use coalsense::scenario::{generate_scenario, PhysParams};
use coalsense::valuation::{evaluate_partition, Evaluator, ValuationConfig};
use coalsense::Partition;
use proptest::prelude::*;

fn phys(area: f64) -> PhysParams {
    PhysParams {
        area_side: area,
        ..PhysParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn formation_converges_stable_and_replays(
        n in 2usize..=9,
        k in 4usize..=14,
        area in 500.0f64..4000.0,
        seed in any::<u64>(),
    ) {
        let s = generate_scenario(n, k, 3.min(k), phys(area), seed).unwrap();
        let cfg = FormationConfig::default();
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        let trace = form_with(&ev, &Partition::singletons(n), seed, &cfg).unwrap();
        prop_assert!(trace.converged);
        prop_assert!(trace.passes <= cfg.pass_limit(n));
        prop_assert_eq!(trace.replay().unwrap(), trace.final_partition.clone());
        let audit = audit_with(&ev, &trace.final_partition).unwrap();
        prop_assert!(audit.stable || !trace.fresh_quiet, "{:?}", audit.violations);

        // Every intermediate partition is a valid disjoint cover.
        let mut p = trace.initial.clone();
        for rec in &trace.switches {
            let dest = rec.to.as_ref().map(|c| p.coalitions().iter().position(|x| x == c).unwrap());
            p = p.moved(rec.su, dest);
            prop_assert!(Partition::new(p.coalitions().to_vec(), n).is_ok());
            prop_assert!(rec.gain > 0.0);
        }
    }

    #[test]
    fn formation_from_any_start_converges(
        labels in prop::collection::vec(0usize..4, 2..=7),
        seed in any::<u64>(),
    ) {
        let n = labels.len();
        let s = generate_scenario(n, 10, 3, phys(2000.0), seed).unwrap();
        let cfg = FormationConfig::default();
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        let start = Partition::from_labels(&labels);
        let trace = form_with(&ev, &start, seed, &cfg).unwrap();
        prop_assert_eq!(trace.replay().unwrap(), trace.final_partition.clone());
    }

    #[test]
    fn optimum_dominates_formation(n in 1usize..=5, seed in any::<u64>()) {
        let s = generate_scenario(n, 8, 3, phys(2000.0), seed).unwrap();
        let cfg = FormationConfig::default();
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        let trace = form_with(&ev, &Partition::singletons(n), seed, &cfg).unwrap();
        let formed = welfare(&ev.profile(&trace.final_partition).unwrap());
        let (best, w) = optimal_partition(&s, &cfg.valuation).unwrap();
        prop_assert!(w >= formed - 1e-9 * formed.abs().max(1.0));
        let again = welfare(&evaluate_partition(&s, &best, &cfg.valuation).unwrap());
        prop_assert!((again - w).abs() <= 1e-9 * w.abs().max(1.0));
    }

    #[test]
    fn payoffs_are_nonnegative(labels in prop::collection::vec(0usize..3, 1..=6), seed in any::<u64>()) {
        let n = labels.len();
        let s = generate_scenario(n, 8, 3, phys(1500.0), seed).unwrap();
        let x = evaluate_partition(&s, &Partition::from_labels(&labels), &ValuationConfig::default()).unwrap();
        prop_assert!(x.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }
}

#[test]
fn history_records_everyone_a_switch_moves() {
    let s = generate_scenario(5, 6, 2, phys(1000.0), 1).unwrap();
    let ev = Evaluator::new(&s, ValuationConfig::default());
    // Start with {0,1,2}, {3,4}; moving 2 to {3,4} changes both coalitions.
    let p = Partition::from_labels(&[0, 0, 0, 1, 1]);
    let rec = coalsense::formation::SwitchRecord {
        su: 2,
        from: Coalition::new(vec![0, 1, 2]),
        to: Some(Coalition::new(vec![3, 4])),
        pass: 1,
        gain: 0.1,
    };
    let mut h = HistorySet::new(5);
    h.record_switch(&rec);
    for j in [0, 1, 2] {
        assert!(h.contains(j, &Coalition::new(vec![0, 1, 2])));
    }
    for j in [3, 4] {
        assert!(h.contains(j, &Coalition::new(vec![3, 4])));
    }
    let back = p.moved(2, None);
    let idx = back.index_of(2);
    let v = coalsense::formation::preference_value(&ev, 2, &back, idx, &p, &h).unwrap();
    assert_eq!(v, Some(ev.payoff(&back, 2).unwrap()), "solo is never vetoed");
}

#[test]
fn fresh_quiet_runs_pass_the_audit() {
    // A run that ends on a quiet pass with empty histories has, by
    // construction, no profitable consented move left; the audit must agree.
    let cfg = FormationConfig::default();
    let mut fresh = 0;
    for seed in 0..25u64 {
        let n = 4 + (seed as usize % 5);
        let s = generate_scenario(n, 14, 3, PhysParams::default(), seed).unwrap();
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        let trace = form_with(&ev, &Partition::singletons(n), seed, &cfg).unwrap();
        if trace.fresh_quiet {
            fresh += 1;
            assert!(audit_with(&ev, &trace.final_partition).unwrap().stable, "seed {seed}");
        }
    }
    assert!(fresh >= 20, "only {fresh} runs ended with empty histories");
}

#[test]
fn vetoed_moves_never_beat_negative_payoffs() {
    // With alpha = 0.5 sensing three channels already overruns the slot, so
    // every payoff is negative; a veto must still not read as an improvement.
    let phys = PhysParams {
        alpha: 0.5,
        ..PhysParams::default()
    };
    let s = generate_scenario(10, 14, 3, phys, 10).unwrap();
    let cfg = FormationConfig::default();
    let ev = Evaluator::new(&s, cfg.valuation.clone());
    let singletons = Partition::singletons(10);
    assert!(ev.profile(&singletons).unwrap().iter().any(|&x| x < 0.0));
    let trace = form_with(&ev, &singletons, 10, &cfg).unwrap();
    assert!(trace.converged);
    let mut joined = std::collections::HashMap::<(usize, Coalition), usize>::new();
    for r in &trace.switches {
        if let Some(to) = &r.to {
            *joined.entry((r.su, to.with(r.su))).or_default() += 1;
        }
    }
    assert!(joined.values().all(|&c| c <= 1 + trace.history_resets), "{joined:?}");
}
