mod common;

use common::*;
use explsum::cost::total_cost_with;
use explsum::engine::{summarize, CandidateMode, EngineConfig, EngineState};
use explsum::{LossKind, Side};
use proptest::prelude::*;

fn config(seed: u64, beta: f64, mode: CandidateMode) -> EngineConfig<f64> {
    EngineConfig {
        beta_rows: beta,
        beta_cols: beta,
        seed,
        candidate_mode: mode,
        trace: true,
        ..Default::default()
    }
}

fn modes() -> impl Strategy<Value = CandidateMode> {
    prop_oneof![Just(CandidateMode::Exhaustive), Just(CandidateMode::Lsh)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_step_keeps_a_partition(
        (d, _, _) in matrix_and_labels(8),
        seed in any::<u64>(),
        beta in 0.0f64..0.6,
        mode in modes(),
    ) {
        let e = to_matrix(&d);
        let (m, n) = (e.n_rows(), e.n_cols());
        let mut state = EngineState::new(&e, config(seed, beta, mode)).unwrap();
        let mut steps = 0;
        while !state.active(Side::Rows).is_empty() || !state.active(Side::Cols).is_empty() {
            for side in [Side::Rows, Side::Cols] {
                if state.active(side).is_empty() {
                    continue;
                }
                let before = state.total_cost();
                let out = state.step(side).unwrap();
                steps += 1;
                if out.merged {
                    prop_assert!(state.total_cost() < before + 1e-12);
                } else {
                    prop_assert_eq!(state.total_cost().to_bits(), before.to_bits());
                }
                for (s, len) in [(Side::Rows, m), (Side::Cols, n)] {
                    let mut seen = vec![0usize; len];
                    for &slot in state.active(s).iter().chain(state.finalized(s)) {
                        for &i in state.members(s, slot).unwrap() {
                            seen[i] += 1;
                        }
                    }
                    prop_assert!(seen.iter().all(|&k| k == 1));
                }
            }
        }
        // One pop per initial cluster.
        prop_assert!(steps <= m + n);
        prop_assert!(state.clustering().validate(m, n).is_ok());
    }

    #[test]
    fn trace_is_monotone_and_result_consistent(
        (d, _, _) in matrix_and_labels(8),
        seed in any::<u64>(),
        beta in 0.0f64..0.6,
        mode in modes(),
    ) {
        let e = to_matrix(&d);
        let r = summarize(&e, &config(seed, beta, mode)).unwrap();
        let mut last = f64::INFINITY;
        for ev in &r.trace {
            if ev.accepted {
                prop_assert!(ev.total <= last + 1e-12);
                prop_assert!(ev.delta > 0.0);
            } else if last.is_finite() {
                prop_assert_eq!(ev.total, last);
            }
            last = ev.total;
        }
        prop_assert_eq!(r.accepted_merges, r.trace.iter().filter(|t| t.accepted).count());
        prop_assert!(r.evaluations >= r.accepted_merges as u64);
        let full = total_cost_with(&e, &r.clustering, beta, beta, LossKind::Marginalized).unwrap();
        prop_assert!((full.total - r.cost.total).abs() < 1e-9);
        if let Some(ev) = r.trace.last() {
            prop_assert!((ev.total - r.cost.total).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_run((d, _, _) in matrix_and_labels(8), seed in any::<u64>(), mode in modes()) {
        let e = to_matrix(&d);
        let a = summarize(&e, &config(seed, 0.05, mode)).unwrap();
        let b = summarize(&e, &config(seed, 0.05, mode)).unwrap();
        prop_assert_eq!(&a.clustering, &b.clustering);
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(a.evaluations, b.evaluations);
    }
}

#[test]
fn exhaustive_evaluations_are_quadratic() {
    // With no penalty nothing can be merged, so every pop scans every other
    // live cluster: sum over pops of (live - 1) = m(m-1) + n(n-1).
    for (m, n) in [(10, 7), (25, 12), (40, 30)] {
        let e = seeded_matrix(m, n, 0.6, m as u64);
        let r = summarize(&e, &config(1, 0.0, CandidateMode::Exhaustive)).unwrap();
        assert_eq!(r.accepted_merges, 0);
        assert_eq!(r.evaluations, (m * (m - 1) + n * (n - 1)) as u64, "{m}x{n}");
    }
}

#[test]
fn lsh_evaluations_per_step_bounded_by_k() {
    let e = seeded_matrix(120, 40, 0.3, 7);
    for k in [1, 3, 10] {
        let cfg = EngineConfig {
            k_neighbors: k,
            ..config(3, 0.05, CandidateMode::Lsh)
        };
        let r = summarize(&e, &cfg).unwrap();
        assert!(r.trace.iter().all(|t| t.candidates <= k));
        let pops = r.trace.len() as u64;
        assert!(r.evaluations <= pops * k as u64);
    }
}
