//! Properties of full episodes: determinism, replay, dual bounds, the
//! online-gradient regret inequality and equivalences between variants.

use fairalloc::engine::{
    derive_seed, replay_utility, run_episode, Action, EngineConfig, Policy, TieBreak, Variant,
};
use fairalloc::environment::{ProblemInstance, TableModel, TableRow};
use fairalloc::numeric::{dist, dot};
use fairalloc::penalty::PenaltyKind;
use proptest::collection::vec;
use proptest::prelude::*;

/// Random single-context table with two sources and a binary attribute.
fn table() -> impl Strategy<Value = TableModel> {
    (vec((0.05..1.0f64, -1.0..1.0f64, prop::bool::ANY, 0u8..2, 0u8..3), 2..7), 0.0..0.3f64).prop_map(
        |(raw, p1)| {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let rows = raw
                .iter()
                .map(|&(w, u, a, c1, c2)| TableRow {
                    prob: w / total,
                    z: 0,
                    u,
                    a: vec![if a { 1.0 } else { -1.0 }],
                    c: vec![c1 as f64, c2 as f64],
                })
                .collect();
            TableModel { dim: 1, prices: vec![0.0, p1], rows }
        },
    )
}

fn penalty() -> impl Strategy<Value = PenaltyKind> {
    prop_oneof![
        Just(PenaltyKind::Zero),
        (0.1..3.0f64).prop_map(PenaltyKind::ScaledAbs),
        (0.1..3.0f64).prop_map(PenaltyKind::ScaledQuadratic),
    ]
}

fn config(horizon: u64) -> EngineConfig {
    EngineConfig::new(horizon).with_log_stride(1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episodes_are_deterministic(model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..400) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let a = run_episode(&inst, &config(t), seed).unwrap();
        let b = run_episode(&inst, &config(t), seed).unwrap();
        prop_assert_eq!(&a.summary, &b.summary);
        prop_assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn replay_reproduces_the_summary(model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..400) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let ep = run_episode(&inst, &config(t), seed).unwrap();
        prop_assert_eq!(ep.rows.len() as u64, t);
        let (u, p, charge, total) = replay_utility(&ep.rows, inst.penalty(), false);
        prop_assert_eq!(u, ep.summary.sum_u_x);
        prop_assert_eq!(p, ep.summary.total_price);
        prop_assert_eq!(charge, ep.summary.realized_penalty);
        prop_assert_eq!(total, ep.summary.total_utility);
    }

    #[test]
    fn multiplier_stays_bounded(model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..2000) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let ep = run_episode(&inst, &EngineConfig::new(t), seed).unwrap();
        let s = &ep.summary;
        prop_assert!(s.max_lambda_norm <= s.lambda_bound + 1e-7);
        prop_assert!(s.lambda_bound <= inst.penalty().lipschitz() + 2.0 * s.schedule.eta * inst.penalty().diam() + 1e-12);
        prop_assert_eq!(s.source_counts.iter().sum::<u64>(), t);
    }

    /// `Σ⟨λ_t − λ̂, γ_t − δ_t⟩ ≤ ‖λ_1 − λ̂‖²/(2η) + (η/2)·T·(2·diam)²` for any comparator.
    #[test]
    fn online_gradient_regret_bound(
        model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..2000, hat in -6.0..6.0f64,
    ) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let ep = run_episode(&inst, &config(t), seed).unwrap();
        let s = &ep.summary;
        let eta = s.schedule.eta;
        prop_assume!(eta > 0.0);
        let lambda1 = &ep.rows[0].lambda;
        let lhs = s.ogd_inner - dot(&[hat], &s.ogd_sum);
        let diam = inst.penalty().diam();
        let rhs = dist(lambda1, &[hat]).powi(2) / (2.0 * eta) + 0.5 * eta * t as f64 * (2.0 * diam).powi(2);
        prop_assert!(lhs <= rhs + 1e-7 * (1.0 + rhs.abs()), "lhs {} rhs {}", lhs, rhs);
        // Each step moves γ at most diam away from δ.
        for r in &ep.rows {
            prop_assert!(dist(&r.gamma, &r.delta) <= diam + 1e-9);
        }
    }

    #[test]
    fn binary_action_table_matches_base(model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..500) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let base = run_episode(&inst, &config(t), seed).unwrap();
        let finite = run_episode(
            &inst,
            &config(t).with_variant(Variant::FiniteActions { actions: Action::binary() }),
            seed,
        )
        .unwrap();
        prop_assert_eq!(base.rows, finite.rows);
        prop_assert_eq!(base.summary.total_utility, finite.summary.total_utility);
    }

    #[test]
    fn single_context_public_variant_matches_base(model in table(), kind in penalty(), seed in any::<u64>(), t in 1u64..500) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let base = run_episode(&inst, &config(t), seed).unwrap();
        let public = run_episode(
            &inst,
            &config(t).with_variant(Variant::PublicContexts { anytime: false, cover: None }),
            seed,
        )
        .unwrap();
        prop_assert_eq!(base.rows, public.rows);
    }

    /// With no penalty the multiplier never moves, so buying one source
    /// and allocating on strictly positive means is the greedy policy.
    #[test]
    fn unpenalized_single_source_is_greedy(model in table(), seed in any::<u64>(), t in 1u64..500, k in 0usize..2) {
        let inst = ProblemInstance::table(model, PenaltyKind::Zero).unwrap();
        let mut cfg = config(t);
        cfg.tie_break = TieBreak::SkipOnEquality;
        let only = run_episode(&inst.restrict_sources(&[k]).unwrap(), &cfg, seed).unwrap();
        let greedy = run_episode(&inst, &config(t).with_policy(Policy::Greedy { source: k }), seed).unwrap();
        prop_assert_eq!(only.summary.sum_u_x, greedy.summary.sum_u_x);
        prop_assert_eq!(only.summary.total_price, greedy.summary.total_price);
        prop_assert_eq!(only.summary.sum_x, greedy.summary.sum_x);
    }

    #[test]
    fn derived_seeds_do_not_collide(master in any::<u64>()) {
        let seeds: std::collections::BTreeSet<u64> = (0..64).map(|i| derive_seed(master, i)).collect();
        prop_assert_eq!(seeds.len(), 64);
    }
}
