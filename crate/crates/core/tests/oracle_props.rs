//! Properties of the offline benchmark: duality, convexity in the
//! multiplier, static vs randomized policies and price monotonicity.

use std::collections::BTreeMap;

use fairalloc::environment::{ProblemInstance, TableModel, TableRow};
use fairalloc::oracle::{sensitivity_point, Oracle};
use fairalloc::penalty::PenaltyKind;
use proptest::collection::vec;
use proptest::prelude::*;

/// Random single-context table with `k` sources and a binary attribute.
fn table(k: usize) -> impl Strategy<Value = TableModel> {
    (vec((0.05..1.0f64, -1.0..1.0f64, prop::bool::ANY, vec(0u8..3, k)), 2..7), vec(0.0..0.3f64, k)).prop_map(
        |(raw, prices)| {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let rows = raw
                .iter()
                .map(|(w, u, a, c)| TableRow {
                    prob: w / total,
                    z: 0,
                    u: *u,
                    a: vec![if *a { 1.0 } else { -1.0 }],
                    c: c.iter().map(|&v| v as f64).collect(),
                })
                .collect();
            TableModel { dim: 1, prices, rows }
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

/// `max_k E[(E[u | c_k])^+] − p_k`, computed straight from the rows.
fn unpenalized_value(model: &TableModel) -> f64 {
    (0..model.prices.len())
        .map(|k| {
            let mut cells: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for r in &model.rows {
                let e = cells.entry((r.c[k] + 0.0).to_bits()).or_insert((0.0, 0.0));
                e.0 += r.prob;
                e.1 += r.prob * r.u;
            }
            cells.values().map(|(_, mass_u)| mass_u.max(0.0)).sum::<f64>() - model.prices[k]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn static_never_beats_randomized(model in table(2), kind in penalty()) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let oracle = Oracle::new(&inst);
        let opt = oracle.solve().unwrap();
        let stat = oracle.solve_static().unwrap();
        prop_assert!(stat.rate <= opt.rate + 1e-9);
        prop_assert!(opt.gap >= -1e-9 && opt.gap <= 1e-4);
        prop_assert!((opt.pi().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_sources_static_never_beats_randomized(model in table(3), kind in penalty()) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let oracle = Oracle::new(&inst);
        let opt = oracle.solve().unwrap();
        prop_assert!(oracle.solve_static().unwrap().rate <= opt.rate + 1e-9);
    }

    #[test]
    fn zero_penalty_reduces_to_best_single_source(model in table(2)) {
        let inst = ProblemInstance::table(model.clone(), PenaltyKind::Zero).unwrap();
        let oracle = Oracle::new(&inst);
        let expected = unpenalized_value(&model);
        prop_assert!((oracle.solve().unwrap().rate - expected).abs() < 1e-6);
        prop_assert!((oracle.solve_static().unwrap().rate - expected).abs() < 1e-9);
    }

    #[test]
    fn dual_function_is_convex(model in table(2), kind in penalty(), theta in 0.0..1.0f64, a in -4.0..4.0f64, b in -4.0..4.0f64, t in 0.0..1.0f64) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let oracle = Oracle::new(&inst);
        let policy = vec![vec![theta, 1.0 - theta]];
        let mid = oracle.policy_value(&policy, &[t * a + (1.0 - t) * b]);
        let chord = t * oracle.policy_value(&policy, &[a]) + (1.0 - t) * oracle.policy_value(&policy, &[b]);
        prop_assert!(mid <= chord + 1e-9);
    }

    #[test]
    fn weak_duality(model in table(2), kind in penalty(), lambda in -5.0..5.0f64, theta in 0.0..1.0f64) {
        let inst = ProblemInstance::table(model, kind).unwrap();
        let oracle = Oracle::new(&inst);
        let opt = oracle.solve().unwrap();
        // Any multiplier upper-bounds the value of the optimal policy ...
        prop_assert!(oracle.policy_value(&opt.policy, &[lambda]) >= opt.rate - 1e-9);
        // ... and no policy does better than the certified optimum.
        prop_assert!(oracle.inner(&[vec![theta, 1.0 - theta]]).1 <= opt.rate + opt.gap + 1e-9);
    }

    #[test]
    fn raising_a_price_never_helps(model in table(2), kind in penalty(), bump in 0.0..0.5f64, k in 0usize..2) {
        let base = ProblemInstance::table(model.clone(), kind.clone()).unwrap();
        let mut dearer = model;
        dearer.prices[k] += bump;
        let dearer = ProblemInstance::table(dearer, kind).unwrap();
        let a = Oracle::new(&base).solve().unwrap();
        let b = Oracle::new(&dearer).solve().unwrap();
        prop_assert!(b.rate <= a.rate + a.gap + b.gap + 1e-9);
    }
}

proptest! {
    // Each point integrates Gaussian laws; keep the count small.
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gaussian_value_decreases_in_penalty_and_price(r in 0.0..4.0f64, dr in 0.1..2.0f64, p in 0.0..0.4f64, dp in 0.01..0.2f64) {
        let base = sensitivity_point(r, p).unwrap();
        let harsher = sensitivity_point(r + dr, p).unwrap();
        let dearer = sensitivity_point(r, p + dp).unwrap();
        prop_assert!(harsher.rate <= base.rate + 2e-4);
        prop_assert!(dearer.rate <= base.rate + 2e-4);
        prop_assert!((0.0..=1.0).contains(&base.pi_star));
    }
}

/// Three sources where the optimum mixes two of them; found by the
/// properties above when the solver used Frank-Wolfe here.
#[test]
fn three_source_mixture_is_certified() {
    let row = |prob: f64, u: f64, a: f64, c: [f64; 3]| TableRow { prob, z: 0, u, a: vec![a], c: c.to_vec() };
    let model = TableModel {
        dim: 1,
        prices: vec![0.21093373669736565, 0.2098930746901363, 0.19358730333640586],
        rows: vec![
            row(0.3040209106478252, 0.8733283544065088, -1.0, [0.0, 1.0, 0.0]),
            row(0.2138176604181768, -0.9763970738966623, -1.0, [1.0, 0.0, 0.0]),
            row(0.03988322806360885, 0.0, -1.0, [1.0, 0.0, 0.0]),
            row(0.4422782008703892, -0.7292976223596654, 1.0, [1.0, 1.0, 0.0]),
        ],
    };
    let inst = ProblemInstance::table(model, PenaltyKind::ScaledAbs(1.5118043716555394)).unwrap();
    let oracle = Oracle::new(&inst);
    let opt = oracle.solve().unwrap();
    assert!(opt.gap <= 1e-4);
    // No point of a 1/100 grid over the simplex beats the certified rate.
    let mut grid_best = f64::NEG_INFINITY;
    for i in 0..=100 {
        for j in 0..=100 - i {
            let p = vec![i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0];
            grid_best = grid_best.max(oracle.inner(&[p]).1);
        }
    }
    assert!(grid_best <= opt.rate + 1e-9);
    assert!(grid_best >= opt.rate - 0.01);
}
