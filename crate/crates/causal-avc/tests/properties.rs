//! Randomized property tests for the allocation and solver layers.

use causal_avc::model::{
    detect_two_level, evaluate_objective, expand_two_level, NoiseAllocation, PowerAllocation,
    TwoLevelAllocation,
};
use causal_avc::waterfill::water_fill;
use proptest::prelude::*;

proptest! {
    #[test]
    fn two_level_expansion_round_trips(
        nu in 1usize..20,
        extra in 0usize..20,
        low in 0.1f64..2.0,
        gap in 0.1f64..2.0,
    ) {
        let n = nu + extra;
        let high = low + gap;
        let budget = nu as f64 * low + extra as f64 * high + 1.0;
        let alloc = TwoLevelAllocation {
            transition: nu,
            low_level: low,
            high_level: high,
            budget,
        };
        let expanded = expand_two_level(&alloc, n).unwrap();
        if extra > 0 {
            let (t, lo, hi) = detect_two_level(expanded.values()).unwrap();
            prop_assert_eq!(t, nu);
            prop_assert!((lo - low).abs() < 1e-12);
            prop_assert!((hi - high).abs() < 1e-12);
        } else {
            // constant sequences are one-level; detection reports no split
            prop_assert!(expanded.values().iter().all(|&v| (v - low).abs() < 1e-12));
        }
    }

    #[test]
    fn water_fill_spends_exactly_the_budget(
        caps in proptest::collection::vec(0.2f64..4.0, 1..8),
        frac in 0.05f64..0.95,
    ) {
        let total: f64 = caps.iter().sum();
        let budget = frac * total;
        let sol = water_fill(&caps, budget).unwrap();
        let spent: f64 = sol.noise_prefix.iter().sum();
        prop_assert!((spent - budget).abs() < 1e-9 * (1.0 + budget));
        for (q, &p) in sol.noise_prefix.iter().zip(&caps) {
            prop_assert!(*q > 0.0 && *q <= p + 1e-12);
            // uncapped coordinates sit at the common water level
            if *q < p - 1e-9 {
                prop_assert!((q - sol.level).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn water_fill_objective_decreases_in_budget(
        caps in proptest::collection::vec(0.2f64..4.0, 1..8),
        frac in 0.05f64..0.9,
    ) {
        let total: f64 = caps.iter().sum();
        let small = water_fill(&caps, frac * total).unwrap();
        let large = water_fill(&caps, (frac + 0.05) * total).unwrap();
        prop_assert!(large.objective <= small.objective + 1e-9);
    }

    #[test]
    fn objective_monotone_in_each_noise_coordinate(
        powers in proptest::collection::vec(1.0f64..4.0, 2..6),
        idx_seed in 0usize..100,
    ) {
        let n = powers.len();
        let total: f64 = powers.iter().sum();
        let p = PowerAllocation::new(powers.clone(), total).unwrap();
        let base: Vec<f64> = powers.iter().map(|v| v * 0.4).collect();
        let budget: f64 = base.iter().sum::<f64>() + 1.0;
        let q1 = NoiseAllocation::new(base.clone(), budget).unwrap();
        let idx = idx_seed % n;
        let mut bumped = base;
        bumped[idx] *= 1.5; // still at most 0.6 of the power there
        let q2 = NoiseAllocation::new(bumped, budget).unwrap();
        let v1 = evaluate_objective(&p, &q1, n).unwrap();
        let v2 = evaluate_objective(&p, &q2, n).unwrap();
        prop_assert!(v2 <= v1 + 1e-12);
    }
}
