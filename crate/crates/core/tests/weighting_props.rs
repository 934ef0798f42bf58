mod common;

use common::{binary_labels, labels, vocab};
use proptest::prelude::*;
use sedkit_core::weighting::{
    build_weight_mask, count_class_weights, detect_boundaries, effective_number_weights,
};
use sedkit_core::{ClassStats, WindowParams};

fn odd_sigma() -> impl Strategy<Value = usize> {
    (0usize..6).prop_map(|h| 2 * h + 1)
}

/// Labels that are `amplitude` from frame `at` onward: one onset impulse.
fn step(n: usize, at: usize, amplitude: f64) -> sedkit_core::LabelTensor {
    labels(n, 1, (0..n).map(|i| if i >= at { amplitude } else { 0.0 }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn disabled_windows_give_all_ones(y in binary_labels(1..=64, 1..=4), alpha in 0.0f64..30.0, sigma in odd_sigma()) {
        for params in [WindowParams::new(0.0, sigma).unwrap(), WindowParams::new(alpha, 0).unwrap()] {
            let mask = build_weight_mask(&y, params);
            prop_assert!(mask.values().iter().all(|&m| m == 1.0));
        }
    }

    #[test]
    fn mask_is_at_least_one_and_local(y in binary_labels(1..=64, 1..=4), alpha in 0.0f64..30.0, sigma in odd_sigma()) {
        let params = WindowParams::new(alpha, sigma).unwrap();
        let mask = build_weight_mask(&y, params);
        let impulses = detect_boundaries(&y);
        let half = params.half_width();
        for n in 0..y.num_frames() {
            for k in 0..y.num_classes() {
                let m = mask.get(n, k);
                prop_assert!(m >= 1.0);
                let near = (n.saturating_sub(half)..=(n + half).min(y.num_frames() - 1))
                    .any(|j| impulses.get(j, k) != 0.0);
                if !near {
                    prop_assert_eq!(m, 1.0);
                }
            }
        }
    }

    #[test]
    fn isolated_impulse_scales_linearly(amplitude in 0.01f64..1.0, alpha in 0.1f64..30.0, sigma in odd_sigma(), at in 12usize..20) {
        let params = WindowParams::new(alpha, sigma).unwrap();
        let unit = build_weight_mask(&step(32, at, 1.0), params);
        let scaled = build_weight_mask(&step(32, at, amplitude), params);
        for (u, s) in unit.values().iter().zip(scaled.values()) {
            let expect = amplitude * (u - 1.0);
            prop_assert!(((s - 1.0) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn isolated_impulse_is_symmetric(alpha in 0.1f64..30.0, sigma in odd_sigma(), at in 12usize..20) {
        let mask = build_weight_mask(&step(32, at, 1.0), WindowParams::new(alpha, sigma).unwrap());
        for d in 1..=12 {
            let (left, right) = (mask.get(at - d, 0), mask.get(at + d, 0));
            prop_assert!((left - right).abs() <= 1e-12 * left.max(right));
        }
    }

    #[test]
    fn class_weight_sums(
        counts in prop::collection::vec((1u64..500, 0u64..5000), 1..8),
        lambda in 0.5f64..64.0,
    ) {
        let k = counts.len();
        let events: Vec<u64> = counts.iter().map(|c| c.0).collect();
        let frames: Vec<u64> = counts.iter().map(|c| c.0 + c.1).collect();
        let stats = ClassStats::new(vocab(k), events, frames).unwrap();
        let count_sum: f64 = count_class_weights(&stats).unwrap().iter().sum();
        prop_assert!((count_sum - 1.0).abs() <= 1e-12);
        let effective = effective_number_weights(&stats, lambda).unwrap();
        prop_assert!(effective.iter().all(|w| w.is_finite() && *w > 0.0));
        let effective_sum: f64 = effective.iter().sum();
        prop_assert!((effective_sum - k as f64).abs() <= 1e-12 * k as f64);
    }

    #[test]
    fn equal_statistics_give_equal_weights(k in 1usize..9, m in 1u64..500, extra in 0u64..5000, lambda in 0.5f64..64.0) {
        let stats = ClassStats::new(vocab(k), vec![m; k], vec![m + extra; k]).unwrap();
        let count = count_class_weights(&stats).unwrap();
        let effective = effective_number_weights(&stats, lambda).unwrap();
        prop_assert!(count.iter().all(|&w| w == count[0]));
        prop_assert!(effective.iter().all(|&w| w == effective[0]));
    }
}
