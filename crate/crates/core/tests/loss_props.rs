mod common;

use common::{labels_and_scores, scores};
use proptest::prelude::*;
use sedkit_core::loss::{aggregate_loss, bce_elementwise, bce_gradient, owbce_gradient, owbce_loss};
use sedkit_core::weighting::build_weight_mask;
use sedkit_core::{WeightMask, WindowParams};

const STEP: f64 = 1e-5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn disabled_window_equals_plain_mean((y, p) in labels_and_scores(1..=48, 1..=4, 0.0, 1.0), alpha in 0.0f64..30.0) {
        let plain = aggregate_loss(&bce_elementwise(&y, &p).unwrap(), None, None).unwrap();
        prop_assert_eq!(owbce_loss(&y, &p, WindowParams::new(0.0, 7).unwrap()).unwrap().to_bits(), plain.to_bits());
        prop_assert_eq!(owbce_loss(&y, &p, WindowParams::new(alpha, 0).unwrap()).unwrap().to_bits(), plain.to_bits());
    }

    #[test]
    fn unweighted_aggregate_is_the_mean((y, p) in labels_and_scores(1..=48, 1..=4, 0.0, 1.0)) {
        let elementwise = bce_elementwise(&y, &p).unwrap();
        let mean = elementwise.values().iter().sum::<f64>() / elementwise.len() as f64;
        let got = aggregate_loss(&elementwise, None, None).unwrap();
        let ones = WeightMask::ones(y.grid(), y.shared_vocab());
        let masked = aggregate_loss(&elementwise, Some(&ones), None).unwrap();
        prop_assert!((got - mean).abs() <= 1e-12 * mean.max(1e-300));
        prop_assert!((masked - mean).abs() <= 1e-12 * mean.max(1e-300));
    }

    #[test]
    fn raising_a_mask_entry_never_lowers_the_loss(
        (y, p) in labels_and_scores(1..=32, 1..=3, 0.01, 0.99),
        pick in any::<prop::sample::Index>(),
        bump in 0.0f64..10.0,
    ) {
        let mask = build_weight_mask(&y, WindowParams::default());
        let elementwise = bce_elementwise(&y, &p).unwrap();
        let i = pick.index(mask.len());
        let mut raised = mask.values().to_vec();
        raised[i] += bump;
        let raised = WeightMask::new(y.grid(), y.shared_vocab(), raised).unwrap();
        let before = aggregate_loss(&elementwise, Some(&mask), None).unwrap();
        let after = aggregate_loss(&elementwise, Some(&raised), None).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn score_gradient_matches_central_differences(
        (y, p) in labels_and_scores(1..=16, 1..=4, 0.05, 0.95),
        alpha in 0.0f64..20.0,
        sigma in (0usize..5).prop_map(|h| 2 * h + 1),
    ) {
        let params = WindowParams::new(alpha, sigma).unwrap();
        let analytic = owbce_gradient(&y, &p, params).unwrap();
        let (n, k) = (y.num_frames(), y.num_classes());
        for i in 0..p.len() {
            let shifted = |delta: f64| {
                let mut v = p.values().to_vec();
                v[i] += delta;
                owbce_loss(&y, &scores(n, k, v), params).unwrap()
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = analytic.values()[i];
            prop_assert!((a - numeric).abs() <= 1e-5 * a.abs().max(numeric.abs()),
                "entry {i}: analytic {a} numeric {numeric}");
        }
    }

    #[test]
    fn unmasked_gradient_is_the_bce_derivative((y, p) in labels_and_scores(1..=16, 1..=3, 0.01, 0.99)) {
        let g = bce_gradient(&y, &p, None).unwrap();
        let nk = y.len() as f64;
        for ((&gi, &yi), &pi) in g.values().iter().zip(y.values()).zip(p.values()) {
            let expect = (pi - yi) / (pi * (1.0 - pi)) / nk;
            prop_assert!((gi - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}
