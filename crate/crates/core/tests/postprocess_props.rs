mod common;

use common::{labels_and_scores, median_oracle};
use proptest::prelude::*;
use sedkit_core::postprocess::{binarize, median_filter, median_filter_binary};
use sedkit_core::{PostprocessConfig, ScoreTensor};

fn odd_length() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 3, 5, 7, 9])
}

/// A filter length and a run length shorter than half of it, rounded up.
fn short_run() -> impl Strategy<Value = (usize, usize)> {
    prop::sample::select(vec![3usize, 5, 7, 9]).prop_flat_map(|l| (Just(l), 1..l.div_ceil(2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn running_count_matches_brute_force(column in prop::collection::vec(any::<bool>(), 0..=256), length in odd_length()) {
        prop_assert_eq!(median_filter_binary(&column, length), median_oracle(&column, length));
    }

    #[test]
    fn short_isolated_runs_are_erased((length, run) in short_run(), lead in 0usize..20, tail in 0usize..20) {
        let half = length / 2;
        let start = lead + half;
        let n = start + run + half + tail;
        let column: Vec<bool> = (0..n).map(|i| (start..start + run).contains(&i)).collect();
        prop_assert!(median_filter_binary(&column, length).iter().all(|&b| !b));
    }

    #[test]
    fn short_gaps_are_filled((length, gap) in short_run(), lead in 0usize..10, tail in 0usize..10) {
        let half = length / 2;
        let start = lead + half;
        let n = start + gap + half + tail;
        let column: Vec<bool> = (0..n).map(|i| !(start..start + gap).contains(&i)).collect();
        let out = median_filter_binary(&column, length);
        prop_assert!(out[start..start + gap].iter().all(|&b| b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn binarize_is_idempotent_and_binary(
        (_, p) in labels_and_scores(1..=40, 1..=4, 0.0, 1.0),
        threshold in 0.01f64..0.99,
        length in odd_length(),
    ) {
        let config = PostprocessConfig::uniform(p.num_classes(), threshold, length).unwrap();
        let once = binarize(&p, &config).unwrap();
        let twice = binarize(&ScoreTensor::from_labels(&once), &config).unwrap();
        prop_assert!(once.is_binary());
        prop_assert_eq!(once.values(), twice.values());
        let filtered = median_filter(&once, &config).unwrap();
        prop_assert!(filtered.is_binary());
    }
}
