//! Strategies and small constructors shared by the property suites.
#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use sedkit_core::{ClassVocabulary, FrameGrid, LabelTensor, ScoreTensor};

pub const HOP: f64 = 0.064;

pub fn vocab(k: usize) -> Arc<ClassVocabulary> {
    Arc::new(ClassVocabulary::numbered(k).unwrap())
}

pub fn grid(n: usize) -> FrameGrid {
    FrameGrid::new(n, HOP).unwrap()
}

pub fn labels(n: usize, k: usize, values: Vec<f64>) -> LabelTensor {
    LabelTensor::new(grid(n), vocab(k), values).unwrap()
}

pub fn scores(n: usize, k: usize, values: Vec<f64>) -> ScoreTensor {
    ScoreTensor::new(grid(n), vocab(k), values).unwrap()
}

/// Binary labels of shape `n x k` with `n` in `frames` and `k` in `classes`.
pub fn binary_labels(
    frames: std::ops::RangeInclusive<usize>,
    classes: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = LabelTensor> {
    (frames, classes).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop::bool::weighted(0.4), n * k).prop_map(move |bits| {
            labels(n, k, bits.into_iter().map(|b| f64::from(u8::from(b))).collect())
        })
    })
}

/// Binary labels paired with same-shape scores drawn from `[lo, hi]`.
pub fn labels_and_scores(
    frames: std::ops::RangeInclusive<usize>,
    classes: std::ops::RangeInclusive<usize>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = (LabelTensor, ScoreTensor)> {
    binary_labels(frames, classes).prop_flat_map(move |y| {
        let (n, k) = (y.num_frames(), y.num_classes());
        prop::collection::vec(lo..=hi, n * k).prop_map(move |p| (y.clone(), scores(n, k, p)))
    })
}

/// Brute-force sliding median with zero padding.
pub fn median_oracle(column: &[bool], length: usize) -> Vec<bool> {
    let half = length as isize / 2;
    (0..column.len() as isize)
        .map(|i| {
            let ones = (i - half..=i + half)
                .filter(|&j| j >= 0 && (j as usize) < column.len() && column[j as usize])
                .count();
            2 * ones > length
        })
        .collect()
}
