//! Frame decisions: thresholding, median filtering and event decoding.

use crate::convert::labels_to_events;
use crate::error::{Error, Result};
use crate::types::{EventList, LabelTensor, ScoreTensor};

/// Per-class decision thresholds and median filter lengths (in frames).
#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessConfig {
    thresholds: Vec<f64>,
    filter_lengths: Vec<usize>,
}

impl PostprocessConfig {
    pub fn new(thresholds: Vec<f64>, filter_lengths: Vec<usize>) -> Result<Self> {
        if thresholds.len() != filter_lengths.len() {
            return Err(Error::Dimension(format!(
                "{} thresholds but {} filter lengths",
                thresholds.len(),
                filter_lengths.len()
            )));
        }
        for (k, &t) in thresholds.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::validation(
                    format!("threshold[{k}]"),
                    format!("must lie strictly between 0 and 1, got {t}"),
                ));
            }
        }
        for (k, &l) in filter_lengths.iter().enumerate() {
            if l % 2 == 0 {
                return Err(Error::validation(
                    format!("medfilt_frames[{k}]"),
                    format!("median filter length must be odd and >= 1, got {l}"),
                ));
            }
        }
        Ok(Self {
            thresholds,
            filter_lengths,
        })
    }

    pub fn uniform(num_classes: usize, threshold: f64, filter_length: usize) -> Result<Self> {
        Self::new(vec![threshold; num_classes], vec![filter_length; num_classes])
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn filter_lengths(&self) -> &[usize] {
        &self.filter_lengths
    }

    pub fn num_classes(&self) -> usize {
        self.thresholds.len()
    }

    /// Same filters with every class thresholded at `threshold`.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        Self::new(vec![threshold; self.num_classes()], self.filter_lengths.clone())
    }

    fn check_classes(&self, k: usize) -> Result<()> {
        if k != self.num_classes() {
            return Err(Error::Dimension(format!(
                "post-processing configured for {} classes, tensor has {k}",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Nearest odd filter length (at least 1) for a duration in seconds.
pub fn filter_length_from_seconds(seconds: f64, frame_hop: f64) -> usize {
    let frames = (seconds / frame_hop).round().max(1.0) as usize;
    if frames.is_multiple_of(2) {
        frames + 1
    } else {
        frames
    }
}

/// `1` where the score strictly exceeds its class threshold, else `0`.
pub fn binarize(scores: &ScoreTensor, config: &PostprocessConfig) -> Result<LabelTensor> {
    config.check_classes(scores.num_classes())?;
    let k = scores.num_classes();
    let values = scores
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| if s > config.thresholds[i % k] { 1.0 } else { 0.0 })
        .collect();
    LabelTensor::new(scores.grid(), scores.shared_vocab(), values)
}

/// Sliding median of a binary sequence with zero padding at both ends.
///
/// For a binary window of odd length `L` the median is one exactly when more
/// than half the window is active, so a running count suffices.
pub fn median_filter_binary(column: &[bool], length: usize) -> Vec<bool> {
    debug_assert!(length % 2 == 1);
    let n = column.len();
    let half = length / 2;
    let mut out = Vec::with_capacity(n);
    // count of active frames in [i - half, i + half] clipped to the sequence
    let mut count = column.iter().take(half).filter(|&&b| b).count();
    for i in 0..n {
        if i + half < n && column[i + half] {
            count += 1;
        }
        if i > half && column[i - half - 1] {
            count -= 1;
        }
        out.push(count > half);
    }
    out
}

/// Applies each class's median filter to a binary label tensor.
pub fn median_filter(binary: &LabelTensor, config: &PostprocessConfig) -> Result<LabelTensor> {
    config.check_classes(binary.num_classes())?;
    let k = binary.num_classes();
    let n_frames = binary.num_frames();
    let mut values = vec![0.0; n_frames * k];
    for class in 0..k {
        let column: Vec<bool> = (0..n_frames).map(|n| binary.get(n, class) != 0.0).collect();
        for (n, active) in median_filter_binary(&column, config.filter_lengths[class])
            .into_iter()
            .enumerate()
        {
            if active {
                values[n * k + class] = 1.0;
            }
        }
    }
    LabelTensor::new(binary.grid(), binary.shared_vocab(), values)
}

/// Threshold, median filter and decode one clip's scores into events.
pub fn postprocess_pipeline(
    scores: &ScoreTensor,
    config: &PostprocessConfig,
    clip_id: &str,
) -> Result<EventList> {
    let binary = binarize(scores, config)?;
    let filtered = median_filter(&binary, config)?;
    Ok(labels_to_events(&filtered, clip_id, false))
}
