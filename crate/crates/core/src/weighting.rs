//! Loss weights: the onset/offset frame mask and class-imbalance vectors.
//!
//! The frame mask is built from the labels of each clip. Label transitions
//! are located with a first-order difference, giving one impulse per onset or
//! offset whose amplitude is the size of the jump (so soft labels keep their
//! amplitude). The impulses are convolved with a half-sine window of height
//! `alpha` and width `sigma` frames, and the result is raised by one so that
//! frames away from any boundary keep unit weight.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::convert::covered_frames;
use crate::error::{Error, Result};
use crate::types::{BoundaryImpulse, ClassVocabulary, EventList, LabelTensor, WeightMask};

/// Height and width of the boundary window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    alpha: f64,
    sigma: usize,
}

impl WindowParams {
    /// `sigma` must be zero or odd so the window has a single center tap.
    pub fn new(alpha: f64, sigma: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::validation(
                "alpha",
                format!("must be a finite non-negative number, got {alpha}"),
            ));
        }
        if sigma > 0 && sigma.is_multiple_of(2) {
            return Err(Error::validation(
                "sigma",
                format!("window width must be odd or 0, got {sigma}"),
            ));
        }
        Ok(Self { alpha, sigma })
    }

    /// Parameters that reduce the weighted loss to plain BCE.
    pub fn disabled() -> Self {
        Self {
            alpha: 0.0,
            sigma: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    /// Number of frames on each side of a boundary that receive extra weight.
    pub fn half_width(&self) -> usize {
        self.sigma.saturating_sub(1) / 2
    }
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            alpha: 12.0,
            sigma: 7,
        }
    }
}

/// `o_k(n) = |y_k(n) - y_k(n - 1)|` with `y_k(-1) = 0`.
///
/// An event still active on the last frame produces no offset impulse.
pub fn detect_boundaries(labels: &LabelTensor) -> BoundaryImpulse {
    let n_frames = labels.num_frames();
    let k = labels.num_classes();
    let mut values = vec![0.0; n_frames * k];
    for class in 0..k {
        let mut previous = 0.0;
        for n in 0..n_frames {
            let current = labels.get(n, class);
            values[n * k + class] = (current - previous).abs();
            previous = current;
        }
    }
    BoundaryImpulse::new(labels.grid(), labels.shared_vocab(), values)
        .expect("first differences of unit-range labels are valid impulses")
}

/// `w[i] = alpha * sin(pi * (i + 1) / (sigma + 1))` for `i in 0..sigma`.
pub fn sin_window(params: WindowParams) -> Vec<f64> {
    let sigma = params.sigma;
    (0..sigma)
        .map(|i| params.alpha * (PI * (i + 1) as f64 / (sigma + 1) as f64).sin())
        .collect()
}

/// Builds `1 + (o_k * w)` for every class, with the window centered on each
/// impulse and zero padding at the clip edges.
pub fn build_weight_mask(labels: &LabelTensor, params: WindowParams) -> WeightMask {
    let impulses = detect_boundaries(labels);
    let window = sin_window(params);
    let n_frames = labels.num_frames();
    let k = labels.num_classes();
    let center = params.half_width();
    let mut values = vec![1.0; n_frames * k];

    if !window.is_empty() {
        for class in 0..k {
            for j in 0..n_frames {
                let amplitude = impulses.get(j, class);
                if amplitude == 0.0 {
                    continue;
                }
                let lo = j.saturating_sub(center);
                let hi = (j + center + 1).min(n_frames);
                for n in lo..hi {
                    values[n * k + class] += amplitude * window[n + center - j];
                }
            }
        }
    }
    WeightMask::new(labels.grid(), labels.shared_vocab(), values)
        .expect("mask entries are at least one")
}

/// Per-class event counts `M_k` and active-frame counts `N_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub vocab: Arc<ClassVocabulary>,
    pub event_counts: Vec<u64>,
    pub frame_counts: Vec<u64>,
}

impl ClassStats {
    pub fn new(
        vocab: impl Into<Arc<ClassVocabulary>>,
        event_counts: Vec<u64>,
        frame_counts: Vec<u64>,
    ) -> Result<Self> {
        let vocab = vocab.into();
        if event_counts.len() != vocab.len() || frame_counts.len() != vocab.len() {
            return Err(Error::Dimension(format!(
                "{} classes but {} event counts and {} frame counts",
                vocab.len(),
                event_counts.len(),
                frame_counts.len()
            )));
        }
        Ok(Self {
            vocab,
            event_counts,
            frame_counts,
        })
    }

    fn require_positive(&self, counts: &[u64], what: &str) -> Result<()> {
        match counts.iter().position(|&c| c == 0) {
            Some(k) => Err(Error::UndefinedStatistic {
                class: self.vocab.name(k).to_string(),
                message: format!("{what} is zero"),
            }),
            None => Ok(()),
        }
    }
}

/// Counts events (runs of frames above 0.5) and active frames per class.
pub fn collect_class_stats(
    labels: &[LabelTensor],
    vocab: impl Into<Arc<ClassVocabulary>>,
) -> Result<ClassStats> {
    let vocab = vocab.into();
    let k = vocab.len();
    let mut events = vec![0u64; k];
    let mut frames = vec![0u64; k];
    for tensor in labels {
        if tensor.vocab().names() != vocab.names() {
            return Err(Error::Dimension("label tensor vocabulary differs".into()));
        }
        for class in 0..k {
            let mut was_active = false;
            for n in 0..tensor.num_frames() {
                let active = tensor.get(n, class) > 0.5;
                if active {
                    frames[class] += 1;
                    if !was_active {
                        events[class] += 1;
                    }
                }
                was_active = active;
            }
        }
    }
    ClassStats::new(vocab, events, frames)
}

/// Same statistics computed directly from event lists on a frame hop.
pub fn collect_class_stats_from_events(
    lists: &[EventList],
    frame_hop: f64,
    vocab: impl Into<Arc<ClassVocabulary>>,
) -> Result<ClassStats> {
    let vocab = vocab.into();
    let mut events = vec![0u64; vocab.len()];
    let mut frames = vec![0u64; vocab.len()];
    for list in lists {
        for e in list.events() {
            let class = vocab.index_of(&e.class_name)?;
            events[class] += 1;
            frames[class] += covered_frames(e, frame_hop).count() as u64;
        }
    }
    ClassStats::new(vocab, events, frames)
}

/// `w_k = exp(1 / M_k) / sum_j exp(1 / M_j)`; sums to one.
pub fn count_class_weights(stats: &ClassStats) -> Result<Vec<f64>> {
    stats.require_positive(&stats.event_counts, "event count")?;
    let raw: Vec<f64> = stats
        .event_counts
        .iter()
        .map(|&m| (1.0 / m as f64).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Effective-number weighting driven by both event counts and durations.
///
/// `beta_k = (M_k - 1) / M_k`, `r_k = N_k / sum_j N_j`,
/// `u_k = (1 - beta_k) / (1 - beta_k^e_k)` with `e_k = max(1, floor(lambda * r_k))`,
/// normalized so the weights sum to `K`.
pub fn effective_number_weights(stats: &ClassStats, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::validation("lambda", format!("must be positive, got {lambda}")));
    }
    stats.require_positive(&stats.event_counts, "event count")?;
    stats.require_positive(&stats.frame_counts, "frame count")?;

    let total_frames: f64 = stats.frame_counts.iter().map(|&n| n as f64).sum();
    let raw: Vec<f64> = stats
        .event_counts
        .iter()
        .zip(&stats.frame_counts)
        .map(|(&m, &n)| {
            let m = m as f64;
            let beta = (m - 1.0) / m;
            let ratio = n as f64 / total_frames;
            let exponent = (lambda * ratio).floor().clamp(1.0, i32::MAX as f64) as i32;
            (1.0 - beta) / (1.0 - beta.powi(exponent))
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let k = raw.len() as f64;
    Ok(raw.into_iter().map(|u| k * u / total).collect())
}
