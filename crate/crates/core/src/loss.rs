//! Binary cross-entropy, weighted aggregation and the composite training loss.
//!
//! Every reduction walks its matrix in row-major order so results are
//! bit-reproducible regardless of how callers parallelize across clips.

use crate::error::{Error, Result};
use crate::types::{FrameMatrix, LabelTensor, ScoreTensor, WeightMask};
use crate::weighting::{build_weight_mask, WindowParams};

/// Scores are clipped to `[EPSILON, 1 - EPSILON]` before taking logarithms.
pub const EPSILON: f64 = 1e-7;

#[inline]
fn clip(score: f64) -> f64 {
    score.clamp(EPSILON, 1.0 - EPSILON)
}

#[inline]
pub(crate) fn bce(label: f64, score: f64) -> f64 {
    let p = clip(score);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Derivative of [`bce`] with respect to the (clipped) score.
#[inline]
fn bce_derivative(label: f64, score: f64) -> f64 {
    let p = clip(score);
    (p - label) / (p * (1.0 - p))
}

/// Per-entry `-(y ln p + (1 - y) ln(1 - p))`.
pub fn bce_elementwise(labels: &LabelTensor, scores: &ScoreTensor) -> Result<FrameMatrix> {
    labels.check_same_shape(scores)?;
    let values = labels
        .values()
        .iter()
        .zip(scores.values())
        .map(|(&y, &p)| bce(y, p))
        .collect();
    labels.with_values(values)
}

/// Mean over frames and classes of `mask(n, k) * w(k) * f(n, k)`.
///
/// With neither weighting supplied this is the plain frame/class average.
pub fn aggregate_loss(
    elementwise: &FrameMatrix,
    mask: Option<&WeightMask>,
    class_weights: Option<&[f64]>,
) -> Result<f64> {
    if let Some(mask) = mask {
        elementwise.check_same_shape(mask)?;
    }
    let k = elementwise.num_classes();
    if let Some(w) = class_weights {
        if w.len() != k {
            return Err(Error::Dimension(format!(
                "{} class weights for {k} classes",
                w.len()
            )));
        }
    }
    let mut sum = 0.0;
    for (i, &f) in elementwise.values().iter().enumerate() {
        let mut v = f;
        if let Some(mask) = mask {
            v *= mask.values()[i];
        }
        if let Some(w) = class_weights {
            v *= w[i % k];
        }
        sum += v;
    }
    Ok(sum / elementwise.len() as f64)
}

/// Onset/offset weighted BCE for one clip.
pub fn owbce_loss(labels: &LabelTensor, scores: &ScoreTensor, params: WindowParams) -> Result<f64> {
    let elementwise = bce_elementwise(labels, scores)?;
    let mask = build_weight_mask(labels, params);
    aggregate_loss(&elementwise, Some(&mask), None)
}

/// Gradient of the (optionally masked) mean BCE with respect to the scores:
/// `mask * (p - y) / (p (1 - p)) / (N K)`.
pub fn bce_gradient(
    labels: &LabelTensor,
    scores: &ScoreTensor,
    mask: Option<&WeightMask>,
) -> Result<FrameMatrix> {
    labels.check_same_shape(scores)?;
    if let Some(mask) = mask {
        labels.check_same_shape(mask)?;
    }
    let scale = 1.0 / labels.len() as f64;
    let values = labels
        .values()
        .iter()
        .zip(scores.values())
        .enumerate()
        .map(|(i, (&y, &p))| {
            let m = mask.map_or(1.0, |m| m.values()[i]);
            m * bce_derivative(y, p) * scale
        })
        .collect();
    labels.with_values(values)
}

pub fn owbce_gradient(
    labels: &LabelTensor,
    scores: &ScoreTensor,
    params: WindowParams,
) -> Result<FrameMatrix> {
    let mask = build_weight_mask(labels, params);
    bce_gradient(labels, scores, Some(&mask))
}

fn check_clip_labels(clip_labels: &[f64], scores: &ScoreTensor) -> Result<()> {
    if clip_labels.len() != scores.num_classes() {
        return Err(Error::Dimension(format!(
            "{} clip labels for {} classes",
            clip_labels.len(),
            scores.num_classes()
        )));
    }
    Ok(())
}

/// First frame holding the maximum score of each class.
fn max_pool(scores: &ScoreTensor) -> Vec<(usize, f64)> {
    (0..scores.num_classes())
        .map(|k| {
            (0..scores.num_frames()).fold((0, f64::NEG_INFINITY), |best, n| {
                let v = scores.get(n, k);
                if v > best.1 {
                    (n, v)
                } else {
                    best
                }
            })
        })
        .collect()
}

/// Clip-level BCE against temporally max-pooled scores, averaged over classes.
pub fn weak_loss(clip_labels: &[f64], scores: &ScoreTensor) -> Result<f64> {
    check_clip_labels(clip_labels, scores)?;
    let pooled = max_pool(scores);
    let sum: f64 = clip_labels
        .iter()
        .zip(&pooled)
        .map(|(&y, &(_, p))| bce(y, p))
        .sum();
    Ok(sum / clip_labels.len() as f64)
}

/// Gradient of [`weak_loss`]; non-zero only at each class's arg-max frame.
pub fn weak_loss_gradient(clip_labels: &[f64], scores: &ScoreTensor) -> Result<FrameMatrix> {
    check_clip_labels(clip_labels, scores)?;
    let k = scores.num_classes();
    let mut grad = FrameMatrix::filled(scores.grid(), scores.shared_vocab(), 0.0);
    for (class, (&y, &(frame, p))) in clip_labels.iter().zip(&max_pool(scores)).enumerate() {
        grad.set(frame, class, bce_derivative(y, p) / k as f64);
    }
    Ok(grad)
}

/// Clip-level presence derived from frame labels (max over frames).
pub fn clip_labels(labels: &LabelTensor) -> Vec<f64> {
    (0..labels.num_classes())
        .map(|k| (0..labels.num_frames()).map(|n| labels.get(n, k)).fold(0.0, f64::max))
        .collect()
}

/// Mean squared difference between student and teacher scores.
pub fn consistency_loss(student: &ScoreTensor, teacher: &ScoreTensor) -> Result<f64> {
    student.check_same_shape(teacher)?;
    let sum: f64 = student
        .values()
        .iter()
        .zip(teacher.values())
        .map(|(s, t)| (s - t) * (s - t))
        .sum();
    Ok(sum / student.len() as f64)
}

/// Gradient of [`consistency_loss`] with respect to the student, teacher fixed.
pub fn consistency_gradient(student: &ScoreTensor, teacher: &ScoreTensor) -> Result<FrameMatrix> {
    student.check_same_shape(teacher)?;
    let scale = 2.0 / student.len() as f64;
    student.with_values(
        student
            .values()
            .iter()
            .zip(teacher.values())
            .map(|(s, t)| scale * (s - t))
            .collect(),
    )
}

/// Weights of the weak-label and consistency terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CombinerWeights {
    w_weak: f64,
    w_cons: f64,
}

impl CombinerWeights {
    pub fn new(w_weak: f64, w_cons: f64) -> Result<Self> {
        for (key, v) in [("w_weak", w_weak), ("w_cons", w_cons)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { w_weak, w_cons })
    }

    pub fn w_weak(&self) -> f64 {
        self.w_weak
    }

    pub fn w_cons(&self) -> f64 {
        self.w_cons
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub strong: f64,
    pub weak: f64,
    pub consistency: f64,
    pub total: f64,
}

/// `total = strong + w_weak * weak + w_cons * consistency`.
///
/// Only the strong term is expected to carry the boundary mask.
pub fn combine_losses(strong: f64, weak: f64, consistency: f64, weights: CombinerWeights) -> LossBreakdown {
    LossBreakdown {
        strong,
        weak,
        consistency,
        total: strong + weights.w_weak * weak + weights.w_cons * consistency,
    }
}
