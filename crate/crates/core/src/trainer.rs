//! Linear frame classifier with temporal context, trained by mini-batch SGD.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{
    aggregate_loss, bce_elementwise, clip_labels, combine_losses, consistency_gradient,
    consistency_loss, weak_loss, weak_loss_gradient, CombinerWeights, LossBreakdown,
};
use crate::synth::Corpus;
use crate::types::{ClassVocabulary, Features, FrameGrid, LabelTensor, ScoreTensor, WeightMask};
use crate::weighting::{build_weight_mask, WindowParams};

const MODEL_KEY: &str = "model";

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-class logistic regression over a window of `2 * context + 1` frames.
///
/// Weights are stored class-major; within a class the layout is the
/// concatenated window (oldest frame first), then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFrameModel {
    context: usize,
    feature_dim: usize,
    num_classes: usize,
    weights: Vec<f64>,
}

impl LinearFrameModel {
    pub fn zeros(context: usize, feature_dim: usize, num_classes: usize) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(Error::validation(
                MODEL_KEY,
                "feature dimension and class count must be positive",
            ));
        }
        let per_class = (2 * context + 1) * feature_dim + 1;
        Ok(Self {
            context,
            feature_dim,
            num_classes,
            weights: vec![0.0; per_class * num_classes],
        })
    }

    pub fn from_weights(
        context: usize,
        feature_dim: usize,
        num_classes: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(context, feature_dim, num_classes)?;
        if weights.len() != model.weights.len() {
            return Err(Error::Dimension(format!(
                "expected {} weights, got {}",
                model.weights.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::validation(MODEL_KEY, format!("non-finite weight {w}")));
        }
        model.weights = weights;
        Ok(model)
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params_per_class(&self) -> usize {
        (2 * self.context + 1) * self.feature_dim + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Sets every class's bias term.
    pub fn set_bias(&mut self, bias: f64) {
        let p = self.params_per_class();
        for k in 0..self.num_classes {
            self.weights[k * p + p - 1] = bias;
        }
    }

    fn check_features(&self, features: &Features) -> Result<()> {
        if features.dim() != self.feature_dim {
            return Err(Error::Dimension(format!(
                "model expects {}-dimensional features, got {}",
                self.feature_dim,
                features.dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations, row-major `frames x classes`.
    fn logits(&self, features: &Features) -> Vec<f64> {
        let (c, d, k) = (self.context, self.feature_dim, self.num_classes);
        let p = self.params_per_class();
        let n_frames = features.num_frames();
        let mut z = vec![0.0; n_frames * k];
        for n in 0..n_frames {
            for class in 0..k {
                let w = &self.weights[class * p..(class + 1) * p];
                let mut acc = w[p - 1];
                for o in 0..=2 * c {
                    // frame n + o - c, zero outside the clip
                    let Some(m) = (n + o).checked_sub(c).filter(|&m| m < n_frames) else {
                        continue;
                    };
                    acc += w[o * d..(o + 1) * d]
                        .iter()
                        .zip(features.frame(m))
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
                z[n * k + class] = acc;
            }
        }
        z
    }

    pub fn predict(
        &self,
        features: &Features,
        frame_hop: f64,
        vocab: impl Into<Arc<ClassVocabulary>>,
    ) -> Result<ScoreTensor> {
        self.check_features(features)?;
        let vocab = vocab.into();
        if vocab.len() != self.num_classes {
            return Err(Error::Dimension(format!(
                "model has {} classes, vocabulary {}",
                self.num_classes,
                vocab.len()
            )));
        }
        let grid = FrameGrid::new(features.num_frames(), frame_hop)?;
        let logits = self.logits(features);
        if logits.iter().any(|z| z.is_nan()) {
            return Err(Error::validation(MODEL_KEY, "activation is not a number"));
        }
        let scores = logits.into_iter().map(sigmoid).collect();
        ScoreTensor::new(grid, vocab, scores)
    }

    /// Accumulates `scale * dL/dz` (row-major `frames x classes`) into a
    /// weight-space gradient.
    fn backprop(&self, features: &Features, grad_z: &[f64], scale: f64, out: &mut [f64]) {
        let (c, d, k) = (self.context, self.feature_dim, self.num_classes);
        let p = self.params_per_class();
        let n_frames = features.num_frames();
        for n in 0..n_frames {
            for class in 0..k {
                let g = scale * grad_z[n * k + class];
                if g == 0.0 {
                    continue;
                }
                let w = &mut out[class * p..(class + 1) * p];
                w[p - 1] += g;
                for o in 0..=2 * c {
                    let Some(m) = (n + o).checked_sub(c).filter(|&m| m < n_frames) else {
                        continue;
                    };
                    for (acc, x) in w[o * d..(o + 1) * d].iter_mut().zip(features.frame(m)) {
                        *acc += g * x;
                    }
                }
            }
        }
    }
}

/// One training example: features, strong labels and the boundary mask
/// applied to its strong loss (`None` is plain BCE).
#[derive(Debug, Clone, Copy)]
pub struct TrainingClip<'a> {
    pub features: &'a Features,
    pub labels: &'a LabelTensor,
    pub mask: Option<&'a WeightMask>,
}

/// Composite loss of one clip and its gradient with respect to the weights.
///
/// The strong term differentiates through the sigmoid in closed form,
/// `mask * (p - y) / (N K)` per logit, which equals the score-space gradient
/// times `p (1 - p)` wherever the score is not clipped.
pub fn clip_objective(
    model: &LinearFrameModel,
    clip: TrainingClip<'_>,
    combiner: CombinerWeights,
    teacher: Option<&ScoreTensor>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let labels = clip.labels;
    let scores = model.predict(
        clip.features,
        labels.grid().frame_hop(),
        labels.shared_vocab(),
    )?;
    let elementwise = bce_elementwise(labels, &scores)?;
    let strong = aggregate_loss(&elementwise, clip.mask, None)?;

    let nk = labels.len() as f64;
    let mut grad_z: Vec<f64> = labels
        .values()
        .iter()
        .zip(scores.values())
        .enumerate()
        .map(|(i, (&y, &p))| clip.mask.map_or(1.0, |m| m.values()[i]) * (p - y) / nk)
        .collect();

    let mut weak = 0.0;
    if combiner.w_weak() > 0.0 {
        let tags = clip_labels(labels);
        weak = weak_loss(&tags, &scores)?;
        let g = weak_loss_gradient(&tags, &scores)?;
        for ((gz, gp), p) in grad_z.iter_mut().zip(g.values()).zip(scores.values()) {
            *gz += combiner.w_weak() * gp * p * (1.0 - p);
        }
    }
    let mut consistency = 0.0;
    if combiner.w_cons() > 0.0 {
        let teacher = teacher.ok_or_else(|| {
            Error::validation("w_cons", "consistency weight set but no teacher predictions")
        })?;
        consistency = consistency_loss(&scores, teacher)?;
        let g = consistency_gradient(&scores, teacher)?;
        for ((gz, gp), p) in grad_z.iter_mut().zip(g.values()).zip(scores.values()) {
            *gz += combiner.w_cons() * gp * p * (1.0 - p);
        }
    }

    let mut grad = vec![0.0; model.weights.len()];
    model.backprop(clip.features, &grad_z, 1.0, &mut grad);
    Ok((combine_losses(strong, weak, consistency, combiner), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_clips: usize,
    pub window: WindowParams,
    pub combiner: CombinerWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 0.2,
            batch_clips: 4,
            window: WindowParams::default(),
            combiner: CombinerWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation(
                "train.learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if self.batch_clips == 0 {
            return Err(Error::validation("train.batch_clips", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearFrameModel,
    /// Full-corpus objective after each epoch.
    pub loss_trace: Vec<LossBreakdown>,
}

/// Mini-batch SGD over the corpus clips, shuffled each epoch.
///
/// Each step averages the per-clip gradients of its batch. The consistency
/// teacher is the model as it stood at the start of the epoch.
pub fn train(model: &LinearFrameModel, corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let masks: Vec<WeightMask> = corpus
        .labels
        .iter()
        .map(|l| build_weight_mask(l, config.window))
        .collect();
    train_with_masks(model, corpus, config, Some(&masks))
}

pub(crate) fn train_with_masks(
    model: &LinearFrameModel,
    corpus: &Corpus,
    config: &TrainConfig,
    masks: Option<&[WeightMask]>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::validation("corpus", "no clips to train on"));
    }
    let clip = |i: usize| TrainingClip {
        features: &corpus.features[i],
        labels: &corpus.labels[i],
        mask: masks.map(|m| &m[i]),
    };
    let needs_teacher = config.combiner.w_cons() > 0.0;
    let teach = |m: &LinearFrameModel| -> Result<Option<Vec<ScoreTensor>>> {
        if !needs_teacher {
            return Ok(None);
        }
        (0..corpus.len())
            .map(|i| m.predict(&corpus.features[i], corpus.grid.frame_hop(), Arc::clone(&corpus.vocab)))
            .collect::<Result<_>>()
            .map(Some)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = model.clone();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let teacher = teach(&model).map_err(|e| diverged(e, epoch))?;
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_clips) {
            let mut grad = vec![0.0; model.weights.len()];
            for &i in batch {
                let (_, g) = clip_objective(
                    &model,
                    clip(i),
                    config.combiner,
                    teacher.as_ref().map(|t| &t[i]),
                )
                .map_err(|e| diverged(e, epoch))?;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let step = config.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
            if model.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }

        let teacher = teach(&model).map_err(|e| diverged(e, epoch))?;
        let mut sums = [0.0; 4];
        for i in 0..corpus.len() {
            let (l, _) = clip_objective(&model, clip(i), config.combiner, teacher.as_ref().map(|t| &t[i]))
                .map_err(|e| diverged(e, epoch))?;
            for (s, v) in sums.iter_mut().zip([l.strong, l.weak, l.consistency, l.total]) {
                *s += v;
            }
        }
        let n = corpus.len() as f64;
        let epoch_loss = combine_losses(sums[0] / n, sums[1] / n, sums[2] / n, config.combiner);
        if !epoch_loss.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss.total,
            });
        }
        trace.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

/// Non-numeric activations during training are reported as divergence.
fn diverged(err: Error, epoch: usize) -> Error {
    match err {
        Error::Validation { ref key, .. } if key == MODEL_KEY => Error::Divergence {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

pub fn predict_corpus(model: &LinearFrameModel, corpus: &Corpus) -> Result<Vec<ScoreTensor>> {
    corpus
        .features
        .iter()
        .map(|f| model.predict(f, corpus.grid.frame_hop(), Arc::clone(&corpus.vocab)))
        .collect()
}

const MODEL_MAGIC: &str = "linear_frame_model";

pub fn format_model(model: &LinearFrameModel) -> String {
    let mut out = format!(
        "{MODEL_MAGIC} context={} feature_dim={} num_classes={}\n",
        model.context, model.feature_dim, model.num_classes
    );
    for w in &model.weights {
        writeln!(out, "{w:.8e}").expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_model(text: &str, origin: &str) -> Result<LinearFrameModel> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty model file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MODEL_MAGIC) {
        return Err(Error::parse(origin, 1, format!("expected `{MODEL_MAGIC}` header")));
    }
    let mut dims = [None; 3];
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, 1, format!("malformed header field `{field}`")))?;
        let slot = match key {
            "context" => 0,
            "feature_dim" => 1,
            "num_classes" => 2,
            _ => return Err(Error::parse(origin, 1, format!("unknown header field `{key}`"))),
        };
        dims[slot] = Some(
            value
                .parse::<usize>()
                .map_err(|e| Error::parse(origin, 1, format!("`{key}`: {e}")))?,
        );
    }
    let [Some(context), Some(feature_dim), Some(num_classes)] = dims else {
        return Err(Error::parse(origin, 1, "header must give context, feature_dim and num_classes"));
    };
    let weights = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(origin, i + 2, format!("weight: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    LinearFrameModel::from_weights(context, feature_dim, num_classes, weights)
}

pub fn write_model(model: &LinearFrameModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LinearFrameModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}

pub fn format_loss_trace(trace: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,strong,weak,consistency,total\n");
    for (epoch, l) in trace.iter().enumerate() {
        writeln!(
            out,
            "{epoch},{:.6},{:.6},{:.6},{:.6}",
            l.strong, l.weak, l.consistency, l.total
        )
        .expect("writing to a String cannot fail");
    }
    out
}
