//! Synthetic frame-feature corpora with controllable boundary ambiguity.
//!
//! Each class owns a random embedding vector. A frame's feature vector is the
//! sum of the embeddings of the classes present in it, each scaled by its
//! presence, plus isotropic Gaussian noise. Presence is 0 outside events and 1
//! inside, except on the `boundary_blur_frames` frames just inside each onset
//! and offset, which fade linearly toward background. Those frames stay
//! labelled active, so they are the acoustically ambiguous ones.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::convert::events_to_labels;
use crate::error::{Error, Result};
use crate::types::{ClassVocabulary, Event, EventList, Features, FrameGrid, LabelTensor};

/// Layout redraws per clip before giving up.
const MAX_LAYOUT_ATTEMPTS: usize = 100;
/// Rejection-sampling attempts per jittered boundary.
const MAX_JITTER_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_clips: usize,
    pub clip_frames: usize,
    pub num_classes: usize,
    /// Mean number of events per clip (Poisson).
    pub event_rate: f64,
    /// Inclusive event duration range in frames.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Standard deviation of the additive feature noise.
    pub score_noise_std: f64,
    pub boundary_blur_frames: usize,
    /// Timestamp jitter applied to training annotations, in seconds.
    pub annotation_jitter_std: f64,
    pub feature_dim: usize,
    pub frame_hop: f64,
    /// Seeds event placement and noise.
    pub rng_seed: u64,
    /// Seeds the class embeddings, so corpora that share it describe the same
    /// classes.
    pub embedding_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_clips: 100,
            clip_frames: 156,
            num_classes: 3,
            event_rate: 4.0,
            min_duration: 8,
            max_duration: 40,
            score_noise_std: 2.0,
            boundary_blur_frames: 3,
            annotation_jitter_std: 0.0,
            feature_dim: 16,
            frame_hop: 0.064,
            rng_seed: 7,
            embedding_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("synth.num_clips", self.num_clips),
            ("synth.clip_frames", self.clip_frames),
            ("synth.num_classes", self.num_classes),
            ("synth.min_duration", self.min_duration),
            ("synth.feature_dim", self.feature_dim),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::validation(key, "must be positive"));
            }
        }
        if self.max_duration < self.min_duration {
            return Err(Error::validation(
                "synth.max_duration",
                format!(
                    "must be >= synth.min_duration ({} < {})",
                    self.max_duration, self.min_duration
                ),
            ));
        }
        for (key, v) in [
            ("synth.event_rate", self.event_rate),
            ("synth.score_noise_std", self.score_noise_std),
            ("synth.annotation_jitter_std", self.annotation_jitter_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(key, format!("must be >= 0, got {v}")));
            }
        }
        FrameGrid::new(self.clip_frames, self.frame_hop)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<FrameGrid> {
        FrameGrid::new(self.clip_frames, self.frame_hop)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Arc<ClassVocabulary>,
    pub grid: FrameGrid,
    pub events: Vec<EventList>,
    pub labels: Vec<LabelTensor>,
    pub features: Vec<Features>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Replaces the annotations (and their rasterized labels) while keeping
    /// the features, modelling label noise on otherwise identical audio.
    pub fn with_annotations(&self, events: Vec<EventList>) -> Result<Self> {
        if events.len() != self.events.len() {
            return Err(Error::Dimension(format!(
                "{} annotation lists for {} clips",
                events.len(),
                self.events.len()
            )));
        }
        let labels = events
            .iter()
            .map(|e| events_to_labels(e, self.grid, Arc::clone(&self.vocab)))
            .collect::<Result<_>>()?;
        Ok(Self {
            vocab: Arc::clone(&self.vocab),
            grid: self.grid,
            events,
            labels,
            features: self.features.clone(),
        })
    }
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:04}.wav")
}

/// Presence of one event `[start, end)` at frame `n`.
///
/// Inside the event, the `blur` frames nearest each boundary are pulled
/// linearly toward background: the boundary frame itself has presence
/// `1 / (blur + 1)`, rising by the same step per frame until it reaches 1.
fn presence(n: usize, start: usize, end: usize, blur: usize) -> f64 {
    if !(start..end).contains(&n) {
        return 0.0;
    }
    let depth = (n - start).min(end - 1 - n) + 1;
    (depth as f64 / (blur + 1) as f64).min(1.0)
}

/// Per-class frame spans `[start, end)` for `n_events` events, or `None` when
/// some event no longer fits.
///
/// Each start is uniform over the positions that keep at least one inactive
/// frame between same-class events. A shorter duration is tried only when
/// the drawn one does not fit.
fn place_events(
    rng: &mut ChaCha8Rng,
    n_events: usize,
    num_classes: usize,
    min_duration: usize,
    max_duration: usize,
    clip_frames: usize,
) -> Option<Vec<Vec<(usize, usize)>>> {
    let mut spans: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_classes];
    for _ in 0..n_events {
        let class = rng.random_range(0..num_classes);
        let drawn = rng.random_range(min_duration..=max_duration);
        let (starts, dur) = (min_duration..=drawn).rev().find_map(|dur| {
            let starts: Vec<usize> = (0..=clip_frames - dur)
                .filter(|&start| spans[class].iter().all(|&(s, e)| start + dur < s || start > e))
                .collect();
            (!starts.is_empty()).then_some((starts, dur))
        })?;
        let start = starts[rng.random_range(0..starts.len())];
        spans[class].push((start, start + dur));
    }
    Some(spans)
}

pub fn generate_corpus(config: &SynthConfig, vocab: impl Into<Arc<ClassVocabulary>>) -> Result<Corpus> {
    config.validate()?;
    let vocab = vocab.into();
    if vocab.len() != config.num_classes {
        return Err(Error::validation(
            "synth.num_classes",
            format!("{} classes configured but vocabulary has {}", config.num_classes, vocab.len()),
        ));
    }
    if config.event_rate > 0.0 && config.min_duration > config.clip_frames {
        return Err(Error::Generation(format!(
            "events of {} frames cannot fit in {}-frame clips",
            config.min_duration, config.clip_frames
        )));
    }

    let grid = config.grid()?;
    let k = config.num_classes;
    let dim = config.feature_dim;
    let hop = config.frame_hop;
    let mut embedding_rng = ChaCha8Rng::seed_from_u64(config.embedding_seed);
    let embeddings: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..dim)
                .map(|_| embedding_rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let count_dist = if config.event_rate > 0.0 {
        Some(Poisson::new(config.event_rate).map_err(|e| Error::validation("synth.event_rate", e.to_string()))?)
    } else {
        None
    };
    let noise = Normal::new(0.0, config.score_noise_std)
        .map_err(|e| Error::validation("synth.score_noise_std", e.to_string()))?;
    let max_duration = config.max_duration.min(config.clip_frames);

    let mut corpus = Corpus {
        vocab: Arc::clone(&vocab),
        grid,
        events: Vec::with_capacity(config.num_clips),
        labels: Vec::with_capacity(config.num_clips),
        features: Vec::with_capacity(config.num_clips),
    };

    for clip in 0..config.num_clips {
        let spans = (0..MAX_LAYOUT_ATTEMPTS)
            .find_map(|_| {
                let n_events = count_dist.map_or(0, |d| d.sample(&mut rng) as usize);
                place_events(&mut rng, n_events, k, config.min_duration, max_duration, config.clip_frames)
            })
            .ok_or_else(|| {
                Error::Generation(format!(
                    "no non-overlapping layout for clip {clip} after {MAX_LAYOUT_ATTEMPTS} attempts"
                ))
            })?;

        let vocab_ref: &ClassVocabulary = &vocab;
        let events: Vec<Event> = spans
            .iter()
            .enumerate()
            .flat_map(|(class, spans)| {
                spans.iter().map(move |&(s, e)| Event {
                    class_name: vocab_ref.name(class).to_string(),
                    onset: s as f64 * hop,
                    offset: e as f64 * hop,
                })
            })
            .collect();
        let events = EventList::new(clip_id(clip), events);
        let labels = events_to_labels(&events, grid, Arc::clone(&vocab))?;

        let mut values = vec![0.0; config.clip_frames * dim];
        for n in 0..config.clip_frames {
            let row = &mut values[n * dim..(n + 1) * dim];
            for (class, class_spans) in spans.iter().enumerate() {
                let p = class_spans
                    .iter()
                    .map(|&(s, e)| presence(n, s, e, config.boundary_blur_frames))
                    .fold(0.0, f64::max);
                if p > 0.0 {
                    for (x, &w) in row.iter_mut().zip(&embeddings[class]) {
                        *x += p * w;
                    }
                }
            }
            if config.score_noise_std > 0.0 {
                for x in row.iter_mut() {
                    *x += noise.sample(&mut rng);
                }
            }
        }

        corpus.events.push(events);
        corpus.labels.push(labels);
        corpus.features.push(Features::new(config.clip_frames, dim, values)?);
    }
    Ok(corpus)
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, std: f64, lo: f64, hi: f64, strict_lo: bool) -> f64 {
    let dist = Normal::new(mean, std).expect("std validated by caller");
    for _ in 0..MAX_JITTER_ATTEMPTS {
        let v = dist.sample(rng);
        let above = if strict_lo { v > lo } else { v >= lo };
        if above && v <= hi {
            return v;
        }
    }
    mean
}

/// Perturbs every onset and offset with truncated Gaussian noise.
///
/// The onset stays in `[0, offset)`; the offset stays in `(new onset, clip
/// end]` when `clip_duration` is given. A zero `std` returns the input.
pub fn jitter_annotations(
    events: &[EventList],
    std: f64,
    seed: u64,
    clip_duration: Option<f64>,
) -> Result<Vec<EventList>> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::validation("jitter.std", format!("must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(events.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(events
        .iter()
        .map(|list| {
            let jittered = list
                .events()
                .iter()
                .map(|e| {
                    let onset = truncated_normal(&mut rng, e.onset, std, 0.0, e.offset, false)
                        .min(e.offset.next_down());
                    let end = clip_duration.unwrap_or(f64::INFINITY).max(onset.next_up());
                    let offset = truncated_normal(&mut rng, e.offset, std, onset, end, true);
                    Event {
                        class_name: e.class_name.clone(),
                        onset,
                        offset: if offset > onset { offset } else { e.offset.max(onset.next_up()) },
                    }
                })
                .collect();
            EventList::new(list.clip_id(), jittered)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::labels_to_events;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_clips: 12,
            clip_frames: 80,
            max_duration: 20,
            rng_seed: seed,
            ..SynthConfig::default()
        }
    }

    fn vocab(k: usize) -> ClassVocabulary {
        ClassVocabulary::numbered(k).unwrap()
    }

    #[test]
    fn zero_rate_gives_empty_clips() {
        let cfg = SynthConfig {
            event_rate: 0.0,
            ..small(1)
        };
        let corpus = generate_corpus(&cfg, vocab(3)).unwrap();
        assert_eq!(corpus.len(), 12);
        assert!(corpus.events.iter().all(EventList::is_empty));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(&small(5), vocab(3)).unwrap();
        let b = generate_corpus(&small(5), vocab(3)).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.features, b.features);
        let c = generate_corpus(&small(6), vocab(3)).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn events_round_trip_through_labels() {
        let corpus = generate_corpus(&small(3), vocab(3)).unwrap();
        for (events, labels) in corpus.events.iter().zip(&corpus.labels) {
            let decoded = labels_to_events(labels, events.clip_id(), false);
            assert_eq!(decoded.len(), events.len());
            for (a, b) in decoded.events().iter().zip(events.events()) {
                assert_eq!(a.class_name, b.class_name);
                assert!((a.onset - b.onset).abs() < 1e-9 && (a.offset - b.offset).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn infeasible_placement_is_an_error() {
        let cfg = SynthConfig {
            clip_frames: 20,
            min_duration: 15,
            max_duration: 15,
            event_rate: 30.0,
            num_classes: 1,
            ..small(1)
        };
        assert!(matches!(generate_corpus(&cfg, vocab(1)), Err(Error::Generation(_))));
        let too_long = SynthConfig {
            clip_frames: 10,
            min_duration: 11,
            max_duration: 12,
            ..small(1)
        };
        assert!(matches!(generate_corpus(&too_long, vocab(3)), Err(Error::Generation(_))));
    }

    #[test]
    fn presence_fades_inside_boundaries() {
        // onset at frame 10 with a 2-frame blur
        let p: Vec<f64> = (8..14).map(|n| presence(n, 10, 40, 2)).collect();
        assert_eq!(p, vec![0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0]);
        // offset side mirrors the onset side
        assert_eq!(presence(39, 10, 40, 2), 1.0 / 3.0);
        assert_eq!(presence(40, 10, 40, 2), 0.0);
        // a 3-frame event never reaches full presence under a 2-frame blur
        let short: Vec<f64> = (0..3).map(|n| presence(n, 0, 3, 2)).collect();
        assert_eq!(short, vec![1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(presence(9, 10, 40, 0), 0.0);
        assert_eq!(presence(10, 10, 40, 0), 1.0);
    }

    /// Solves `a x = b` by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                let (top, bottom) = a.split_at_mut(row);
                for (x, &p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn noiseless_unblurred_features_are_linearly_separable() {
        let cfg = SynthConfig {
            score_noise_std: 0.0,
            boundary_blur_frames: 0,
            ..small(11)
        };
        let corpus = generate_corpus(&cfg, vocab(3)).unwrap();
        let dim = cfg.feature_dim;
        // Least-squares fit of each label column on [features, 1], then check
        // the fit reproduces every label exactly when thresholded at 0.5.
        for class in 0..3 {
            let mut gram = vec![vec![0.0; dim + 1]; dim + 1];
            let mut rhs = vec![0.0; dim + 1];
            for (f, l) in corpus.features.iter().zip(&corpus.labels) {
                for n in 0..f.num_frames() {
                    let x: Vec<f64> = f.frame(n).iter().copied().chain([1.0]).collect();
                    for i in 0..=dim {
                        for j in 0..=dim {
                            gram[i][j] += x[i] * x[j];
                        }
                        rhs[i] += x[i] * l.get(n, class);
                    }
                }
            }
            for (i, row) in gram.iter_mut().enumerate() {
                row[i] += 1e-9;
            }
            let w = solve(gram, rhs);
            for (f, l) in corpus.features.iter().zip(&corpus.labels) {
                for n in 0..f.num_frames() {
                    let z: f64 = f.frame(n).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
                    assert_eq!(z > 0.5, l.get(n, class) == 1.0, "class {class} frame {n} z {z}");
                }
            }
        }
    }

    #[test]
    fn jitter_identity_and_determinism() {
        let corpus = generate_corpus(&small(2), vocab(3)).unwrap();
        assert_eq!(jitter_annotations(&corpus.events, 0.0, 1, None).unwrap(), corpus.events);
        let a = jitter_annotations(&corpus.events, 0.05, 9, Some(corpus.grid.duration())).unwrap();
        let b = jitter_annotations(&corpus.events, 0.05, 9, Some(corpus.grid.duration())).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, corpus.events);
        for (orig, jit) in corpus.events.iter().zip(&a) {
            assert_eq!(orig.len(), jit.len());
            for e in jit.events() {
                assert!(e.onset >= 0.0 && e.onset < e.offset && e.offset <= corpus.grid.duration());
            }
        }
    }

    #[test]
    fn jitter_magnitude_matches_half_normal_mean() {
        let events: Vec<EventList> = (0..10_000)
            .map(|i| EventList::new(clip_id(i), vec![Event::new("class_0", 2.0, 7.0).unwrap()]))
            .collect();
        let std = 0.064;
        let jittered = jitter_annotations(&events, std, 42, Some(10.0)).unwrap();
        let mean_shift: f64 = jittered
            .iter()
            .map(|l| (l.events()[0].onset - 2.0).abs())
            .sum::<f64>()
            / events.len() as f64;
        let expected = std * (2.0 / std::f64::consts::PI).sqrt();
        assert!((expected - 0.051).abs() < 1e-3);
        // standard error of the mean is about 4e-4
        assert!((mean_shift - expected).abs() < 1.5e-3, "{mean_shift} vs {expected}");
    }
}
