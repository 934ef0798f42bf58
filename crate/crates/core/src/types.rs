//! Frame-grid data model shared by every stage of the pipeline.
//!
//! All tensors are stored row-major as `num_frames x num_classes`, with the
//! column order fixed by the [`ClassVocabulary`].

use std::cmp::Ordering;
use std::collections::HashSet;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of frames in a clip and the duration of one frame in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    num_frames: usize,
    frame_hop: f64,
}

impl FrameGrid {
    pub fn new(num_frames: usize, frame_hop: f64) -> Result<Self> {
        if num_frames == 0 {
            return Err(Error::validation("num_frames", "must be at least 1"));
        }
        if !(frame_hop.is_finite() && frame_hop > 0.0) {
            return Err(Error::validation(
                "frame_hop",
                format!("must be a positive number of seconds, got {frame_hop}"),
            ));
        }
        Ok(Self {
            num_frames,
            frame_hop,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_hop(&self) -> f64 {
        self.frame_hop
    }

    /// Clip duration in seconds.
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 * self.frame_hop
    }

    /// Start time of frame `n` in seconds.
    pub fn frame_start(&self, n: usize) -> f64 {
        n as f64 * self.frame_hop
    }

    /// Converts a duration in seconds to the nearest whole number of frames.
    pub fn seconds_to_frames(&self, seconds: f64) -> usize {
        (seconds / self.frame_hop).round().max(0.0) as usize
    }
}

/// Ordered, duplicate-free list of class names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::validation("classes", "vocabulary must not be empty"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::validation("classes", "class names must not be empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(
                    "classes",
                    format!("duplicate class name `{name}`"),
                ));
            }
        }
        Ok(Self { names })
    }

    /// Vocabulary `class_0, class_1, ...` of the given size.
    pub fn numbered(num_classes: usize) -> Result<Self> {
        Self::new((0..num_classes).map(|k| format!("class_{k}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }
}

/// Dense `num_frames x num_classes` matrix tied to a grid and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    grid: FrameGrid,
    vocab: Arc<ClassVocabulary>,
    values: Vec<f64>,
}

impl FrameMatrix {
    pub fn new(
        grid: FrameGrid,
        vocab: impl Into<Arc<ClassVocabulary>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let vocab = vocab.into();
        let expected = grid.num_frames() * vocab.len();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {} x {} = {expected} values, got {}",
                grid.num_frames(),
                vocab.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            vocab,
            values,
        })
    }

    pub fn filled(grid: FrameGrid, vocab: impl Into<Arc<ClassVocabulary>>, value: f64) -> Self {
        let vocab = vocab.into();
        let values = vec![value; grid.num_frames() * vocab.len()];
        Self {
            grid,
            vocab,
            values,
        }
    }

    pub fn grid(&self) -> FrameGrid {
        self.grid
    }

    pub fn vocab(&self) -> &ClassVocabulary {
        &self.vocab
    }

    pub fn shared_vocab(&self) -> Arc<ClassVocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn num_frames(&self) -> usize {
        self.grid.num_frames()
    }

    pub fn num_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, frame: usize, class: usize) -> f64 {
        self.values[frame * self.num_classes() + class]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, class: usize, value: f64) {
        let k = self.num_classes();
        self.values[frame * k + class] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        let k = self.num_classes();
        &self.values[frame * k..(frame + 1) * k]
    }

    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.num_frames()).map(|n| self.get(n, class)).collect()
    }

    /// Builds a matrix with the same grid and vocabulary but new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, self.shared_vocab(), values)
    }

    /// Fails unless `other` has the same frame count and vocabulary.
    pub fn check_same_shape(&self, other: &FrameMatrix) -> Result<()> {
        if self.num_frames() != other.num_frames() || self.num_classes() != other.num_classes() {
            return Err(Error::Dimension(format!(
                "{} x {} vs {} x {}",
                self.num_frames(),
                self.num_classes(),
                other.num_frames(),
                other.num_classes()
            )));
        }
        if self.vocab.names() != other.vocab.names() {
            return Err(Error::Dimension("class vocabularies differ".into()));
        }
        Ok(())
    }
}

fn check_unit_range(matrix: &FrameMatrix, what: &str) -> Result<()> {
    for (i, &v) in matrix.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            let k = matrix.num_classes();
            return Err(Error::validation(
                what,
                format!(
                    "value {v} at frame {}, class `{}` is outside [0, 1]",
                    i / k,
                    matrix.vocab().name(i % k)
                ),
            ));
        }
    }
    Ok(())
}

macro_rules! frame_tensor {
    ($(#[$meta:meta])* $name:ident, $what:literal, $check:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(FrameMatrix);

        impl $name {
            pub fn new(
                grid: FrameGrid,
                vocab: impl Into<Arc<ClassVocabulary>>,
                values: Vec<f64>,
            ) -> Result<Self> {
                Self::from_matrix(FrameMatrix::new(grid, vocab, values)?)
            }

            pub fn from_matrix(matrix: FrameMatrix) -> Result<Self> {
                let check: fn(&FrameMatrix, &str) -> Result<()> = $check;
                check(&matrix, $what)?;
                Ok(Self(matrix))
            }

            pub fn zeros(grid: FrameGrid, vocab: impl Into<Arc<ClassVocabulary>>) -> Self {
                Self(FrameMatrix::filled(grid, vocab, 0.0))
            }

            pub fn matrix(&self) -> &FrameMatrix {
                &self.0
            }

            pub fn into_matrix(self) -> FrameMatrix {
                self.0
            }
        }

        impl Deref for $name {
            type Target = FrameMatrix;

            fn deref(&self) -> &FrameMatrix {
                &self.0
            }
        }
    };
}

frame_tensor!(
    /// Frame-level ground truth activity in `[0, 1]`.
    LabelTensor,
    "labels",
    check_unit_range
);

frame_tensor!(
    /// Frame-level model outputs in `[0, 1]`.
    ScoreTensor,
    "scores",
    check_unit_range
);

frame_tensor!(
    /// Multiplicative per-frame, per-class loss weights.
    WeightMask,
    "mask",
    |m, what| {
        match m.values().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(Error::validation(
                what,
                format!("weight {} at index {i} is not a finite non-negative number", m.values()[i]),
            )),
            None => Ok(()),
        }
    }
);

frame_tensor!(
    /// Boundary impulses obtained from the label first difference.
    BoundaryImpulse,
    "impulses",
    |m, what| {
        match m.values().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(Error::validation(what, format!("negative impulse at index {i}"))),
            None => Ok(()),
        }
    }
);

impl LabelTensor {
    /// True when every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.values().iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

impl ScoreTensor {
    pub fn from_labels(labels: &LabelTensor) -> Self {
        Self(labels.matrix().clone())
    }
}

impl WeightMask {
    pub fn ones(grid: FrameGrid, vocab: impl Into<Arc<ClassVocabulary>>) -> Self {
        Self(FrameMatrix::filled(grid, vocab, 1.0))
    }
}

/// Per-frame feature vectors of one clip, row-major `num_frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    num_frames: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Features {
    pub fn new(num_frames: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_frames * dim {
            return Err(Error::Dimension(format!(
                "expected {num_frames} x {dim} feature values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation("features", format!("non-finite value {v}")));
        }
        Ok(Self {
            num_frames,
            dim,
            values,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One labelled sound event, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub class_name: String,
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn new(class_name: impl Into<String>, onset: f64, offset: f64) -> Result<Self> {
        let class_name = class_name.into();
        if !(onset.is_finite() && offset.is_finite()) {
            return Err(Error::validation("event", "onset and offset must be finite"));
        }
        if onset < 0.0 {
            return Err(Error::validation(
                "onset",
                format!("onset {onset} of `{class_name}` is negative"),
            ));
        }
        if onset >= offset {
            return Err(Error::validation(
                "offset",
                format!("onset {onset} must precede offset {offset} for `{class_name}`"),
            ));
        }
        Ok(Self {
            class_name,
            onset,
            offset,
        })
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    /// Length of the overlap between the two events' time spans.
    pub fn intersection(&self, other: &Event) -> f64 {
        (self.offset.min(other.offset) - self.onset.max(other.onset)).max(0.0)
    }

    fn sort_key_cmp(&self, other: &Event) -> Ordering {
        self.class_name
            .cmp(&other.class_name)
            .then(self.onset.total_cmp(&other.onset))
            .then(self.offset.total_cmp(&other.offset))
    }
}

/// All events of one clip, kept sorted by `(class_name, onset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventList {
    clip_id: String,
    events: Vec<Event>,
}

impl EventList {
    pub fn new(clip_id: impl Into<String>, mut events: Vec<Event>) -> Self {
        events.sort_by(Event::sort_key_cmp);
        Self {
            clip_id: clip_id.into(),
            events,
        }
    }

    pub fn empty(clip_id: impl Into<String>) -> Self {
        Self::new(clip_id, Vec::new())
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, event: Event) {
        let at = self
            .events
            .partition_point(|e| e.sort_key_cmp(&event) != Ordering::Greater);
        self.events.insert(at, event);
    }

    pub fn of_class<'a>(&'a self, class_name: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.class_name == class_name)
    }

    /// Fails if any event names a class outside `vocab`.
    pub fn check_vocabulary(&self, vocab: &ClassVocabulary) -> Result<()> {
        for e in &self.events {
            vocab.index_of(&e.class_name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_values() {
        assert!(FrameGrid::new(0, 0.064).is_err());
        assert!(FrameGrid::new(10, 0.0).is_err());
        assert!(FrameGrid::new(10, f64::NAN).is_err());
        let g = FrameGrid::new(10, 0.064).unwrap();
        assert!((g.duration() - 0.64).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_empty() {
        assert!(ClassVocabulary::new(Vec::<String>::new()).is_err());
        assert!(ClassVocabulary::new(["a", "a"]).is_err());
        let v = ClassVocabulary::new(["Speech", "Dog"]).unwrap();
        assert_eq!(v.index_of("Dog").unwrap(), 1);
        assert!(matches!(v.index_of("Cat"), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn tensors_enforce_range_and_shape() {
        let g = FrameGrid::new(2, 0.1).unwrap();
        let v = ClassVocabulary::numbered(1).unwrap();
        assert!(ScoreTensor::new(g, v.clone(), vec![0.0, 1.0]).is_ok());
        assert!(ScoreTensor::new(g, v.clone(), vec![0.0, 1.000001]).is_err());
        assert!(LabelTensor::new(g, v.clone(), vec![0.0]).is_err());
        assert!(WeightMask::new(g, v, vec![13.0, 1.0]).is_ok());
    }

    #[test]
    fn event_ordering_is_enforced() {
        assert!(Event::new("a", 1.0, 1.0).is_err());
        assert!(Event::new("a", -0.1, 1.0).is_err());
        let list = EventList::new(
            "clip",
            vec![
                Event::new("b", 0.0, 1.0).unwrap(),
                Event::new("a", 2.0, 3.0).unwrap(),
                Event::new("a", 0.5, 1.0).unwrap(),
            ],
        );
        let keys: Vec<_> = list
            .events()
            .iter()
            .map(|e| (e.class_name.as_str(), e.onset))
            .collect();
        assert_eq!(keys, vec![("a", 0.5), ("a", 2.0), ("b", 0.0)]);

        let mut list = list;
        list.push(Event::new("a", 1.0, 1.5).unwrap());
        assert_eq!(list.events()[1].onset, 1.0);
    }
}
