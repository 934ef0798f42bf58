//! Conversions between event lists and frame-level activity tensors.

use std::sync::Arc;

use crate::error::Result;
use crate::types::{ClassVocabulary, Event, EventList, FrameGrid, LabelTensor};

/// Overlap slack, as a fraction of one frame, absorbing float rounding at
/// exactly-half-frame boundaries.
const HALF_FRAME_SLACK: f64 = 1e-9;

/// Rasterizes events onto the frame grid.
///
/// Frame `n` of class `k` is active when `[n * hop, (n + 1) * hop)` overlaps some
/// event of class `k` by at least half a frame. Events running past the end
/// of the clip are clipped.
pub fn events_to_labels(
    events: &EventList,
    grid: FrameGrid,
    vocab: impl Into<Arc<ClassVocabulary>>,
) -> Result<LabelTensor> {
    let vocab = vocab.into();
    let k = vocab.len();
    let n_frames = grid.num_frames();
    let hop = grid.frame_hop();
    let mut values = vec![0.0; n_frames * k];

    for event in events.events() {
        let class = vocab.index_of(&event.class_name)?;
        for n in covered_frames(event, hop).take_while(|&n| n < n_frames) {
            values[n * k + class] = 1.0;
        }
    }
    LabelTensor::new(grid, vocab, values)
}

/// Frames an event covers by at least half a frame, ignoring the clip end.
pub(crate) fn covered_frames(event: &Event, hop: f64) -> impl Iterator<Item = usize> + '_ {
    let min_overlap = hop * (0.5 - HALF_FRAME_SLACK);
    let first = (event.onset / hop).floor() as usize;
    let last = (event.offset / hop).ceil() as usize;
    (first..last).filter(move |&n| {
        let start = n as f64 * hop;
        event.offset.min(start + hop) - event.onset.max(start) >= min_overlap
    })
}

/// Decodes maximal runs of active frames into events.
///
/// With `binarize` set, entries above 0.5 count as active; otherwise the
/// tensor is taken to be binary already and any non-zero entry is active.
/// A run covering frames `first..=last` becomes an event
/// `[first * hop, (last + 1) * hop)`.
pub fn labels_to_events(labels: &LabelTensor, clip_id: &str, binarize: bool) -> EventList {
    let hop = labels.grid().frame_hop();
    let is_active = |v: f64| if binarize { v > 0.5 } else { v != 0.0 };
    let mut events = Vec::new();

    for class in 0..labels.num_classes() {
        let name = labels.vocab().name(class);
        let mut run_start: Option<usize> = None;
        for n in 0..=labels.num_frames() {
            let active = n < labels.num_frames() && is_active(labels.get(n, class));
            match (run_start, active) {
                (None, true) => run_start = Some(n),
                (Some(start), false) => {
                    events.push(Event {
                        class_name: name.to_string(),
                        onset: start as f64 * hop,
                        offset: n as f64 * hop,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    EventList::new(clip_id, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn vocab() -> ClassVocabulary {
        ClassVocabulary::new(["Speech", "Dog"]).unwrap()
    }

    #[test]
    fn empty_events_give_zero_labels() {
        let grid = FrameGrid::new(8, 0.064).unwrap();
        let labels = events_to_labels(&EventList::empty("a"), grid, vocab()).unwrap();
        assert!(labels.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_aligned_event_activates_expected_frames() {
        let grid = FrameGrid::new(10, 0.064).unwrap();
        let events = EventList::new("a", vec![Event::new("Speech", 0.192, 0.384).unwrap()]);
        let labels = events_to_labels(&events, grid, vocab()).unwrap();
        let active: Vec<usize> = (0..10).filter(|&n| labels.get(n, 0) == 1.0).collect();
        assert_eq!(active, vec![3, 4, 5]);
        assert!(labels.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whole_clip_event_and_clipping() {
        let grid = FrameGrid::new(5, 0.1).unwrap();
        let events = EventList::new("a", vec![Event::new("Dog", 0.0, 7.0).unwrap()]);
        let labels = events_to_labels(&events, grid, vocab()).unwrap();
        assert!(labels.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_frame_rule() {
        let grid = FrameGrid::new(4, 0.1).unwrap();
        // covers frame 0 by exactly half, frame 1 fully, frame 2 by 40%
        let events = EventList::new("a", vec![Event::new("Speech", 0.05, 0.24).unwrap()]);
        let labels = events_to_labels(&events, grid, vocab()).unwrap();
        assert_eq!(labels.column(0), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_class_is_rejected() {
        let grid = FrameGrid::new(4, 0.1).unwrap();
        let events = EventList::new("a", vec![Event::new("Cat", 0.0, 0.2).unwrap()]);
        assert!(matches!(
            events_to_labels(&events, grid, vocab()),
            Err(Error::UnknownClass(_))
        ));
    }

    #[test]
    fn decode_runs() {
        let grid = FrameGrid::new(8, 0.064).unwrap();
        let v = ClassVocabulary::new(["Speech"]).unwrap();
        let labels =
            LabelTensor::new(grid, v.clone(), vec![0., 0., 0., 1., 1., 1., 0., 0.]).unwrap();
        let events = labels_to_events(&labels, "a", false);
        assert_eq!(events.len(), 1);
        let e = &events.events()[0];
        assert!((e.onset - 0.192).abs() < 1e-12 && (e.offset - 0.384).abs() < 1e-12);

        let split = LabelTensor::new(grid, v.clone(), vec![1., 1., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(labels_to_events(&split, "a", false).len(), 3);

        assert!(labels_to_events(&LabelTensor::zeros(grid, v), "a", false).is_empty());
    }

    #[test]
    fn decode_thresholds_soft_values() {
        let grid = FrameGrid::new(4, 0.5).unwrap();
        let v = ClassVocabulary::new(["Speech"]).unwrap();
        let labels = LabelTensor::new(grid, v, vec![0.2, 0.5, 0.51, 0.9]).unwrap();
        let events = labels_to_events(&labels, "a", true);
        assert_eq!(events.len(), 1);
        assert_eq!(events.events()[0].onset, 1.0);
        assert_eq!(events.events()[0].offset, 2.0);
    }
}
