//! Collar-based event F-score.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{ClassVocabulary, Event, EventList};

/// Absorbs the rounding left by frame-grid arithmetic in collar comparisons.
const COLLAR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Config {
    pub onset_collar: f64,
    pub offset_collar: f64,
    pub offset_duration_ratio: f64,
}

impl F1Config {
    pub fn new(onset_collar: f64, offset_collar: f64, offset_duration_ratio: f64) -> Result<Self> {
        for (key, v) in [
            ("f1.onset_collar", onset_collar),
            ("f1.offset_collar", offset_collar),
            ("f1.offset_duration_ratio", offset_duration_ratio),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(key, format!("must be >= 0, got {v}")));
            }
        }
        Ok(Self {
            onset_collar,
            offset_collar,
            offset_duration_ratio,
        })
    }

    /// Whether `detection` may be matched to `reference` (classes not checked).
    pub fn accepts(&self, reference: &Event, detection: &Event) -> bool {
        let offset_tolerance = self
            .offset_collar
            .max(self.offset_duration_ratio * reference.duration());
        (detection.onset - reference.onset).abs() <= self.onset_collar + COLLAR_SLACK
            && (detection.offset - reference.offset).abs() <= offset_tolerance + COLLAR_SLACK
    }
}

impl Default for F1Config {
    fn default() -> Self {
        Self {
            onset_collar: 0.2,
            offset_collar: 0.2,
            offset_duration_ratio: 0.2,
        }
    }
}

/// Detection counts and scores for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class_name: String,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassScore {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn f1(&self) -> f64 {
        f_score(self.true_positives, self.false_positives, self.false_negatives)
    }
}

/// `2 TP / (2 TP + FP + FN)`, taken as 0 when nothing was expected or found.
pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventF1 {
    /// Micro-averaged over classes.
    pub f1: f64,
    pub per_class: Vec<ClassScore>,
}

impl EventF1 {
    pub fn totals(&self) -> (usize, usize, usize) {
        self.per_class.iter().fold((0, 0, 0), |(tp, fp, fn_), c| {
            (
                tp + c.true_positives,
                fp + c.false_positives,
                fn_ + c.false_negatives,
            )
        })
    }
}

/// One-to-one matching of same-class events: references in onset order each
/// take the earliest-onset unmatched detection that satisfies the collars.
/// Returns the matched `(reference, detection)` index pairs.
pub fn greedy_match(references: &[&Event], detections: &[&Event], config: &F1Config) -> Vec<(usize, usize)> {
    let mut ref_order: Vec<usize> = (0..references.len()).collect();
    ref_order.sort_by(|&a, &b| references[a].onset.total_cmp(&references[b].onset));
    let mut det_order: Vec<usize> = (0..detections.len()).collect();
    det_order.sort_by(|&a, &b| detections[a].onset.total_cmp(&detections[b].onset));

    let mut used = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for &r in &ref_order {
        if let Some(&d) = det_order
            .iter()
            .find(|&&d| !used[d] && config.accepts(references[r], detections[d]))
        {
            used[d] = true;
            pairs.push((r, d));
        }
    }
    pairs
}

/// Groups lists by clip id, treating a clip missing on one side as empty.
pub(crate) fn pair_by_clip<'a>(
    references: &'a [EventList],
    detections: &'a [EventList],
) -> BTreeMap<&'a str, (Vec<&'a Event>, Vec<&'a Event>)> {
    let mut clips: BTreeMap<&str, (Vec<&Event>, Vec<&Event>)> = BTreeMap::new();
    for list in references {
        clips
            .entry(list.clip_id())
            .or_default()
            .0
            .extend(list.events());
    }
    for list in detections {
        clips
            .entry(list.clip_id())
            .or_default()
            .1
            .extend(list.events());
    }
    clips
}

pub fn event_f1(
    references: &[EventList],
    detections: &[EventList],
    vocab: &ClassVocabulary,
    config: &F1Config,
) -> Result<EventF1> {
    for list in references.iter().chain(detections) {
        list.check_vocabulary(vocab)?;
    }
    let mut per_class: Vec<ClassScore> = vocab
        .names()
        .iter()
        .map(|name| ClassScore {
            class_name: name.clone(),
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
        })
        .collect();

    for (refs, dets) in pair_by_clip(references, detections).values() {
        for (k, score) in per_class.iter_mut().enumerate() {
            let name = vocab.name(k);
            let r: Vec<&Event> = refs.iter().copied().filter(|e| e.class_name == name).collect();
            let d: Vec<&Event> = dets.iter().copied().filter(|e| e.class_name == name).collect();
            let tp = greedy_match(&r, &d, config).len();
            score.true_positives += tp;
            score.false_positives += d.len() - tp;
            score.false_negatives += r.len() - tp;
        }
    }

    let (tp, fp, fn_) = per_class.iter().fold((0, 0, 0), |(tp, fp, fn_), c| {
        (
            tp + c.true_positives,
            fp + c.false_positives,
            fn_ + c.false_negatives,
        )
    });
    Ok(EventF1 {
        f1: f_score(tp, fp, fn_),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(class: &str, on: f64, off: f64) -> Event {
        Event::new(class, on, off).unwrap()
    }

    fn vocab() -> ClassVocabulary {
        ClassVocabulary::new(["Speech", "Dog"]).unwrap()
    }

    #[test]
    fn identical_detections_score_one() {
        let refs = vec![EventList::new(
            "a",
            vec![ev("Speech", 0.0, 1.0), ev("Dog", 2.0, 3.5), ev("Speech", 4.0, 4.5)],
        )];
        let r = event_f1(&refs, &refs, &vocab(), &F1Config::default()).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.totals(), (3, 0, 0));
    }

    #[test]
    fn empty_detections_score_zero() {
        let refs = vec![EventList::new("a", vec![ev("Speech", 0.0, 1.0)])];
        let r = event_f1(&refs, &[], &vocab(), &F1Config::default()).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.per_class[0].false_negatives, 1);
    }

    #[test]
    fn collar_rules() {
        let cfg = F1Config::default();
        let refs = vec![EventList::new("a", vec![ev("Speech", 0.0, 1.0)])];
        let dets = vec![EventList::new("a", vec![ev("Speech", 0.15, 1.1)])];
        assert_eq!(event_f1(&refs, &dets, &vocab(), &cfg).unwrap().f1, 1.0);

        let late = vec![EventList::new("a", vec![ev("Speech", 0.25, 1.0)])];
        assert_eq!(event_f1(&refs, &late, &vocab(), &cfg).unwrap().f1, 0.0);

        // long reference: offset tolerance grows to 20% of its duration
        let long_ref = ev("Speech", 0.0, 5.0);
        assert!(cfg.accepts(&long_ref, &ev("Speech", 0.1, 5.9)));
        assert!(!cfg.accepts(&long_ref, &ev("Speech", 0.1, 6.1)));
    }

    #[test]
    fn wrong_class_and_clip_do_not_match() {
        let cfg = F1Config::default();
        let refs = vec![EventList::new("a", vec![ev("Speech", 0.0, 1.0)])];
        let other_class = vec![EventList::new("a", vec![ev("Dog", 0.0, 1.0)])];
        let r = event_f1(&refs, &other_class, &vocab(), &cfg).unwrap();
        assert_eq!(r.totals(), (0, 1, 1));
        let other_clip = vec![EventList::new("b", vec![ev("Speech", 0.0, 1.0)])];
        assert_eq!(event_f1(&refs, &other_clip, &vocab(), &cfg).unwrap().totals(), (0, 1, 1));
    }

    #[test]
    fn unknown_class_is_an_error() {
        let refs = vec![EventList::new("a", vec![ev("Cat", 0.0, 1.0)])];
        assert!(matches!(
            event_f1(&refs, &[], &vocab(), &F1Config::default()),
            Err(Error::UnknownClass(_))
        ));
    }

    #[test]
    fn duplicate_detections_count_once() {
        let refs = vec![EventList::new("a", vec![ev("Speech", 0.0, 1.0)])];
        let dets = vec![EventList::new(
            "a",
            vec![ev("Speech", 0.0, 1.0), ev("Speech", 0.05, 1.0)],
        )];
        let r = event_f1(&refs, &dets, &vocab(), &F1Config::default()).unwrap();
        assert_eq!(r.totals(), (1, 1, 0));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}
