//! Polyphonic sound detection score.
//!
//! Each operating point (a set of detections produced at one decision
//! threshold) is scored with intersection criteria rather than collars:
//!
//! * a detection is accepted when at least `dtc` of its duration overlaps
//!   reference events of its own class; otherwise it is a false positive;
//! * a false positive is additionally a cross-trigger on class `c'` when at
//!   least `cttc` of its duration overlaps references of `c'`;
//! * a reference is a true positive when accepted detections of its class
//!   cover at least `gtc` of its duration.
//!
//! Per class this yields a true-positive ratio and an effective false positive
//! rate `FPR + alpha_ct * mean(CTR)`, both per hour. The per-class ROC curves
//! are summarized as `mean - alpha_st * std` across classes and the score is
//! the area under that curve over `[0, e_max]`, divided by `e_max`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{ClassVocabulary, Event, EventList};

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdsConfig {
    pub dtc: f64,
    pub gtc: f64,
    pub cttc: f64,
    pub alpha_ct: f64,
    pub alpha_st: f64,
    /// Upper limit of the effective false positive rate axis, events per hour.
    pub e_max: f64,
    pub thresholds: Vec<f64>,
}

/// `count` evenly spaced thresholds from 0.01 to 0.99.
pub fn default_thresholds(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..count)
            .map(|i| 0.01 + 0.98 * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl PsdsConfig {
    /// Scenario 1: tight localization, no cross-trigger penalty.
    pub fn scenario1() -> Self {
        Self {
            dtc: 0.7,
            gtc: 0.7,
            cttc: 0.3,
            alpha_ct: 0.0,
            alpha_st: 1.0,
            e_max: 100.0,
            thresholds: default_thresholds(50),
        }
    }

    /// Scenario 2: loose localization, cross-triggers penalized.
    pub fn scenario2() -> Self {
        Self {
            dtc: 0.1,
            gtc: 0.1,
            cttc: 0.3,
            alpha_ct: 0.5,
            alpha_st: 1.0,
            e_max: 100.0,
            thresholds: default_thresholds(50),
        }
    }

    /// Checks invariants; `prefix` names the configuration in messages.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (key, v) in [("dtc", self.dtc), ("gtc", self.gtc), ("cttc", self.cttc)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::validation(
                    format!("{prefix}.{key}"),
                    format!("must lie in (0, 1], got {v}"),
                ));
            }
        }
        for (key, v) in [("alpha_ct", self.alpha_ct), ("alpha_st", self.alpha_st)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(
                    format!("{prefix}.{key}"),
                    format!("must be >= 0, got {v}"),
                ));
            }
        }
        if !(self.e_max.is_finite() && self.e_max > 0.0) {
            return Err(Error::validation(
                format!("{prefix}.e_max"),
                format!("must be positive, got {}", self.e_max),
            ));
        }
        if self.thresholds.is_empty() {
            return Err(Error::validation(
                format!("{prefix}.thresholds"),
                "at least one operating point is required",
            ));
        }
        for (i, &t) in self.thresholds.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::validation(
                    format!("{prefix}.thresholds"),
                    format!("threshold {t} is outside (0, 1)"),
                ));
            }
            if i > 0 && t <= self.thresholds[i - 1] {
                return Err(Error::validation(
                    format!("{prefix}.thresholds"),
                    "thresholds must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

/// Per-class rates at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// `None` for classes without reference events.
    pub tpr: Vec<Option<f64>>,
    pub efpr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdsResult {
    pub score: f64,
    pub operating_points: Vec<OperatingPoint>,
}

/// Sorted, merged, non-overlapping intervals.
fn merged(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (on, off) in spans {
        match out.last_mut() {
            Some(last) if on <= last.1 => last.1 = last.1.max(off),
            _ => out.push((on, off)),
        }
    }
    out
}

fn overlap_with(union: &[(f64, f64)], on: f64, off: f64) -> f64 {
    union
        .iter()
        .map(|&(a, b)| (off.min(b) - on.max(a)).max(0.0))
        .sum()
}

/// References of one clip indexed by class.
struct ClipReferences<'a> {
    events: Vec<Vec<&'a Event>>,
    unions: Vec<Vec<(f64, f64)>>,
}

fn index_references<'a>(
    references: &'a [EventList],
    vocab: &ClassVocabulary,
) -> Result<BTreeMap<&'a str, ClipReferences<'a>>> {
    let k = vocab.len();
    let mut by_clip: BTreeMap<&str, Vec<Vec<&Event>>> = BTreeMap::new();
    for list in references {
        let entry = by_clip
            .entry(list.clip_id())
            .or_insert_with(|| vec![Vec::new(); k]);
        for e in list.events() {
            entry[vocab.index_of(&e.class_name)?].push(e);
        }
    }
    Ok(by_clip
        .into_iter()
        .map(|(clip, events)| {
            let unions = events
                .iter()
                .map(|evs| merged(evs.iter().map(|e| (e.onset, e.offset)).collect()))
                .collect();
            (clip, ClipReferences { events, unions })
        })
        .collect())
}

#[derive(Debug, Default, Clone)]
struct Counts {
    tp: Vec<usize>,
    fp: Vec<usize>,
    /// `ct[c][c']`: false positives of class `c` triggered by references of `c'`.
    ct: Vec<Vec<usize>>,
}

fn count_operating_point(
    refs: &BTreeMap<&str, ClipReferences<'_>>,
    detections: &[EventList],
    vocab: &ClassVocabulary,
    config: &PsdsConfig,
) -> Result<Counts> {
    let k = vocab.len();
    let mut counts = Counts {
        tp: vec![0; k],
        fp: vec![0; k],
        ct: vec![vec![0; k]; k],
    };
    let empty_unions = vec![Vec::new(); k];

    let mut dets_by_clip: BTreeMap<&str, Vec<Vec<&Event>>> = BTreeMap::new();
    for list in detections {
        let entry = dets_by_clip
            .entry(list.clip_id())
            .or_insert_with(|| vec![Vec::new(); k]);
        for e in list.events() {
            entry[vocab.index_of(&e.class_name)?].push(e);
        }
    }

    for (clip, dets) in &dets_by_clip {
        let unions = refs.get(clip).map_or(&empty_unions, |r| &r.unions);
        for (class, class_dets) in dets.iter().enumerate() {
            for d in class_dets {
                let dur = d.duration();
                let own = overlap_with(&unions[class], d.onset, d.offset) / dur;
                if own >= config.dtc {
                    continue;
                }
                counts.fp[class] += 1;
                for (other, union) in unions.iter().enumerate() {
                    if other != class && overlap_with(union, d.onset, d.offset) / dur >= config.cttc {
                        counts.ct[class][other] += 1;
                    }
                }
            }
        }
    }

    for (clip, clip_refs) in refs {
        let dets = dets_by_clip.get(clip);
        for class in 0..k {
            if clip_refs.events[class].is_empty() {
                continue;
            }
            let accepted: Vec<(f64, f64)> = dets
                .map(|d| d[class].as_slice())
                .unwrap_or(&[])
                .iter()
                .filter(|d| {
                    overlap_with(&clip_refs.unions[class], d.onset, d.offset) / d.duration()
                        >= config.dtc
                })
                .map(|d| (d.onset, d.offset))
                .collect();
            let covered = merged(accepted);
            for r in &clip_refs.events[class] {
                if overlap_with(&covered, r.onset, r.offset) / r.duration() >= config.gtc {
                    counts.tp[class] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Curve value for one class: best TPR reachable at effective FPR `<= e`.
fn class_tpr_at(points: &[(f64, f64)], e: f64) -> f64 {
    points
        .iter()
        .filter(|&&(efpr, _)| efpr <= e)
        .map(|&(_, tpr)| tpr)
        .fold(0.0, f64::max)
}

/// Area under `mean - alpha_st * std` of the per-class curves on
/// `[0, e_max]`, normalized by `e_max`. Curve values are clamped at zero.
pub fn area_under_psd_roc(operating_points: &[OperatingPoint], alpha_st: f64, e_max: f64) -> f64 {
    let Some(first) = operating_points.first() else {
        return 0.0;
    };
    let classes: Vec<usize> = (0..first.tpr.len())
        .filter(|&c| first.tpr[c].is_some())
        .collect();
    if classes.is_empty() {
        return 0.0;
    }
    let curves: Vec<Vec<(f64, f64)>> = classes
        .iter()
        .map(|&c| {
            operating_points
                .iter()
                .map(|op| (op.efpr[c], op.tpr[c].unwrap_or(0.0)))
                .collect()
        })
        .collect();

    let mut axis: Vec<f64> = std::iter::once(0.0)
        .chain(curves.iter().flatten().map(|&(e, _)| e))
        .filter(|&e| e < e_max)
        .collect();
    axis.sort_by(f64::total_cmp);
    axis.dedup();

    let n = curves.len() as f64;
    let mut area = 0.0;
    for (i, &x) in axis.iter().enumerate() {
        let next = axis.get(i + 1).copied().unwrap_or(e_max);
        let values: Vec<f64> = curves.iter().map(|c| class_tpr_at(c, x)).collect();
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let y = (mean - alpha_st * var.sqrt()).max(0.0);
        area += y * (next - x);
    }
    (area / e_max).clamp(0.0, 1.0)
}

/// Scores a threshold sweep; `detections[i]` holds the detections produced at
/// `config.thresholds[i]`, and `dataset_duration` is the total audio length in
/// seconds.
pub fn psds(
    references: &[EventList],
    detections: &[Vec<EventList>],
    vocab: &ClassVocabulary,
    config: &PsdsConfig,
    dataset_duration: f64,
) -> Result<PsdsResult> {
    config.validate("psds")?;
    if detections.len() != config.thresholds.len() {
        return Err(Error::Dimension(format!(
            "{} detection sets for {} thresholds",
            detections.len(),
            config.thresholds.len()
        )));
    }
    if !(dataset_duration.is_finite() && dataset_duration > 0.0) {
        return Err(Error::validation(
            "dataset_duration",
            format!("must be positive, got {dataset_duration}"),
        ));
    }

    let refs = index_references(references, vocab)?;
    let k = vocab.len();
    let mut n_refs = vec![0usize; k];
    let mut ref_hours = vec![0.0f64; k];
    for clip in refs.values() {
        for class in 0..k {
            n_refs[class] += clip.events[class].len();
            ref_hours[class] += clip.unions[class].iter().map(|(a, b)| b - a).sum::<f64>()
                / SECONDS_PER_HOUR;
        }
    }
    let hours = dataset_duration / SECONDS_PER_HOUR;

    let counts: Vec<Counts> = detections
        .par_iter()
        .map(|dets| count_operating_point(&refs, dets, vocab, config))
        .collect::<Result<_>>()?;

    let operating_points = counts
        .iter()
        .zip(&config.thresholds)
        .map(|(c, &threshold)| {
            let tpr = (0..k)
                .map(|class| (n_refs[class] > 0).then(|| c.tp[class] as f64 / n_refs[class] as f64))
                .collect();
            let efpr = (0..k)
                .map(|class| {
                    let fpr = c.fp[class] as f64 / hours;
                    let ctr: Vec<f64> = (0..k)
                        .filter(|&other| other != class && ref_hours[other] > 0.0)
                        .map(|other| c.ct[class][other] as f64 / ref_hours[other])
                        .collect();
                    let mean_ctr = if ctr.is_empty() {
                        0.0
                    } else {
                        ctr.iter().sum::<f64>() / ctr.len() as f64
                    };
                    fpr + config.alpha_ct * mean_ctr
                })
                .collect();
            OperatingPoint {
                threshold,
                tpr,
                efpr,
            }
        })
        .collect::<Vec<_>>();

    Ok(PsdsResult {
        score: area_under_psd_roc(&operating_points, config.alpha_st, config.e_max),
        operating_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(class: &str, on: f64, off: f64) -> Event {
        Event::new(class, on, off).unwrap()
    }

    fn single(thresholds: usize, dtc: f64, gtc: f64) -> PsdsConfig {
        PsdsConfig {
            dtc,
            gtc,
            thresholds: default_thresholds(thresholds),
            ..PsdsConfig::scenario1()
        }
    }

    #[test]
    fn threshold_grid() {
        let t = default_thresholds(50);
        assert_eq!(t.len(), 50);
        assert!((t[0] - 0.01).abs() < 1e-12 && (t[49] - 0.99).abs() < 1e-12);
        assert!(PsdsConfig::scenario1().validate("psds1").is_ok());
        assert!(PsdsConfig::scenario2().validate("psds2").is_ok());
        let mut bad = PsdsConfig::scenario1();
        bad.thresholds.clear();
        assert!(bad.validate("psds1").is_err());
        bad.thresholds = vec![0.5, 0.4];
        assert!(bad.validate("psds1").is_err());
    }

    #[test]
    fn perfect_and_empty_detections() {
        let vocab = ClassVocabulary::new(["A", "B"]).unwrap();
        let refs = vec![
            EventList::new("x", vec![ev("A", 0.0, 2.0), ev("B", 1.0, 3.0)]),
            EventList::new("y", vec![ev("A", 5.0, 6.0)]),
        ];
        for cfg in [PsdsConfig::scenario1(), PsdsConfig::scenario2()] {
            let perfect = vec![refs.clone(); cfg.thresholds.len()];
            assert_eq!(psds(&refs, &perfect, &vocab, &cfg, 20.0).unwrap().score, 1.0);
            let empty = vec![Vec::new(); cfg.thresholds.len()];
            assert_eq!(psds(&refs, &empty, &vocab, &cfg, 20.0).unwrap().score, 0.0);
        }
    }

    #[test]
    fn intersection_criteria() {
        let vocab = ClassVocabulary::new(["A"]).unwrap();
        let refs = vec![EventList::new("x", vec![ev("A", 0.0, 10.0)])];
        // 80% of the detection lies on the reference, and it covers 80% of it
        let dets = vec![vec![EventList::new("x", vec![ev("A", 2.0, 12.0)])]; 3];
        let loose = psds(&refs, &dets, &vocab, &single(3, 0.7, 0.7), 20.0).unwrap();
        assert_eq!(loose.score, 1.0);
        let strict = psds(&refs, &dets, &vocab, &single(3, 0.9, 0.9), 20.0).unwrap();
        assert_eq!(strict.score, 0.0);
        let op = &strict.operating_points[0];
        assert_eq!(op.tpr[0], Some(0.0));
        assert!((op.efpr[0] - 3600.0 / 20.0).abs() < 1e-9);
    }

    #[test]
    fn fragmented_detections_cover_jointly() {
        let vocab = ClassVocabulary::new(["A"]).unwrap();
        let refs = vec![EventList::new("x", vec![ev("A", 0.0, 10.0)])];
        let dets = vec![vec![EventList::new(
            "x",
            vec![ev("A", 0.0, 4.0), ev("A", 4.5, 9.0)],
        )]];
        let cfg = single(1, 0.7, 0.7);
        assert_eq!(psds(&refs, &dets, &vocab, &cfg, 3600.0).unwrap().score, 1.0);
    }

    #[test]
    fn cross_triggers_raise_effective_fpr() {
        let vocab = ClassVocabulary::new(["A", "B"]).unwrap();
        let refs = vec![EventList::new("x", vec![ev("A", 0.0, 1.0), ev("B", 10.0, 20.0)])];
        // detection of A lying on B's reference: FP for A and a cross-trigger on B
        let dets = vec![vec![EventList::new(
            "x",
            vec![ev("A", 0.0, 1.0), ev("B", 10.0, 20.0), ev("A", 12.0, 14.0)],
        )]];
        let mut cfg = PsdsConfig::scenario2();
        cfg.thresholds = vec![0.5];
        let r = psds(&refs, &dets, &vocab, &cfg, 3600.0).unwrap();
        let op = &r.operating_points[0];
        // 1 FP per hour plus 0.5 * (1 CT / (10 s in hours))
        let expected = 1.0 + 0.5 * (1.0 / (10.0 / 3600.0));
        assert!((op.efpr[0] - expected).abs() < 1e-9, "{}", op.efpr[0]);
        assert_eq!(op.efpr[1], 0.0);
    }

    #[test]
    fn area_of_hand_built_curve() {
        // one class reaching TPR 0.5 at efpr 0, 1.0 at efpr 50, e_max 100
        let ops = vec![
            OperatingPoint {
                threshold: 0.9,
                tpr: vec![Some(0.5)],
                efpr: vec![0.0],
            },
            OperatingPoint {
                threshold: 0.1,
                tpr: vec![Some(1.0)],
                efpr: vec![50.0],
            },
        ];
        assert!((area_under_psd_roc(&ops, 1.0, 100.0) - 0.75).abs() < 1e-12);
        assert!((area_under_psd_roc(&ops, 1.0, 25.0) - 0.5).abs() < 1e-12);
    }
}
