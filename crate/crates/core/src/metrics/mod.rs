//! Event-based F-score and PSDS, plus the end-to-end evaluation driver.

mod f1;
mod psds;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

pub(crate) use f1::pair_by_clip;
pub use f1::{event_f1, f_score, greedy_match, ClassScore, EventF1, F1Config};
pub use psds::{
    area_under_psd_roc, default_thresholds, psds, OperatingPoint, PsdsConfig, PsdsResult,
};

use crate::error::{Error, Result};
use crate::postprocess::{postprocess_pipeline, PostprocessConfig};
use crate::types::{ClassVocabulary, EventList, ScoreTensor};

/// Scores of one clip, keyed by the clip id used in the reference file.
#[derive(Debug, Clone)]
pub struct ClipScores {
    pub clip_id: String,
    pub scores: ScoreTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub postprocess: PostprocessConfig,
    pub f1: F1Config,
    pub psds1: PsdsConfig,
    pub psds2: PsdsConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub event_f1: f64,
    pub psds1: f64,
    pub psds2: f64,
    pub per_class: Vec<ClassScore>,
}

/// Decodes every clip at one fixed post-processing configuration.
pub fn decode_all(clips: &[ClipScores], config: &PostprocessConfig) -> Result<Vec<EventList>> {
    clips
        .par_iter()
        .map(|c| postprocess_pipeline(&c.scores, config, &c.clip_id))
        .collect()
}

/// Runs thresholding, median filtering and decoding for each threshold.
pub fn decode_sweep(
    clips: &[ClipScores],
    base: &PostprocessConfig,
    thresholds: &[f64],
) -> Result<Vec<Vec<EventList>>> {
    thresholds
        .par_iter()
        .map(|&t| decode_all(clips, &base.with_threshold(t)?))
        .collect()
}

/// Clip ids present in `references` but absent from `clips`.
pub fn missing_clips(references: &[EventList], clips: &[ClipScores]) -> Vec<String> {
    let have: BTreeSet<&str> = clips.iter().map(|c| c.clip_id.as_str()).collect();
    references
        .iter()
        .filter(|r| !r.is_empty() && !have.contains(r.clip_id()))
        .map(|r| r.clip_id().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Event-F1 at the configured thresholds and both PSDS scenarios from a
/// threshold sweep. Clips without reference rows count as event-free.
pub fn evaluate(
    references: &[EventList],
    clips: &[ClipScores],
    vocab: &ClassVocabulary,
    config: &EvaluationConfig,
) -> Result<MetricReport> {
    if clips.is_empty() {
        return Err(Error::validation("scores", "no score tensors to evaluate"));
    }
    let missing = missing_clips(references, clips);
    if !missing.is_empty() {
        return Err(Error::validation(
            "clip_id",
            format!("no scores for reference clips: {}", missing.join(", ")),
        ));
    }
    for c in clips {
        if c.scores.vocab().names() != vocab.names() {
            return Err(Error::Dimension(format!(
                "scores of `{}` have classes [{}], expected [{}]",
                c.clip_id,
                c.scores.vocab().names().join(","),
                vocab.names().join(",")
            )));
        }
    }
    config.psds1.validate("psds1")?;
    config.psds2.validate("psds2")?;

    let detections = decode_all(clips, &config.postprocess)?;
    let f1 = event_f1(references, &detections, vocab, &config.f1)?;

    let duration: f64 = clips.iter().map(|c| c.scores.grid().duration()).sum();
    let mut needed: Vec<f64> = config
        .psds1
        .thresholds
        .iter()
        .chain(&config.psds2.thresholds)
        .copied()
        .collect();
    needed.sort_by(f64::total_cmp);
    needed.dedup();
    let sweep = decode_sweep(clips, &config.postprocess, &needed)?;
    let by_threshold: BTreeMap<u64, &Vec<EventList>> = needed
        .iter()
        .map(|t| t.to_bits())
        .zip(&sweep)
        .collect();
    let select = |cfg: &PsdsConfig| -> Vec<Vec<EventList>> {
        cfg.thresholds
            .iter()
            .map(|t| by_threshold[&t.to_bits()].clone())
            .collect()
    };

    let psds1 = psds(references, &select(&config.psds1), vocab, &config.psds1, duration)?;
    let psds2 = psds(references, &select(&config.psds2), vocab, &config.psds2, duration)?;

    Ok(MetricReport {
        event_f1: f1.f1,
        psds1: psds1.score,
        psds2: psds2.score,
        per_class: f1.per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::events_to_labels;
    use crate::types::{Event, FrameGrid};

    fn config(k: usize) -> EvaluationConfig {
        EvaluationConfig {
            postprocess: PostprocessConfig::uniform(k, 0.5, 7).unwrap(),
            f1: F1Config::default(),
            psds1: PsdsConfig::scenario1(),
            psds2: PsdsConfig::scenario2(),
        }
    }

    fn corpus() -> (ClassVocabulary, Vec<EventList>, Vec<ClipScores>) {
        let vocab = ClassVocabulary::new(["A", "B"]).unwrap();
        let grid = FrameGrid::new(100, 0.064).unwrap();
        let refs = vec![
            EventList::new(
                "x.wav",
                vec![
                    Event::new("A", 0.64, 1.92).unwrap(),
                    Event::new("B", 1.28, 3.2).unwrap(),
                ],
            ),
            EventList::new("y.wav", vec![Event::new("A", 3.2, 5.12).unwrap()]),
        ];
        let clips = refs
            .iter()
            .map(|r| ClipScores {
                clip_id: r.clip_id().to_string(),
                scores: ScoreTensor::from_labels(&events_to_labels(r, grid, vocab.clone()).unwrap()),
            })
            .collect();
        (vocab, refs, clips)
    }

    #[test]
    fn rasterized_references_score_perfectly() {
        let (vocab, refs, clips) = corpus();
        let report = evaluate(&refs, &clips, &vocab, &config(2)).unwrap();
        assert_eq!((report.event_f1, report.psds1, report.psds2), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_scores_score_zero() {
        let (vocab, refs, clips) = corpus();
        let zeros: Vec<ClipScores> = clips
            .into_iter()
            .map(|c| ClipScores {
                scores: ScoreTensor::zeros(c.scores.grid(), c.scores.shared_vocab()),
                ..c
            })
            .collect();
        let report = evaluate(&refs, &zeros, &vocab, &config(2)).unwrap();
        assert_eq!((report.event_f1, report.psds1, report.psds2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_scores_are_reported() {
        let (vocab, refs, mut clips) = corpus();
        clips.pop();
        let err = evaluate(&refs, &clips, &vocab, &config(2)).unwrap_err();
        assert!(err.to_string().contains("y.wav"), "{err}");
        assert!(evaluate(&refs, &[], &vocab, &config(2)).is_err());
    }
}
