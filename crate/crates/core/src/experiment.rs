//! Paired-seed loss comparisons and window-parameter sweeps on synthetic data.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, ClipScores, EvaluationConfig, F1Config, PsdsConfig};
use crate::postprocess::PostprocessConfig;
use crate::synth::{generate_corpus, jitter_annotations, Corpus, SynthConfig};
use crate::trainer::{predict_corpus, train, LinearFrameModel, TrainConfig};
use crate::types::{ClassVocabulary, Event, EventList};
use crate::weighting::WindowParams;

/// Offset added to the synth seed for the held-out test corpus.
const TEST_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub test_clips: usize,
    pub train: TrainConfig,
    pub context: usize,
    pub seeds: usize,
    pub eval: EvaluationConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults: a 3-frame boundary fade, a mild window
    /// (`alpha = 1`, `sigma = 7`) and 100 clips per corpus.
    pub fn toy(num_classes: usize) -> Result<Self> {
        let synth = SynthConfig {
            num_classes,
            ..SynthConfig::default()
        };
        Ok(Self {
            synth,
            test_clips: 100,
            train: TrainConfig {
                window: WindowParams::new(1.0, 7)?,
                ..TrainConfig::default()
            },
            context: 2,
            seeds: 5,
            eval: EvaluationConfig {
                postprocess: PostprocessConfig::uniform(num_classes, 0.5, 5)?,
                f1: F1Config::default(),
                psds1: PsdsConfig::scenario1(),
                psds2: PsdsConfig::scenario2(),
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.seeds == 0 {
            return Err(Error::validation("experiment.seeds", "must be positive"));
        }
        if self.test_clips == 0 {
            return Err(Error::validation("experiment.test_clips", "must be positive"));
        }
        if self.eval.postprocess.num_classes() != self.synth.num_classes {
            return Err(Error::validation(
                "threshold",
                format!(
                    "post-processing configured for {} classes, corpus has {}",
                    self.eval.postprocess.num_classes(),
                    self.synth.num_classes
                ),
            ));
        }
        Ok(())
    }
}

/// Training corpora (one per seed, with jittered annotations when
/// configured) and a clean held-out test corpus sharing the class embeddings.
pub fn build_corpora(config: &ExperimentConfig, vocab: &ClassVocabulary) -> Result<(Vec<Corpus>, Corpus)> {
    config.validate()?;
    let base = &config.synth;
    let train = (0..config.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SynthConfig {
                rng_seed: base.rng_seed.wrapping_add(i),
                ..base.clone()
            };
            let corpus = generate_corpus(&cfg, vocab.clone())?;
            if cfg.annotation_jitter_std > 0.0 {
                let jittered = jitter_annotations(
                    &corpus.events,
                    cfg.annotation_jitter_std,
                    cfg.rng_seed,
                    Some(corpus.grid.duration()),
                )?;
                corpus.with_annotations(jittered)
            } else {
                Ok(corpus)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let test_cfg = SynthConfig {
        num_clips: config.test_clips,
        rng_seed: base.rng_seed.wrapping_add(TEST_SEED_OFFSET),
        annotation_jitter_std: 0.0,
        ..base.clone()
    };
    let test = generate_corpus(&test_cfg, vocab.clone())?;
    Ok((train, test))
}

/// Metrics of one trained model on the test corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub event_f1: f64,
    pub psds1: f64,
    pub psds2: f64,
    pub onset_mae: f64,
    pub offset_mae: f64,
    pub matched_events: usize,
}

impl RunMetrics {
    pub fn boundary_error(&self) -> f64 {
        self.onset_mae + self.offset_mae
    }
}

/// Onset and offset mean absolute errors over a one-to-one matching of
/// same-class reference and detected events in the same clip.
///
/// Overlapping pairs are matched greedily by decreasing intersection;
/// unmatched events on either side are left out. The MAEs are NaN when
/// nothing matches.
pub fn boundary_errors(references: &[EventList], detections: &[EventList]) -> (f64, f64, usize) {
    let mut onset = 0.0;
    let mut offset = 0.0;
    let mut matched = 0usize;
    for (refs, dets) in crate::metrics::pair_by_clip(references, detections).values() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, r) in refs.iter().enumerate() {
            for (j, d) in dets.iter().enumerate() {
                if r.class_name == d.class_name {
                    let overlap = r.intersection(d);
                    if overlap > 0.0 {
                        pairs.push((overlap, i, j));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ref_used = vec![false; refs.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, i, j) in pairs {
            if ref_used[i] || det_used[j] {
                continue;
            }
            ref_used[i] = true;
            det_used[j] = true;
            let (r, d): (&Event, &Event) = (refs[i], dets[j]);
            onset += (r.onset - d.onset).abs();
            offset += (r.offset - d.offset).abs();
            matched += 1;
        }
    }
    if matched == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    (onset / matched as f64, offset / matched as f64, matched)
}

/// Trains from zero weights on `train` and scores the model on `test`.
pub fn run_once(
    train_corpus: &Corpus,
    test: &Corpus,
    config: &ExperimentConfig,
    window: WindowParams,
    seed: u64,
) -> Result<RunMetrics> {
    let model = LinearFrameModel::zeros(
        config.context,
        config.synth.feature_dim,
        config.synth.num_classes,
    )?;
    let train_cfg = TrainConfig {
        window,
        seed: config.train.seed.wrapping_add(seed),
        ..config.train.clone()
    };
    let trained = train(&model, train_corpus, &train_cfg)?.model;
    evaluate_model(&trained, test, &config.eval, seed)
}

pub fn evaluate_model(
    model: &LinearFrameModel,
    test: &Corpus,
    eval: &EvaluationConfig,
    seed: u64,
) -> Result<RunMetrics> {
    let clips: Vec<ClipScores> = predict_corpus(model, test)?
        .into_iter()
        .zip(&test.events)
        .map(|(scores, events)| ClipScores {
            clip_id: events.clip_id().to_string(),
            scores,
        })
        .collect();
    let report = evaluate(&test.events, &clips, &test.vocab, eval)?;
    let detections = crate::metrics::decode_all(&clips, &eval.postprocess)?;
    let (onset_mae, offset_mae, matched_events) = boundary_errors(&test.events, &detections);
    Ok(RunMetrics {
        seed,
        event_f1: report.event_f1,
        psds1: report.psds1,
        psds2: report.psds2,
        onset_mae,
        offset_mae,
        matched_events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub name: String,
    pub window: WindowParams,
    pub runs: Vec<RunMetrics>,
}

impl ArmReport {
    fn mean(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        self.runs.iter().map(f).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_event_f1(&self) -> f64 {
        self.mean(|r| r.event_f1)
    }

    pub fn mean_psds1(&self) -> f64 {
        self.mean(|r| r.psds1)
    }

    pub fn mean_psds2(&self) -> f64 {
        self.mean(|r| r.psds2)
    }

    pub fn mean_onset_mae(&self) -> f64 {
        self.mean(|r| r.onset_mae)
    }

    pub fn mean_offset_mae(&self) -> f64 {
        self.mean(|r| r.offset_mae)
    }

    pub fn mean_boundary_error(&self) -> f64 {
        self.mean(RunMetrics::boundary_error)
    }

    pub fn total_matched(&self) -> usize {
        self.runs.iter().map(|r| r.matched_events).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub bce: ArmReport,
    pub owbce: ArmReport,
}

/// Trains a plain-BCE and a weighted arm on each training corpus with the
/// same seed and scores both on the shared test corpus.
pub fn compare_losses(
    train_corpora: &[Corpus],
    test: &Corpus,
    config: &ExperimentConfig,
) -> Result<ComparisonReport> {
    compare_windows(train_corpora, test, config, WindowParams::disabled(), config.train.window)
}

pub fn compare_windows(
    train_corpora: &[Corpus],
    test: &Corpus,
    config: &ExperimentConfig,
    baseline: WindowParams,
    weighted: WindowParams,
) -> Result<ComparisonReport> {
    if train_corpora.is_empty() {
        return Err(Error::validation("experiment.seeds", "no training corpora"));
    }
    let jobs: Vec<(usize, WindowParams)> = [baseline, weighted]
        .iter()
        .flat_map(|&w| (0..train_corpora.len()).map(move |i| (i, w)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, w)| run_once(&train_corpora[i], test, config, w, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let (bce, owbce) = runs.split_at(train_corpora.len());
    Ok(ComparisonReport {
        bce: ArmReport {
            name: "bce".into(),
            window: baseline,
            runs: bce.to_vec(),
        },
        owbce: ArmReport {
            name: "owbce".into(),
            window: weighted,
            runs: owbce.to_vec(),
        },
    })
}

const METRIC_HEADER: &str = "event_f1,psds1,psds2,onset_mae,offset_mae,matched_events";

fn metric_fields(r: &RunMetrics) -> String {
    format!(
        "{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        r.event_f1, r.psds1, r.psds2, r.onset_mae, r.offset_mae, r.matched_events
    )
}

pub fn format_comparison(report: &ComparisonReport) -> String {
    let mut out = format!("arm,alpha,sigma,seed,{METRIC_HEADER}\n");
    for arm in [&report.bce, &report.owbce] {
        let prefix = format!("{},{},{}", arm.name, arm.window.alpha(), arm.window.sigma());
        for r in &arm.runs {
            writeln!(out, "{prefix},{},{}", r.seed, metric_fields(r)).expect("String write");
        }
        writeln!(
            out,
            "{prefix},mean,{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            arm.mean_event_f1(),
            arm.mean_psds1(),
            arm.mean_psds2(),
            arm.mean_onset_mae(),
            arm.mean_offset_mae(),
            arm.total_matched()
        )
        .expect("String write");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepProtocol {
    /// Sweep alpha at the fixed sigma, then sigma at the best alpha.
    TwoStep,
    /// Every (alpha, sigma) pair.
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub step: &'static str,
    pub window: WindowParams,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub sigmas: Vec<usize>,
    pub protocol: SweepProtocol,
    /// Sigma held fixed during the alpha step of the two-step protocol.
    pub fixed_sigma: usize,
    /// Alpha held fixed during the sigma step; `None` picks the alpha with
    /// the best mean event-F1 from the first step.
    pub fixed_alpha: Option<f64>,
}

fn windows_for(alphas: &[f64], sigmas: &[usize]) -> Result<Vec<WindowParams>> {
    alphas
        .iter()
        .flat_map(|&a| sigmas.iter().map(move |&s| WindowParams::new(a, s)))
        .collect()
}

fn run_windows(
    train_corpora: &[Corpus],
    test: &Corpus,
    config: &ExperimentConfig,
    windows: &[WindowParams],
    step: &'static str,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(WindowParams, usize)> = windows
        .iter()
        .flat_map(|&w| (0..train_corpora.len()).map(move |i| (w, i)))
        .collect();
    jobs.par_iter()
        .map(|&(window, i)| {
            Ok(SweepRow {
                step,
                window,
                metrics: run_once(&train_corpora[i], test, config, window, i as u64)?,
            })
        })
        .collect()
}

pub fn sweep(
    train_corpora: &[Corpus],
    test: &Corpus,
    config: &ExperimentConfig,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    if spec.alphas.is_empty() {
        return Err(Error::validation("alphas", "at least one value required"));
    }
    if spec.sigmas.is_empty() {
        return Err(Error::validation("sigmas", "at least one value required"));
    }
    match spec.protocol {
        SweepProtocol::Grid => {
            let windows = windows_for(&spec.alphas, &spec.sigmas)?;
            run_windows(train_corpora, test, config, &windows, "grid")
        }
        SweepProtocol::TwoStep => {
            let first = windows_for(&spec.alphas, &[spec.fixed_sigma])?;
            let mut rows = run_windows(train_corpora, test, config, &first, "alpha")?;
            let best_alpha = spec.fixed_alpha.unwrap_or_else(|| {
                let mut best = (spec.alphas[0], f64::NEG_INFINITY);
                for &a in &spec.alphas {
                    let scores: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.window.alpha() == a)
                        .map(|r| r.metrics.event_f1)
                        .collect();
                    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                    if mean > best.1 {
                        best = (a, mean);
                    }
                }
                best.0
            });
            let second = windows_for(&[best_alpha], &spec.sigmas)?;
            rows.extend(run_windows(train_corpora, test, config, &second, "sigma")?);
            Ok(rows)
        }
    }
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("step,alpha,sigma,seed,{METRIC_HEADER}\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.step,
            row.window.alpha(),
            row.window.sigma(),
            row.metrics.seed,
            metric_fields(&row.metrics)
        )
        .expect("String write");
    }
    out
}
