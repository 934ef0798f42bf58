//! Flat `key = value` pipeline configuration.
//!
//! Grammar: one assignment per line; `#` starts a comment that runs to the end
//! of the line; blank lines are ignored; keys are case-sensitive and later
//! assignments override earlier ones. Lists are comma-separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::loss::CombinerWeights;
use crate::metrics::{default_thresholds, EvaluationConfig, F1Config, PsdsConfig};
use crate::postprocess::PostprocessConfig;
use crate::synth::SynthConfig;
use crate::trainer::TrainConfig;
use crate::types::ClassVocabulary;
use crate::weighting::WindowParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub frame_hop: f64,
    pub classes: Option<Vec<String>>,
    pub alpha: f64,
    pub sigma: usize,
    pub threshold: f64,
    pub class_thresholds: BTreeMap<String, f64>,
    pub medfilt_frames: usize,
    pub class_medfilt_frames: BTreeMap<String, usize>,
    pub f1: F1Config,
    pub psds1: PsdsConfig,
    pub psds2: PsdsConfig,
    pub train: TrainConfig,
    pub context: usize,
    pub synth: SynthConfig,
    pub experiment_seeds: usize,
    pub test_clips: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let window = WindowParams::default();
        Self {
            frame_hop: 0.064,
            classes: None,
            alpha: window.alpha(),
            sigma: window.sigma(),
            threshold: 0.5,
            class_thresholds: BTreeMap::new(),
            medfilt_frames: 7,
            class_medfilt_frames: BTreeMap::new(),
            f1: F1Config::default(),
            psds1: PsdsConfig::scenario1(),
            psds2: PsdsConfig::scenario2(),
            train: TrainConfig::default(),
            context: 2,
            synth: SynthConfig::default(),
            experiment_seeds: 5,
            test_clips: 100,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::validation(key, format!("cannot parse `{raw}`: {e}")))
}

/// Every key accepted by [`PipelineConfig::set`], excluding the per-class
/// `threshold.<class>` and `medfilt_frames.<class>` forms.
pub const KEYS: &[&str] = &[
    "frame_hop",
    "classes",
    "alpha",
    "sigma",
    "threshold",
    "threshold.default",
    "medfilt_frames",
    "medfilt_frames.default",
    "f1.onset_collar",
    "f1.offset_collar",
    "f1.offset_duration_ratio",
    "psds1.dtc",
    "psds1.gtc",
    "psds1.cttc",
    "psds1.alpha_ct",
    "psds1.alpha_st",
    "psds1.e_max",
    "psds1.num_thresholds",
    "psds2.dtc",
    "psds2.gtc",
    "psds2.cttc",
    "psds2.alpha_ct",
    "psds2.alpha_st",
    "psds2.e_max",
    "psds2.num_thresholds",
    "train.epochs",
    "train.learning_rate",
    "train.batch_clips",
    "train.w_weak",
    "train.w_cons",
    "train.seed",
    "train.context",
    "synth.num_clips",
    "synth.clip_frames",
    "synth.num_classes",
    "synth.event_rate",
    "synth.min_duration",
    "synth.max_duration",
    "synth.score_noise_std",
    "synth.boundary_blur_frames",
    "synth.annotation_jitter_std",
    "synth.feature_dim",
    "synth.rng_seed",
    "synth.embedding_seed",
    "experiment.seeds",
    "experiment.test_clips",
];

impl PipelineConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("expected `key = value`, got `{line}`")))?;
            config.set(key.trim(), raw.trim())?;
        }
        Ok(config)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| Error::validation(pair, "override must look like `key=value`"))?;
        self.set(key.trim(), raw.trim())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "threshold.default" => return self.set("threshold", raw),
            "medfilt_frames.default" => return self.set("medfilt_frames", raw),
            _ => {}
        }
        if let Some(class) = key.strip_prefix("threshold.") {
            self.class_thresholds.insert(class.to_string(), value(key, raw)?);
            return Ok(());
        }
        if let Some(class) = key.strip_prefix("medfilt_frames.") {
            self.class_medfilt_frames.insert(class.to_string(), value(key, raw)?);
            return Ok(());
        }
        if let Some((scenario, field)) = key.split_once('.').filter(|(s, _)| *s == "psds1" || *s == "psds2") {
            let psds = if scenario == "psds1" { &mut self.psds1 } else { &mut self.psds2 };
            match field {
                "dtc" => psds.dtc = value(key, raw)?,
                "gtc" => psds.gtc = value(key, raw)?,
                "cttc" => psds.cttc = value(key, raw)?,
                "alpha_ct" => psds.alpha_ct = value(key, raw)?,
                "alpha_st" => psds.alpha_st = value(key, raw)?,
                "e_max" => psds.e_max = value(key, raw)?,
                "num_thresholds" => psds.thresholds = default_thresholds(value(key, raw)?),
                _ => return Err(Error::validation(key, "unknown configuration key")),
            }
            return Ok(());
        }
        match key {
            "frame_hop" => self.frame_hop = value(key, raw)?,
            "classes" => {
                let names: Vec<String> = raw
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                ClassVocabulary::new(names.iter().cloned())
                    .map_err(|e| Error::validation(key, e.to_string()))?;
                self.classes = Some(names);
            }
            "alpha" => self.alpha = value(key, raw)?,
            "sigma" => self.sigma = value(key, raw)?,
            "threshold" => self.threshold = value(key, raw)?,
            "medfilt_frames" => self.medfilt_frames = value(key, raw)?,
            "f1.onset_collar" => self.f1.onset_collar = value(key, raw)?,
            "f1.offset_collar" => self.f1.offset_collar = value(key, raw)?,
            "f1.offset_duration_ratio" => self.f1.offset_duration_ratio = value(key, raw)?,
            "train.epochs" => self.train.epochs = value(key, raw)?,
            "train.learning_rate" => self.train.learning_rate = value(key, raw)?,
            "train.batch_clips" => self.train.batch_clips = value(key, raw)?,
            "train.w_weak" => {
                self.train.combiner = CombinerWeights::new(value(key, raw)?, self.train.combiner.w_cons())
                    .map_err(|e| Error::validation(key, e.to_string()))?
            }
            "train.w_cons" => {
                self.train.combiner = CombinerWeights::new(self.train.combiner.w_weak(), value(key, raw)?)
                    .map_err(|e| Error::validation(key, e.to_string()))?
            }
            "train.seed" => self.train.seed = value(key, raw)?,
            "train.context" => self.context = value(key, raw)?,
            "synth.num_clips" => self.synth.num_clips = value(key, raw)?,
            "synth.clip_frames" => self.synth.clip_frames = value(key, raw)?,
            "synth.num_classes" => self.synth.num_classes = value(key, raw)?,
            "synth.event_rate" => self.synth.event_rate = value(key, raw)?,
            "synth.min_duration" => self.synth.min_duration = value(key, raw)?,
            "synth.max_duration" => self.synth.max_duration = value(key, raw)?,
            "synth.score_noise_std" => self.synth.score_noise_std = value(key, raw)?,
            "synth.boundary_blur_frames" => self.synth.boundary_blur_frames = value(key, raw)?,
            "synth.annotation_jitter_std" => self.synth.annotation_jitter_std = value(key, raw)?,
            "synth.feature_dim" => self.synth.feature_dim = value(key, raw)?,
            "synth.rng_seed" => self.synth.rng_seed = value(key, raw)?,
            "synth.embedding_seed" => self.synth.embedding_seed = value(key, raw)?,
            "experiment.seeds" => self.experiment_seeds = value(key, raw)?,
            "experiment.test_clips" => self.test_clips = value(key, raw)?,
            _ => return Err(Error::validation(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn window(&self) -> Result<WindowParams> {
        WindowParams::new(self.alpha, self.sigma)
    }

    /// Vocabulary from `classes`, else `fallback`, else `class_0..` sized by
    /// `synth.num_classes`.
    pub fn vocabulary(&self, fallback: Option<Arc<ClassVocabulary>>) -> Result<Arc<ClassVocabulary>> {
        match (&self.classes, fallback) {
            (Some(names), _) => Ok(Arc::new(ClassVocabulary::new(names.iter().cloned())?)),
            (None, Some(v)) => Ok(v),
            (None, None) => Ok(Arc::new(ClassVocabulary::numbered(self.synth.num_classes)?)),
        }
    }

    pub fn postprocess(&self, vocab: &ClassVocabulary) -> Result<PostprocessConfig> {
        let mut thresholds = vec![self.threshold; vocab.len()];
        let mut lengths = vec![self.medfilt_frames; vocab.len()];
        for (class, &t) in &self.class_thresholds {
            let k = vocab
                .index_of(class)
                .map_err(|_| Error::validation(format!("threshold.{class}"), "class not in vocabulary"))?;
            thresholds[k] = t;
        }
        for (class, &l) in &self.class_medfilt_frames {
            let k = vocab
                .index_of(class)
                .map_err(|_| Error::validation(format!("medfilt_frames.{class}"), "class not in vocabulary"))?;
            lengths[k] = l;
        }
        for (name, t) in vocab.names().iter().zip(&thresholds) {
            if !(*t > 0.0 && *t < 1.0) {
                let key = if self.class_thresholds.contains_key(name) {
                    format!("threshold.{name}")
                } else {
                    "threshold".to_string()
                };
                return Err(Error::validation(key, format!("must lie strictly between 0 and 1, got {t}")));
            }
        }
        for (name, l) in vocab.names().iter().zip(&lengths) {
            if l % 2 == 0 {
                let key = if self.class_medfilt_frames.contains_key(name) {
                    format!("medfilt_frames.{name}")
                } else {
                    "medfilt_frames".to_string()
                };
                return Err(Error::validation(key, format!("median filter length must be odd and >= 1, got {l}")));
            }
        }
        PostprocessConfig::new(thresholds, lengths)
    }

    pub fn evaluation(&self, vocab: &ClassVocabulary) -> Result<EvaluationConfig> {
        let f1 = F1Config::new(self.f1.onset_collar, self.f1.offset_collar, self.f1.offset_duration_ratio)?;
        self.psds1.validate("psds1")?;
        self.psds2.validate("psds2")?;
        Ok(EvaluationConfig {
            postprocess: self.postprocess(vocab)?,
            f1,
            psds1: self.psds1.clone(),
            psds2: self.psds2.clone(),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let train = TrainConfig {
            window: self.window()?,
            ..self.train.clone()
        };
        train.validate()?;
        Ok(train)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let synth = SynthConfig {
            frame_hop: self.frame_hop,
            num_classes: self.classes.as_ref().map_or(self.synth.num_classes, Vec::len),
            ..self.synth.clone()
        };
        synth.validate()?;
        Ok(synth)
    }

    pub fn experiment(&self, vocab: &ClassVocabulary) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            synth: self.synth_config()?,
            test_clips: self.test_clips,
            train: self.train_config()?,
            context: self.context,
            seeds: self.experiment_seeds,
            eval: self.evaluation(vocab)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every section that does not depend on input data.
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_hop.is_finite() && self.frame_hop > 0.0) {
            return Err(Error::validation("frame_hop", format!("must be positive, got {}", self.frame_hop)));
        }
        let vocab = self.vocabulary(None)?;
        self.window()?;
        self.evaluation(&vocab)?;
        self.train_config()?;
        self.synth_config()?;
        Ok(())
    }
}
