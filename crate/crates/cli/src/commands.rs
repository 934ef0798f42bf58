use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sedkit_core::experiment::{build_corpora, compare_losses, format_comparison, format_sweep, sweep as run_sweep};
use sedkit_core::experiment::{SweepProtocol, SweepSpec};
use sedkit_core::io::{
    format_event_file, format_frame_matrix, read_event_file, read_feature_file, read_label_csv,
    read_score_file, unify_vocabulary, write_event_file, write_feature_file, write_mask_file,
    write_score_file, MatrixKind,
};
use sedkit_core::metrics::{decode_all, evaluate};
use sedkit_core::postprocess::{binarize, median_filter};
use sedkit_core::synth::{generate_corpus, jitter_annotations, Corpus};
use sedkit_core::trainer::{format_loss_trace, predict_corpus, train, write_model};
use sedkit_core::weighting::{
    build_weight_mask, collect_class_stats, collect_class_stats_from_events, count_class_weights,
    effective_number_weights, ClassStats,
};
use sedkit_core::{
    events_to_labels, ClassVocabulary, ClipScores, Error, EventList, FrameGrid, LinearFrameModel,
    PipelineConfig, Result, ScoreTensor,
};

use crate::{
    ClassWeightScheme, DecodeArgs, EvalArgs, ExperimentArgs, JitterArgs, MedfiltArgs, Protocol,
    SweepArgs, SynthArgs, TrainToyArgs, WeightsArgs,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// File-name stem shared by a clip id and its per-clip files (`a.wav` and
/// `a.csv` both map to `a`).
fn stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned())
}

fn default_clip_id(stem: &str) -> String {
    format!("{stem}.wav")
}

/// `*.csv` files of a directory, sorted by name.
fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    stem(&path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Name of the evaluated system: the score directory's name.
fn system_name(scores: &Path) -> String {
    let canonical = std::fs::canonicalize(scores).unwrap_or_else(|_| scores.to_path_buf());
    Some(file_stem(&canonical)).filter(|s| !s.is_empty()).unwrap_or_else(|| "system".into())
}

/// Score tensors keyed by file stem, from one file or a directory.
fn read_scores(path: &Path, frame_hop: f64) -> Result<Vec<(String, ScoreTensor)>> {
    let files = if path.is_dir() {
        csv_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::validation(
            "scores",
            format!("no score files in {}", path.display()),
        ));
    }
    files
        .iter()
        .map(|f| Ok((file_stem(f), read_score_file(f, frame_hop)?)))
        .collect()
}

fn shared_vocab<'a>(
    config: &PipelineConfig,
    tensors: impl IntoIterator<Item = &'a ScoreTensor>,
) -> Result<Arc<ClassVocabulary>> {
    let from_files = unify_vocabulary(tensors.into_iter().map(|t| t.matrix()))?;
    let vocab = config.vocabulary(from_files.clone())?;
    if let Some(files) = from_files {
        if files.names() != vocab.names() {
            return Err(Error::validation(
                "classes",
                format!(
                    "configured classes [{}] differ from score columns [{}]",
                    vocab.names().join(","),
                    files.names().join(",")
                ),
            ));
        }
    }
    Ok(vocab)
}

/// Vocabulary from the config, else the sorted class names in the events.
fn event_vocab(config: &PipelineConfig, lists: &[EventList]) -> Result<Arc<ClassVocabulary>> {
    let names: BTreeSet<&str> = lists
        .iter()
        .flat_map(|l| l.events().iter().map(|e| e.class_name.as_str()))
        .collect();
    let derived = if names.is_empty() {
        None
    } else {
        Some(Arc::new(ClassVocabulary::new(names)?))
    };
    if config.classes.is_none() && derived.is_none() {
        return Err(Error::validation(
            "classes",
            "no events to infer classes from; set `classes`",
        ));
    }
    config.vocabulary(derived)
}

fn format_class_weights(stats: &ClassStats, weights: &[f64]) -> String {
    let mut out = String::from("class,events,frames,weight\n");
    for (k, w) in weights.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{:.12}",
            stats.vocab.name(k),
            stats.event_counts[k],
            stats.frame_counts[k],
            w
        );
    }
    out
}

pub fn weights(config: &PipelineConfig, args: &WeightsArgs) -> Result<()> {
    let window = config.window()?;
    let hop = config.frame_hop;
    let is_tsv = args.labels.extension().is_some_and(|x| x == "tsv");
    let stats = if is_tsv {
        let lists = read_event_file(&args.labels)?;
        let vocab = event_vocab(config, &lists)?;
        create_dir(&args.out)?;
        for list in &lists {
            let frames = match args.num_frames {
                Some(n) => n,
                None => {
                    let end = list.events().iter().map(|e| e.offset).fold(0.0, f64::max);
                    ((end / hop).ceil() as usize).max(1)
                }
            };
            let grid = FrameGrid::new(frames, hop)?;
            let labels = events_to_labels(list, grid, Arc::clone(&vocab))?;
            let mask = build_weight_mask(&labels, window);
            write_mask_file(&mask, args.out.join(format!("{}.csv", stem(list.clip_id()))))?;
        }
        args.class_weights
            .as_ref()
            .map(|_| collect_class_stats_from_events(&lists, hop, Arc::clone(&vocab)))
            .transpose()?
    } else {
        let labels = read_label_csv(&args.labels, hop)?;
        if let Some(names) = &config.classes {
            if names.as_slice() != labels.vocab().names() {
                return Err(Error::validation("classes", "label columns differ from configured classes"));
            }
        }
        write_mask_file(&build_weight_mask(&labels, window), &args.out)?;
        args.class_weights
            .as_ref()
            .map(|_| collect_class_stats(std::slice::from_ref(&labels), labels.shared_vocab()))
            .transpose()?
    };
    if let (Some(path), Some(stats)) = (&args.class_weights, stats) {
        let w = match args.scheme {
            ClassWeightScheme::Count => count_class_weights(&stats)?,
            ClassWeightScheme::Effective => effective_number_weights(&stats, args.lambda)?,
        };
        write_text(path, &format_class_weights(&stats, &w))?;
    }
    Ok(())
}

pub fn medfilt(config: &PipelineConfig, args: &MedfiltArgs) -> Result<()> {
    let scores = read_score_file(&args.scores, config.frame_hop)?;
    let vocab = shared_vocab(config, [&scores])?;
    let pp = config.postprocess(&vocab)?;
    let filtered = median_filter(&binarize(&scores, &pp)?, &pp)?;
    emit(args.out.as_deref(), &format_frame_matrix(filtered.matrix(), MatrixKind::Scores))
}

pub fn decode(config: &PipelineConfig, args: &DecodeArgs) -> Result<()> {
    let scores = read_scores(&args.scores, config.frame_hop)?;
    let vocab = shared_vocab(config, scores.iter().map(|(_, s)| s))?;
    let pp = config.postprocess(&vocab)?;
    let clips: Vec<ClipScores> = scores
        .into_iter()
        .map(|(stem, scores)| ClipScores {
            clip_id: default_clip_id(&stem),
            scores,
        })
        .collect();
    emit(args.out.as_deref(), &format_event_file(&decode_all(&clips, &pp)?))
}

pub fn eval(config: &PipelineConfig, args: &EvalArgs) -> Result<()> {
    let refs = read_event_file(&args.refs)?;
    if !args.scores.is_dir() {
        return Err(Error::io(
            &args.scores,
            std::io::Error::new(std::io::ErrorKind::NotFound, "score directory not found"),
        ));
    }
    let scores = read_scores(&args.scores, config.frame_hop)?;
    let vocab = shared_vocab(config, scores.iter().map(|(_, s)| s))?;
    let ref_ids: BTreeMap<String, &str> = refs.iter().map(|r| (stem(r.clip_id()), r.clip_id())).collect();
    let clips: Vec<ClipScores> = scores
        .into_iter()
        .map(|(stem, scores)| ClipScores {
            clip_id: ref_ids
                .get(&stem)
                .map_or_else(|| default_clip_id(&stem), |id| id.to_string()),
            scores,
        })
        .collect();
    let report = evaluate(&refs, &clips, &vocab, &config.evaluation(&vocab)?)?;
    if let Some(path) = &args.per_class {
        let mut out = String::from("class,true_positives,false_positives,false_negatives,precision,recall,f1\n");
        for c in &report.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                c.class_name,
                c.true_positives,
                c.false_positives,
                c.false_negatives,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
        write_text(path, &out)?;
    }
    emit(
        args.out.as_deref(),
        &format!(
            "system,event_f1,psds1,psds2\n{},{:.6},{:.6},{:.6}\n",
            system_name(&args.scores),
            report.event_f1,
            report.psds1,
            report.psds2
        ),
    )
}

pub fn sweep(config: &PipelineConfig, args: &SweepArgs) -> Result<()> {
    let vocab = config.vocabulary(None)?;
    let experiment = config.experiment(&vocab)?;
    let (train, test) = build_corpora(&experiment, &vocab)?;
    let spec = SweepSpec {
        alphas: args.alphas.clone(),
        sigmas: args.sigmas.clone(),
        protocol: match args.protocol {
            Protocol::TwoStep => SweepProtocol::TwoStep,
            Protocol::Grid => SweepProtocol::Grid,
        },
        fixed_sigma: args.fixed_sigma.unwrap_or(config.sigma),
        fixed_alpha: args.fixed_alpha,
    };
    let rows = run_sweep(&train, &test, &experiment, &spec)?;
    emit(args.out.as_deref(), &format_sweep(&rows))
}

fn synth_corpus(config: &PipelineConfig) -> Result<Corpus> {
    let synth = config.synth_config()?;
    generate_corpus(&synth, config.vocabulary(None)?)
}

pub fn synth(config: &PipelineConfig, args: &SynthArgs) -> Result<()> {
    let corpus = synth_corpus(config)?;
    let labels_dir = args.out.join("labels");
    let features_dir = args.out.join("features");
    create_dir(&labels_dir)?;
    create_dir(&features_dir)?;
    write_event_file(&corpus.events, args.out.join("events.tsv"))?;
    let std = config.synth.annotation_jitter_std;
    if std > 0.0 {
        let jittered = jitter_annotations(&corpus.events, std, config.synth.rng_seed, Some(corpus.grid.duration()))?;
        write_event_file(&jittered, args.out.join("events_jittered.tsv"))?;
    }
    for ((events, labels), features) in corpus.events.iter().zip(&corpus.labels).zip(&corpus.features) {
        let name = format!("{}.csv", stem(events.clip_id()));
        write_score_file(&ScoreTensor::from_labels(labels), labels_dir.join(&name))?;
        write_feature_file(features, features_dir.join(&name))?;
    }
    Ok(())
}

pub fn jitter(config: &PipelineConfig, args: &JitterArgs) -> Result<()> {
    let events = read_event_file(&args.events)?;
    let jittered = jitter_annotations(
        &events,
        config.synth.annotation_jitter_std,
        args.seed,
        args.clip_duration,
    )?;
    emit(args.out.as_deref(), &format_event_file(&jittered))
}

/// Corpus from a `sedkit synth` directory: `events.tsv` plus `features/`.
fn load_corpus(config: &PipelineConfig, dir: &Path) -> Result<Corpus> {
    let vocab = config.vocabulary(None)?;
    let events = read_event_file(dir.join("events.tsv"))?;
    let by_stem: BTreeMap<String, &EventList> = events.iter().map(|l| (stem(l.clip_id()), l)).collect();
    let files = csv_files(&dir.join("features"))?;
    if files.is_empty() {
        return Err(Error::validation("data", format!("no feature files in {}", dir.join("features").display())));
    }
    let mut corpus = Corpus {
        vocab: Arc::clone(&vocab),
        grid: FrameGrid::new(1, config.frame_hop)?,
        events: Vec::new(),
        labels: Vec::new(),
        features: Vec::new(),
    };
    for (i, file) in files.iter().enumerate() {
        let features = read_feature_file(file)?;
        let grid = FrameGrid::new(features.num_frames(), config.frame_hop)?;
        if i == 0 {
            corpus.grid = grid;
        } else if grid != corpus.grid {
            return Err(Error::Dimension(format!(
                "{} has {} frames, expected {}",
                file.display(),
                grid.num_frames(),
                corpus.grid.num_frames()
            )));
        }
        let stem = file_stem(file);
        let list = by_stem
            .get(&stem)
            .map_or_else(|| EventList::empty(default_clip_id(&stem)), |l| (*l).clone());
        corpus.labels.push(events_to_labels(&list, grid, Arc::clone(&vocab))?);
        corpus.events.push(list);
        corpus.features.push(features);
    }
    Ok(corpus)
}

pub fn train_toy(config: &PipelineConfig, args: &TrainToyArgs) -> Result<()> {
    let corpus = match &args.data {
        Some(dir) => load_corpus(config, dir)?,
        None => synth_corpus(config)?,
    };
    let dim = corpus.features[0].dim();
    let model = LinearFrameModel::zeros(config.context, dim, corpus.vocab.len())?;
    let outcome = train(&model, &corpus, &config.train_config()?)?;
    write_model(&outcome.model, &args.model_out)?;
    if let Some(path) = &args.trace_out {
        write_text(path, &format_loss_trace(&outcome.loss_trace))?;
    }
    if let Some(dir) = &args.scores_out {
        create_dir(dir)?;
        for (events, scores) in corpus.events.iter().zip(predict_corpus(&outcome.model, &corpus)?) {
            write_score_file(&scores, dir.join(format!("{}.csv", stem(events.clip_id()))))?;
        }
    }
    Ok(())
}

pub fn experiment(config: &PipelineConfig, args: &ExperimentArgs) -> Result<()> {
    let vocab = config.vocabulary(None)?;
    let experiment = config.experiment(&vocab)?;
    let (train, test) = build_corpora(&experiment, &vocab)?;
    let report = compare_losses(&train, &test, &experiment)?;
    emit(args.out.as_deref(), &format_comparison(&report))
}
