//! Event TSV, frame-matrix CSV and feature CSV formats.
//!
//! Event files follow the DCASE convention: a tab-separated header
//! `filename\tonset\toffset\tevent_label` followed by one row per event, with
//! times written to 3 decimals. Frame-matrix files are comma-separated with a
//! `frame_index,<class...>` header and values written to 6 decimals. Weight
//! masks use the same layout preceded by a `# mask` line, which lifts the
//! `[0, 1]` range check. All files are UTF-8 with `\n` line endings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{
    ClassVocabulary, Event, EventList, Features, FrameGrid, FrameMatrix, LabelTensor, ScoreTensor,
    WeightMask,
};

pub const EVENT_HEADER: [&str; 4] = ["filename", "onset", "offset", "event_label"];
pub const MASK_MARKER: &str = "# mask";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(origin: &str, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => err.to_string(),
    };
    Error::parse(origin, line, message)
}

fn parse_f64(origin: &str, line: usize, field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(origin, line, format!("cannot parse {what} `{field}`")))
}

/// Parses event-file text; `origin` names the source in error messages.
pub fn parse_event_file(text: &str, origin: &str) -> Result<Vec<EventList>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| csv_error(origin, e))?.clone();
    if header.iter().ne(EVENT_HEADER.iter().copied()) {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header `{}`", EVENT_HEADER.join("\t")),
        ));
    }

    let mut clips: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let filename = &record[0];
        if filename.is_empty() {
            return Err(Error::parse(origin, line, "empty filename"));
        }
        let onset = parse_f64(origin, line, &record[1], "onset")?;
        let offset = parse_f64(origin, line, &record[2], "offset")?;
        let label = &record[3];
        if label.is_empty() {
            return Err(Error::parse(origin, line, "empty event_label"));
        }
        let event = Event::new(label, onset, offset).map_err(|e| match e {
            Error::Validation { key, message } => Error::Validation {
                key,
                message: format!("{origin}:{line}: {message}"),
            },
            other => other,
        })?;
        clips.entry(filename.to_string()).or_default().push(event);
    }

    Ok(clips
        .into_iter()
        .map(|(clip, events)| EventList::new(clip, events))
        .collect())
}

pub fn read_event_file(path: impl AsRef<Path>) -> Result<Vec<EventList>> {
    let path = path.as_ref();
    parse_event_file(&read_text(path)?, &path.display().to_string())
}

pub fn format_event_file(lists: &[EventList]) -> String {
    let mut out = EVENT_HEADER.join("\t");
    out.push('\n');
    for list in lists {
        for e in list.events() {
            let _ = writeln!(
                out,
                "{}\t{:.3}\t{:.3}\t{}",
                list.clip_id(),
                e.onset,
                e.offset,
                e.class_name
            );
        }
    }
    out
}

pub fn write_event_file(lists: &[EventList], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_event_file(lists))
}

/// Whether a frame-matrix file holds unit-range values or a weight mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Scores,
    Mask,
}

/// Parses a frame-matrix CSV. The hop is not stored in the file.
pub fn parse_frame_matrix(
    text: &str,
    origin: &str,
    frame_hop: f64,
) -> Result<(FrameMatrix, MatrixKind)> {
    let (kind, body, line_offset) = match text.strip_prefix(MASK_MARKER) {
        Some(rest) if rest.is_empty() || rest.starts_with('\n') => {
            (MatrixKind::Mask, rest.strip_prefix('\n').unwrap_or(rest), 1)
        }
        _ => (MatrixKind::Scores, text, 0),
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let relocate = |e: Error| match e {
        Error::Parse {
            path,
            line,
            message,
        } => Error::Parse {
            path,
            line: line + line_offset,
            message,
        },
        other => other,
    };

    let header = reader
        .headers()
        .map_err(|e| relocate(csv_error(origin, e)))?
        .clone();
    if header.get(0) != Some("frame_index") {
        return Err(Error::parse(
            origin,
            1 + line_offset,
            "expected header starting with `frame_index`",
        ));
    }
    let vocab = ClassVocabulary::new(header.iter().skip(1).map(|s| s.trim().to_string()))
        .map_err(|e| Error::parse(origin, 1 + line_offset, e.to_string()))?;
    let k = vocab.len();

    let mut values = Vec::new();
    let mut frames = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| relocate(csv_error(origin, e)))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0) + line_offset;
        let index: usize = record[0].trim().parse().map_err(|_| {
            Error::parse(origin, line, format!("cannot parse frame_index `{}`", &record[0]))
        })?;
        if index != frames {
            return Err(Error::parse(
                origin,
                line,
                format!("frame_index {index} out of order, expected {frames}"),
            ));
        }
        for (c, field) in record.iter().skip(1).enumerate() {
            let v = parse_f64(origin, line, field, "value")?;
            let ok = match kind {
                MatrixKind::Scores => (0.0..=1.0).contains(&v),
                MatrixKind::Mask => v >= 0.0,
            };
            if !ok {
                return Err(Error::validation(
                    vocab.name(c),
                    format!("{origin}:{line}: value {v} out of range"),
                ));
            }
            values.push(v);
        }
        frames += 1;
    }
    debug_assert_eq!(values.len(), frames * k);
    if frames == 0 {
        return Err(Error::validation(
            "num_frames",
            format!("{origin}: file contains no frames"),
        ));
    }
    let grid = FrameGrid::new(frames, frame_hop)?;
    Ok((FrameMatrix::new(grid, vocab, values)?, kind))
}

fn read_matrix(path: &Path, frame_hop: f64) -> Result<(FrameMatrix, MatrixKind)> {
    parse_frame_matrix(&read_text(path)?, &path.display().to_string(), frame_hop)
}

pub fn read_score_file(path: impl AsRef<Path>, frame_hop: f64) -> Result<ScoreTensor> {
    let path = path.as_ref();
    match read_matrix(path, frame_hop)? {
        (m, MatrixKind::Scores) => ScoreTensor::from_matrix(m),
        (_, MatrixKind::Mask) => Err(Error::validation(
            "scores",
            format!("{} is a weight mask, not a score file", path.display()),
        )),
    }
}

/// Reads a unit-range frame matrix as soft or hard labels.
pub fn read_label_csv(path: impl AsRef<Path>, frame_hop: f64) -> Result<LabelTensor> {
    LabelTensor::from_matrix(read_score_file(path, frame_hop)?.into_matrix())
}

pub fn read_mask_file(path: impl AsRef<Path>, frame_hop: f64) -> Result<WeightMask> {
    let (m, _) = read_matrix(path.as_ref(), frame_hop)?;
    WeightMask::from_matrix(m)
}

pub fn format_frame_matrix(matrix: &FrameMatrix, kind: MatrixKind) -> String {
    let mut out = String::new();
    if kind == MatrixKind::Mask {
        out.push_str(MASK_MARKER);
        out.push('\n');
    }
    out.push_str("frame_index");
    for name in matrix.vocab().names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for n in 0..matrix.num_frames() {
        let _ = write!(out, "{n}");
        for v in matrix.row(n) {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn write_score_file(tensor: &ScoreTensor, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_frame_matrix(tensor, MatrixKind::Scores))
}

pub fn write_mask_file(mask: &WeightMask, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_frame_matrix(mask, MatrixKind::Mask))
}

pub fn format_features(features: &Features) -> String {
    let mut out = String::from("frame_index");
    for d in 0..features.dim() {
        let _ = write!(out, ",f{d}");
    }
    out.push('\n');
    for n in 0..features.num_frames() {
        let _ = write!(out, "{n}");
        for v in features.frame(n) {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(features: &Features, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_features(features))
}

pub fn parse_features(text: &str, origin: &str) -> Result<Features> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(origin, e))?.clone();
    if header.get(0) != Some("frame_index") {
        return Err(Error::parse(origin, 1, "expected header starting with `frame_index`"));
    }
    let dim = header.len() - 1;
    let mut values = Vec::new();
    let mut frames = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record[0].trim().parse::<usize>().ok() != Some(frames) {
            return Err(Error::parse(origin, line, format!("expected frame_index {frames}")));
        }
        for field in record.iter().skip(1) {
            values.push(parse_f64(origin, line, field, "feature")?);
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::validation("num_frames", format!("{origin}: no frames")));
    }
    Features::new(frames, dim, values)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Features> {
    let path = path.as_ref();
    parse_features(&read_text(path)?, &path.display().to_string())
}

/// Shares one vocabulary across several tensors read from disk, failing if
/// any file disagrees with the first.
pub fn unify_vocabulary<'a, I>(matrices: I) -> Result<Option<Arc<ClassVocabulary>>>
where
    I: IntoIterator<Item = &'a FrameMatrix>,
{
    let mut shared: Option<Arc<ClassVocabulary>> = None;
    for m in matrices {
        match &shared {
            None => shared = Some(m.shared_vocab()),
            Some(v) if v.names() != m.vocab().names() => {
                return Err(Error::Dimension(format!(
                    "class columns [{}] differ from [{}]",
                    m.vocab().names().join(","),
                    v.names().join(",")
                )))
            }
            Some(_) => {}
        }
    }
    Ok(shared)
}
