//! On-disk file formats. Every file is validated when read and again before
//! it is written; writes go to a temporary file that is renamed into place.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fmloc_core::{
    parse_label_list, DatasetManifest, DecisionSource, EvaluationReport, ImageDescriptor,
    LandmarkReport, ManifestEntry, MatchResult, PatchScore, PatchScoreTable, Vocabulary,
};

use crate::error::{Error, Result};

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let mut tmp = tempfile_in(dir, name)?;
    tmp.1.write_all(bytes).map_err(|e| Error::io(&tmp.0, e))?;
    tmp.1.sync_all().map_err(|e| Error::io(&tmp.0, e))?;
    drop(tmp.1);
    fs::rename(&tmp.0, path).map_err(|e| Error::io(path, e))
}

fn tempfile_in(dir: &Path, name: &str) -> Result<(std::path::PathBuf, fs::File)> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    loop {
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let candidate = dir.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&candidate)
        {
            Ok(f) => return Ok((candidate, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(candidate, e)),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    out.push(b'\n');
    out
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

// Vocabulary ---------------------------------------------------------------

/// Raw entries of a vocabulary file: either a JSON array of strings or
/// one label per line with `#` comments.
pub fn read_label_file(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| Error::format(path, e));
    }
    Ok(parse_label_list(&text)
        .into_iter()
        .map(String::from)
        .collect())
}

/// Base list from `base` (or the bundled COCO list), extended with `extension`.
pub fn load_vocabulary(base: Option<&Path>, extension: Option<&Path>) -> Result<Vocabulary> {
    let user = match extension {
        Some(p) => read_label_file(p)?,
        None => Vec::new(),
    };
    let vocab = match base {
        Some(p) => Vocabulary::from_lists(read_label_file(p)?, user),
        None => Vocabulary::coco_with(user),
    };
    vocab.map_err(|e| match (base, extension) {
        (Some(p), None) => Error::format(p, e),
        _ => Error::Vocabulary(e),
    })
}

// Manifest -----------------------------------------------------------------

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let entries: Vec<ManifestEntry> = read_json(path)?;
    DatasetManifest::new(entries).map_err(|e| Error::format(path, e))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    DatasetManifest::new(manifest.entries().to_vec()).map_err(|e| Error::format(path, e))?;
    write_json(path, &manifest.entries())
}

// Descriptors --------------------------------------------------------------

pub fn validate_descriptors(descriptors: &[ImageDescriptor]) -> std::result::Result<(), String> {
    let mut ids = HashSet::new();
    let dim = descriptors.first().map(|d| d.room_embedding.dimension());
    for d in descriptors {
        d.validate().map_err(|e| e.to_string())?;
        if !ids.insert(d.image_id.as_str()) {
            return Err(format!("duplicate descriptor for \"{}\"", d.image_id));
        }
        if Some(d.room_embedding.dimension()) != dim {
            return Err(format!(
                "descriptor \"{}\" has a different embedding dimension",
                d.image_id
            ));
        }
    }
    Ok(())
}

pub fn read_descriptors(path: &Path) -> Result<Vec<ImageDescriptor>> {
    let descriptors: Vec<ImageDescriptor> = read_json(path)?;
    validate_descriptors(&descriptors).map_err(|e| Error::format(path, e))?;
    Ok(descriptors)
}

pub fn write_descriptors(path: &Path, descriptors: &[ImageDescriptor]) -> Result<()> {
    validate_descriptors(descriptors).map_err(Error::Invariant)?;
    write_json(path, &descriptors)
}

// Patch scores -------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PatchScoreFile {
    scores: Vec<PatchScore>,
}

pub fn read_patch_scores(path: &Path) -> Result<PatchScoreTable> {
    let file: PatchScoreFile = read_json(path)?;
    PatchScoreTable::from_entries(file.scores).map_err(|e| Error::format(path, e))
}

pub fn write_patch_scores(path: &Path, table: &PatchScoreTable) -> Result<()> {
    let file = PatchScoreFile {
        scores: table.entries().to_vec(),
    };
    write_json(path, &file)
}

// Matches ------------------------------------------------------------------

pub fn validate_matches(matches: &[MatchResult]) -> std::result::Result<(), String> {
    let mut ids = HashSet::new();
    for m in matches {
        if !ids.insert(m.query_id.as_str()) {
            return Err(format!("query \"{}\" is matched twice", m.query_id));
        }
        let s = m.semantic;
        if s.total != s.object_part + s.room_part
            || s.object_part < 0.0
            || !(0.0..=1.0).contains(&s.room_part)
        {
            return Err(format!(
                "inconsistent semantic score for query \"{}\"",
                m.query_id
            ));
        }
        let fused = m.decision_source != DecisionSource::Semantic;
        if fused != m.fused_detail.is_some() {
            return Err(format!(
                "fusion detail does not match decision source for \"{}\"",
                m.query_id
            ));
        }
        if let Some(d) = &m.fused_detail {
            let expected = match m.decision_source {
                DecisionSource::FusedPatch => &d.patch_winner,
                _ => &d.semantic_winner,
            };
            if *expected != m.reference_id {
                return Err(format!(
                    "fused reference for \"{}\" is neither winner",
                    m.query_id
                ));
            }
        }
    }
    Ok(())
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchResult>> {
    let matches: Vec<MatchResult> = read_json(path)?;
    validate_matches(&matches).map_err(|e| Error::format(path, e))?;
    Ok(matches)
}

pub fn write_matches(path: &Path, matches: &[MatchResult]) -> Result<()> {
    validate_matches(matches).map_err(Error::Invariant)?;
    write_json(path, &matches)
}

// Landmark report ----------------------------------------------------------

pub fn validate_landmark_report(report: &LandmarkReport) -> std::result::Result<(), String> {
    let rebuilt = LandmarkReport::new(
        report.threshold,
        report.elimination,
        report.baseline_error,
        report
            .labels
            .iter()
            .map(|l| (l.label.clone(), l.error_without))
            .collect(),
    );
    if rebuilt != *report {
        return Err("report ordering, reductions or landmark set are inconsistent".into());
    }
    Ok(())
}

pub fn read_landmark_report(path: &Path) -> Result<LandmarkReport> {
    let report: LandmarkReport = read_json(path)?;
    validate_landmark_report(&report).map_err(|e| Error::format(path, e))?;
    Ok(report)
}

pub fn write_landmark_report(path: &Path, report: &LandmarkReport) -> Result<()> {
    validate_landmark_report(report).map_err(Error::Invariant)?;
    write_json(path, report)
}

// Evaluation report --------------------------------------------------------

pub fn validate_evaluation(report: &EvaluationReport) -> std::result::Result<(), String> {
    let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
    if !rate_ok(report.total.room_detection_rate) || report.total.mean_translation_error < 0.0 {
        return Err("total metrics out of range".into());
    }
    if report.total.queries != report.queries.len() {
        return Err("total query count does not match per-query rows".into());
    }
    let per_room: usize = report.rooms.iter().map(|r| r.queries).sum();
    if per_room != report.queries.len() {
        return Err("per-room rows do not partition the queries".into());
    }
    if report
        .rooms
        .iter()
        .any(|r| !rate_ok(r.room_detection_rate) || r.mean_translation_error < 0.0)
    {
        return Err("per-room metrics out of range".into());
    }
    Ok(())
}

pub fn read_evaluation(path: &Path) -> Result<EvaluationReport> {
    let report: EvaluationReport = read_json(path)?;
    validate_evaluation(&report).map_err(|e| Error::format(path, e))?;
    Ok(report)
}

pub fn write_evaluation(path: &Path, report: &EvaluationReport) -> Result<()> {
    validate_evaluation(report).map_err(Error::Invariant)?;
    write_json(path, report)
}

/// Aligned plain-text table of an evaluation report.
pub fn render_evaluation_table(report: &EvaluationReport) -> String {
    let width = report
        .rooms
        .iter()
        .map(|r| r.room.len())
        .chain([5])
        .max()
        .unwrap_or(5);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>14}  {:>18}\n",
        "room", "queries", "mean error [m]", "room detection [%]"
    );
    let mut row = |name: &str, n: usize, err: f64, rate: f64| {
        out.push_str(&format!(
            "{:<width$}  {:>7}  {:>14.2}  {:>18.2}\n",
            name,
            n,
            err,
            rate * 100.0
        ));
    };
    for r in &report.rooms {
        row(
            &r.room,
            r.queries,
            r.mean_translation_error,
            r.room_detection_rate,
        );
    }
    let t = &report.total;
    row(
        "total",
        t.queries,
        t.mean_translation_error,
        t.room_detection_rate,
    );
    out
}
