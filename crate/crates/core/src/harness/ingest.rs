use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::preprocess::{Expression, LandmarkSet, SequenceRecord};

/// A sequence that was not ingested, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub sequence_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    /// Standardized sequences in lexicographic id order.
    pub records: Vec<SequenceRecord>,
    /// Incomplete sequences (missing landmarks, too few frames).
    pub skipped: Vec<IngestIssue>,
    /// Sequences whose files are present but malformed.
    pub errors: Vec<IngestIssue>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LandmarkFile {
    Single(LandmarkSet),
    PerFrame(Vec<LandmarkSet>),
}

enum Outcome {
    Record(Box<SequenceRecord>),
    Skipped(String),
    Failed(String),
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn read_sequence(dir: &Path, id: &str) -> Outcome {
    let frames: Vec<_> = match sorted_entries(dir) {
        Ok(entries) => entries
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_") && n.to_ascii_lowercase().ends_with(".png"))
            })
            .collect(),
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    if frames.len() < 2 {
        return Outcome::Skipped("too short".into());
    }
    let lm_path = dir.join("landmarks.json");
    if !lm_path.exists() {
        return Outcome::Skipped("missing landmarks".into());
    }
    let label = match std::fs::read_to_string(dir.join("label.txt")) {
        Ok(text) => match text.parse::<Expression>() {
            Ok(l) => l,
            Err(_) => return Outcome::Failed(format!("unknown label {:?}", text.trim())),
        },
        Err(_) => return Outcome::Failed("missing label.txt".into()),
    };
    let landmarks = match std::fs::read_to_string(&lm_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str::<LandmarkFile>(&t).map_err(|e| e.to_string()))
    {
        Ok(LandmarkFile::Single(l)) => vec![l; frames.len()],
        Ok(LandmarkFile::PerFrame(v)) if v.len() == frames.len() => v,
        Ok(LandmarkFile::PerFrame(v)) => {
            return Outcome::Failed(format!("{} landmark sets for {} frames", v.len(), frames.len()))
        }
        Err(e) => return Outcome::Failed(format!("malformed landmarks.json: {e}")),
    };
    let images = match frames.iter().map(|p| GrayImage::load_png(p)).collect::<Result<Vec<_>>>() {
        Ok(v) => v,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    let record = SequenceRecord {
        id: id.to_string(),
        frames: images,
        landmarks,
        label,
    };
    match record.standardized() {
        Ok(r) => Outcome::Record(Box::new(r)),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

/// Reads `root/<sequence_id>/{frame_*.png, landmarks.json, label.txt}`
/// and standardizes every frame.
pub fn ingest_dataset(root: &Path) -> Result<IngestReport> {
    let dirs: Vec<(String, std::path::PathBuf)> = sorted_entries(root)?
        .into_iter()
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    if dirs.is_empty() {
        return Err(Error::protocol(format!("{} contains no sequences", root.display())));
    }
    let outcomes: Vec<Outcome> = dirs.par_iter().map(|(id, dir)| read_sequence(dir, id)).collect();
    let mut report = IngestReport::default();
    for ((id, _), outcome) in dirs.into_iter().zip(outcomes) {
        match outcome {
            Outcome::Record(r) => report.records.push(*r),
            Outcome::Skipped(reason) => {
                log::warn!("skipping sequence {id}: {reason}");
                report.skipped.push(IngestIssue { sequence_id: id, reason });
            }
            Outcome::Failed(reason) => {
                log::error!("sequence {id}: {reason}");
                report.errors.push(IngestIssue { sequence_id: id, reason });
            }
        }
    }
    Ok(report)
}
