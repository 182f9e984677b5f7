//! File formats: candidate streams, prediction timelines, ground truth.
//!
//! All three formats are line-delimited JSON, one object per line:
//!
//! * candidates — one record per caption proposal:
//!   `{"video_id", "model_id", "timestamp_s", "caption", "confidence", "background_scores"?}`
//! * predictions — one object per video:
//!   `{"video_id", "predictions": [{"timestamp_s", "caption", "confidence"}]}`
//! * ground truth — same shape as predictions with `reference` in place of
//!   `caption` and no confidence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidate::{CaptionCandidate, GroundTruthEvent, TimelineEvent, TimelinePrediction};
use crate::error::{Error, Result};

/// Reads a candidate file, validating every record.
///
/// Records keep file order; grouping by `(video_id, model_id)` is left to
/// [`group_streams`]. When `expected_models` is given, any record naming a
/// model outside the set is rejected.
pub fn ingest_candidates(
    path: &Path,
    expected_models: Option<&BTreeSet<String>>,
) -> Result<Vec<CaptionCandidate>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut candidates = Vec::new();

    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let candidate: CaptionCandidate =
            serde_json::from_str(trimmed).map_err(|e| Error::Ingest {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("malformed candidate record: {e}"),
            })?;
        candidate.validate().map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(models) = expected_models {
            if !models.contains(&candidate.model_id) {
                return Err(Error::Ingest {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("validation: unknown model_id '{}'", candidate.model_id),
                });
            }
        }
        candidates.push(candidate);
    }
    Ok(candidates)
}

/// Groups candidates by `(video_id, model_id)`, preserving input order
/// within each stream.
pub fn group_streams(
    candidates: Vec<CaptionCandidate>,
) -> BTreeMap<(String, String), Vec<CaptionCandidate>> {
    let mut streams: BTreeMap<(String, String), Vec<CaptionCandidate>> = BTreeMap::new();
    for candidate in candidates {
        streams
            .entry((candidate.video_id.clone(), candidate.model_id.clone()))
            .or_default()
            .push(candidate);
    }
    streams
}

/// Writes candidates one record per line, in slice order.
pub fn write_candidates(candidates: &[CaptionCandidate], path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        for candidate in candidates {
            serde_json::to_writer(&mut *out, candidate).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    video_id: String,
    predictions: Vec<TimelineEvent>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRecord {
    video_id: String,
    predictions: Vec<GroundTruthEntry>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthEntry {
    timestamp_s: f64,
    reference: String,
}

/// Writes one video's timeline as a single prediction record.
pub fn write_timeline(pred: &TimelinePrediction, path: &Path) -> Result<()> {
    write_timelines(std::slice::from_ref(pred), path)
}

/// Writes timelines one video per line. Every timeline's event ordering is
/// re-checked before anything is written.
pub fn write_timelines(preds: &[TimelinePrediction], path: &Path) -> Result<()> {
    for pred in preds {
        pred.validate()?;
    }
    write_atomic(path, |out| {
        for pred in preds {
            let record = PredictionRecord {
                video_id: pred.video_id.clone(),
                predictions: pred.events.clone(),
            };
            serde_json::to_writer(&mut *out, &record).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// Reads a prediction file back into timelines. Duplicate video ids are
/// rejected.
pub fn read_timelines(path: &Path) -> Result<Vec<TimelinePrediction>> {
    let mut seen = BTreeSet::new();
    read_records(path, |record: PredictionRecord, line_no| {
        if !seen.insert(record.video_id.clone()) {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate video_id '{}'", record.video_id),
            });
        }
        TimelinePrediction::new(record.video_id, record.predictions).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })
    })
}

/// Writes ground-truth events grouped one video per line, in the order the
/// events are given (events of one video must be contiguous and sorted).
pub fn write_ground_truth(events: &[GroundTruthEvent], path: &Path) -> Result<()> {
    let mut records: Vec<GroundTruthRecord> = Vec::new();
    for event in events {
        event.validate()?;
        match records.last_mut() {
            Some(record) if record.video_id == event.video_id => {
                record.predictions.push(GroundTruthEntry {
                    timestamp_s: event.timestamp_s,
                    reference: event.reference.clone(),
                });
            }
            _ => records.push(GroundTruthRecord {
                video_id: event.video_id.clone(),
                predictions: vec![GroundTruthEntry {
                    timestamp_s: event.timestamp_s,
                    reference: event.reference.clone(),
                }],
            }),
        }
    }
    write_atomic(path, |out| {
        for record in &records {
            serde_json::to_writer(&mut *out, record).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// Reads a ground-truth file into a flat event list, file order preserved.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthEvent>> {
    let records = read_records(path, |record: GroundTruthRecord, line_no| {
        let events: Vec<GroundTruthEvent> = record
            .predictions
            .into_iter()
            .map(|entry| GroundTruthEvent {
                video_id: record.video_id.clone(),
                timestamp_s: entry.timestamp_s,
                reference: entry.reference,
            })
            .collect();
        for event in &events {
            event.validate().map_err(|e| Error::Ingest {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(events)
    })?;
    Ok(records.into_iter().flatten().collect())
}

fn read_records<T, R>(path: &Path, mut convert: impl FnMut(T, u64) -> Result<R>) -> Result<Vec<R>>
where
    T: for<'de> Deserialize<'de>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(trimmed).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("malformed record: {e}"),
        })?;
        out.push(convert(record, line_no)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct SoccernetRecord<'a> {
    video_id: &'a str,
    predictions: Vec<SoccernetEntry<'a>>,
}

#[derive(Serialize)]
struct SoccernetEntry<'a> {
    #[serde(rename = "gameTime")]
    game_time: String,
    caption: &'a str,
    confidence: f64,
}

/// Exports timelines with timestamps rendered as `"half - mm:ss"` game-time
/// strings. `half_boundary_s` is where the second half starts.
pub fn export_soccernet(
    preds: &[TimelinePrediction],
    path: &Path,
    half_boundary_s: f64,
) -> Result<()> {
    if !(half_boundary_s.is_finite() && half_boundary_s > 0.0) {
        return Err(Error::Argument(format!(
            "half boundary must be > 0, got {half_boundary_s}"
        )));
    }
    write_atomic(path, |out| {
        for pred in preds {
            let record = SoccernetRecord {
                video_id: &pred.video_id,
                predictions: pred
                    .events
                    .iter()
                    .map(|event| SoccernetEntry {
                        game_time: game_time(event.timestamp_s, half_boundary_s),
                        caption: &event.caption,
                        confidence: event.confidence,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut *out, &record).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// `"1 - 05:30"`-style game time. Seconds past the boundary fall in half 2.
pub fn game_time(timestamp_s: f64, half_boundary_s: f64) -> String {
    let (half, offset) = if timestamp_s < half_boundary_s {
        (1, timestamp_s)
    } else {
        (2, timestamp_s - half_boundary_s)
    };
    let total = offset.floor() as u64;
    format!("{} - {:02}:{:02}", half, total / 60, total % 60)
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|e| Error::io(path, e))?;
    fill(tmp.as_file_mut())?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
