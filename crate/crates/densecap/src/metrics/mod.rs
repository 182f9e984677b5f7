//! Dense-captioning evaluation: temporal alignment, caption scoring,
//! corpus aggregation.
//!
//! Every aligned (prediction, reference) pair is one scored instance.
//! Unmatched predictions and unmatched references also count as instances,
//! scoring 0 — dropping them instead would let an empty prediction set
//! inflate the corpus mean. Corpus values are the instance-weighted mean of
//! the per-video values.

mod align;
mod cider;
mod meteor;
mod stem;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use align::{align, align_times, MatchSet};
pub use cider::{cider_score, CiderScorer, NGramStats};
pub use meteor::meteor_score;
pub use stem::stem;

use crate::candidate::{GroundTruthEvent, TimelinePrediction};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::normalize::normalize_caption;

/// Per-video evaluation breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoEval {
    pub cider: f64,
    pub meteor: f64,
    pub matched: usize,
    pub predictions: usize,
    pub references: usize,
    /// matched / predictions (0 when there are no predictions).
    pub precision: f64,
    /// matched / references (0 when there are no references).
    pub recall: f64,
}

impl VideoEval {
    fn instance_count(&self) -> usize {
        // matched pairs + unmatched on both sides
        self.predictions + self.references - self.matched
    }
}

/// Corpus-level evaluation with per-video breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cider: f64,
    pub meteor: f64,
    pub per_video: BTreeMap<String, VideoEval>,
    pub config_echo: PipelineConfig,
}

/// Evaluates predictions against ground truth.
///
/// Videos present on either side form the evaluation universe; the side
/// missing a video contributes nothing but unmatched instances. At least
/// one video must appear on both sides. The CIDEr IDF table is fitted on
/// all ground-truth references before scoring.
pub fn evaluate(
    preds: &[TimelinePrediction],
    truth: &[GroundTruthEvent],
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    for pred in preds {
        pred.validate()?;
    }
    for event in truth {
        event.validate()?;
    }

    let mut pred_by_video: BTreeMap<&str, &TimelinePrediction> = BTreeMap::new();
    for pred in preds {
        if pred_by_video.insert(&pred.video_id, pred).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction entry for video '{}'",
                pred.video_id
            )));
        }
    }
    let mut truth_by_video: BTreeMap<&str, Vec<&GroundTruthEvent>> = BTreeMap::new();
    for event in truth {
        truth_by_video
            .entry(&event.video_id)
            .or_default()
            .push(event);
    }
    for events in truth_by_video.values_mut() {
        events.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    }

    if !pred_by_video
        .keys()
        .any(|video| truth_by_video.contains_key(video))
    {
        return Err(Error::Argument(
            "prediction and ground-truth video sets do not overlap".into(),
        ));
    }

    let reference_corpus: Vec<Vec<Vec<String>>> = truth
        .iter()
        .map(|event| vec![normalize_caption(&event.reference)])
        .collect();
    let scorer = if reference_corpus.is_empty() {
        None
    } else {
        Some(CiderScorer::fit(&reference_corpus)?)
    };

    let mut videos: Vec<&str> = pred_by_video
        .keys()
        .chain(truth_by_video.keys())
        .copied()
        .collect();
    videos.sort_unstable();
    videos.dedup();

    let per_video: Vec<(String, VideoEval)> = videos
        .par_iter()
        .map(|video| {
            let empty = TimelinePrediction {
                video_id: video.to_string(),
                events: Vec::new(),
            };
            let pred = pred_by_video.get(video).copied().unwrap_or(&empty);
            let refs = truth_by_video.get(video).map(Vec::as_slice).unwrap_or(&[]);
            (
                video.to_string(),
                evaluate_video(pred, refs, scorer.as_ref(), cfg.matching_tolerance_s),
            )
        })
        .collect();

    let mut report = EvalReport {
        cider: 0.0,
        meteor: 0.0,
        per_video: BTreeMap::new(),
        config_echo: cfg.clone(),
    };
    let mut instances = 0usize;
    let mut cider_sum = 0.0;
    let mut meteor_sum = 0.0;
    for (video, eval) in per_video {
        let count = eval.instance_count();
        instances += count;
        cider_sum += eval.cider * count as f64;
        meteor_sum += eval.meteor * count as f64;
        report.per_video.insert(video, eval);
    }
    if instances > 0 {
        report.cider = cider_sum / instances as f64;
        report.meteor = meteor_sum / instances as f64;
    }
    Ok(report)
}

fn evaluate_video(
    pred: &TimelinePrediction,
    refs: &[&GroundTruthEvent],
    scorer: Option<&CiderScorer>,
    tolerance_s: f64,
) -> VideoEval {
    let ref_times: Vec<f64> = refs.iter().map(|r| r.timestamp_s).collect();
    let pred_times: Vec<f64> = pred.events.iter().map(|e| e.timestamp_s).collect();
    let matches = align_times(&pred_times, &ref_times, tolerance_s);

    let mut cider_sum = 0.0;
    let mut meteor_sum = 0.0;
    for (pi, ri) in &matches.pairs {
        let candidate = normalize_caption(&pred.events[*pi].caption);
        let reference = vec![normalize_caption(&refs[*ri].reference)];
        if let Some(scorer) = scorer {
            cider_sum += scorer.instance_score(&candidate, &reference);
        }
        meteor_sum += meteor_score(&candidate, &reference).expect("non-empty reference list");
    }

    let instances = matches.instance_count();
    let matched = matches.pairs.len();
    let (cider, meteor) = if instances > 0 {
        (cider_sum / instances as f64, meteor_sum / instances as f64)
    } else {
        (0.0, 0.0)
    };
    VideoEval {
        cider,
        meteor,
        matched,
        predictions: pred.events.len(),
        references: refs.len(),
        precision: ratio(matched, pred.events.len()),
        recall: ratio(matched, refs.len()),
    }
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Writes the report as pretty JSON.
pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, report).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

/// Writes the per-video breakdown as a flat CSV
/// (video_id, cider, meteor, matched, total).
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "video_id,cider,meteor,matched,total").map_err(|e| Error::io(path, e))?;
        for (video, eval) in &report.per_video {
            writeln!(
                out,
                "{video},{},{},{},{}",
                eval.cider,
                eval.meteor,
                eval.matched,
                eval.instance_count()
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}
