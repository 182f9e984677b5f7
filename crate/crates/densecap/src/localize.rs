//! Single-model timeline cleanup: window anchors, central de-duplication,
//! confidence-threshold filtering, and background-score fusion + filtering.

use crate::candidate::{unit_interval, CaptionCandidate};
use crate::config::{DedupMode, PipelineConfig, RunTiebreak};
use crate::error::{Error, Result};
use crate::normalize::normalize_caption;

/// A sliding-window anchor: a window of `size_s` seconds centered on
/// `center_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAnchor {
    pub video_id: String,
    pub center_s: f64,
    pub size_s: f64,
}

/// Enumerates window centers for every configured size.
///
/// For a size `w`, centers run `w/2, w/2 + stride, ...` while the window
/// still fits (`center + w/2 <= duration`). Output is ordered by
/// (size, center).
pub fn generate_anchors(
    video_id: &str,
    video_duration_s: f64,
    cfg: &PipelineConfig,
) -> Result<Vec<WindowAnchor>> {
    if !(video_duration_s.is_finite() && video_duration_s > 0.0) {
        return Err(Error::Argument(format!(
            "video duration must be > 0, got {video_duration_s}"
        )));
    }
    cfg.validate()?;

    // output is ordered by (size, center) regardless of config order
    let mut sizes = cfg.window_sizes_s.clone();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();

    let mut anchors = Vec::new();
    for size in sizes {
        let half = size / 2.0;
        let mut step = 0u64;
        loop {
            let center = half + step as f64 * cfg.window_stride_s;
            if center + half > video_duration_s {
                break;
            }
            anchors.push(WindowAnchor {
                video_id: video_id.to_string(),
                center_s: center,
                size_s: size,
            });
            step += 1;
        }
    }
    Ok(anchors)
}

/// A maximal contiguous run of caption-equivalent candidates, and which
/// member represents it.
#[derive(Debug, Clone)]
pub struct DuplicateRun {
    pub candidates: Vec<CaptionCandidate>,
    pub representative_index: usize,
}

impl DuplicateRun {
    fn new(candidates: Vec<CaptionCandidate>, tiebreak: RunTiebreak) -> Self {
        let representative_index = middle_index(candidates.len(), tiebreak);
        DuplicateRun {
            candidates,
            representative_index,
        }
    }

    pub fn representative(&self) -> &CaptionCandidate {
        &self.candidates[self.representative_index]
    }
}

/// Index of the middle element of a run of length `len`: `floor((len-1)/2)`
/// under the earlier tie-break, `ceil((len-1)/2)` under later. Both agree
/// on odd lengths.
pub fn middle_index(len: usize, tiebreak: RunTiebreak) -> usize {
    debug_assert!(len > 0);
    match tiebreak {
        RunTiebreak::Earlier => (len - 1) / 2,
        RunTiebreak::Later => len / 2,
    }
}

/// Splits one model's sorted stream into maximal contiguous runs of
/// caption-equivalent candidates.
pub fn duplicate_runs(
    stream: &[CaptionCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<DuplicateRun>> {
    check_single_sorted_stream(stream)?;

    let keys: Vec<CaptionKey> = stream
        .iter()
        .map(|c| CaptionKey::new(&c.caption, cfg.dedup_mode))
        .collect();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=stream.len() {
        if i == stream.len() || keys[i] != keys[start] {
            runs.push(DuplicateRun::new(
                stream[start..i].to_vec(),
                cfg.even_run_tiebreak,
            ));
            start = i;
        }
    }
    Ok(runs)
}

/// Collapses each contiguous duplicate run to its middle candidate.
///
/// The representative keeps its own timestamp and confidence; nothing is
/// averaged. Output order follows the input and is duplicate-free for
/// adjacent elements under the same equivalence.
pub fn dedupe_central(
    stream: &[CaptionCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<CaptionCandidate>> {
    Ok(duplicate_runs(stream, cfg)?
        .into_iter()
        .map(|run| run.representative().clone())
        .collect())
}

/// Keeps candidates with `confidence >= threshold`, order preserved.
pub fn filter_confidence(
    stream: &[CaptionCandidate],
    threshold: f64,
) -> Result<Vec<CaptionCandidate>> {
    if !unit_interval(threshold) {
        return Err(Error::Argument(format!(
            "confidence threshold must be in [0, 1], got {threshold}"
        )));
    }
    Ok(stream
        .iter()
        .filter(|c| c.confidence >= threshold)
        .cloned()
        .collect())
}

/// Weighted mean of the filter-model scores: sum(w_i * s_i) / sum(w_i).
pub fn fuse_background(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Argument("no background scores to fuse".into()));
    }
    if scores.len() != weights.len() {
        return Err(Error::Argument(format!(
            "background score/weight length mismatch: {} scores vs {} weights",
            scores.len(),
            weights.len()
        )));
    }
    for w in weights {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::Argument(format!(
                "background weight must be > 0, got {w}"
            )));
        }
    }
    for s in scores {
        if !unit_interval(*s) {
            return Err(Error::Argument(format!(
                "background score must be in [0, 1], got {s}"
            )));
        }
    }
    let total: f64 = weights.iter().sum();
    let dot: f64 = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
    Ok(dot / total)
}

/// Keeps candidates whose fused background score meets
/// `cfg.background_threshold`, order preserved. Every candidate must carry
/// background scores matching the configured weight count.
pub fn filter_background(
    stream: &[CaptionCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<CaptionCandidate>> {
    cfg.validate()?;
    let mut kept = Vec::new();
    for candidate in stream {
        let scores = candidate.background_scores.as_deref().ok_or_else(|| {
            Error::Validation(format!(
                "candidate {} has no background_scores but background filtering is on",
                candidate.describe()
            ))
        })?;
        if scores.len() != cfg.background_weights.len() {
            return Err(Error::Validation(format!(
                "candidate {} has {} background scores, expected {}",
                candidate.describe(),
                scores.len(),
                cfg.background_weights.len()
            )));
        }
        if fuse_background(scores, &cfg.background_weights)? >= cfg.background_threshold {
            kept.push(candidate.clone());
        }
    }
    Ok(kept)
}

/// Caption equivalence key under a dedup mode.
#[derive(PartialEq, Eq)]
enum CaptionKey {
    Exact(String),
    Normalized(Vec<String>),
}

impl CaptionKey {
    fn new(caption: &str, mode: DedupMode) -> Self {
        match mode {
            DedupMode::Exact => CaptionKey::Exact(caption.to_string()),
            DedupMode::Normalized => CaptionKey::Normalized(normalize_caption(caption)),
        }
    }
}

fn check_single_sorted_stream(stream: &[CaptionCandidate]) -> Result<()> {
    for pair in stream.windows(2) {
        if pair[0].video_id != pair[1].video_id || pair[0].model_id != pair[1].model_id {
            return Err(Error::Precondition(format!(
                "stream mixes ({}, {}) with ({}, {}); de-duplication runs per (video, model)",
                pair[0].video_id, pair[0].model_id, pair[1].video_id, pair[1].model_id
            )));
        }
        if pair[1].timestamp_s < pair[0].timestamp_s {
            return Err(Error::Precondition(format!(
                "stream not sorted by timestamp: {} after {}",
                pair[1].timestamp_s, pair[0].timestamp_s
            )));
        }
    }
    Ok(())
}
