//! Cross-model fusion: timestamp grouping, confidence reweighting, and
//! top-1 selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::candidate::{CaptionCandidate, TimelineEvent, TimelinePrediction};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Per-model positive multipliers applied to confidences before top-1
/// selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub weights: BTreeMap<String, f64>,
}

impl EnsembleWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("ensemble weights are empty".into()));
        }
        for (model, w) in &weights {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Config(format!(
                    "ensemble weight for '{model}' must be > 0, got {w}"
                )));
            }
        }
        Ok(EnsembleWeights { weights })
    }

    /// Builds the weight map for a set of models from configured overrides.
    /// Models with no configured weight get the anchor weight 1.0.
    pub fn for_models<'a>(
        configured: &BTreeMap<String, f64>,
        models: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for model in models {
            let w = configured.get(model).copied().unwrap_or(1.0);
            weights.insert(model.to_string(), w);
        }
        EnsembleWeights::new(weights)
    }

    pub fn get(&self, model_id: &str) -> Option<f64> {
        self.weights.get(model_id).copied()
    }
}

/// One model's entry inside a timestamp group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEntry {
    pub model_id: String,
    pub caption: String,
    pub confidence: f64,
}

/// Candidates from different models clustered onto one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampGroup {
    pub video_id: String,
    /// Timestamp of the earliest member (the cluster anchor).
    pub timestamp_s: f64,
    /// At most one entry per model, sorted by model id.
    pub entries: Vec<GroupEntry>,
}

/// A same-model collision inside one group; the lower-confidence entry was
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingWarning {
    pub video_id: String,
    pub model_id: String,
    pub group_timestamp_s: f64,
    pub dropped_caption: String,
    pub dropped_confidence: f64,
}

/// Greedy left-to-right clustering of per-model streams.
///
/// Candidates join the open group while their timestamp is within
/// `tolerance_s` of the group anchor (its earliest member); otherwise a new
/// group starts. Two candidates from the same model in one group keep the
/// higher-confidence one and record a [`GroupingWarning`].
pub fn group_by_timestamp(
    streams: &[Vec<CaptionCandidate>],
    tolerance_s: f64,
) -> Result<(Vec<TimestampGroup>, Vec<GroupingWarning>)> {
    if !(tolerance_s.is_finite() && tolerance_s >= 0.0) {
        return Err(Error::Argument(format!(
            "grouping tolerance must be >= 0, got {tolerance_s}"
        )));
    }
    let mut merged: Vec<&CaptionCandidate> = Vec::new();
    for stream in streams {
        for pair in stream.windows(2) {
            if pair[1].timestamp_s < pair[0].timestamp_s {
                return Err(Error::Precondition(format!(
                    "stream for model '{}' not sorted by timestamp",
                    pair[0].model_id
                )));
            }
        }
        merged.extend(stream.iter());
    }
    if let Some(first) = merged.first() {
        if let Some(other) = merged.iter().find(|c| c.video_id != first.video_id) {
            return Err(Error::Precondition(format!(
                "grouping mixes videos '{}' and '{}'",
                first.video_id, other.video_id
            )));
        }
    }
    merged.sort_by(|a, b| {
        a.timestamp_s
            .total_cmp(&b.timestamp_s)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });

    let mut groups: Vec<TimestampGroup> = Vec::new();
    let mut warnings = Vec::new();
    for candidate in merged {
        let start_new = match groups.last() {
            Some(group) => candidate.timestamp_s - group.timestamp_s > tolerance_s,
            None => true,
        };
        if start_new {
            groups.push(TimestampGroup {
                video_id: candidate.video_id.clone(),
                timestamp_s: candidate.timestamp_s,
                entries: Vec::new(),
            });
        }
        let group = groups.last_mut().expect("group exists");
        match group
            .entries
            .iter_mut()
            .find(|e| e.model_id == candidate.model_id)
        {
            Some(existing) => {
                // Same model twice in one cluster: keep the stronger one.
                if candidate.confidence > existing.confidence {
                    warnings.push(GroupingWarning {
                        video_id: group.video_id.clone(),
                        model_id: existing.model_id.clone(),
                        group_timestamp_s: group.timestamp_s,
                        dropped_caption: existing.caption.clone(),
                        dropped_confidence: existing.confidence,
                    });
                    existing.caption = candidate.caption.clone();
                    existing.confidence = candidate.confidence;
                } else {
                    warnings.push(GroupingWarning {
                        video_id: group.video_id.clone(),
                        model_id: candidate.model_id.clone(),
                        group_timestamp_s: group.timestamp_s,
                        dropped_caption: candidate.caption.clone(),
                        dropped_confidence: candidate.confidence,
                    });
                }
            }
            None => group.entries.push(GroupEntry {
                model_id: candidate.model_id.clone(),
                caption: candidate.caption.clone(),
                confidence: candidate.confidence,
            }),
        }
    }
    for group in &mut groups {
        group.entries.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    }
    Ok((groups, warnings))
}

/// The group winner: model id, caption, and its weighted score.
#[derive(Debug, Clone, PartialEq)]
pub struct Top1Selection {
    pub model_id: String,
    pub caption: String,
    pub weighted_score: f64,
}

/// Picks the entry maximizing `confidence * weight[model]`. Ties go to the
/// lexicographically smallest model id.
pub fn select_top1(group: &TimestampGroup, weights: &EnsembleWeights) -> Result<Top1Selection> {
    if group.entries.is_empty() {
        return Err(Error::Argument(format!(
            "empty timestamp group at t={} in '{}'",
            group.timestamp_s, group.video_id
        )));
    }
    let mut best: Option<(&GroupEntry, f64)> = None;
    for entry in &group.entries {
        let weight = weights.get(&entry.model_id).ok_or_else(|| {
            Error::Config(format!(
                "no ensemble weight configured for model '{}'",
                entry.model_id
            ))
        })?;
        let score = entry.confidence * weight;
        let better = match best {
            None => true,
            Some((best_entry, best_score)) => {
                score > best_score || (score == best_score && entry.model_id < best_entry.model_id)
            }
        };
        if better {
            best = Some((entry, score));
        }
    }
    let (entry, score) = best.expect("non-empty group");
    Ok(Top1Selection {
        model_id: entry.model_id.clone(),
        caption: entry.caption.clone(),
        weighted_score: score,
    })
}

/// Fuses cleaned per-model streams of one video into a single timeline:
/// group by timestamp, then keep each group's top-1 weighted caption. Event
/// confidence is the winning weighted score clamped to [0, 1].
pub fn ensemble_timelines(
    streams: &[Vec<CaptionCandidate>],
    weights: &EnsembleWeights,
    cfg: &PipelineConfig,
) -> Result<TimelinePrediction> {
    let video_id = streams
        .iter()
        .flatten()
        .next()
        .map(|c| c.video_id.clone())
        .unwrap_or_default();
    let (groups, _warnings) = group_by_timestamp(streams, cfg.grouping_tolerance_s)?;
    let mut events = Vec::with_capacity(groups.len());
    for group in &groups {
        let winner = select_top1(group, weights)?;
        events.push(TimelineEvent {
            timestamp_s: group.timestamp_s,
            caption: winner.caption,
            confidence: winner.weighted_score.clamp(0.0, 1.0),
        });
    }
    TimelinePrediction::new(video_id, events)
}
