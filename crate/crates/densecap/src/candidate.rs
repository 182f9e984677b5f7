//! Core domain types: caption candidates, timelines, and ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model's caption proposal at one timestamp.
///
/// `background_scores`, when present, carries the per-filter-model scores
/// consumed by background fusion; its length must match the configured
/// filter-model count (default 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionCandidate {
    pub video_id: String,
    pub model_id: String,
    pub timestamp_s: f64,
    pub caption: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_scores: Option<Vec<f64>>,
}

impl CaptionCandidate {
    /// Checks the type invariants: confidence and background scores in
    /// [0, 1], non-negative finite timestamp, non-empty caption.
    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp_s.is_finite() && self.timestamp_s >= 0.0) {
            return Err(Error::Validation(format!(
                "candidate ({}, {}): timestamp_s must be a non-negative finite number, got {}",
                self.video_id, self.model_id, self.timestamp_s
            )));
        }
        if !unit_interval(self.confidence) {
            return Err(Error::Validation(format!(
                "candidate ({}, {}) at t={}: confidence must be in [0, 1], got {}",
                self.video_id, self.model_id, self.timestamp_s, self.confidence
            )));
        }
        if self.caption.trim().is_empty() {
            return Err(Error::Validation(format!(
                "candidate ({}, {}) at t={}: caption is empty",
                self.video_id, self.model_id, self.timestamp_s
            )));
        }
        if let Some(scores) = &self.background_scores {
            if let Some(bad) = scores.iter().find(|s| !unit_interval(**s)) {
                return Err(Error::Validation(format!(
                    "candidate ({}, {}) at t={}: background score {} outside [0, 1]",
                    self.video_id, self.model_id, self.timestamp_s, bad
                )));
            }
        }
        Ok(())
    }

    /// Short "video/model@t" tag used in error and warning messages.
    pub fn describe(&self) -> String {
        format!("{}/{}@{}", self.video_id, self.model_id, self.timestamp_s)
    }
}

/// One event of a final timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub timestamp_s: f64,
    pub caption: String,
    pub confidence: f64,
}

/// Final per-video ordered list of captioned events.
///
/// Timestamps are strictly increasing; construction enforces this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePrediction {
    pub video_id: String,
    pub events: Vec<TimelineEvent>,
}

impl TimelinePrediction {
    /// Builds a timeline, rejecting out-of-order timestamps or confidences
    /// outside [0, 1].
    pub fn new(video_id: impl Into<String>, events: Vec<TimelineEvent>) -> Result<Self> {
        let pred = TimelinePrediction {
            video_id: video_id.into(),
            events,
        };
        pred.validate()?;
        Ok(pred)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.events.windows(2) {
            if pair[1].timestamp_s <= pair[0].timestamp_s {
                return Err(Error::Precondition(format!(
                    "timeline {}: timestamps must be strictly increasing, got {} then {}",
                    self.video_id, pair[0].timestamp_s, pair[1].timestamp_s
                )));
            }
        }
        for event in &self.events {
            if !(event.timestamp_s.is_finite() && event.timestamp_s >= 0.0) {
                return Err(Error::Validation(format!(
                    "timeline {}: timestamp_s must be a non-negative finite number, got {}",
                    self.video_id, event.timestamp_s
                )));
            }
            if !unit_interval(event.confidence) {
                return Err(Error::Validation(format!(
                    "timeline {} at t={}: confidence must be in [0, 1], got {}",
                    self.video_id, event.timestamp_s, event.confidence
                )));
            }
        }
        Ok(())
    }
}

/// Annotated (timestamp, reference caption) pair used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub video_id: String,
    pub timestamp_s: f64,
    pub reference: String,
}

impl GroundTruthEvent {
    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp_s.is_finite() && self.timestamp_s >= 0.0) {
            return Err(Error::Validation(format!(
                "ground truth {}: timestamp_s must be a non-negative finite number, got {}",
                self.video_id, self.timestamp_s
            )));
        }
        if self.reference.trim().is_empty() {
            return Err(Error::Validation(format!(
                "ground truth {} at t={}: reference is empty",
                self.video_id, self.timestamp_s
            )));
        }
        Ok(())
    }
}

pub(crate) fn unit_interval(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}
