//! Pipeline configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidate::unit_interval;
use crate::error::{Error, Result};

/// Caption equivalence used by de-duplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DedupMode {
    /// Exact string equality.
    Exact,
    /// Equality of normalized token sequences (case/punctuation-insensitive).
    #[default]
    Normalized,
}

impl FromStr for DedupMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(DedupMode::Exact),
            "normalized" => Ok(DedupMode::Normalized),
            other => Err(Error::Argument(format!(
                "unknown dedup mode '{other}' (expected 'exact' or 'normalized')"
            ))),
        }
    }
}

impl fmt::Display for DedupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DedupMode::Exact => f.write_str("exact"),
            DedupMode::Normalized => f.write_str("normalized"),
        }
    }
}

/// Which of the two central elements represents an even-length duplicate run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RunTiebreak {
    #[default]
    Earlier,
    Later,
}

impl FromStr for RunTiebreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "earlier" => Ok(RunTiebreak::Earlier),
            "later" => Ok(RunTiebreak::Later),
            other => Err(Error::Argument(format!(
                "unknown tiebreak '{other}' (expected 'earlier' or 'later')"
            ))),
        }
    }
}

impl fmt::Display for RunTiebreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunTiebreak::Earlier => f.write_str("earlier"),
            RunTiebreak::Later => f.write_str("later"),
        }
    }
}

/// All knobs of the post-processing pipeline.
///
/// Defaults follow the reference setup: one 32 s window at 1 s stride,
/// normalized de-duplication with the earlier middle on even runs,
/// background threshold 0.875 fused with equal weights over three filter
/// models, and a 30 s evaluation matching tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_window_sizes")]
    pub window_sizes_s: Vec<f64>,
    #[serde(default = "default_window_stride")]
    pub window_stride_s: f64,
    #[serde(default)]
    pub dedup_mode: DedupMode,
    /// Minimum caption confidence kept by the confidence filter. 0 keeps all.
    #[serde(default)]
    pub confidence_threshold: f64,
    /// Minimum fused background score kept by the background filter.
    /// 0 disables the stage.
    #[serde(default = "default_background_threshold")]
    pub background_threshold: f64,
    #[serde(default = "default_background_weights")]
    pub background_weights: Vec<f64>,
    /// Per-model confidence multipliers. Models absent from the map get the
    /// anchor weight 1.0.
    #[serde(default)]
    pub ensemble_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub even_run_tiebreak: RunTiebreak,
    /// Cross-model timestamp clustering tolerance for the ensemble stage.
    #[serde(default)]
    pub grouping_tolerance_s: f64,
    /// Prediction-to-reference matching tolerance for evaluation.
    #[serde(default = "default_matching_tolerance")]
    pub matching_tolerance_s: f64,
}

fn default_window_sizes() -> Vec<f64> {
    vec![32.0]
}

fn default_window_stride() -> f64 {
    1.0
}

fn default_background_threshold() -> f64 {
    0.875
}

fn default_background_weights() -> Vec<f64> {
    vec![1.0, 1.0, 1.0]
}

fn default_matching_tolerance() -> f64 {
    30.0
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_sizes_s: default_window_sizes(),
            window_stride_s: default_window_stride(),
            dedup_mode: DedupMode::default(),
            confidence_threshold: 0.0,
            background_threshold: default_background_threshold(),
            background_weights: default_background_weights(),
            ensemble_weights: BTreeMap::new(),
            even_run_tiebreak: RunTiebreak::default(),
            grouping_tolerance_s: 0.0,
            matching_tolerance_s: default_matching_tolerance(),
        }
    }
}

impl PipelineConfig {
    /// Checks the invariants: thresholds in [0, 1], weights, window sizes,
    /// stride, and tolerances positive where required.
    pub fn validate(&self) -> Result<()> {
        if self.window_sizes_s.is_empty() {
            return Err(Error::Config("window_sizes_s must not be empty".into()));
        }
        for w in &self.window_sizes_s {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Config(format!("window size must be > 0, got {w}")));
            }
        }
        if !(self.window_stride_s.is_finite() && self.window_stride_s > 0.0) {
            return Err(Error::Config(format!(
                "window_stride_s must be > 0, got {}",
                self.window_stride_s
            )));
        }
        if !unit_interval(self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence_threshold must be in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        if !unit_interval(self.background_threshold) {
            return Err(Error::Config(format!(
                "background_threshold must be in [0, 1], got {}",
                self.background_threshold
            )));
        }
        if self.background_weights.is_empty() {
            return Err(Error::Config("background_weights must not be empty".into()));
        }
        for w in &self.background_weights {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Config(format!(
                    "background weight must be > 0, got {w}"
                )));
            }
        }
        for (model, w) in &self.ensemble_weights {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Config(format!(
                    "ensemble weight for '{model}' must be > 0, got {w}"
                )));
            }
        }
        if !(self.grouping_tolerance_s.is_finite() && self.grouping_tolerance_s >= 0.0) {
            return Err(Error::Config(format!(
                "grouping_tolerance_s must be >= 0, got {}",
                self.grouping_tolerance_s
            )));
        }
        if !(self.matching_tolerance_s.is_finite() && self.matching_tolerance_s > 0.0) {
            return Err(Error::Config(format!(
                "matching_tolerance_s must be > 0, got {}",
                self.matching_tolerance_s
            )));
        }
        Ok(())
    }
}
