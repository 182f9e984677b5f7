//! Exhaustive grid search over per-model ensemble weights.
//!
//! Every point of the Cartesian product is evaluated against ground truth;
//! the trace doubles as an audit log. Grids at the intended scale stay
//! small, so no pruning is attempted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidate::{CaptionCandidate, GroundTruthEvent, TimelinePrediction};
use crate::config::PipelineConfig;
use crate::ensemble::{ensemble_timelines, EnsembleWeights};
use crate::error::{Error, Result};
use crate::metrics::evaluate;

/// Which corpus metric the search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Default: weight selection by the highest corpus METEOR.
    #[default]
    Meteor,
    Cider,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meteor" => Ok(Objective::Meteor),
            "cider" => Ok(Objective::Cider),
            other => Err(Error::Argument(format!(
                "unknown objective '{other}' (expected 'meteor' or 'cider')"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Meteor => f.write_str("meteor"),
            Objective::Cider => f.write_str("cider"),
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub weights: EnsembleWeights,
    pub score: f64,
}

/// The argmax and the full audit trace, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub objective: Objective,
    pub best_weights: EnsembleWeights,
    pub best_score: f64,
    pub trace: Vec<TracePoint>,
}

/// Evaluates the full Cartesian product of per-model candidate weights.
///
/// `streams` hold each model's cleaned candidates and may span several
/// videos; grouping and ensembling run per video, then one evaluation
/// against `ground_truth` scores the grid point. Points are enumerated with
/// models in lexicographic order and the last model's values varying
/// fastest; ties keep the first-encountered point.
pub fn grid_search_weights(
    streams: &[Vec<CaptionCandidate>],
    ground_truth: &[GroundTruthEvent],
    grid: &BTreeMap<String, Vec<f64>>,
    objective: Objective,
    cfg: &PipelineConfig,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Argument("weight grid is empty".into()));
    }
    for (model, values) in grid {
        if values.is_empty() {
            return Err(Error::Argument(format!(
                "weight grid for model '{model}' is empty"
            )));
        }
        for value in values {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::Argument(format!(
                    "grid weight for model '{model}' must be > 0, got {value}"
                )));
            }
        }
    }
    for stream in streams {
        if let Some(candidate) = stream.iter().find(|c| !grid.contains_key(&c.model_id)) {
            return Err(Error::Config(format!(
                "model '{}' appears in the streams but not in the grid",
                candidate.model_id
            )));
        }
    }

    let per_video = split_by_video(streams);
    let combos = enumerate(grid);
    let points: Vec<TracePoint> = combos
        .into_par_iter()
        .map(|weights| -> Result<TracePoint> {
            let score = score_weights(&per_video, ground_truth, &weights, objective, cfg)?;
            Ok(TracePoint { weights, score })
        })
        .collect::<Result<_>>()?;

    let mut best_index = 0;
    for (i, point) in points.iter().enumerate() {
        if point.score > points[best_index].score {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        objective,
        best_weights: points[best_index].weights.clone(),
        best_score: points[best_index].score,
        trace: points,
    })
}

/// Ensembles every video under the given weights and evaluates the result.
pub fn score_weights(
    per_video: &BTreeMap<String, Vec<Vec<CaptionCandidate>>>,
    ground_truth: &[GroundTruthEvent],
    weights: &EnsembleWeights,
    objective: Objective,
    cfg: &PipelineConfig,
) -> Result<f64> {
    let preds: Vec<TimelinePrediction> = per_video
        .values()
        .map(|streams| ensemble_timelines(streams, weights, cfg))
        .collect::<Result<_>>()?;
    let report = evaluate(&preds, ground_truth, cfg)?;
    Ok(match objective {
        Objective::Meteor => report.meteor,
        Objective::Cider => report.cider,
    })
}

/// Regroups per-model streams into per-video stream lists.
pub fn split_by_video(
    streams: &[Vec<CaptionCandidate>],
) -> BTreeMap<String, Vec<Vec<CaptionCandidate>>> {
    let mut per_video: BTreeMap<String, BTreeMap<String, Vec<CaptionCandidate>>> = BTreeMap::new();
    for stream in streams {
        for candidate in stream {
            per_video
                .entry(candidate.video_id.clone())
                .or_default()
                .entry(candidate.model_id.clone())
                .or_default()
                .push(candidate.clone());
        }
    }
    per_video
        .into_iter()
        .map(|(video, models)| (video, models.into_values().collect()))
        .collect()
}

/// Cartesian product in lexicographic order: models sorted by id, the last
/// model's values varying fastest.
fn enumerate(grid: &BTreeMap<String, Vec<f64>>) -> Vec<EnsembleWeights> {
    let models: Vec<&String> = grid.keys().collect();
    let mut combos = vec![BTreeMap::new()];
    for model in models {
        let mut next = Vec::with_capacity(combos.len() * grid[model].len());
        for combo in &combos {
            for value in &grid[model] {
                let mut extended: BTreeMap<String, f64> = combo.clone();
                extended.insert(model.clone(), *value);
                next.push(extended);
            }
        }
        combos = next;
    }
    combos
        .into_iter()
        .map(|weights| EnsembleWeights { weights })
        .collect()
}
