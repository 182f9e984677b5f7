//! Temporal matching of predicted events to ground-truth events.

use crate::candidate::{GroundTruthEvent, TimelinePrediction};

/// One-to-one matching between prediction and reference indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchSet {
    /// (prediction index, ground-truth index) pairs, ascending on both sides.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_references: Vec<usize>,
}

impl MatchSet {
    /// pairs + unmatched on both sides: the denominator for corpus metrics.
    pub fn instance_count(&self) -> usize {
        self.pairs.len() + self.unmatched_predictions.len() + self.unmatched_references.len()
    }
}

/// Matches predictions to references whose timestamps differ by at most
/// `tolerance_s`. Both inputs must be sorted by timestamp.
pub fn align(pred: &TimelinePrediction, truth: &[GroundTruthEvent], tolerance_s: f64) -> MatchSet {
    let pred_times: Vec<f64> = pred.events.iter().map(|e| e.timestamp_s).collect();
    let truth_times: Vec<f64> = truth.iter().map(|e| e.timestamp_s).collect();
    align_times(&pred_times, &truth_times, tolerance_s)
}

/// Two-pointer merge over the sorted timestamp sequences: when the front
/// elements are within tolerance they are paired, otherwise the earlier
/// side is declared unmatched and skipped.
///
/// A skipped element can never match later (both sequences only grow), and
/// pairing the two earliest compatible elements is exchange-optimal, so the
/// pairing has maximum cardinality. The rule treats the two sides
/// symmetrically: swapping the inputs mirrors the pair set.
pub fn align_times(pred: &[f64], truth: &[f64], tolerance_s: f64) -> MatchSet {
    debug_assert!(pred.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(truth.windows(2).all(|w| w[0] <= w[1]));

    let mut result = MatchSet::default();
    let mut i = 0;
    let mut j = 0;
    while i < pred.len() && j < truth.len() {
        if (pred[i] - truth[j]).abs() <= tolerance_s {
            result.pairs.push((i, j));
            i += 1;
            j += 1;
        } else if pred[i] < truth[j] {
            result.unmatched_predictions.push(i);
            i += 1;
        } else {
            result.unmatched_references.push(j);
            j += 1;
        }
    }
    result.unmatched_predictions.extend(i..pred.len());
    result.unmatched_references.extend(j..truth.len());
    result
}
