//! Unigram-alignment caption score with a fragmentation penalty.
//!
//! This is the two-stage variant ("METEOR-s" in reports): exact token
//! matches first, then stem-equivalence matches among the leftovers —
//! no synonym stage, so scoring is deterministic and self-contained.
//! With m matches over c candidate and r reference tokens forming ch
//! contiguous chunks:
//!
//! ```text
//! P = m / c,  R = m / r,  F = 10 P R / (R + 9 P)
//! penalty = 0.5 (ch / m)^3,  score = F (1 - penalty)
//! ```

use crate::error::{Error, Result};

use super::stem::stem;

/// Scores a candidate against references, taking the best per-reference
/// score. No unigram matches (or an empty candidate) scores 0.
pub fn meteor_score(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Argument(
            "meteor needs at least one reference".into(),
        ));
    }
    Ok(references
        .iter()
        .map(|reference| single_reference(candidate, reference))
        .fold(0.0, f64::max))
}

fn single_reference(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = align_unigrams(candidate, reference);
    let matches = pairs.len();
    if matches == 0 {
        return 0.0;
    }
    let chunks = count_chunks(&pairs);
    let precision = matches as f64 / candidate.len() as f64;
    let recall = matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// One-to-one unigram alignment, `(candidate index, reference index)` pairs
/// sorted by candidate index. Stage 1 pairs exactly equal tokens, stage 2
/// pairs stem-equal leftovers; both scan left to right taking the leftmost
/// free partner, which attains the maximum match count for equivalence-
/// class edges.
fn align_unigrams(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut cand_match: Vec<Option<usize>> = vec![None; candidate.len()];
    let mut ref_taken = vec![false; reference.len()];

    stage(
        candidate,
        reference,
        &mut cand_match,
        &mut ref_taken,
        |a, b| a == b,
    );
    let cand_stems: Vec<String> = candidate.iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|t| stem(t)).collect();
    stage(
        &cand_stems,
        &ref_stems,
        &mut cand_match,
        &mut ref_taken,
        |a, b| a == b,
    );

    cand_match
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (i, j)))
        .collect()
}

fn stage(
    candidate: &[String],
    reference: &[String],
    cand_match: &mut [Option<usize>],
    ref_taken: &mut [bool],
    equivalent: impl Fn(&str, &str) -> bool,
) {
    for (i, token) in candidate.iter().enumerate() {
        if cand_match[i].is_some() {
            continue;
        }
        for (j, other) in reference.iter().enumerate() {
            if !ref_taken[j] && equivalent(token, other) {
                cand_match[i] = Some(j);
                ref_taken[j] = true;
                break;
            }
        }
    }
}

/// Number of maximal runs of pairs adjacent in both sentences.
fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        if prev != Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    chunks
}
