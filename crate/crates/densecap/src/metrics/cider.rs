//! Consensus-based caption score over TF-IDF weighted n-grams (the "-D"
//! variant: count clipping plus a Gaussian length penalty).
//!
//! For n = 1..4 each sentence becomes a vector g_n with
//! `g_n[w] = tf(w) * (ln N - ln max(1, df(w)))`, where df counts the
//! instances whose reference set contains w. The per-reference score is
//!
//! ```text
//! sim_n(c, r) = exp(-(len_c - len_r)^2 / (2 * 6^2))
//!             * sum_w min(g_n(c)[w], g_n(r)[w]) * g_n(r)[w]
//!             / (|g_n(c)| * |g_n(r)|)
//! ```
//!
//! (0 when either norm vanishes), and an instance scores
//! `10 * mean_n mean_r sim_n(c, r)`.

use std::collections::HashMap;

use crate::error::{Error, Result};

const MAX_NGRAM: usize = 4;
const LENGTH_SIGMA: f64 = 6.0;

type NGram = Vec<String>;

/// Corpus n-gram statistics backing the IDF table.
#[derive(Debug, Clone, Default)]
pub struct NGramStats {
    /// Total occurrences of each n-gram across the reference corpus.
    pub counts: HashMap<NGram, u64>,
    /// Number of instances whose reference set contains the n-gram.
    pub document_frequency: HashMap<NGram, u64>,
    /// Number of instances.
    pub corpus_size: usize,
}

impl NGramStats {
    /// Builds the table in one pass; each instance's reference set is one
    /// document.
    pub fn from_references(references: &[Vec<Vec<String>>]) -> Self {
        let mut stats = NGramStats {
            corpus_size: references.len(),
            ..NGramStats::default()
        };
        for refs in references {
            let mut seen: HashMap<NGram, ()> = HashMap::new();
            for reference in refs {
                for n in 1..=MAX_NGRAM {
                    for gram in ngrams(reference, n) {
                        *stats.counts.entry(gram.clone()).or_insert(0) += 1;
                        seen.entry(gram).or_insert(());
                    }
                }
            }
            for (gram, ()) in seen {
                *stats.document_frequency.entry(gram).or_insert(0) += 1;
            }
        }
        stats
    }

    fn idf(&self, gram: &[String]) -> f64 {
        let df = self
            .document_frequency
            .get(gram)
            .copied()
            .unwrap_or(0)
            .max(1) as f64;
        (self.corpus_size as f64).ln() - df.ln()
    }
}

/// A fitted scorer: the IDF table is built once over the reference corpus
/// and shared by all instance scores.
#[derive(Debug, Clone)]
pub struct CiderScorer {
    stats: NGramStats,
}

impl CiderScorer {
    pub fn fit(references: &[Vec<Vec<String>>]) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Argument("cider corpus is empty".into()));
        }
        if references.iter().any(|refs| refs.is_empty()) {
            return Err(Error::Argument(
                "every cider instance needs at least one reference".into(),
            ));
        }
        Ok(CiderScorer {
            stats: NGramStats::from_references(references),
        })
    }

    pub fn stats(&self) -> &NGramStats {
        &self.stats
    }

    /// Scores one candidate against its references; in [0, 10].
    pub fn instance_score(&self, candidate: &[String], references: &[Vec<String>]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let cand_vecs = self.tfidf_vectors(candidate);
        let mut total = 0.0;
        for reference in references {
            let ref_vecs = self.tfidf_vectors(reference);
            let delta = candidate.len() as f64 - reference.len() as f64;
            let gaussian = (-delta * delta / (2.0 * LENGTH_SIGMA * LENGTH_SIGMA)).exp();
            let mut per_ref = 0.0;
            for n in 0..MAX_NGRAM {
                per_ref += gaussian * clipped_cosine(&cand_vecs[n], &ref_vecs[n]);
            }
            total += per_ref / MAX_NGRAM as f64;
        }
        10.0 * total / references.len() as f64
    }

    fn tfidf_vectors(&self, tokens: &[String]) -> Vec<HashMap<NGram, f64>> {
        (1..=MAX_NGRAM)
            .map(|n| {
                let mut vec: HashMap<NGram, f64> = HashMap::new();
                for gram in ngrams(tokens, n) {
                    *vec.entry(gram).or_insert(0.0) += 1.0;
                }
                for (gram, value) in vec.iter_mut() {
                    *value *= self.stats.idf(gram);
                }
                vec
            })
            .collect()
    }
}

/// Count-clipped TF-IDF cosine, 0 when either vector is zero.
fn clipped_cosine(cand: &HashMap<NGram, f64>, reference: &HashMap<NGram, f64>) -> f64 {
    let norm_c = norm(cand);
    let norm_r = norm(reference);
    if norm_c == 0.0 || norm_r == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for (gram, r_value) in reference {
        let c_value = cand.get(gram).copied().unwrap_or(0.0);
        dot += c_value.min(*r_value) * r_value;
    }
    dot / (norm_c * norm_r)
}

fn norm(vec: &HashMap<NGram, f64>) -> f64 {
    vec.values().map(|v| v * v).sum::<f64>().sqrt()
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = NGram> + '_ {
    tokens.windows(n).map(|w| w.to_vec())
}

/// Corpus-level score: the mean instance score with the IDF table fitted on
/// the given references.
pub fn cider_score(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Argument("cider corpus is empty".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Argument(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let scorer = CiderScorer::fit(references)?;
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(candidate, refs)| scorer.instance_score(candidate, refs))
        .sum();
    Ok(total / candidates.len() as f64)
}
