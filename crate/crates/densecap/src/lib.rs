//! Post-processing toolkit for dense video captioning timelines.
//!
//! Captioning models emit per-timestamp candidates with confidences; this
//! crate turns those raw streams into a clean, evaluated event timeline:
//!
//! * [`localize`] — window anchors, central de-duplication, confidence and
//!   fused-background filtering of one model's stream.
//! * [`ensemble`] — cross-model timestamp grouping with per-model weighted
//!   top-1 selection, plus [`grid`] for searching the weights.
//! * [`llm`] — optional caption merging through an external
//!   text-generation service, falling back to top-1 on any failure.
//! * [`metrics`] — tolerance-based temporal alignment and the CIDEr-D /
//!   METEOR-s caption scores behind [`metrics::evaluate`].
//! * [`pipeline`] — the end-to-end deterministic orchestrator used by the
//!   `densecap` binary.
//!
//! The accompanying book (`book/`) walks through each stage; its code
//! snippets compile and run as doc-tests of this crate.

pub mod candidate;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod io;
pub mod llm;
pub mod localize;
pub mod metrics;
mod normalize;
pub mod pipeline;

pub use candidate::{CaptionCandidate, GroundTruthEvent, TimelineEvent, TimelinePrediction};
pub use config::{DedupMode, PipelineConfig, RunTiebreak};
pub use ensemble::{EnsembleWeights, TimestampGroup};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use normalize::normalize_caption;

// The book's code blocks double as tests; each chapter becomes one doctest
// item here so `cargo test --doc` keeps the book honest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/formats.md")]
    pub struct Formats;
    #[doc = include_str!("../../../book/src/localization.md")]
    pub struct Localization;
    #[doc = include_str!("../../../book/src/ensembling.md")]
    pub struct Ensembling;
    #[doc = include_str!("../../../book/src/merging.md")]
    pub struct Merging;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct CliGuide;
}
