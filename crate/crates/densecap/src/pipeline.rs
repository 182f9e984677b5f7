//! End-to-end orchestration: ingest, clean, ensemble, merge, write,
//! evaluate.
//!
//! Stages run in a fixed order (dedupe, confidence filter, background
//! filter, ensemble, merge, write) and the run is deterministic: identical
//! inputs and config produce byte-identical outputs. Timing lives in its
//! own manifest section so everything else can be compared byte-exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidate::{CaptionCandidate, TimelineEvent, TimelinePrediction};
use crate::config::PipelineConfig;
use crate::ensemble::{group_by_timestamp, select_top1, EnsembleWeights};
use crate::error::{Error, Result};
use crate::io;
use crate::llm::{
    merge_groups, HttpTextGenerationClient, LlmConfig, MergeSettings, PromptTemplate,
    TextGenerationClient,
};
use crate::localize::{dedupe_central, filter_background, filter_confidence};
use crate::metrics::{evaluate, write_report_csv, write_report_json};

pub const SCHEMA_VERSION: u32 = 1;

/// The run configuration file: inputs, outputs, pipeline knobs, optional
/// client section. Relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Candidate files, one or more.
    pub inputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_models: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// When set, an additional game-time export is written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_boundary_s: Option<f64>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        if config.inputs.is_empty() {
            return Err(Error::Config("no input files configured".into()));
        }
        config.pipeline.validate()?;
        if let Some(boundary) = config.half_boundary_s {
            if !(boundary.is_finite() && boundary > 0.0) {
                return Err(Error::Config(format!(
                    "half_boundary_s must be > 0, got {boundary}"
                )));
            }
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for input in &mut config.inputs {
            *input = resolve(base, input);
        }
        if let Some(truth) = &mut config.ground_truth {
            *truth = resolve(base, truth);
        }
        config.output_dir = resolve(base, &config.output_dir);
        if let Some(llm) = &mut config.llm {
            llm.prompt_template = resolve(base, &llm.prompt_template);
        }
        Ok(config)
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Record counts for one (video, model) stream across the filtering stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCounts {
    pub ingested: usize,
    pub after_dedup: usize,
    pub after_confidence: usize,
    pub after_background: usize,
}

/// Group and merge counts for one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoCounts {
    pub groups: usize,
    pub merged_with_llm: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything a run leaves behind besides its outputs. The timing section
/// is the only non-deterministic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_echo: RunConfig,
    pub inputs: Vec<InputDigest>,
    /// Keyed by "video_id/model_id".
    pub streams: BTreeMap<String, StreamCounts>,
    pub videos: BTreeMap<String, VideoCounts>,
    pub totals: StreamCounts,
    pub total_groups: usize,
    pub total_merged_with_llm: usize,
    /// Run log: grouping collisions and merge fallbacks.
    pub warnings: Vec<String>,
    /// Wall time per stage, seconds. Excluded from determinism checks.
    pub timing: BTreeMap<String, f64>,
}

/// Runs the whole pipeline from a config file. Any stage error aborts with
/// a stage-named message and removes outputs written so far.
pub fn run_pipeline(config_path: &Path) -> Result<RunManifest> {
    run_with_config(&RunConfig::load(config_path)?)
}

/// Same as [`run_pipeline`] for an already-loaded (possibly overridden)
/// configuration. Paths must already be resolved.
pub fn run_with_config(config: &RunConfig) -> Result<RunManifest> {
    config.pipeline.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    match run_stages(config, &mut written) {
        Ok(manifest) => Ok(manifest),
        Err(error) => {
            for path in written {
                let _ = fs::remove_file(path);
            }
            Err(error)
        }
    }
}

fn run_stages(config: &RunConfig, written: &mut Vec<PathBuf>) -> Result<RunManifest> {
    let mut timing: BTreeMap<String, f64> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let cfg = &config.pipeline;

    // ── ingest ──────────────────────────────────────────────────────────
    let started = Instant::now();
    let mut digests = Vec::new();
    let mut candidates: Vec<CaptionCandidate> = Vec::new();
    for input in &config.inputs {
        digests.push(InputDigest {
            path: input.clone(),
            sha256: sha256_file(input)?,
        });
        candidates.extend(
            io::ingest_candidates(input, config.expected_models.as_ref())
                .map_err(|e| e.with_stage("ingest"))?,
        );
    }
    let streams = io::group_streams(candidates);
    timing.insert("ingest".into(), started.elapsed().as_secs_f64());

    // ── dedupe + filters ────────────────────────────────────────────────
    let started = Instant::now();
    let mut stream_counts: BTreeMap<String, StreamCounts> = BTreeMap::new();
    let mut cleaned: BTreeMap<(String, String), Vec<CaptionCandidate>> = BTreeMap::new();
    for ((video, model), stream) in streams {
        let ingested = stream.len();
        let deduped = dedupe_central(&stream, cfg).map_err(|e| e.with_stage("dedupe"))?;
        let after_dedup = deduped.len();
        let confident = filter_confidence(&deduped, cfg.confidence_threshold)
            .map_err(|e| e.with_stage("confidence-filter"))?;
        let after_confidence = confident.len();
        let final_stream = if cfg.background_threshold > 0.0 {
            filter_background(&confident, cfg).map_err(|e| e.with_stage("background-filter"))?
        } else {
            confident
        };
        stream_counts.insert(
            format!("{video}/{model}"),
            StreamCounts {
                ingested,
                after_dedup,
                after_confidence,
                after_background: final_stream.len(),
            },
        );
        cleaned.insert((video, model), final_stream);
    }
    timing.insert("filter".into(), started.elapsed().as_secs_f64());

    // ── ensemble + merge ────────────────────────────────────────────────
    let started = Instant::now();
    let client: Option<HttpTextGenerationClient> = match &config.llm {
        Some(llm) => Some(HttpTextGenerationClient::from_config(llm)?),
        None => None,
    };
    let template = match &config.llm {
        Some(llm) => Some(PromptTemplate::from_file(&llm.prompt_template)?),
        None => None,
    };
    let merge_settings = config
        .llm
        .as_ref()
        .map(MergeSettings::from_config)
        .unwrap_or_default();

    let mut per_video: BTreeMap<String, Vec<Vec<CaptionCandidate>>> = BTreeMap::new();
    for ((video, _), stream) in cleaned {
        per_video.entry(video).or_default().push(stream);
    }

    let mut predictions: Vec<TimelinePrediction> = Vec::new();
    let mut video_counts: BTreeMap<String, VideoCounts> = BTreeMap::new();
    for (video, streams) in &per_video {
        let models: BTreeSet<&str> = streams
            .iter()
            .flatten()
            .map(|c| c.model_id.as_str())
            .collect();
        if models.is_empty() {
            predictions.push(TimelinePrediction::new(video.clone(), vec![])?);
            video_counts.insert(
                video.clone(),
                VideoCounts {
                    groups: 0,
                    merged_with_llm: 0,
                    events: 0,
                },
            );
            continue;
        }
        let weights = EnsembleWeights::for_models(&cfg.ensemble_weights, models)
            .map_err(|e| e.with_stage("ensemble"))?;
        let (groups, group_warnings) = group_by_timestamp(streams, cfg.grouping_tolerance_s)
            .map_err(|e| e.with_stage("ensemble"))?;
        for w in &group_warnings {
            warnings.push(format!(
                "group {}@{}: dropped duplicate entry from '{}' (confidence {})",
                w.video_id, w.group_timestamp_s, w.model_id, w.dropped_confidence
            ));
        }

        let mut merged_with_llm = 0usize;
        let mut events = Vec::with_capacity(groups.len());
        match (&client, &template) {
            (Some(client), Some(template)) => {
                let merged = merge_groups(
                    &groups,
                    &weights,
                    Some(client as &dyn TextGenerationClient),
                    template,
                    &merge_settings,
                )
                .map_err(|e| e.with_stage("merge"))?;
                for (group, m) in groups.iter().zip(merged) {
                    if m.used_llm {
                        merged_with_llm += 1;
                    }
                    if let Some(reason) = &m.fallback_reason {
                        warnings.push(format!(
                            "merge fallback at {}@{}: {reason}",
                            group.video_id, group.timestamp_s
                        ));
                    }
                    events.push(TimelineEvent {
                        timestamp_s: group.timestamp_s,
                        caption: m.caption,
                        confidence: m.weighted_score.clamp(0.0, 1.0),
                    });
                }
            }
            _ => {
                for group in &groups {
                    let winner =
                        select_top1(group, &weights).map_err(|e| e.with_stage("ensemble"))?;
                    events.push(TimelineEvent {
                        timestamp_s: group.timestamp_s,
                        caption: winner.caption,
                        confidence: winner.weighted_score.clamp(0.0, 1.0),
                    });
                }
            }
        }
        video_counts.insert(
            video.clone(),
            VideoCounts {
                groups: groups.len(),
                merged_with_llm,
                events: events.len(),
            },
        );
        predictions.push(
            TimelinePrediction::new(video.clone(), events).map_err(|e| e.with_stage("ensemble"))?,
        );
    }
    timing.insert("ensemble".into(), started.elapsed().as_secs_f64());

    // ── write ───────────────────────────────────────────────────────────
    let started = Instant::now();
    let predictions_path = config.output_dir.join("predictions.jsonl");
    io::write_timelines(&predictions, &predictions_path).map_err(|e| e.with_stage("write"))?;
    written.push(predictions_path);

    if let Some(boundary) = config.half_boundary_s {
        let export_path = config.output_dir.join("predictions_soccernet.jsonl");
        io::export_soccernet(&predictions, &export_path, boundary)
            .map_err(|e| e.with_stage("write"))?;
        written.push(export_path);
    }
    timing.insert("write".into(), started.elapsed().as_secs_f64());

    // ── evaluate ────────────────────────────────────────────────────────
    if let Some(truth_path) = &config.ground_truth {
        let started = Instant::now();
        let truth = io::read_ground_truth(truth_path).map_err(|e| e.with_stage("evaluate"))?;
        let report = evaluate(&predictions, &truth, cfg).map_err(|e| e.with_stage("evaluate"))?;
        let json_path = config.output_dir.join("eval.json");
        write_report_json(&report, &json_path).map_err(|e| e.with_stage("evaluate"))?;
        written.push(json_path);
        let csv_path = config.output_dir.join("eval.csv");
        write_report_csv(&report, &csv_path).map_err(|e| e.with_stage("evaluate"))?;
        written.push(csv_path);
        timing.insert("evaluate".into(), started.elapsed().as_secs_f64());
    }

    // ── manifest ────────────────────────────────────────────────────────
    let totals = StreamCounts {
        ingested: stream_counts.values().map(|c| c.ingested).sum(),
        after_dedup: stream_counts.values().map(|c| c.after_dedup).sum(),
        after_confidence: stream_counts.values().map(|c| c.after_confidence).sum(),
        after_background: stream_counts.values().map(|c| c.after_background).sum(),
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_echo: config.clone(),
        inputs: digests,
        streams: stream_counts,
        totals,
        total_groups: video_counts.values().map(|v| v.groups).sum(),
        total_merged_with_llm: video_counts.values().map(|v| v.merged_with_llm).sum(),
        videos: video_counts,
        warnings,
        timing,
    };
    let manifest_path = config.output_dir.join("manifest.json");
    io::write_atomic(&manifest_path, |out| {
        serde_json::to_writer_pretty(&mut *out, &manifest)
            .map_err(|e| Error::io(&manifest_path, e.into()))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(&manifest_path, e))
    })
    .map_err(|e| e.with_stage("write"))?;
    written.push(manifest_path);

    Ok(manifest)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
