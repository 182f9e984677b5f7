use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use densecap::config::{DedupMode, PipelineConfig, RunTiebreak};
use densecap::ensemble::{ensemble_timelines, EnsembleWeights};
use densecap::error::{Error, Result};
use densecap::grid::{grid_search_weights, Objective};
use densecap::io::{
    export_soccernet, group_streams, ingest_candidates, read_ground_truth, read_timelines,
    write_candidates, write_timelines,
};
use densecap::localize::{dedupe_central, filter_background, filter_confidence};
use densecap::metrics::{evaluate, write_report_csv, write_report_json};
use densecap::pipeline::run_with_config;
use densecap::{io as dcio, CaptionCandidate};

/// Dense video captioning post-processing: de-duplication, filtering,
/// ensembling, and evaluation of caption timelines.
#[derive(Parser)]
#[command(name = "densecap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
    /// Validate a candidate file and summarize its streams.
    IngestCheck(IngestCheckArgs),
    /// Collapse duplicate runs to their middle candidate.
    Dedupe(DedupeArgs),
    /// Drop candidates below a confidence or fused-background threshold.
    Filter(FilterArgs),
    /// Fuse per-model candidate streams into one timeline.
    Ensemble(EnsembleArgs),
    /// Exhaustively search ensemble weights against ground truth.
    GridSearch(GridSearchArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Export predictions with "half - mm:ss" game-time strings.
    ExportSoccernet(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config file (JSON, schema_version 1).
    config: PathBuf,
    /// Override the configured confidence threshold.
    #[arg(long)]
    confidence_threshold: Option<f64>,
    /// Override the configured background threshold.
    #[arg(long)]
    background_threshold: Option<f64>,
    /// Override the configured dedup mode.
    #[arg(long)]
    dedup_mode: Option<DedupMode>,
    /// Override the configured even-run tiebreak.
    #[arg(long)]
    tiebreak: Option<RunTiebreak>,
    /// Override the configured grouping tolerance (seconds).
    #[arg(long)]
    grouping_tolerance: Option<f64>,
    /// Override the configured matching tolerance (seconds).
    #[arg(long)]
    matching_tolerance: Option<f64>,
    /// Override configured ensemble weights, e.g. blip-large=0.85,blip2=0.95.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Args)]
struct IngestCheckArgs {
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    /// Comma-separated allow-list of model ids.
    #[arg(long)]
    expected_models: Option<String>,
}

#[derive(Args)]
struct DedupeArgs {
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DedupMode::Normalized)]
    mode: DedupMode,
    #[arg(long, default_value_t = RunTiebreak::Earlier)]
    tiebreak: RunTiebreak,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Inclusive keep threshold in [0, 1].
    #[arg(long)]
    threshold: f64,
    /// Filter on the fused background score instead of the confidence.
    #[arg(long)]
    background: bool,
    /// Comma-separated fusion weights for the background filter models.
    #[arg(long, default_value = "1,1,1")]
    background_weights: String,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-model weights, e.g. blip-large=0.85,blip2=0.95; unlisted models
    /// get the anchor weight 1.0.
    #[arg(long)]
    weights: Option<String>,
    /// Timestamp clustering tolerance (seconds).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
}

#[derive(Args)]
struct GridSearchArgs {
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
    /// Per-model grids, e.g. --grid blip-base=1.0 --grid blip-large=0.7,0.85.
    #[arg(long, required = true)]
    grid: Vec<String>,
    #[arg(long, default_value_t = Objective::Meteor)]
    objective: Objective,
    /// Where to write the search result and trace (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Timestamp clustering tolerance (seconds).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// Evaluation matching tolerance (seconds).
    #[arg(long, default_value_t = 30.0)]
    matching_tolerance: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Matching tolerance (seconds).
    #[arg(long, default_value_t = 30.0)]
    tolerance: f64,
    /// Report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-video CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Second-half start, in seconds from video start.
    #[arg(long)]
    half_boundary: f64,
}

fn main() -> ExitCode {
    // Usage errors count as configuration problems (exit 3); --help and
    // --version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = if error.use_stderr() { 3 } else { 0 };
            let _ = error.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::IngestCheck(args) => cmd_ingest_check(args),
        Command::Dedupe(args) => cmd_dedupe(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::GridSearch(args) => cmd_grid_search(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::ExportSoccernet(args) => cmd_export(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = densecap::pipeline::RunConfig::load(&args.config)?;
    apply_overrides(&mut config.pipeline, &args)?;
    let manifest = run_with_config(&config)?;

    for warning in &manifest.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "wrote {} videos ({} events) to {}",
        manifest.videos.len(),
        manifest.videos.values().map(|v| v.events).sum::<usize>(),
        manifest.config_echo.output_dir.display()
    );
    Ok(())
}

fn apply_overrides(cfg: &mut PipelineConfig, args: &RunArgs) -> Result<()> {
    if let Some(t) = args.confidence_threshold {
        cfg.confidence_threshold = t;
    }
    if let Some(t) = args.background_threshold {
        cfg.background_threshold = t;
    }
    if let Some(mode) = args.dedup_mode {
        cfg.dedup_mode = mode;
    }
    if let Some(tiebreak) = args.tiebreak {
        cfg.even_run_tiebreak = tiebreak;
    }
    if let Some(t) = args.grouping_tolerance {
        cfg.grouping_tolerance_s = t;
    }
    if let Some(t) = args.matching_tolerance {
        cfg.matching_tolerance_s = t;
    }
    if let Some(weights) = &args.weights {
        cfg.ensemble_weights = parse_weights(weights)?;
    }
    Ok(())
}

fn cmd_ingest_check(args: IngestCheckArgs) -> Result<()> {
    let expected = args.expected_models.as_deref().map(parse_model_set);
    let mut total = 0usize;
    let mut streams: BTreeMap<(String, String), usize> = BTreeMap::new();
    for input in &args.input {
        let candidates = ingest_candidates(input, expected.as_ref())?;
        total += candidates.len();
        for ((video, model), stream) in group_streams(candidates) {
            *streams.entry((video, model)).or_insert(0) += stream.len();
        }
    }
    println!("{total} candidates across {} streams", streams.len());
    for ((video, model), count) in streams {
        println!("  {video}/{model}: {count}");
    }
    Ok(())
}

fn ingest_all(inputs: &[PathBuf]) -> Result<Vec<CaptionCandidate>> {
    let mut candidates = Vec::new();
    for input in inputs {
        candidates.extend(ingest_candidates(input, None)?);
    }
    Ok(candidates)
}

/// Applies a per-stream transform and writes the surviving records grouped
/// by (video, model) in key order.
fn transform_streams(
    inputs: &[PathBuf],
    out: &Path,
    transform: impl Fn(&[CaptionCandidate]) -> Result<Vec<CaptionCandidate>>,
) -> Result<()> {
    let streams = group_streams(ingest_all(inputs)?);
    let mut output = Vec::new();
    for (_, stream) in streams {
        output.extend(transform(&stream)?);
    }
    write_candidates(&output, out)
}

fn cmd_dedupe(args: DedupeArgs) -> Result<()> {
    let cfg = PipelineConfig {
        dedup_mode: args.mode,
        even_run_tiebreak: args.tiebreak,
        ..PipelineConfig::default()
    };
    transform_streams(&args.input, &args.out, |stream| {
        dedupe_central(stream, &cfg)
    })
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    if args.background {
        let cfg = PipelineConfig {
            background_threshold: args.threshold,
            background_weights: parse_weight_list(&args.background_weights)?,
            ..PipelineConfig::default()
        };
        cfg.validate()?;
        transform_streams(&args.input, &args.out, |stream| {
            filter_background(stream, &cfg)
        })
    } else {
        transform_streams(&args.input, &args.out, |stream| {
            filter_confidence(stream, args.threshold)
        })
    }
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let configured = match &args.weights {
        Some(weights) => parse_weights(weights)?,
        None => BTreeMap::new(),
    };
    let cfg = PipelineConfig {
        grouping_tolerance_s: args.tolerance,
        ..PipelineConfig::default()
    };
    let streams = group_streams(ingest_all(&args.input)?);
    let mut per_video: BTreeMap<String, Vec<Vec<CaptionCandidate>>> = BTreeMap::new();
    for ((video, _), stream) in streams {
        per_video.entry(video).or_default().push(stream);
    }
    let mut predictions = Vec::new();
    for streams in per_video.values() {
        let models: BTreeSet<&str> = streams
            .iter()
            .flatten()
            .map(|c| c.model_id.as_str())
            .collect();
        if models.is_empty() {
            continue;
        }
        let weights = EnsembleWeights::for_models(&configured, models)?;
        predictions.push(ensemble_timelines(streams, &weights, &cfg)?);
    }
    write_timelines(&predictions, &args.out)
}

fn cmd_grid_search(args: GridSearchArgs) -> Result<()> {
    let mut grid: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for spec in &args.grid {
        let (model, values) = spec.split_once('=').ok_or_else(|| {
            Error::Argument(format!("bad grid spec '{spec}' (expected model=w1,w2,...)"))
        })?;
        grid.insert(model.trim().to_string(), parse_weight_list(values)?);
    }
    let streams: Vec<Vec<CaptionCandidate>> = group_streams(ingest_all(&args.input)?)
        .into_values()
        .collect();
    let truth = read_ground_truth(&args.truth)?;
    let cfg = PipelineConfig {
        grouping_tolerance_s: args.tolerance,
        matching_tolerance_s: args.matching_tolerance,
        ..PipelineConfig::default()
    };
    let result = grid_search_weights(&streams, &truth, &grid, args.objective, &cfg)?;

    println!(
        "best {} = {} at {}",
        result.objective,
        result.best_score,
        format_weights(&result.best_weights)
    );
    if let Some(out) = &args.out {
        dcio::write_atomic(out, |w| {
            serde_json::to_writer_pretty(&mut *w, &result).map_err(|e| Error::io(out, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(out, e))
        })?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let preds = read_timelines(&args.pred)?;
    let truth = read_ground_truth(&args.truth)?;
    let cfg = PipelineConfig {
        matching_tolerance_s: args.tolerance,
        ..PipelineConfig::default()
    };
    let report = evaluate(&preds, &truth, &cfg)?;
    println!("cider={} meteor={}", report.cider, report.meteor);
    if let Some(out) = &args.out {
        write_report_json(&report, out)?;
    }
    if let Some(csv) = &args.csv {
        write_report_csv(&report, csv)?;
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let preds = read_timelines(&args.input)?;
    export_soccernet(&preds, &args.out, args.half_boundary)
}

fn parse_model_set(spec: &str) -> BTreeSet<String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_weights(spec: &str) -> Result<BTreeMap<String, f64>> {
    let mut weights = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (model, value) = part.split_once('=').ok_or_else(|| {
            Error::Argument(format!("bad weight '{part}' (expected model=value)"))
        })?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("bad weight value in '{part}'")))?;
        weights.insert(model.trim().to_string(), value);
    }
    if weights.is_empty() {
        return Err(Error::Argument("no weights given".into()));
    }
    Ok(weights)
}

fn parse_weight_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad weight value '{s}'")))
        })
        .collect()
}

fn format_weights(weights: &EnsembleWeights) -> String {
    weights
        .weights
        .iter()
        .map(|(model, w)| format!("{model}={w}"))
        .collect::<Vec<_>>()
        .join(",")
}
