//! Command-line workflows over the groundkit library: LLM annotation
//! (`aggregate`, `associate`, `pipeline`), inference post-processing,
//! evaluation, corpus statistics, and record validation.
//!
//! Exit codes: 0 success, 1 data or runtime error, 2 usage error. All
//! diagnostics go to stderr; data goes to stdout or `--out`. Given identical
//! inputs and flags, every command (with `--mock` where a model is involved)
//! is byte-reproducible.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use groundkit::jsonl::{parse_line, read_jsonl_path, write_jsonl};
use groundkit::llm::{ChatClient, HttpChatClient, HttpClientConfig, MockChatClient, API_KEY_ENV};
use groundkit::metrics::{evaluate, threshold_sweep, EvalOptions, MetricKind, SimilarityProvider};
use groundkit::pipeline::{
    group_frames_by_clip, run_aggregation, run_association, run_pipeline, PipelineConfig,
    PipelineOutput,
};
use groundkit::prep::{dataset_stats, raw_to_record};
use groundkit::types::validate_record;
use groundkit::{FrameAnnotation, GroundedVideoRecord, RawPrediction};

#[derive(Parser)]
#[command(name = "groundkit", version, about = "Grounded video caption toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate frame captions into video-level captions (records without tracks)
    Aggregate(AggregateArgs),
    /// Ground existing video-level captions with frame detections
    Associate(AssociateArgs),
    /// Full annotation: aggregate captions, then ground their phrases
    Pipeline(PipelineArgs),
    /// Threshold raw model output into prediction records, or sweep thresholds
    Postprocess(PostprocessArgs),
    /// Score predictions against ground truth and print an evaluation report
    Eval(EvalArgs),
    /// Print corpus summary statistics for a record file
    Stats(StatsArgs),
    /// Check every record against the format invariants
    Validate(ValidateArgs),
}

/// Model backend: exactly one of `--mock` or `--llm-endpoint`.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Backend {
    /// Use the built-in deterministic offline model (no network)
    #[arg(long)]
    mock: bool,
    /// Chat-completions endpoint base URL, e.g. https://api.example.com/v1;
    /// the API key is read from the GROUNDKIT_LLM_API_KEY environment variable
    #[arg(long, value_name = "URL")]
    llm_endpoint: Option<String>,
}

/// Flags shared by the three annotation subcommands.
#[derive(Args)]
struct AnnotateArgs {
    /// Frame-level annotations (JSONL, one frame per line)
    #[arg(long, value_name = "PATH")]
    frames: PathBuf,
    #[command(flatten)]
    backend: Backend,
    /// Model name sent to an HTTP endpoint (ignored with --mock)
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    /// Write output records here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write rejected clips here as {"clip_id","reason"} lines; without this
    /// flag rejects are reported on stderr
    #[arg(long, value_name = "PATH")]
    rejects: Option<PathBuf>,
    /// Maximum clips processed (and model calls in flight) concurrently
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Retries for malformed (but delivered) model responses
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    /// Sampling temperature sent with every request
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Completion token limit sent with every request
    #[arg(long, default_value_t = 512)]
    max_tokens: u32,
    /// Frame rate recorded on output records
    #[arg(long, default_value_t = 5.0)]
    fps: f64,
    /// Pixel width recorded on output records
    #[arg(long, default_value_t = 455)]
    width: u32,
    /// Pixel height recorded on output records
    #[arg(long, default_value_t = 256)]
    height: u32,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    common: AnnotateArgs,
}

#[derive(Args)]
struct AssociateArgs {
    #[command(flatten)]
    common: AnnotateArgs,
    /// Video-level caption records to ground (aggregate output, JSONL)
    #[arg(long, value_name = "PATH")]
    captions: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: AnnotateArgs,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Raw dense predictions (JSONL, one clip per line)
    #[arg(long, value_name = "PATH")]
    raw: PathBuf,
    /// Records supplying each clip's caption, phrase table, and metadata
    #[arg(long, value_name = "PATH")]
    meta: PathBuf,
    /// Objectness threshold; boxes at or above it are kept
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    objectness_thresh: f64,
    /// Sweep mode: ascending comma-separated thresholds to evaluate against
    /// --gt, emitting one JSON row (ap50, recall, boxes_emitted) per threshold
    #[arg(long, value_name = "T,T,...", value_delimiter = ',', value_parser = parse_unit_interval, requires = "gt")]
    sweep: Option<Vec<f64>>,
    /// Ground-truth records for --sweep
    #[arg(long, value_name = "PATH", requires = "sweep")]
    gt: Option<PathBuf>,
    /// IoU threshold for sweep matching
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    iou_thresh: f64,
    /// Phrase-similarity threshold for sweep recall
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    sim_thresh: f64,
    /// Phrase similarity provider: "builtin:jaccard" or an http(s) endpoint
    #[arg(long, default_value = "builtin:jaccard", value_parser = parse_similarity)]
    similarity: SimilarityProvider,
    /// Write output here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction records (JSONL)
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    /// Ground-truth records (JSONL)
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    /// Comma-separated metrics to compute
    #[arg(long, value_delimiter = ',', default_values_t = MetricKind::ALL)]
    metrics: Vec<MetricKind>,
    /// IoU threshold for box matches
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    iou_thresh: f64,
    /// Phrase-similarity threshold for grounding recall
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    sim_thresh: f64,
    /// Phrase similarity provider: "builtin:jaccard" or an http(s) endpoint
    #[arg(long, default_value = "builtin:jaccard", value_parser = parse_similarity)]
    similarity: SimilarityProvider,
    /// Restrict AP matching to equal phrase texts
    #[arg(long)]
    phrase_aware_ap: bool,
    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Grounded video records (JSONL)
    #[arg(value_name = "RECORDS")]
    records: PathBuf,
    /// Write the JSON summary here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Grounded video records (JSONL)
    #[arg(value_name = "RECORDS")]
    records: PathBuf,
    /// Write the violation listing here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("{value} is not in [0, 1]"))
    }
}

fn parse_similarity(s: &str) -> Result<SimilarityProvider, groundkit::metrics::MetricsError> {
    SimilarityProvider::parse(s)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Aggregate(args) => annotate(args.common, AnnotateMode::CaptionsOnly),
        Command::Associate(args) => {
            annotate(args.common, AnnotateMode::Ground(args.captions))
        }
        Command::Pipeline(args) => annotate(args.common, AnnotateMode::Full),
        Command::Postprocess(args) => postprocess(args),
        Command::Eval(args) => eval(args),
        Command::Stats(args) => stats(args),
        Command::Validate(args) => validate(args),
    }
}

enum AnnotateMode {
    CaptionsOnly,
    Ground(PathBuf),
    Full,
}

fn annotate(args: AnnotateArgs, mode: AnnotateMode) -> Result<i32> {
    let clips = load_frames(&args.frames)?;
    let llm = build_llm(&args)?;
    let config = PipelineConfig {
        max_retries: args.max_retries,
        max_concurrency: args.concurrency,
        temperature: args.temperature,
        max_tokens: args.max_tokens,
        fps: args.fps,
        width: args.width,
        height: args.height,
        ..PipelineConfig::default()
    };
    let output = match mode {
        AnnotateMode::CaptionsOnly => run_aggregation(&clips, llm.as_ref(), &config)?,
        AnnotateMode::Full => run_pipeline(&clips, llm.as_ref(), &config)?,
        AnnotateMode::Ground(captions) => {
            let captions = load_records(&captions)?;
            run_association(&clips, &captions, llm.as_ref(), &config)?
        }
    };
    emit_annotation(&output, &args)
}

fn build_llm(args: &AnnotateArgs) -> Result<Box<dyn ChatClient>> {
    if args.backend.mock {
        return Ok(Box::new(MockChatClient::new()));
    }
    let endpoint = args
        .backend
        .llm_endpoint
        .clone()
        .expect("clap guarantees one backend");
    if std::env::var(API_KEY_ENV).map_or(true, |k| k.is_empty()) {
        eprintln!("note: {API_KEY_ENV} is not set; requests will be unauthenticated");
    }
    let client = HttpChatClient::new(HttpClientConfig::new(endpoint, args.model.clone()))?;
    Ok(Box::new(client))
}

fn emit_annotation(output: &PipelineOutput, args: &AnnotateArgs) -> Result<i32> {
    let mut writer = open_out(&args.out)?;
    write_jsonl(&mut writer, &output.records)?;
    writer.flush()?;
    match &args.rejects {
        Some(path) => {
            let mut file = BufWriter::new(
                File::create(path)
                    .with_context(|| format!("creating {}", path.display()))?,
            );
            write_jsonl(&mut file, &output.rejects)?;
            file.flush()?;
        }
        None => {
            for reject in &output.rejects {
                eprintln!("reject: {}: {}", reject.clip_id, reject.reason);
            }
        }
    }
    eprintln!(
        "{} record(s), {} reject(s)",
        output.records.len(),
        output.rejects.len()
    );
    Ok(0)
}

fn postprocess(args: PostprocessArgs) -> Result<i32> {
    let raws = read_jsonl_path::<RawPrediction>(&args.raw)
        .with_context(|| format!("reading {}", args.raw.display()))?
        .items;
    let metas = load_records(&args.meta)?;

    if let Some(thresholds) = &args.sweep {
        let gt_path = args.gt.as_ref().expect("clap: --sweep requires --gt");
        let gts = load_records(gt_path)?;
        let sim = |a: &str, b: &str| args.similarity.score(a, b);
        let rows = threshold_sweep(
            &raws,
            &metas,
            &gts,
            thresholds,
            args.iou_thresh,
            args.sim_thresh,
            &sim,
        )?;
        let mut writer = open_out(&args.out)?;
        write_jsonl(&mut writer, &rows)?;
        writer.flush()?;
        eprintln!("{} threshold(s) evaluated", rows.len());
        return Ok(0);
    }

    let mut meta_by_clip: HashMap<&str, &GroundedVideoRecord> = HashMap::new();
    for meta in &metas {
        if meta_by_clip.insert(meta.clip_id.as_str(), meta).is_some() {
            return Err(anyhow!("duplicate metadata record for clip {:?}", meta.clip_id));
        }
    }
    let mut writer = open_out(&args.out)?;
    for raw in &raws {
        let meta = meta_by_clip
            .get(raw.clip_id.as_str())
            .ok_or_else(|| anyhow!("no metadata record for clip {:?}", raw.clip_id))?;
        let record = raw_to_record(raw, meta, args.objectness_thresh)?;
        write_jsonl(&mut writer, std::slice::from_ref(&record))?;
    }
    writer.flush()?;
    eprintln!("{} record(s)", raws.len());
    Ok(0)
}

fn eval(args: EvalArgs) -> Result<i32> {
    let preds = load_records(&args.pred)?;
    let gts = load_records(&args.gt)?;
    let options = EvalOptions {
        metrics: args.metrics.clone(),
        iou_thresh: args.iou_thresh,
        sim_thresh: args.sim_thresh,
        phrase_aware_ap: args.phrase_aware_ap,
    };
    let report = evaluate(&preds, &gts, &args.similarity, &options)?;
    let mut writer = open_out(&args.out)?;
    serde_json::to_writer_pretty(&mut writer, &report)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(0)
}

fn stats(args: StatsArgs) -> Result<i32> {
    let records = load_records(&args.records)?;
    let summary = dataset_stats(&records)?;
    let mut writer = open_out(&args.out)?;
    serde_json::to_writer_pretty(&mut writer, &summary)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(0)
}

/// Streams the file one record per line so arbitrarily large datasets
/// validate in bounded memory. Exit 0 iff every record is clean.
fn validate(args: ValidateArgs) -> Result<i32> {
    let file = File::open(&args.records)
        .with_context(|| format!("opening {}", args.records.display()))?;
    let mut writer = open_out(&args.out)?;
    let mut records = 0usize;
    let mut violations = 0usize;
    let mut unknown_fields = 0usize;
    for (idx, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (record, unknown) = parse_line::<GroundedVideoRecord>(&line, idx + 1)
            .with_context(|| format!("in {}", args.records.display()))?;
        records += 1;
        unknown_fields += unknown;
        for violation in validate_record(&record) {
            writeln!(writer, "{violation}")?;
            violations += 1;
        }
    }
    writer.flush()?;
    if unknown_fields > 0 {
        eprintln!("note: {unknown_fields} unknown field(s) ignored");
    }
    eprintln!("{records} record(s), {violations} violation(s)");
    Ok(if violations == 0 { 0 } else { 1 })
}

fn load_frames(path: &Path) -> Result<Vec<(String, Vec<FrameAnnotation>)>> {
    let report = read_jsonl_path::<FrameAnnotation>(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if report.unknown_fields > 0 {
        eprintln!(
            "note: {} unknown field(s) ignored in {}",
            report.unknown_fields,
            path.display()
        );
    }
    Ok(group_frames_by_clip(report.items))
}

fn load_records(path: &Path) -> Result<Vec<GroundedVideoRecord>> {
    let report = read_jsonl_path::<GroundedVideoRecord>(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if report.unknown_fields > 0 {
        eprintln!(
            "note: {} unknown field(s) ignored in {}",
            report.unknown_fields,
            path.display()
        );
    }
    Ok(report.items)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}
