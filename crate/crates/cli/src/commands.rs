use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use iets_core::analytics::{reduction_stats, throughput_bench};
use iets_core::eval::{self, Experiment, Grid, SurfaceVariant, TrainConfig};
use iets_core::ingest;
use iets_core::surfaces::{count_channel, encoders, write_frame};
use iets_core::synth::{
    self, direction_task, moving_edge_scene, surrogate_corpus, CorpusConfig, LabeledEvent, SensorModel,
};
use iets_core::{FramePipeline, SensorGeometry};

use crate::config::{input_path, pick, FileConfig, TauArgs};
use crate::samples::{self, Sample};

fn status(failed: bool) -> ExitCode {
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn emit<T: Serialize>(report: &T, path: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    match path {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{json}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
    /// Input format; defaults to the input's extension.
    #[arg(long)]
    from: Option<String>,
    /// Output format; defaults to the output's extension.
    #[arg(long)]
    to: Option<String>,
}

pub fn convert(args: ConvertArgs) -> Result<ExitCode> {
    let from = samples::codec(args.from.as_deref(), &args.input)?;
    let to = samples::codec(args.to.as_deref(), &args.output)?;
    let decoded = ingest::read_file(&args.input, from.as_ref())?;
    if decoded.skipped > 0 || decoded.out_of_order > 0 || decoded.duplicates > 0 {
        log::info!(
            "{}: {} skipped, {} re-sorted, {} duplicates dropped",
            args.input.display(),
            decoded.skipped,
            decoded.out_of_order,
            decoded.duplicates
        );
    }
    ingest::write_file(&args.output, to.as_ref(), &decoded.stream)?;
    log::info!("wrote {} events to {}", decoded.stream.len(), args.output.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, clap::Args)]
pub struct SurfaceArgs {
    /// Event file or dataset directory (`<root>/<label>/<file>`).
    #[arg(env = "IETS_DATASET_ROOT")]
    input: Option<PathBuf>,
    /// dat, aedat2 or csv; defaults to the file extension.
    #[arg(long)]
    input_format: Option<String>,
    /// Output directory (default `out`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// raw_ts, fsae or iets; repeat for several (default iets).
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// mean, min, max or median (default mean).
    #[arg(long)]
    aggregator: Option<String>,
    /// png8 or raw_f32 (default png8).
    #[arg(long)]
    format: Option<String>,
    /// Keep only the first WINDOW microseconds of each sample.
    #[arg(long, value_name = "US")]
    window_us: Option<u64>,
    #[command(flatten)]
    tau: TauArgs,
}

#[derive(Debug, Serialize)]
struct FrameRecord {
    sample: String,
    variant: String,
    path: PathBuf,
    events: usize,
    kept_events: usize,
    fallback_tracks: usize,
}

pub fn surface(args: SurfaceArgs, file: &FileConfig) -> Result<ExitCode> {
    let input = input_path(args.input, file)?;
    let params = args.tau.resolve(file)?;
    let aggregator = pick(args.aggregator, &file.aggregator, || "mean".into());
    let variants = if args.variants.is_empty() {
        file.variants.clone().unwrap_or_else(|| vec!["iets".into()])
    } else {
        args.variants
    };
    let pipelines = variants
        .iter()
        .map(|v| FramePipeline::from_names(v, &aggregator, params))
        .collect::<Result<Vec<_>, _>>()?;
    let encoder = encoders().get(&pick(args.format, &file.output_format, || "png8".into()))?;
    let out = pick(args.out, &file.out_dir, || PathBuf::from("out"));
    let window = args.window_us.or(file.window_us);
    let input_format = args.input_format.or_else(|| file.input_format.clone());

    let loaded = samples::load(&input, input_format.as_deref(), window)?;
    let mut failed = loaded.report_failures();
    let jobs: Vec<(&Sample, &FramePipeline)> = loaded
        .samples
        .iter()
        .flat_map(|s| pipelines.iter().map(move |p| (s, p)))
        .collect();
    let results: Vec<Result<FrameRecord, (PathBuf, String)>> = jobs
        .par_iter()
        .map(|&(sample, pipeline)| {
            let dir = match &sample.label {
                Some(l) => out.join(l),
                None => out.clone(),
            };
            let path = dir.join(format!("{}__{}.{}", sample.stem(), pipeline.tag(), encoder.extension()));
            let tracks = pipeline.group(&sample.stream);
            let filtered = pipeline.filter_tracks(&tracks);
            let raw = pipeline.surfaces(&tracks, &filtered);
            let frame = pipeline.finish(raw, &count_channel(&sample.stream));
            fs::create_dir_all(&dir)
                .map_err(|e| e.to_string())
                .and_then(|()| write_frame(&frame, encoder.as_ref(), &path).map_err(|e| e.to_string()))
                .map_err(|e| (sample.path.clone(), e))?;
            Ok(FrameRecord {
                sample: sample.name(),
                variant: pipeline.tag(),
                path,
                events: sample.stream.len(),
                kept_events: filtered.kept(),
                fallback_tracks: frame.fallback_pixels(),
            })
        })
        .collect();

    let mut written = Vec::new();
    for r in results {
        match r {
            Ok(rec) => written.push(rec),
            Err((path, reason)) => {
                eprintln!("failed: {}: {reason}", path.display());
                failed = true;
            }
        }
    }
    emit(&written, None)?;
    Ok(status(failed))
}

#[derive(Debug, clap::Args)]
pub struct StatsArgs {
    /// Event file or dataset directory.
    #[arg(env = "IETS_DATASET_ROOT")]
    input: Option<PathBuf>,
    #[arg(long)]
    input_format: Option<String>,
    #[arg(long, value_name = "US")]
    window_us: Option<u64>,
    /// Mark the report as computed on a synthetic stand-in dataset.
    #[arg(long)]
    surrogate: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    tau: TauArgs,
}

pub fn stats(args: StatsArgs, file: &FileConfig) -> Result<ExitCode> {
    let input = input_path(args.input, file)?;
    let params = args.tau.resolve(file)?;
    let format = args.input_format.or_else(|| file.input_format.clone());
    let loaded = samples::load(&input, format.as_deref(), args.window_us.or(file.window_us))?;
    let failed = loaded.report_failures();
    ensure!(!loaded.samples.is_empty(), "no readable samples in {}", input.display());
    let mut report = reduction_stats(loaded.samples.iter().map(|s| (s.name(), &s.stream)), &params)?;
    report.surrogate = args.surrogate;
    emit(&report, args.report.as_deref())?;
    Ok(status(failed))
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Benchmark on these recordings instead of a synthetic workload.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    input_format: Option<String>,
    /// Synthetic workload size.
    #[arg(long, default_value_t = 1_000_000)]
    events: usize,
    #[arg(long, default_value_t = 50_000)]
    events_per_sample: usize,
    #[arg(long, default_value_t = 304)]
    width: u16,
    #[arg(long, default_value_t = 240)]
    height: u16,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// raw_ts, fsae or iets (default iets).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    aggregator: Option<String>,
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    tau: TauArgs,
}

pub fn bench(args: BenchArgs, file: &FileConfig, workers: Option<usize>) -> Result<ExitCode> {
    let params = args.tau.resolve(file)?;
    let variant = args.variant.unwrap_or_else(|| "iets".into());
    let aggregator = pick(args.aggregator, &file.aggregator, || "mean".into());
    let pipeline = FramePipeline::from_names(&variant, &aggregator, params)?;
    let mut failed = false;
    let streams = match args.input {
        Some(path) => {
            let loaded = samples::load(&path, args.input_format.as_deref(), None)?;
            failed = loaded.report_failures();
            loaded.samples.into_iter().map(|s| s.stream).collect()
        }
        None => {
            let g = SensorGeometry::new(args.width, args.height)?;
            let seed = pick(args.seed, &file.seed, || 0);
            synth::burst_workload(g, args.events, args.events_per_sample, seed)
        }
    };
    let report = throughput_bench(&streams, &pipeline, args.repetitions, workers.unwrap_or(1))?;
    emit(&report, args.report.as_deref())?;
    Ok(status(failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    /// One vertical edge sweeping left to right.
    Edge,
    /// Two classes: bars moving left or right.
    Direction,
    /// Two classes: background clutter, or clutter plus a crossing object.
    Surrogate,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Direction)]
    kind: SynthKind,
    /// Output directory (default `out`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Samples per class.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Background events per pixel per second.
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Log-intensity change per event.
    #[arg(long, default_value_t = 0.2)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    refractory_us: u64,
    /// csv, dat or aedat2 (default csv).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Skip the `.labels` sidecar files.
    #[arg(long)]
    no_labels: bool,
    /// Edge scene only.
    #[arg(long, default_value_t = 32)]
    width: u16,
    #[arg(long, default_value_t = 32)]
    height: u16,
    #[arg(long, default_value_t = 320.0)]
    velocity: f64,
    #[arg(long, default_value_t = 4)]
    contrast: u32,
}

fn write_sample(
    dir: &Path,
    name: &str,
    codec: &dyn ingest::EventCodec,
    stream: &iets_core::EventStream,
    labels: Option<&[LabeledEvent]>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ext = codec.extensions()[0];
    ingest::write_file(&dir.join(format!("{name}.{ext}")), codec, stream)?;
    if let Some(labels) = labels {
        let path = dir.join(format!("{name}.labels"));
        fs::write(&path, synth::write_labels(labels)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs, file: &FileConfig) -> Result<ExitCode> {
    let out = pick(args.out, &file.out_dir, || PathBuf::from("out"));
    let seed = pick(args.seed, &file.seed, || 0);
    let codec = ingest::codecs().get(&args.format)?;
    let model = SensorModel::new(args.threshold, args.refractory_us, 0.0, seed)?;

    let corpus = |mut config: CorpusConfig| {
        config.model = SensorModel {
            noise_rate: args.noise_rate.unwrap_or(config.model.noise_rate),
            ..model
        };
        config
    };
    let samples = match args.kind {
        SynthKind::Edge => {
            ensure!(args.velocity > 0.0, "--velocity must be positive");
            let g = SensorGeometry::new(args.width, args.height)?;
            let edge = moving_edge_scene(g, args.velocity, args.contrast, &model.with_noise(args.noise_rate.unwrap_or(0.0)));
            let labels = (!args.no_labels).then_some(edge.scene.events.as_slice());
            write_sample(&out, "edge", codec.as_ref(), &edge.scene.stream(), labels)?;
            return Ok(ExitCode::SUCCESS);
        }
        SynthKind::Direction => direction_task(&corpus(CorpusConfig::direction(args.samples, seed))),
        SynthKind::Surrogate => surrogate_corpus(&corpus(CorpusConfig::surrogate(args.samples, seed))),
    };
    samples.par_iter().try_for_each(|s| {
        let labels = (!args.no_labels).then_some(s.scene.events.as_slice());
        write_sample(&out.join(s.class_name), &s.name, codec.as_ref(), &s.stream(), labels)
    })?;
    log::info!("wrote {} samples to {}", samples.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Dataset directory with exactly two class subdirectories.
    #[arg(env = "IETS_DATASET_ROOT")]
    data: Option<PathBuf>,
    #[arg(long)]
    input_format: Option<String>,
    #[arg(long, value_name = "US")]
    window_us: Option<u64>,
    /// raw_ts, fsae_ts or iets; repeat for several (default all three).
    #[arg(long = "variant")]
    variants: Vec<SurfaceVariant>,
    /// Number of split/initialization seeds to average over.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Pooled feature grid edge length.
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    /// Add mirrored copies of the training frames.
    #[arg(long)]
    flip: bool,
    /// Save the first seed's model per variant as `<DIR>/<variant>.linear`.
    #[arg(long, value_name = "DIR")]
    model_dir: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    tau: TauArgs,
}

#[derive(Debug, Serialize)]
struct VariantSummary {
    variant: SurfaceVariant,
    mean_accuracy: f64,
    mean_auc: Option<f64>,
    runs: Vec<eval::EvalReport>,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    samples: usize,
    classes: [String; 2],
    seeds: Vec<u64>,
    variants: Vec<VariantSummary>,
}

pub fn eval(args: EvalArgs, file: &FileConfig) -> Result<ExitCode> {
    let data = input_path(args.data, file)?;
    ensure!(data.is_dir(), "{} is not a directory", data.display());
    let params = args.tau.resolve(file)?;
    let format = args.input_format.or_else(|| file.input_format.clone());
    let loaded = samples::load(&data, format.as_deref(), args.window_us.or(file.window_us))?;
    let failed = loaded.report_failures();

    let mut names: Vec<String> = loaded.samples.iter().filter_map(|s| s.label.clone()).collect();
    names.sort();
    names.dedup();
    if names.len() != 2 || loaded.samples.iter().any(|s| s.label.is_none()) {
        bail!("{} must hold exactly two class subdirectories, found {:?}", data.display(), names);
    }
    let classes = [names[0].clone(), names[1].clone()];
    let labels: Vec<usize> = loaded
        .samples
        .iter()
        .map(|s| (s.label.as_deref() == Some(classes[1].as_str())) as usize)
        .collect();
    let streams: Vec<_> = loaded.samples.iter().map(|s| &s.stream).collect();

    let variants = if args.variants.is_empty() {
        SurfaceVariant::ALL.to_vec()
    } else {
        args.variants
    };
    let first = pick(args.seed, &file.seed, || 0);
    let seeds: Vec<u64> = (first..first + args.seeds.max(1)).collect();
    let mut summaries = Vec::new();
    for variant in variants {
        let mut runs = Vec::new();
        for &seed in &seeds {
            let experiment = Experiment {
                params,
                grid: Grid::square(args.grid),
                train: TrainConfig {
                    epochs: args.epochs,
                    learning_rate: args.learning_rate,
                    l2: args.l2,
                    seed,
                },
                test_fraction: args.test_fraction,
                flip_augment: args.flip,
            };
            let outcome = eval::run_variant(&streams, &labels, classes.clone(), variant, &experiment)?;
            if seed == first {
                if let Some(dir) = &args.model_dir {
                    fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{}.linear", variant.tag()));
                    fs::write(&path, outcome.model.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            runs.push(outcome.report);
        }
        let n = runs.len() as f64;
        let aucs: Option<Vec<f64>> = runs.iter().map(|r| r.auc).collect();
        summaries.push(VariantSummary {
            variant,
            mean_accuracy: runs.iter().map(|r| r.accuracy).sum::<f64>() / n,
            mean_auc: aucs.map(|a| a.iter().sum::<f64>() / n),
            runs,
        });
    }
    emit(
        &EvalSummary {
            samples: streams.len(),
            classes,
            seeds,
            variants: summaries,
        },
        args.report.as_deref(),
    )?;
    Ok(status(failed))
}
