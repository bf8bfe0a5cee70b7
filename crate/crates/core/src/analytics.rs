//! Event-reduction counts and pipeline throughput.

use std::hint::black_box;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::event::{EventStream, TrackSet};
use crate::filters::{tracks_mask, FilterParams, Fsae, Inceptive, TrackFilter};
use crate::surfaces::{count_channel, FramePipeline};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no samples given")]
    NoSamples,
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Event counts before and after filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReductionCounts {
    pub raw_count: usize,
    pub fsae_count: usize,
    pub ie_count: usize,
    /// Pixel/polarity tracks with at least one event.
    pub active_tracks: usize,
    /// Active tracks without an inceptive event.
    pub fallback_tracks: usize,
    pub fallback_pixel_fraction: f64,
    pub reduction_vs_raw: f64,
    pub reduction_vs_fsae: f64,
}

fn reduction(kept: usize, from: usize) -> f64 {
    if from == 0 {
        0.0
    } else {
        1.0 - kept as f64 / from as f64
    }
}

impl ReductionCounts {
    fn from_counts(raw: usize, fsae: usize, ie: usize, active: usize, fallback: usize) -> Self {
        Self {
            raw_count: raw,
            fsae_count: fsae,
            ie_count: ie,
            active_tracks: active,
            fallback_tracks: fallback,
            fallback_pixel_fraction: if active == 0 { 0.0 } else { fallback as f64 / active as f64 },
            reduction_vs_raw: reduction(ie, raw),
            reduction_vs_fsae: reduction(ie, fsae),
        }
    }

    pub fn measure(stream: &EventStream, params: &FilterParams) -> Self {
        let tracks = TrackSet::build(stream);
        let kept = |f: &dyn TrackFilter| tracks_mask(&tracks, f, params);
        let fsae = kept(&Fsae).into_iter().filter(|&k| k).count();
        let ie_mask = kept(&Inceptive);
        let ie = ie_mask.iter().filter(|&&k| k).count();
        let fallback = tracks
            .iter()
            .filter(|t| !t.event_indices.iter().any(|&i| ie_mask[i]))
            .count();
        Self::from_counts(stream.len(), fsae, ie, tracks.len(), fallback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReduction {
    pub name: String,
    #[serde(flatten)]
    pub counts: ReductionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub tau_minus_us: u64,
    pub tau_plus_us: u64,
    /// Set when the samples are synthetic stand-ins for a real dataset.
    pub surrogate: bool,
    /// Event-weighted: ratios of summed counts.
    pub aggregate: ReductionCounts,
    pub samples: Vec<SampleReduction>,
}

/// Per-sample and pooled reduction counts. Samples are measured in
/// parallel; the report keeps input order.
pub fn reduction_stats<'a, I>(samples: I, params: &FilterParams) -> Result<ReductionReport, AnalyticsError>
where
    I: IntoIterator<Item = (String, &'a EventStream)>,
{
    let samples: Vec<_> = samples.into_iter().collect();
    if samples.is_empty() {
        return Err(AnalyticsError::NoSamples);
    }
    let per_sample: Vec<SampleReduction> = samples
        .into_par_iter()
        .map(|(name, stream)| SampleReduction {
            name,
            counts: ReductionCounts::measure(stream, params),
        })
        .collect();
    let sum = |f: fn(&ReductionCounts) -> usize| per_sample.iter().map(|s| f(&s.counts)).sum::<usize>();
    let aggregate = ReductionCounts::from_counts(
        sum(|c| c.raw_count),
        sum(|c| c.fsae_count),
        sum(|c| c.ie_count),
        sum(|c| c.active_tracks),
        sum(|c| c.fallback_tracks),
    );
    Ok(ReductionReport {
        tau_minus_us: params.tau_minus,
        tau_plus_us: params.tau_plus,
        surrogate: false,
        aggregate,
        samples: per_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRate {
    pub stage: &'static str,
    /// Median over repetitions, summed across workers.
    pub seconds: f64,
    pub events_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub pipeline: String,
    pub samples: usize,
    pub workers: usize,
    pub repetitions: usize,
    pub events_processed: usize,
    /// Median wall time of one full pass.
    pub wall_time_s: f64,
    pub events_per_second: f64,
    pub run_times_s: Vec<f64>,
    pub stages: Vec<StageRate>,
}

const STAGES: [&str; 4] = ["group", "filter", "surface", "compose"];

fn run_sample(pipeline: &FramePipeline, stream: &EventStream) -> [Duration; 4] {
    let mut lap = Instant::now();
    let mut split = || {
        let now = Instant::now();
        let d = now - lap;
        lap = now;
        d
    };
    let tracks = pipeline.group(stream);
    let group = split();
    let filtered = pipeline.filter_tracks(&tracks);
    let filter = split();
    let raw = pipeline.surfaces(&tracks, &filtered);
    let surface = split();
    black_box(pipeline.finish(raw, &count_channel(stream)));
    [group, filter, surface, split()]
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Times `repetitions` full passes of `pipeline` over `samples`. With one
/// worker everything runs on the calling thread; otherwise samples are
/// spread over a dedicated pool of `workers` threads.
pub fn throughput_bench(
    samples: &[EventStream],
    pipeline: &FramePipeline,
    repetitions: usize,
    workers: usize,
) -> Result<ThroughputReport, AnalyticsError> {
    if samples.is_empty() || repetitions == 0 {
        return Err(AnalyticsError::NoSamples);
    }
    let workers = workers.max(1);
    let pool = if workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| AnalyticsError::Pool(e.to_string()))?,
        )
    } else {
        None
    };

    let pass = || -> [Duration; 4] {
        let per: Vec<[Duration; 4]> = match &pool {
            None => samples.iter().map(|s| run_sample(pipeline, s)).collect(),
            Some(pool) => pool.install(|| samples.par_iter().map(|s| run_sample(pipeline, s)).collect()),
        };
        per.iter().fold([Duration::ZERO; 4], |mut acc, d| {
            for (a, b) in acc.iter_mut().zip(d) {
                *a += *b;
            }
            acc
        })
    };

    // warm-up
    pass();
    let mut walls = Vec::with_capacity(repetitions);
    let mut stage_times: [Vec<f64>; 4] = Default::default();
    for _ in 0..repetitions {
        let start = Instant::now();
        let stages = pass();
        walls.push(start.elapsed().as_secs_f64());
        for (acc, d) in stage_times.iter_mut().zip(stages) {
            acc.push(d.as_secs_f64());
        }
    }

    let events: usize = samples.iter().map(EventStream::len).sum();
    let rate = |secs: f64| if secs > 0.0 { events as f64 / secs } else { f64::INFINITY };
    let wall = median(walls.clone());
    Ok(ThroughputReport {
        pipeline: pipeline.tag(),
        samples: samples.len(),
        workers,
        repetitions,
        events_processed: events,
        wall_time_s: wall,
        events_per_second: rate(wall),
        run_times_s: walls,
        stages: STAGES
            .iter()
            .zip(stage_times)
            .map(|(&stage, times)| {
                let seconds = median(times);
                StageRate {
                    stage,
                    seconds,
                    events_per_second: rate(seconds),
                }
            })
            .collect(),
    })
}
