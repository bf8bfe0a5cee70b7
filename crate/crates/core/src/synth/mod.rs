//! Ground-truth synthetic events from a level-crossing pixel model.
//!
//! A pixel tracks a reference log-intensity level and emits an event every
//! time its log-intensity moves one `threshold` away from that level. The
//! first event of each monotone rise or fall is labeled inceptive, the rest
//! of that transition scaling. Emissions closer than `refractory_us` to the
//! pixel's previous emission are dropped. Background noise is homogeneous
//! and polarity-balanced.
//!
//! All randomness comes from `ChaCha8Rng` seeded from [`SensorModel::seed`].

mod corpus;
mod scene;

pub use corpus::{burst_workload, direction_task, surrogate_corpus, CorpusConfig, LabeledSample};
pub use scene::{moving_edge_scene, render_scene, Arrival, EdgeScene, Scene, Sweep, EDGE_STEP_US};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::event::{Event, EventError, EventStream, Polarity, SensorGeometry, Timestamp};

const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Log-intensity change per event.
    pub threshold: f64,
    /// Minimum gap between two emissions of one pixel.
    pub refractory_us: Timestamp,
    /// Background events per pixel per second.
    pub noise_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("noise rate must be non-negative and finite, got {0}")]
    NoiseRate(f64),
}

impl SensorModel {
    pub fn new(threshold: f64, refractory_us: Timestamp, noise_rate: f64, seed: u64) -> Result<Self, ModelError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(ModelError::Threshold(threshold));
        }
        if !(noise_rate >= 0.0 && noise_rate.is_finite()) {
            return Err(ModelError::NoiseRate(noise_rate));
        }
        Ok(Self {
            threshold,
            refractory_us,
            noise_rate,
            seed,
        })
    }

    pub fn with_noise(self, noise_rate: f64) -> Self {
        Self { noise_rate, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            refractory_us: 0,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventLabel {
    Inceptive,
    Scaling,
    Noise,
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventLabel::Inceptive => "inceptive",
            EventLabel::Scaling => "scaling",
            EventLabel::Noise => "noise",
        })
    }
}

impl FromStr for EventLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inceptive" => Ok(EventLabel::Inceptive),
            "scaling" => Ok(EventLabel::Scaling),
            "noise" => Ok(EventLabel::Noise),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledEvent {
    pub event: Event,
    pub label: EventLabel,
}

/// Piecewise-linear log-intensity of one pixel as `(time µs, level)` knots.
/// Knot times must be non-decreasing; two knots at the same time form an
/// instantaneous step.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    pub x: u16,
    pub y: u16,
    pub knots: Vec<(f64, f64)>,
}

fn emit_trace(trace: &IntensityTrace, model: &SensorModel, out: &mut Vec<LabeledEvent>) {
    let Some(&(_, first)) = trace.knots.first() else {
        return;
    };
    let theta = model.threshold;
    let eps = 1e-9 * theta.max(1.0);
    let mut reference = first;
    let mut last_emit: Option<Timestamp> = None;
    // Direction of the current monotone transition and whether it has
    // produced an event yet.
    let mut transition: Option<(f64, bool)> = None;

    for seg in trace.knots.windows(2) {
        let ((t0, v0), (t1, v1)) = (seg[0], seg[1]);
        debug_assert!(t1 >= t0, "knot times must be non-decreasing");
        let dv = v1 - v0;
        if dv.abs() <= eps {
            transition = None;
            continue;
        }
        let dir = dv.signum();
        if transition.map(|(d, _)| d) != Some(dir) {
            transition = Some((dir, false));
        }
        loop {
            let level = reference + dir * theta;
            let reached = if dir > 0.0 { level <= v1 + eps } else { level >= v1 - eps };
            if !reached {
                break;
            }
            reference = level;
            let frac = ((level - v0) / dv).clamp(0.0, 1.0);
            let crossing = t0 + frac * (t1 - t0);
            let mut t = (crossing.max(0.0) + 0.5).floor() as Timestamp;
            if let Some(last) = last_emit {
                // one event per microsecond per pixel
                t = t.max(last + 1);
                if t - last < model.refractory_us {
                    continue;
                }
            }
            let (d, emitted) = transition.expect("inside a transition");
            out.push(LabeledEvent {
                event: Event::new(trace.x, trace.y, t, if dir > 0.0 { Polarity::Pos } else { Polarity::Neg }),
                label: if emitted { EventLabel::Scaling } else { EventLabel::Inceptive },
            });
            transition = Some((d, true));
            last_emit = Some(t);
        }
    }
}

fn sort_labeled(events: &mut Vec<LabeledEvent>) {
    // Stable: on exact collisions the earlier entry (signal before noise) wins.
    events.sort_by(|a, b| a.event.cmp(&b.event));
    events.dedup_by(|b, a| a.event == b.event);
}

/// Level-crossing events for every trace, in canonical event order.
pub fn events_from_intensity(traces: &[IntensityTrace], model: &SensorModel) -> Vec<LabeledEvent> {
    let mut out = Vec::new();
    for trace in traces {
        emit_trace(trace, model, &mut out);
    }
    sort_labeled(&mut out);
    out
}

/// Adds Poisson background noise over `[t_start, t_end]` at
/// `model.noise_rate` events per pixel per second.
pub fn inject_noise(
    mut events: Vec<LabeledEvent>,
    geometry: SensorGeometry,
    t_start: Timestamp,
    t_end: Timestamp,
    model: &SensorModel,
) -> Vec<LabeledEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ NOISE_STREAM);
    let mean = model.noise_rate * geometry.pixel_count() as f64 * (t_end.saturating_sub(t_start)) as f64 / 1e6;
    let count = if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(&mut rng) as usize).unwrap_or(0)
    } else {
        0
    };
    events.reserve(count);
    for _ in 0..count {
        let event = Event::new(
            rng.random_range(0..geometry.width),
            rng.random_range(0..geometry.height),
            rng.random_range(t_start..=t_end),
            Polarity::from_bit(rng.random_bool(0.5)),
        );
        events.push(LabeledEvent {
            event,
            label: EventLabel::Noise,
        });
    }
    sort_labeled(&mut events);
    events
}

pub fn to_stream(
    events: &[LabeledEvent],
    geometry: SensorGeometry,
    t_start: Timestamp,
    t_end: Timestamp,
) -> Result<EventStream, EventError> {
    EventStream::new(events.iter().map(|l| l.event).collect(), geometry)?.with_window(t_start, t_end)
}

/// Sidecar text: `# t,x,y,p,label` then one line per event.
pub fn write_labels(events: &[LabeledEvent]) -> String {
    let mut out = String::from("# t,x,y,p,label\n");
    for l in events {
        let e = l.event;
        out.push_str(&format!("{},{},{},{},{}\n", e.t, e.x, e.y, e.p.sign(), l.label));
    }
    out
}

pub fn read_labels(text: &str) -> Result<Vec<LabeledEvent>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| format!("line {}: {what}", i + 1);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let p = f[3].parse::<i64>().ok().and_then(Polarity::from_sign).ok_or_else(|| bad("bad polarity"))?;
        out.push(LabeledEvent {
            event: Event::new(
                f[1].parse().map_err(|_| bad("bad x"))?,
                f[2].parse().map_err(|_| bad("bad y"))?,
                f[0].parse().map_err(|_| bad("bad timestamp"))?,
                p,
            ),
            label: f[4].parse().map_err(|e: String| bad(&e))?,
        });
    }
    Ok(out)
}

/// Precision and recall of a filtered stream against inceptive labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recovery {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn score_recovery(labeled: &[LabeledEvent], kept: &EventStream) -> Recovery {
    use std::collections::HashSet;
    let truth: HashSet<Event> = labeled
        .iter()
        .filter(|l| l.label == EventLabel::Inceptive)
        .map(|l| l.event)
        .collect();
    let tp = kept.events().iter().filter(|e| truth.contains(e)).count();
    let fp = kept.len() - tp;
    let fn_ = truth.len() - tp;
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Recovery {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    }
}
