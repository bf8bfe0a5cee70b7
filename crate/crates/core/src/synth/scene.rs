//! Scenes of straight vertical edges and bars sweeping horizontally.
//!
//! A sweep's leading edge reaches column `x` at
//! `t0 + (x - start_x) / velocity` seconds. There the pixel's log-intensity
//! ramps by `c` thresholds at a constant slope of one threshold per
//! `step_us`, with `c` drawn per pixel from the sweep's contrast range. The
//! ramp is placed so its first threshold crossing lands exactly on the
//! arrival time. A bar adds a trailing edge of opposite sign
//! `bar_width / |velocity|` later.

use std::ops::{Range, RangeInclusive};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{events_from_intensity, inject_noise, to_stream, IntensityTrace, LabeledEvent, SensorModel};
use crate::event::{EventStream, Polarity, SensorGeometry, Timestamp};

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// Leading-edge column at `t0`.
    pub start_x: f64,
    pub t0: Timestamp,
    /// Pixels per second; negative moves left.
    pub velocity: f64,
    /// Distance to the trailing edge; `None` for a single edge.
    pub bar_width: Option<f64>,
    pub rows: Range<u16>,
    /// Threshold crossings per edge, drawn uniformly per pixel.
    pub contrast: RangeInclusive<u32>,
    /// Time between successive crossings of one edge.
    pub step_us: f64,
    /// Polarity of the leading edge.
    pub polarity: Polarity,
}

/// Ground-truth first-crossing time of an edge at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub x: u16,
    pub y: u16,
    pub t: Timestamp,
    pub p: Polarity,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: SensorGeometry,
    pub t_end: Timestamp,
    /// Signal and noise events in canonical order.
    pub events: Vec<LabeledEvent>,
    pub arrivals: Vec<Arrival>,
}

impl Scene {
    /// Events as a canonical stream over `[0, t_end]`.
    pub fn stream(&self) -> EventStream {
        to_stream(&self.events, self.geometry, 0, self.t_end).expect("scene events lie inside the scene")
    }
}

#[derive(Debug, Clone, Copy)]
struct Ramp {
    start: f64,
    duration: f64,
    delta: f64,
}

impl Ramp {
    fn at(&self, t: f64) -> f64 {
        if t <= self.start {
            0.0
        } else if t >= self.start + self.duration {
            self.delta
        } else {
            self.delta * (t - self.start) / self.duration
        }
    }
}

fn trace_from_ramps(x: u16, y: u16, ramps: &[Ramp]) -> IntensityTrace {
    let mut times: Vec<f64> = std::iter::once(0.0)
        .chain(ramps.iter().flat_map(|r| [r.start, r.start + r.duration]))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    IntensityTrace {
        x,
        y,
        knots: times.into_iter().map(|t| (t, ramps.iter().map(|r| r.at(t)).sum())).collect(),
    }
}

/// Renders `sweeps` over `[0, t_end]` and adds the model's background noise.
pub fn render_scene(geometry: SensorGeometry, sweeps: &[Sweep], t_end: Timestamp, model: &SensorModel) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut ramps: Vec<Vec<Ramp>> = vec![Vec::new(); geometry.pixel_count()];
    let mut arrivals = Vec::new();
    let theta = model.threshold;
    let horizon = t_end as f64;

    for sweep in sweeps {
        let sign = sweep.polarity.sign() as f64;
        let rows = sweep.rows.start.min(geometry.height)..sweep.rows.end.min(geometry.height);
        for y in rows {
            for x in 0..geometry.width {
                let travel = (x as f64 - sweep.start_x) / sweep.velocity;
                if !(travel >= 0.0) {
                    continue;
                }
                let lead = sweep.t0 as f64 + travel * 1e6;
                if lead > horizon {
                    continue;
                }
                let c = rng.random_range(sweep.contrast.clone()).max(1) as f64;
                let step = sweep.step_us;
                let rise = c * step;
                let cell = &mut ramps[geometry.index(x, y)];

                let start = (lead - step).max(0.0);
                cell.push(Ramp {
                    start,
                    duration: rise,
                    delta: sign * c * theta,
                });
                arrivals.push(Arrival {
                    x,
                    y,
                    t: (start + step + 0.5).floor() as Timestamp,
                    p: sweep.polarity,
                });

                if let Some(width) = sweep.bar_width {
                    let trail = lead + width / sweep.velocity.abs() * 1e6;
                    let back = (trail - step).max(start + rise);
                    if back + step <= horizon {
                        cell.push(Ramp {
                            start: back,
                            duration: rise,
                            delta: -sign * c * theta,
                        });
                        arrivals.push(Arrival {
                            x,
                            y,
                            t: (back + step + 0.5).floor() as Timestamp,
                            p: sweep.polarity.flip(),
                        });
                    }
                }
            }
        }
    }

    let traces: Vec<IntensityTrace> = (0..geometry.height)
        .flat_map(|y| (0..geometry.width).map(move |x| (x, y)))
        .filter_map(|(x, y)| {
            let r = &ramps[geometry.index(x, y)];
            (!r.is_empty()).then(|| trace_from_ramps(x, y, r))
        })
        .collect();
    let mut events = events_from_intensity(&traces, model);
    events.retain(|l| l.event.t <= t_end);
    let events = inject_noise(events, geometry, 0, t_end, model);
    Scene {
        geometry,
        t_end,
        events,
        arrivals,
    }
}

/// A single positive edge crossing the whole sensor left to right.
#[derive(Debug, Clone)]
pub struct EdgeScene {
    pub scene: Scene,
    /// Arrival time of the edge at each column.
    pub column_arrivals: Vec<Timestamp>,
}

/// Crossing spacing of the edges in [`moving_edge_scene`].
pub const EDGE_STEP_US: f64 = 250.0;
const EDGE_T0: Timestamp = 1000;

/// Vertical positive edge reaching column 0 at 1 ms and moving right at
/// `velocity` px/s, with `contrast` crossings per pixel.
pub fn moving_edge_scene(geometry: SensorGeometry, velocity: f64, contrast: u32, model: &SensorModel) -> EdgeScene {
    assert!(velocity > 0.0, "velocity must be positive");
    let t0 = EDGE_T0;
    let last = t0 as f64 + (geometry.width - 1) as f64 / velocity * 1e6;
    let t_end = (last + (contrast as f64 + 1.0) * EDGE_STEP_US).ceil() as Timestamp;
    let sweep = Sweep {
        start_x: 0.0,
        t0,
        velocity,
        bar_width: None,
        rows: 0..geometry.height,
        contrast: contrast..=contrast,
        step_us: EDGE_STEP_US,
        polarity: Polarity::Pos,
    };
    let scene = render_scene(geometry, &[sweep], t_end, model);
    let column_arrivals = (0..geometry.width)
        .map(|x| (t0 as f64 + x as f64 / velocity * 1e6 + 0.5).floor() as Timestamp)
        .collect();
    EdgeScene {
        scene,
        column_arrivals,
    }
}
