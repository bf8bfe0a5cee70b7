//! Seeded labeled corpora built from [`render_scene`].

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{render_scene, Scene, Sweep};
use super::SensorModel;
use crate::event::{Event, EventStream, Polarity, SensorGeometry, Timestamp};

const SAMPLE_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub geometry: SensorGeometry,
    pub duration_us: Timestamp,
    pub samples_per_class: usize,
    /// Crossings per object edge.
    pub contrast: RangeInclusive<u32>,
    pub model: SensorModel,
}

impl CorpusConfig {
    fn base(samples_per_class: usize, contrast: RangeInclusive<u32>, noise_rate: f64, seed: u64) -> Self {
        Self {
            geometry: SensorGeometry::new(32, 32).expect("non-empty"),
            duration_us: 100_000,
            samples_per_class,
            contrast,
            model: SensorModel::default().with_noise(noise_rate).with_seed(seed),
        }
    }

    /// Defaults for [`direction_task`]: 32x32, 100 ms, 1-16 crossings per
    /// edge, 4 Hz noise.
    pub fn direction(samples_per_class: usize, seed: u64) -> Self {
        Self::base(samples_per_class, 1..=16, 4.0, seed)
    }

    /// Defaults for [`surrogate_corpus`]: 32x32, 100 ms, 6-10 crossings per
    /// object edge, 12 Hz noise.
    pub fn surrogate(samples_per_class: usize, seed: u64) -> Self {
        Self::base(samples_per_class, 6..=10, 12.0, seed)
    }

    fn sample_seed(&self, index: usize) -> u64 {
        self.model.seed.wrapping_add((index as u64 + 1).wrapping_mul(SAMPLE_STRIDE))
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSample {
    /// Stable file stem, e.g. `right_0007`.
    pub name: String,
    pub class: usize,
    pub class_name: &'static str,
    pub scene: Scene,
}

impl LabeledSample {
    pub fn stream(&self) -> EventStream {
        self.scene.stream()
    }
}

fn build<F>(config: &CorpusConfig, classes: [&'static str; 2], mut sweeps: F) -> Vec<LabeledSample>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> Vec<Sweep>,
{
    let mut out = Vec::with_capacity(2 * config.samples_per_class);
    for i in 0..config.samples_per_class {
        for (class, class_name) in classes.into_iter().enumerate() {
            let seed = config.sample_seed(2 * i + class);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = sweeps(class, &mut rng);
            let scene = render_scene(config.geometry, &plan, config.duration_us, &config.model.with_seed(seed));
            out.push(LabeledSample {
                name: format!("{class_name}_{i:04}"),
                class,
                class_name,
                scene,
            });
        }
    }
    out
}

/// Two classes of short, fast bars: moving `left` (class 0) or `right`
/// (class 1). Position, size, speed and crossing spacing are random, and
/// edge contrast varies per pixel, so a pixel's scaling events trail its
/// arrival by a variable delay.
pub fn direction_task(config: &CorpusConfig) -> Vec<LabeledSample> {
    let w = config.geometry.width as f64;
    let h = config.geometry.height;
    let span = config.duration_us as f64;
    build(config, ["left", "right"], |class, rng| {
        let speed = rng.random_range(2.0..6.0) * w / span * 1e6;
        let offset = rng.random_range(-0.25..0.25) * w;
        let (start_x, velocity) = if class == 1 { (offset, speed) } else { (w - 1.0 - offset, -speed) };
        let tall = rng.random_range(4..=12).min(h);
        let top = rng.random_range(0..=h - tall);
        vec![Sweep {
            start_x,
            t0: rng.random_range(0.0..0.5 * span) as Timestamp,
            velocity,
            bar_width: Some(rng.random_range(0.1..0.25) * w),
            rows: top..top + tall,
            contrast: config.contrast.clone(),
            step_us: rng.random_range(2000.0..6000.0),
            polarity: Polarity::from_bit(rng.random_bool(0.5)),
        }]
    })
}

/// Stand-in for a car/background clip dataset: `background` (class 0)
/// holds slow, faint drifting structure; `cars` (class 1) adds one
/// high-contrast object crossing the view on top of it.
pub fn surrogate_corpus(config: &CorpusConfig) -> Vec<LabeledSample> {
    let w = config.geometry.width as f64;
    let h = config.geometry.height;
    let span = config.duration_us as f64;
    build(config, ["background", "cars"], |class, rng| {
        let mut plan: Vec<Sweep> = (0..rng.random_range(4..=7))
            .map(|_| {
                let rightward = rng.random_bool(0.5);
                let speed = rng.random_range(0.2..0.6) * w / span * 1e6;
                let top = rng.random_range(0..h / 2);
                Sweep {
                    start_x: if rightward { rng.random_range(-0.5 * w..w) } else { rng.random_range(0.0..1.5 * w) },
                    t0: 0,
                    velocity: if rightward { speed } else { -speed },
                    bar_width: None,
                    rows: top..rng.random_range(h / 2 + 1..=h),
                    contrast: 2..=4,
                    step_us: rng.random_range(0.15..0.3) * span,
                    polarity: Polarity::from_bit(rng.random_bool(0.5)),
                }
            })
            .collect();
        if class == 1 {
            let rightward = rng.random_bool(0.5);
            let speed = rng.random_range(0.8..1.6) * w / span * 1e6;
            let offset = rng.random_range(-0.3..0.1) * w;
            let top = rng.random_range(0..=h / 2);
            plan.push(Sweep {
                start_x: if rightward { offset } else { w - 1.0 - offset },
                t0: rng.random_range(0.0..0.2 * span) as Timestamp,
                velocity: if rightward { speed } else { -speed },
                bar_width: Some(rng.random_range(0.25..0.5) * w),
                rows: top..top + rng.random_range(h / 4..=h / 2),
                contrast: config.contrast.clone(),
                step_us: rng.random_range(150.0..500.0),
                polarity: Polarity::from_bit(rng.random_bool(0.5)),
            });
        }
        plan
    })
}

/// Benchmark streams of same-pixel bursts plus isolated events, about
/// `events_per_sample` each and `total_events` overall.
pub fn burst_workload(
    geometry: SensorGeometry,
    total_events: usize,
    events_per_sample: usize,
    seed: u64,
) -> Vec<EventStream> {
    assert!(events_per_sample > 0, "events_per_sample must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = total_events.div_ceil(events_per_sample);
    let span: Timestamp = 100_000;
    (0..samples)
        .map(|i| {
            let target = events_per_sample.min(total_events - i * events_per_sample);
            let mut events = Vec::with_capacity(target + 16);
            while events.len() < target {
                let x = rng.random_range(0..geometry.width);
                let y = rng.random_range(0..geometry.height);
                let p = Polarity::from_bit(rng.random_bool(0.5));
                let mut t = rng.random_range(0..span);
                let len = rng.random_range(1..=8usize).min(target - events.len());
                for _ in 0..len {
                    events.push(Event::new(x, y, t, p));
                    t += rng.random_range(50..2000);
                }
            }
            EventStream::new(events, geometry).expect("events lie on the sensor")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_balanced_and_seeded() {
        let config = CorpusConfig::direction(3, 11);
        let a = direction_task(&config);
        assert_eq!(a.len(), 6);
        assert_eq!(a.iter().filter(|s| s.class == 1).count(), 3);
        assert_eq!(a[1].name, "right_0000");
        let b = direction_task(&config);
        assert!(a.iter().zip(&b).all(|(x, y)| x.scene.events == y.scene.events));
        let s = surrogate_corpus(&CorpusConfig::surrogate(3, 11));
        assert_eq!(s[3].class_name, "cars");
        assert!(s.iter().all(|x| !x.scene.events.is_empty()));
    }

    #[test]
    fn burst_workload_hits_the_total() {
        let g = SensorGeometry::new(64, 48).unwrap();
        let streams = burst_workload(g, 10_500, 4000, 1);
        assert_eq!(streams.len(), 3);
        let total: usize = streams.iter().map(EventStream::len).sum();
        // exact duplicates collapse, so allow a little slack
        assert!(total > 10_400 && total <= 10_500, "{total}");
    }
}
