//! Reference implementations used only by the integration tests. Each one
//! is written from the definitions, shares no code with the library and
//! favors obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use iets_core::{Event, EventStream, Polarity, SensorGeometry, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest element of `times` strictly below `t`.
fn predecessor(times: &[Timestamp], t: Timestamp) -> Option<Timestamp> {
    times.iter().copied().filter(|&s| s < t).max()
}

/// Smallest element of `times` strictly above `t`.
fn successor(times: &[Timestamp], t: Timestamp) -> Option<Timestamp> {
    times.iter().copied().filter(|&s| s > t).min()
}

/// FSAE: an event survives when it has no predecessor or the gap to its
/// predecessor exceeds `tau_minus`.
pub fn oracle_fsae(times: &[Timestamp], tau_minus: Timestamp) -> Vec<Timestamp> {
    let mut kept = Vec::new();
    for &t in times {
        let quiet_before = match predecessor(times, t) {
            None => true,
            Some(prev) => t - prev > tau_minus,
        };
        if quiet_before {
            kept.push(t);
        }
    }
    kept
}

/// Inceptive events: quiet before (as FSAE) and followed by another event
/// less than `tau_plus` later. A missing successor fails the second test.
pub fn oracle_ie(times: &[Timestamp], tau_minus: Timestamp, tau_plus: Timestamp) -> Vec<Timestamp> {
    let mut kept = Vec::new();
    for &t in times {
        let quiet_before = match predecessor(times, t) {
            None => true,
            Some(prev) => t - prev > tau_minus,
        };
        let busy_after = match successor(times, t) {
            None => false,
            Some(next) => next - t < tau_plus,
        };
        if quiet_before && busy_after {
            kept.push(t);
        }
    }
    kept
}

fn polarity_rank(p: Polarity) -> u8 {
    match p {
        Polarity::Neg => 0,
        Polarity::Pos => 1,
    }
}

fn sort_key(e: &Event) -> (Timestamp, u16, u16, u8) {
    (e.t, e.y, e.x, polarity_rank(e.p))
}

/// Canonical order by insertion sort, then dedup of exact repeats.
pub fn reference_sort(events: &[Event]) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::with_capacity(events.len());
    for &e in events {
        let key = sort_key(&e);
        let mut pos = out.len();
        while pos > 0 && sort_key(&out[pos - 1]) > key {
            pos -= 1;
        }
        if pos > 0 && sort_key(&out[pos - 1]) == key {
            continue;
        }
        out.insert(pos, e);
    }
    out
}

/// Sorted, deduplicated times per `(x, y, polarity)`.
pub fn bucket(events: &[Event]) -> BTreeMap<(u16, u16, u8), Vec<Timestamp>> {
    let mut map: BTreeMap<(u16, u16, u8), Vec<Timestamp>> = BTreeMap::new();
    for e in events {
        map.entry((e.x, e.y, polarity_rank(e.p))).or_default().push(e.t);
    }
    for times in map.values_mut() {
        times.sort();
        times.dedup();
    }
    map
}

/// Events per pixel, both polarities.
pub fn histogram(events: &[Event], geometry: SensorGeometry) -> Vec<u32> {
    let mut counts = vec![0; geometry.width as usize * geometry.height as usize];
    for e in events {
        counts[e.y as usize * geometry.width as usize + e.x as usize] += 1;
    }
    counts
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by comparing every pair.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs as f64
}

/// Random strictly increasing times with gaps drawn around `tau` so that
/// both sides of every threshold are exercised.
pub fn random_track(rng: &mut impl Rng, max_len: usize, tau: Timestamp) -> Vec<Timestamp> {
    let len = rng.random_range(1..=max_len);
    let mut t = rng.random_range(0..3 * tau);
    let mut times = Vec::with_capacity(len);
    for _ in 0..len {
        times.push(t);
        let gap = match rng.random_range(0..4) {
            0 => tau,
            1 => tau + 1,
            2 => rng.random_range(1..=tau),
            _ => rng.random_range(1..4 * tau),
        };
        t += gap;
    }
    times
}

pub fn random_events(rng: &mut impl Rng, geometry: SensorGeometry, n: usize, t_max: Timestamp) -> Vec<Event> {
    (0..n)
        .map(|_| {
            Event::new(
                rng.random_range(0..geometry.width),
                rng.random_range(0..geometry.height),
                rng.random_range(0..=t_max),
                Polarity::from_bit(rng.random_bool(0.5)),
            )
        })
        .collect()
}

pub fn random_stream(rng: &mut impl Rng, geometry: SensorGeometry, n: usize, t_max: Timestamp) -> EventStream {
    EventStream::new(random_events(rng, geometry, n, t_max), geometry).unwrap()
}

/// Bursty stream: each burst is several same-pixel events a few ms apart.
pub fn bursty_stream(rng: &mut impl Rng, geometry: SensorGeometry, bursts: usize, t_max: Timestamp) -> EventStream {
    let mut events = Vec::new();
    for _ in 0..bursts {
        let (x, y) = (rng.random_range(0..geometry.width), rng.random_range(0..geometry.height));
        let p = Polarity::from_bit(rng.random_bool(0.5));
        let mut t = rng.random_range(0..t_max);
        for _ in 0..rng.random_range(1..=6) {
            events.push(Event::new(x, y, t, p));
            t += rng.random_range(100..20_000);
        }
    }
    EventStream::new(events, geometry).unwrap()
}

pub fn geometry(w: u16, h: u16) -> SensorGeometry {
    SensorGeometry::new(w, h).unwrap()
}

/// Path of a file under `tests/data`.
pub fn data(path: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(path)
}

/// Noise-free scenes in which every transition crosses at least two
/// levels, crossings are at most 1 ms apart and same-polarity transitions
/// at a pixel are at least 40 ms apart.
pub fn recovery_scenes(noise_rate: f64, seed: u64) -> Vec<iets_core::synth::Scene> {
    use iets_core::synth::{moving_edge_scene, render_scene, SensorModel, Sweep};
    let model = SensorModel::default().with_noise(noise_rate).with_seed(seed);
    let mut scenes = Vec::new();
    for (i, velocity) in [200.0, 800.0, 3000.0].into_iter().enumerate() {
        for contrast in [2, 3, 5, 8] {
            let m = model.with_seed(seed.wrapping_add(10 * i as u64 + contrast as u64));
            scenes.push(moving_edge_scene(geometry(32, 16), velocity, contrast, &m).scene);
        }
    }
    let bar = |start_x: f64, t0: Timestamp, velocity: f64, step_us: f64, polarity: Polarity| Sweep {
        start_x,
        t0,
        velocity,
        bar_width: Some(4.0),
        rows: 2..14,
        contrast: 2..=6,
        step_us,
        polarity,
    };
    scenes.push(render_scene(
        geometry(32, 16),
        &[bar(0.0, 0, 2000.0, 500.0, Polarity::Pos), bar(0.0, 60_000, 2000.0, 500.0, Polarity::Pos)],
        120_000,
        &model,
    ));
    scenes.push(render_scene(
        geometry(32, 16),
        &[bar(31.0, 5_000, -1500.0, 1000.0, Polarity::Neg), bar(0.0, 70_000, 2500.0, 250.0, Polarity::Neg)],
        130_000,
        &model.with_seed(seed ^ 1),
    ));
    scenes
}
