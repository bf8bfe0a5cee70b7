//! Per-track temporal filters.
//!
//! A track is the strictly increasing list of timestamps of one pixel and
//! polarity. Filters decide, per timestamp, whether it survives, using only
//! the gaps to its neighbours in the same track:
//!
//! * `fsae` keeps an event when the gap to its predecessor exceeds `tau_minus`.
//! * `ie` (inceptive events) additionally requires a successor within
//!   `tau_plus`, keeping only the first event of a burst.
//! * `raw` keeps everything and exists so the unfiltered time-surface can be
//!   selected through the same registry.
//!
//! The first event of a track has no predecessor and always passes the
//! predecessor test. The last event has no successor and always fails the
//! successor test. Both comparisons are strict.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::event::{EventStream, PixelTrack, Polarity, Timestamp, TrackSet};
use crate::registry::{Registry, Strategy};

/// Default for both thresholds: 12 ms.
pub const DEFAULT_TAU_US: Timestamp = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterParams {
    pub tau_minus: Timestamp,
    pub tau_plus: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("filter thresholds must be positive (tau_minus={tau_minus}, tau_plus={tau_plus})")]
pub struct InvalidParams {
    pub tau_minus: Timestamp,
    pub tau_plus: Timestamp,
}

impl FilterParams {
    pub fn new(tau_minus: Timestamp, tau_plus: Timestamp) -> Result<Self, InvalidParams> {
        if tau_minus == 0 || tau_plus == 0 {
            return Err(InvalidParams { tau_minus, tau_plus });
        }
        Ok(Self { tau_minus, tau_plus })
    }

    pub fn symmetric(tau: Timestamp) -> Result<Self, InvalidParams> {
        Self::new(tau, tau)
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            tau_minus: DEFAULT_TAU_US,
            tau_plus: DEFAULT_TAU_US,
        }
    }
}

/// The surviving subsequence of one track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredTrack {
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
    pub kept_times: Vec<Timestamp>,
    pub source_count: usize,
}

pub trait TrackFilter: Strategy {
    /// Marks which entries of the strictly increasing `times` survive.
    /// `keep` has the same length as `times`.
    fn select(&self, times: &[Timestamp], params: &FilterParams, keep: &mut [bool]);

    fn apply(&self, track: &PixelTrack, params: &FilterParams) -> FilteredTrack {
        let times = track.times();
        let mut keep = vec![false; times.len()];
        self.select(times, params, &mut keep);
        FilteredTrack {
            x: track.x,
            y: track.y,
            p: track.p,
            kept_times: times
                .iter()
                .zip(&keep)
                .filter_map(|(&t, &k)| k.then_some(t))
                .collect(),
            source_count: times.len(),
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Unfiltered;

impl Strategy for Unfiltered {
    fn name(&self) -> &'static str {
        "raw"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["none", "raw_ts"]
    }
}

impl TrackFilter for Unfiltered {
    fn select(&self, _times: &[Timestamp], _params: &FilterParams, keep: &mut [bool]) {
        keep.fill(true);
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Fsae;

impl Strategy for Fsae {
    fn name(&self) -> &'static str {
        "fsae"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["fsae_ts"]
    }
}

impl TrackFilter for Fsae {
    fn select(&self, times: &[Timestamp], params: &FilterParams, keep: &mut [bool]) {
        debug_assert_eq!(times.len(), keep.len());
        if times.is_empty() {
            return;
        }
        keep[0] = true;
        for i in 1..times.len() {
            keep[i] = times[i] - times[i - 1] > params.tau_minus;
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Inceptive;

impl Strategy for Inceptive {
    fn name(&self) -> &'static str {
        "ie"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["iets", "inceptive"]
    }
}

impl TrackFilter for Inceptive {
    fn select(&self, times: &[Timestamp], params: &FilterParams, keep: &mut [bool]) {
        debug_assert_eq!(times.len(), keep.len());
        let n = times.len();
        for i in 0..n {
            let after_quiet = i == 0 || times[i] - times[i - 1] > params.tau_minus;
            let starts_burst = i + 1 < n && times[i + 1] - times[i] < params.tau_plus;
            keep[i] = after_quiet && starts_burst;
        }
    }
}

/// Built-in filters: `raw`, `fsae`, `ie`.
pub fn registry() -> &'static Registry<dyn TrackFilter> {
    static REGISTRY: OnceLock<Registry<dyn TrackFilter>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn TrackFilter>::new("filter")
            .with(Arc::new(Unfiltered))
            .with(Arc::new(Fsae))
            .with(Arc::new(Inceptive))
    })
}

pub fn fsae_filter(track: &PixelTrack, params: &FilterParams) -> FilteredTrack {
    Fsae.apply(track, params)
}

pub fn ie_filter(track: &PixelTrack, params: &FilterParams) -> FilteredTrack {
    Inceptive.apply(track, params)
}

/// Per-event survival mask over a canonical stream.
pub fn stream_mask(stream: &EventStream, filter: &dyn TrackFilter, params: &FilterParams) -> Vec<bool> {
    let tracks = TrackSet::build(stream);
    tracks_mask(&tracks, filter, params)
}

pub(crate) fn tracks_mask(tracks: &TrackSet, filter: &dyn TrackFilter, params: &FilterParams) -> Vec<bool> {
    let mut mask = vec![false; tracks.event_count()];
    let mut scratch = Vec::new();
    for track in tracks.iter() {
        scratch.clear();
        scratch.resize(track.times.len(), false);
        filter.select(track.times, params, &mut scratch);
        for (&idx, &k) in track.event_indices.iter().zip(&scratch) {
            mask[idx] = k;
        }
    }
    mask
}

/// Applies `filter` to every track and returns the surviving events as a
/// canonical stream with the input's geometry and window.
pub fn filter_stream(stream: &EventStream, filter: &dyn TrackFilter, params: &FilterParams) -> EventStream {
    let mask = stream_mask(stream, filter, params);
    let events = stream
        .events()
        .iter()
        .zip(&mask)
        .filter_map(|(e, &k)| k.then_some(*e))
        .collect();
    EventStream::from_canonical(events, stream.geometry(), stream.t_start(), stream.t_end())
}
