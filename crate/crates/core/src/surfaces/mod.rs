//! Time-surfaces and three-channel frame composition.
//!
//! A time-surface stores, per pixel, an aggregate of that pixel's event
//! times. Raw surfaces keep values in microseconds relative to an origin
//! (the earliest event), which makes every downstream value invariant to a
//! constant time offset. [`normalize`] maps a surface into `[0, 1]`.
//!
//! Pixels with no contributing events hold `None` until export, where they
//! become 0. A real event at the earliest time also normalizes to 0, so the
//! two are kept distinct internally.

mod aggregate;
pub mod export;
mod frame;

pub use aggregate::{aggregators, mean_since, Aggregator, Max, Mean, Median, Min};
pub use export::{
    encoders, export_frame, quantize_u8, read_raw_f32, write_frame, ExportError, FrameEncoder, Png8, RawF32,
    RawFrame,
};
pub use frame::{compose_frame, FilteredTracks, FramePipeline, IetsFrame, RawChannels};

use serde::{Deserialize, Serialize};

use crate::event::{EventStream, PixelTrack, Polarity, SensorGeometry, Timestamp};
use crate::filters::{FilterParams, Inceptive, TrackFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    TsPos,
    TsNeg,
    Count,
}

impl ChannelKind {
    pub fn for_polarity(p: Polarity) -> Self {
        match p {
            Polarity::Pos => ChannelKind::TsPos,
            Polarity::Neg => ChannelKind::TsNeg,
        }
    }
}

/// Unit of a surface's stored values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Microseconds after `origin`.
    Microseconds { origin: Timestamp },
    /// Event counts.
    Events,
    /// Normalized to `[0, 1]`.
    Unit,
}

/// Which pipeline produced a surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub filter: &'static str,
    pub aggregator: &'static str,
    pub params: Option<FilterParams>,
}

impl Provenance {
    fn counts() -> Self {
        Self {
            filter: "raw",
            aggregator: "count",
            params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceImage {
    geometry: SensorGeometry,
    kind: ChannelKind,
    scale: Scale,
    values: Vec<Option<f64>>,
    provenance: Provenance,
}

impl SurfaceImage {
    pub(crate) fn new(
        geometry: SensorGeometry,
        kind: ChannelKind,
        scale: Scale,
        values: Vec<Option<f64>>,
        provenance: Provenance,
    ) -> Self {
        debug_assert_eq!(values.len(), geometry.pixel_count());
        Self {
            geometry,
            kind,
            scale,
            values,
            provenance,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Row-major values; `None` marks pixels without events.
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, x: u16, y: u16) -> Option<f64> {
        self.values[self.geometry.index(x, y)]
    }

    /// Value in absolute units: microseconds since stream time zero for raw
    /// time channels, the stored value otherwise.
    pub fn absolute(&self, x: u16, y: u16) -> Option<f64> {
        let v = self.get(x, y)?;
        Some(match self.scale {
            Scale::Microseconds { origin } => v + origin as f64,
            _ => v,
        })
    }

    pub fn non_empty(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Export view: empty pixels read as 0.
    pub fn dense(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v.unwrap_or(0.0))
    }
}

/// Earliest time across `tracks`, the shared origin for raw surfaces.
fn origin_of(tracks: &[PixelTrack]) -> Timestamp {
    tracks
        .iter()
        .filter_map(|t| t.times().first().copied())
        .min()
        .unwrap_or(0)
}

/// Time-surface of one polarity: `aggregator` over each pixel's track.
pub fn time_surface(
    tracks: &[PixelTrack],
    geometry: SensorGeometry,
    polarity: Polarity,
    aggregator: &dyn Aggregator,
) -> SurfaceImage {
    let origin = origin_of(tracks);
    let mut values = vec![None; geometry.pixel_count()];
    for tr in tracks.iter().filter(|t| t.p == polarity && !t.is_empty()) {
        values[geometry.index(tr.x, tr.y)] = Some(aggregator.aggregate(tr.times(), origin));
    }
    SurfaceImage::new(
        geometry,
        ChannelKind::for_polarity(polarity),
        Scale::Microseconds { origin },
        values,
        Provenance {
            filter: "raw",
            aggregator: aggregator.name(),
            params: None,
        },
    )
}

/// A filtered time-surface and the pixels that fell back to the mean of
/// all their raw events because the filter removed every event.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSurface {
    pub surface: SurfaceImage,
    pub fallback: Vec<bool>,
}

/// Time-surface over the events surviving `filter`, with the mean-time
/// fallback for pixels whose events were all removed.
pub fn filtered_surface(
    tracks: &[PixelTrack],
    geometry: SensorGeometry,
    polarity: Polarity,
    filter: &dyn TrackFilter,
    params: &FilterParams,
    aggregator: &dyn Aggregator,
) -> FilteredSurface {
    let origin = origin_of(tracks);
    let mut values = vec![None; geometry.pixel_count()];
    let mut fallback = vec![false; geometry.pixel_count()];
    for tr in tracks.iter().filter(|t| t.p == polarity && !t.is_empty()) {
        let idx = geometry.index(tr.x, tr.y);
        let kept = filter.apply(tr, params).kept_times;
        values[idx] = Some(if kept.is_empty() {
            fallback[idx] = true;
            mean_since(tr.times(), origin)
        } else {
            aggregator.aggregate(&kept, origin)
        });
    }
    FilteredSurface {
        surface: SurfaceImage::new(
            geometry,
            ChannelKind::for_polarity(polarity),
            Scale::Microseconds { origin },
            values,
            Provenance {
                filter: filter.name(),
                aggregator: aggregator.name(),
                params: Some(*params),
            },
        ),
        fallback,
    }
}

/// IETS channel for one polarity.
pub fn iets_surface(
    stream: &EventStream,
    polarity: Polarity,
    params: &FilterParams,
    aggregator: &dyn Aggregator,
) -> FilteredSurface {
    let tracks = crate::event::group_tracks(stream);
    filtered_surface(&tracks, stream.geometry(), polarity, &Inceptive, params, aggregator)
}

/// Per-pixel count of all events of both polarities, before filtering.
pub fn count_channel(stream: &EventStream) -> SurfaceImage {
    let geometry = stream.geometry();
    let mut counts = vec![0u32; geometry.pixel_count()];
    for e in stream.events() {
        counts[geometry.index(e.x, e.y)] += 1;
    }
    SurfaceImage::new(
        geometry,
        ChannelKind::Count,
        Scale::Events,
        counts
            .into_iter()
            .map(|c| (c > 0).then_some(c as f64))
            .collect(),
        Provenance::counts(),
    )
}

/// Scales a surface into `[0, 1]`.
///
/// Time channels use min-max scaling over non-empty pixels; counts are
/// divided by their maximum. When all non-empty values are equal they map
/// to 1. Empty pixels stay empty.
pub fn normalize(surface: &SurfaceImage) -> SurfaceImage {
    let mut out = surface.clone();
    out.scale = Scale::Unit;
    let present = || surface.values.iter().flatten().copied();
    let (lo, hi) = present().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return out;
    }
    let floor = match surface.scale {
        Scale::Microseconds { .. } => lo,
        Scale::Events => 0.0,
        Scale::Unit => return out,
    };
    let span = hi - floor;
    for v in out.values.iter_mut().flatten() {
        *v = if span > 0.0 { ((*v - floor) / span).clamp(0.0, 1.0) } else { 1.0 };
    }
    out
}
