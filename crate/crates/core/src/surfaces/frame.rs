use std::sync::Arc;

use super::{
    count_channel, mean_since, normalize, Aggregator, ChannelKind, Mean, Provenance, Scale, SurfaceImage,
};
use crate::event::{EventStream, Polarity, SensorGeometry, TrackSet};
use crate::filters::{self, FilterParams, Inceptive, TrackFilter};
use crate::registry::UnknownStrategy;

/// The three-channel image: positive and negative time-surfaces plus the
/// unfiltered event count, all scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IetsFrame {
    pub pos: SurfaceImage,
    pub neg: SurfaceImage,
    pub count: SurfaceImage,
    pub fallback_pos: Vec<bool>,
    pub fallback_neg: Vec<bool>,
}

impl IetsFrame {
    pub fn geometry(&self) -> SensorGeometry {
        self.count.geometry()
    }

    pub fn channel(&self, p: Polarity) -> &SurfaceImage {
        match p {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        }
    }

    pub fn channels(&self) -> [&SurfaceImage; 3] {
        [&self.pos, &self.neg, &self.count]
    }

    /// True where either polarity channel used the mean-time fallback.
    pub fn fallback_used(&self, x: u16, y: u16) -> bool {
        let i = self.geometry().index(x, y);
        self.fallback_pos[i] || self.fallback_neg[i]
    }

    pub fn fallback_pixels(&self) -> usize {
        self.fallback_pos.iter().filter(|&&f| f).count() + self.fallback_neg.iter().filter(|&&f| f).count()
    }
}

/// Survival flags for every timestamp of a [`TrackSet`], in track order.
#[derive(Debug, Clone)]
pub struct FilteredTracks {
    pub keep: Vec<bool>,
}

impl FilteredTracks {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Un-normalized polarity channels with their fallback maps.
#[derive(Debug, Clone)]
pub struct RawChannels {
    pub pos: SurfaceImage,
    pub neg: SurfaceImage,
    pub fallback_pos: Vec<bool>,
    pub fallback_neg: Vec<bool>,
}

/// Group, filter, aggregate and normalize: one configured frame builder.
#[derive(Clone)]
pub struct FramePipeline {
    filter: Arc<dyn TrackFilter>,
    aggregator: Arc<dyn Aggregator>,
    params: FilterParams,
}

impl std::fmt::Debug for FramePipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FramePipeline")
            .field("filter", &self.filter.name())
            .field("aggregator", &self.aggregator.name())
            .field("params", &self.params)
            .finish()
    }
}

impl FramePipeline {
    pub fn new(filter: Arc<dyn TrackFilter>, aggregator: Arc<dyn Aggregator>, params: FilterParams) -> Self {
        Self {
            filter,
            aggregator,
            params,
        }
    }

    /// Looks both strategies up in the built-in registries.
    pub fn from_names(filter: &str, aggregator: &str, params: FilterParams) -> Result<Self, UnknownStrategy> {
        Ok(Self::new(
            filters::registry().get(filter)?,
            super::aggregators().get(aggregator)?,
            params,
        ))
    }

    /// Inceptive-event filter with mean aggregation.
    pub fn iets(params: FilterParams) -> Self {
        Self::new(Arc::new(Inceptive), Arc::new(Mean), params)
    }

    pub fn filter(&self) -> &dyn TrackFilter {
        self.filter.as_ref()
    }

    pub fn aggregator(&self) -> &dyn Aggregator {
        self.aggregator.as_ref()
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn group(&self, stream: &EventStream) -> TrackSet {
        TrackSet::build(stream)
    }

    pub fn filter_tracks(&self, tracks: &TrackSet) -> FilteredTracks {
        let mut keep = vec![false; tracks.event_count()];
        let mut offset = 0;
        for track in tracks.iter() {
            let n = track.times.len();
            self.filter.select(track.times, &self.params, &mut keep[offset..offset + n]);
            offset += n;
        }
        FilteredTracks { keep }
    }

    pub fn surfaces(&self, tracks: &TrackSet, filtered: &FilteredTracks) -> RawChannels {
        let geometry = tracks.geometry();
        let origin = tracks.iter().map(|t| t.times[0]).min().unwrap_or(0);
        let mut values = [vec![None; geometry.pixel_count()], vec![None; geometry.pixel_count()]];
        let mut fallback = [vec![false; geometry.pixel_count()], vec![false; geometry.pixel_count()]];
        let mut kept = Vec::new();
        let mut offset = 0;
        for track in tracks.iter() {
            let n = track.times.len();
            let keep = &filtered.keep[offset..offset + n];
            offset += n;
            kept.clear();
            kept.extend(track.times.iter().zip(keep).filter_map(|(&t, &k)| k.then_some(t)));
            let ch = track.p.bit() as usize;
            let idx = geometry.index(track.x, track.y);
            values[ch][idx] = Some(if kept.is_empty() {
                fallback[ch][idx] = true;
                mean_since(track.times, origin)
            } else {
                self.aggregator.aggregate(&kept, origin)
            });
        }
        let provenance = Provenance {
            filter: self.filter.name(),
            aggregator: self.aggregator.name(),
            params: Some(self.params),
        };
        let [neg_values, pos_values] = values;
        let [fallback_neg, fallback_pos] = fallback;
        let scale = Scale::Microseconds { origin };
        RawChannels {
            pos: SurfaceImage::new(geometry, ChannelKind::TsPos, scale, pos_values, provenance.clone()),
            neg: SurfaceImage::new(geometry, ChannelKind::TsNeg, scale, neg_values, provenance),
            fallback_pos,
            fallback_neg,
        }
    }

    pub fn finish(&self, raw: RawChannels, count: &SurfaceImage) -> IetsFrame {
        IetsFrame {
            pos: normalize(&raw.pos),
            neg: normalize(&raw.neg),
            count: normalize(count),
            fallback_pos: raw.fallback_pos,
            fallback_neg: raw.fallback_neg,
        }
    }

    pub fn compose(&self, stream: &EventStream) -> IetsFrame {
        let tracks = self.group(stream);
        let filtered = self.filter_tracks(&tracks);
        let raw = self.surfaces(&tracks, &filtered);
        self.finish(raw, &count_channel(stream))
    }

    /// Filename fragment such as `iets_t12000` identifying this configuration.
    pub fn tag(&self) -> String {
        let variant = match self.filter.name() {
            "ie" => "iets",
            "fsae" => "fsae",
            "raw" => "raw_ts",
            other => other,
        };
        let mut tag = if self.params.tau_minus == self.params.tau_plus {
            format!("{variant}_t{}", self.params.tau_minus)
        } else {
            format!("{variant}_t{}-{}", self.params.tau_minus, self.params.tau_plus)
        };
        if self.aggregator.name() != "mean" {
            tag.push('_');
            tag.push_str(self.aggregator.name());
        }
        tag
    }
}

/// IETS frame with the given thresholds and mean aggregation.
pub fn compose_frame(stream: &EventStream, params: &FilterParams) -> IetsFrame {
    FramePipeline::iets(*params).compose(stream)
}
