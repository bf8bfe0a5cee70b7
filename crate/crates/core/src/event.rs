//! Event data model: events, sensor geometry, canonical streams and
//! per-pixel, per-polarity timestamp tracks.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Event time in integer microseconds.
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    /// Intensity decrease (-1).
    Neg,
    /// Intensity increase (+1).
    Pos,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Polarity::Neg),
            1 => Some(Polarity::Pos),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Neg => -1,
            Polarity::Pos => 1,
        }
    }

    /// 0 for negative, 1 for positive; the on-disk bit used by most sensors.
    pub fn bit(self) -> u8 {
        match self {
            Polarity::Neg => 0,
            Polarity::Pos => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Pos
        } else {
            Polarity::Neg
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Polarity::Neg => Polarity::Pos,
            Polarity::Pos => Polarity::Neg,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

/// One sensor event. `x` is the column, `y` the row, both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: Timestamp,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: Timestamp, p: Polarity) -> Self {
        Self { x, y, t, p }
    }

    /// Canonical sort key: time, then row, column and polarity.
    #[inline]
    pub fn key(&self) -> (Timestamp, u16, u16, Polarity) {
        (self.t, self.y, self.x, self.p)
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::EmptyGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major pixel index.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Smallest geometry containing every event, at least 1x1.
    pub fn infer(events: &[Event]) -> Self {
        let (mut w, mut h) = (1u32, 1u32);
        for e in events {
            w = w.max(e.x as u32 + 1);
            h = h.max(e.y as u32 + 1);
        }
        Self {
            width: w.min(u16::MAX as u32) as u16,
            height: h.min(u16::MAX as u32) as u16,
        }
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("sensor geometry must be at least 1x1, got {width}x{height}")]
    EmptyGeometry { width: u16, height: u16 },
    #[error("event {index} at ({x}, {y}) lies outside the {geometry} sensor")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        geometry: SensorGeometry,
    },
    #[error("event at t={t} lies outside the window [{t_start}, {t_end}]")]
    OutsideWindow {
        t: Timestamp,
        t_start: Timestamp,
        t_end: Timestamp,
    },
    #[error("window start {t_start} is after window end {t_end}")]
    InvertedWindow { t_start: Timestamp, t_end: Timestamp },
}

/// A canonical, time-ordered event collection.
///
/// Events are sorted by `(t, y, x, p)` with exact duplicates removed, and
/// every event lies inside both the geometry and `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
    t_start: Timestamp,
    t_end: Timestamp,
}

/// Result of [`canonicalize`]: the stream plus how many exact duplicates
/// were collapsed.
#[derive(Debug, Clone)]
pub struct Canonical {
    pub stream: EventStream,
    pub duplicates: usize,
}

/// Sorts `events` into canonical order and collapses exact duplicates.
pub fn canonicalize(mut events: Vec<Event>, geometry: SensorGeometry) -> Result<Canonical, EventError> {
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            return Err(EventError::OutOfBounds {
                index,
                x: e.x,
                y: e.y,
                geometry,
            });
        }
    }
    // Fully tied events are identical, so an unstable sort cannot reorder
    // anything observable.
    if !events.is_sorted() {
        events.sort_unstable();
    }
    let before = events.len();
    events.dedup();
    let duplicates = before - events.len();
    let (t_start, t_end) = match (events.first(), events.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (0, 0),
    };
    Ok(Canonical {
        stream: EventStream {
            geometry,
            events,
            t_start,
            t_end,
        },
        duplicates,
    })
}

/// Builds a canonical stream whose window spans the first to last event.
pub fn sort_stream(events: Vec<Event>, geometry: SensorGeometry) -> Result<EventStream, EventError> {
    canonicalize(events, geometry).map(|c| c.stream)
}

impl EventStream {
    pub fn new(events: Vec<Event>, geometry: SensorGeometry) -> Result<Self, EventError> {
        sort_stream(events, geometry)
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
            t_start: 0,
            t_end: 0,
        }
    }

    /// Replaces the time window; every event must fall inside it.
    pub fn with_window(mut self, t_start: Timestamp, t_end: Timestamp) -> Result<Self, EventError> {
        if t_start > t_end {
            return Err(EventError::InvertedWindow { t_start, t_end });
        }
        if let Some(e) = self
            .events
            .iter()
            .find(|e| e.t < t_start || e.t > t_end)
        {
            return Err(EventError::OutsideWindow {
                t: e.t,
                t_start,
                t_end,
            });
        }
        self.t_start = t_start;
        self.t_end = t_end;
        Ok(self)
    }

    /// Wraps events already known to be canonical and inside `geometry`.
    pub(crate) fn from_canonical(
        events: Vec<Event>,
        geometry: SensorGeometry,
        t_start: Timestamp,
        t_end: Timestamp,
    ) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0] < w[1]));
        Self {
            geometry,
            events,
            t_start,
            t_end,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t_start(&self) -> Timestamp {
        self.t_start
    }

    pub fn t_end(&self) -> Timestamp {
        self.t_end
    }

    pub fn duration_us(&self) -> Timestamp {
        self.t_end - self.t_start
    }

    /// Same events and window moved later by `delta` microseconds.
    pub fn shifted(&self, delta: Timestamp) -> Self {
        Self {
            geometry: self.geometry,
            events: self
                .events
                .iter()
                .map(|e| Event { t: e.t + delta, ..*e })
                .collect(),
            t_start: self.t_start + delta,
            t_end: self.t_end + delta,
        }
    }

    /// Events of one polarity, in stream order.
    pub fn polarity(&self, p: Polarity) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.p == p)
    }
}

/// The ordered timestamps of one pixel and polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelTrack {
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
    times: Vec<Timestamp>,
}

impl PixelTrack {
    /// Sorts and deduplicates `times`.
    pub fn new(x: u16, y: u16, p: Polarity, mut times: Vec<Timestamp>) -> Self {
        times.sort_unstable();
        times.dedup();
        Self { x, y, p, times }
    }

    pub fn times(&self) -> &[Timestamp] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Packed track identifier ordering tracks by `(y, x, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackKey(u64);

impl TrackKey {
    #[inline]
    pub fn new(x: u16, y: u16, p: Polarity) -> Self {
        TrackKey(((y as u64) << 17) | ((x as u64) << 1) | p.bit() as u64)
    }

    pub fn x(self) -> u16 {
        ((self.0 >> 1) & 0xFFFF) as u16
    }

    pub fn y(self) -> u16 {
        (self.0 >> 17) as u16
    }

    pub fn polarity(self) -> Polarity {
        Polarity::from_bit(self.0 & 1 == 1)
    }
}

/// Borrowed view of one track inside a [`TrackSet`].
#[derive(Debug, Clone, Copy)]
pub struct TrackView<'a> {
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
    /// Strictly increasing timestamps.
    pub times: &'a [Timestamp],
    /// Position of each timestamp's event in the source stream.
    pub event_indices: &'a [usize],
}

/// All tracks of a stream in one contiguous buffer, ordered by `(y, x, p)`.
#[derive(Debug, Clone)]
pub struct TrackSet {
    geometry: SensorGeometry,
    keys: Vec<TrackKey>,
    offsets: Vec<usize>,
    times: Vec<Timestamp>,
    event_indices: Vec<usize>,
}

const DENSE_BUCKET_LIMIT: usize = 1 << 22;

impl TrackSet {
    pub fn build(stream: &EventStream) -> Self {
        let geometry = stream.geometry();
        let events = stream.events();
        let buckets = geometry.pixel_count() * 2;
        let order = if buckets <= DENSE_BUCKET_LIMIT.max(4 * events.len()) {
            dense_bucket_order(events, geometry, buckets)
        } else {
            let mut order: Vec<usize> = (0..events.len()).collect();
            // Stable, so per-track order stays chronological.
            order.sort_by_key(|&i| TrackKey::new(events[i].x, events[i].y, events[i].p));
            order
        };

        let mut keys = Vec::new();
        let mut offsets = vec![0];
        let mut times = Vec::with_capacity(events.len());
        for (pos, &i) in order.iter().enumerate() {
            let e = &events[i];
            let key = TrackKey::new(e.x, e.y, e.p);
            if keys.last() != Some(&key) {
                if pos > 0 {
                    offsets.push(pos);
                }
                keys.push(key);
            }
            times.push(e.t);
        }
        if !keys.is_empty() {
            offsets.push(order.len());
        }
        Self {
            geometry,
            keys,
            offsets,
            times,
            event_indices: order,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.times.len()
    }

    pub fn get(&self, i: usize) -> TrackView<'_> {
        let key = self.keys[i];
        let range = self.offsets[i]..self.offsets[i + 1];
        TrackView {
            x: key.x(),
            y: key.y(),
            p: key.polarity(),
            times: &self.times[range.clone()],
            event_indices: &self.event_indices[range],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TrackView<'_>> {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_tracks(&self) -> Vec<PixelTrack> {
        self.iter()
            .map(|v| PixelTrack {
                x: v.x,
                y: v.y,
                p: v.p,
                times: v.times.to_vec(),
            })
            .collect()
    }
}

/// Counting sort of event indices by track key; chronological within a bucket.
fn dense_bucket_order(events: &[Event], geometry: SensorGeometry, buckets: usize) -> Vec<usize> {
    let bucket = |e: &Event| (geometry.index(e.x, e.y) << 1) | e.p.bit() as usize;
    let mut starts = vec![0usize; buckets + 1];
    for e in events {
        starts[bucket(e) + 1] += 1;
    }
    for b in 0..buckets {
        starts[b + 1] += starts[b];
    }
    let mut order = vec![0usize; events.len()];
    for (i, e) in events.iter().enumerate() {
        let b = bucket(e);
        order[starts[b]] = i;
        starts[b] += 1;
    }
    order
}

/// Splits a canonical stream into one track per `(x, y, p)` with events.
pub fn group_tracks(stream: &EventStream) -> Vec<PixelTrack> {
    TrackSet::build(stream).to_tracks()
}

/// Inverse of [`group_tracks`]: merges tracks back into a canonical stream.
pub fn flatten_tracks(tracks: &[PixelTrack], geometry: SensorGeometry) -> Result<EventStream, EventError> {
    let events = tracks
        .iter()
        .flat_map(|tr| tr.times.iter().map(move |&t| Event::new(tr.x, tr.y, t, tr.p)))
        .collect();
    sort_stream(events, geometry)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    #[test]
    fn sorts_by_time_then_row() {
        let events = vec![
            Event::new(0, 3, 5, Polarity::Pos),
            Event::new(1, 1, 1, Polarity::Pos),
            Event::new(2, 0, 5, Polarity::Neg),
        ];
        let s = sort_stream(events, geo(4, 4)).unwrap();
        let got: Vec<_> = s.events().iter().map(|e| (e.t, e.y)).collect();
        assert_eq!(got, vec![(1, 1), (5, 0), (5, 3)]);
        assert_eq!((s.t_start(), s.t_end()), (1, 5));
    }

    #[test]
    fn sorted_input_is_unchanged() {
        let events = vec![
            Event::new(0, 0, 1, Polarity::Neg),
            Event::new(0, 0, 1, Polarity::Pos),
            Event::new(3, 0, 2, Polarity::Pos),
        ];
        let s = sort_stream(events.clone(), geo(4, 1)).unwrap();
        assert_eq!(s.events(), &events[..]);
    }

    #[test]
    fn out_of_bounds_names_index() {
        let events = vec![Event::new(0, 0, 0, Polarity::Pos), Event::new(4, 0, 0, Polarity::Pos)];
        match sort_stream(events, geo(4, 4)) {
            Err(EventError::OutOfBounds { index, x, .. }) => assert_eq!((index, x), (1, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_geometry_rejected() {
        assert!(SensorGeometry::new(0, 3).is_err());
    }

    #[test]
    fn polarities_form_separate_tracks() {
        let events = vec![Event::new(1, 1, 10, Polarity::Pos), Event::new(1, 1, 12, Polarity::Neg)];
        let tracks = group_tracks(&sort_stream(events, geo(2, 2)).unwrap());
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn duplicates_collapse() {
        let events = vec![Event::new(1, 1, 10, Polarity::Pos); 2];
        let c = canonicalize(events, geo(2, 2)).unwrap();
        assert_eq!(c.duplicates, 1);
        let tracks = group_tracks(&c.stream);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].times(), &[10]);
    }

    #[test]
    fn empty_stream_has_no_tracks() {
        let s = EventStream::empty(geo(3, 3));
        assert!(group_tracks(&s).is_empty());
        assert!(TrackSet::build(&s).is_empty());
    }

    #[test]
    fn window_must_contain_events() {
        let s = sort_stream(vec![Event::new(0, 0, 50, Polarity::Pos)], geo(1, 1)).unwrap();
        assert!(s.clone().with_window(0, 100).is_ok());
        assert!(matches!(s.clone().with_window(60, 100), Err(EventError::OutsideWindow { .. })));
        assert!(matches!(s.with_window(100, 0), Err(EventError::InvertedWindow { .. })));
    }

    #[test]
    fn track_key_round_trip() {
        let k = TrackKey::new(16383, 9000, Polarity::Pos);
        assert_eq!((k.x(), k.y(), k.polarity()), (16383, 9000, Polarity::Pos));
        assert!(TrackKey::new(5, 0, Polarity::Pos) < TrackKey::new(0, 1, Polarity::Neg));
    }

    #[test]
    fn sparse_and_dense_grouping_agree() {
        // A wide sensor with few events takes the comparison-sort path.
        let big = geo(u16::MAX, u16::MAX);
        let small = geo(64, 64);
        let events: Vec<Event> = (0..200u64)
            .map(|i| Event::new((i * 7 % 64) as u16, (i * 13 % 64) as u16, i / 3, Polarity::from_bit(i % 2 == 0)))
            .collect();
        let a = group_tracks(&sort_stream(events.clone(), big).unwrap());
        let b = group_tracks(&sort_stream(events, small).unwrap());
        assert_eq!(a, b);
    }
}
