//! Inceptive event time-surfaces for event-camera streams.
//!
//! Events are grouped into per-pixel, per-polarity timestamp tracks, filtered
//! to keep only the first event of each burst, and aggregated into
//! three-channel images (positive surface, negative surface, event count).

pub mod analytics;
pub mod eval;
pub mod event;
pub mod filters;
pub mod ingest;
pub mod registry;
pub mod surfaces;
pub mod synth;

pub use event::{Event, EventStream, PixelTrack, Polarity, SensorGeometry, Timestamp};
pub use filters::FilterParams;
pub use surfaces::{compose_frame, FramePipeline, IetsFrame};
