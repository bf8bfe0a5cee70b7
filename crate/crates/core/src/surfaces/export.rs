//! Frame encoders.
//!
//! `png8`: 8-bit RGB PNG with R = positive, G = negative, B = count, each
//! byte `floor(v * 255 + 0.5)`.
//!
//! `raw_f32`: lossless container, all integers little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `IETSF32\0`             |
//! | 8      | 4    | version (1)                   |
//! | 12     | 4    | width                         |
//! | 16     | 4    | height                        |
//! | 20     | 4    | channel count (3)             |
//! | 24     | 12HW | f32 planes pos, neg, count; row-major |

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use super::IetsFrame;
use crate::event::SensorGeometry;
use crate::registry::{Registry, Strategy, UnknownStrategy};

pub const RAW_F32_MAGIC: &[u8; 8] = b"IETSF32\0";
const RAW_F32_VERSION: u32 = 1;
const RAW_F32_HEADER: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    UnknownFormat(#[from] UnknownStrategy),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed raw_f32 frame: {0}")]
    Malformed(String),
}

pub trait FrameEncoder: Strategy {
    /// File extension without the dot.
    fn extension(&self) -> &'static str;

    fn encode(&self, frame: &IetsFrame) -> Result<Vec<u8>, ExportError>;
}

/// Round-half-up quantization of a `[0, 1]` value to a byte.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Png8;

impl Strategy for Png8 {
    fn name(&self) -> &'static str {
        "png8"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["png"]
    }
}

impl FrameEncoder for Png8 {
    fn extension(&self) -> &'static str {
        "png"
    }

    fn encode(&self, frame: &IetsFrame) -> Result<Vec<u8>, ExportError> {
        let g = frame.geometry();
        let planes: Vec<Vec<f64>> = frame.channels().iter().map(|c| c.dense().collect()).collect();
        let mut rgb = Vec::with_capacity(g.pixel_count() * 3);
        for i in 0..g.pixel_count() {
            for plane in &planes {
                rgb.push(quantize_u8(plane[i]));
            }
        }
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, g.width as u32, g.height as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&rgb)?;
            writer.finish()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RawF32;

impl Strategy for RawF32 {
    fn name(&self) -> &'static str {
        "raw_f32"
    }
}

impl FrameEncoder for RawF32 {
    fn extension(&self) -> &'static str {
        "f32"
    }

    fn encode(&self, frame: &IetsFrame) -> Result<Vec<u8>, ExportError> {
        let g = frame.geometry();
        let mut out = Vec::with_capacity(RAW_F32_HEADER + 12 * g.pixel_count());
        out.extend_from_slice(RAW_F32_MAGIC);
        for word in [RAW_F32_VERSION, g.width as u32, g.height as u32, 3] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for channel in frame.channels() {
            for v in channel.dense() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }
}

/// Decoded `raw_f32` container.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub geometry: SensorGeometry,
    /// pos, neg, count planes, row-major.
    pub channels: [Vec<f32>; 3],
}

impl RawFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RAW_F32_HEADER + 12 * self.geometry.pixel_count());
        out.extend_from_slice(RAW_F32_MAGIC);
        for word in [RAW_F32_VERSION, self.geometry.width as u32, self.geometry.height as u32, 3] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for plane in &self.channels {
            for v in plane {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn read_raw_f32(bytes: &[u8]) -> Result<RawFrame, ExportError> {
    let bad = |msg: &str| ExportError::Malformed(msg.to_string());
    if bytes.len() < RAW_F32_HEADER || &bytes[..8] != RAW_F32_MAGIC {
        return Err(bad("missing magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(8) != RAW_F32_VERSION {
        return Err(ExportError::Malformed(format!("unsupported version {}", word(8))));
    }
    let (w, h, c) = (word(12), word(16), word(20));
    if c != 3 {
        return Err(ExportError::Malformed(format!("expected 3 channels, found {c}")));
    }
    let geometry = u16::try_from(w)
        .ok()
        .zip(u16::try_from(h).ok())
        .and_then(|(w, h)| SensorGeometry::new(w, h).ok())
        .ok_or_else(|| ExportError::Malformed(format!("invalid geometry {w}x{h}")))?;
    let n = geometry.pixel_count();
    if bytes.len() != RAW_F32_HEADER + 12 * n {
        return Err(ExportError::Malformed(format!(
            "expected {} bytes, found {}",
            RAW_F32_HEADER + 12 * n,
            bytes.len()
        )));
    }
    let plane = |k: usize| -> Vec<f32> {
        bytes[RAW_F32_HEADER + 4 * n * k..RAW_F32_HEADER + 4 * n * (k + 1)]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    };
    Ok(RawFrame {
        geometry,
        channels: [plane(0), plane(1), plane(2)],
    })
}

/// Built-in encoders: `png8`, `raw_f32`.
pub fn encoders() -> &'static Registry<dyn FrameEncoder> {
    static REGISTRY: OnceLock<Registry<dyn FrameEncoder>> = OnceLock::new();
    REGISTRY.get_or_init(|| Registry::<dyn FrameEncoder>::new("frame format").with(Arc::new(Png8)).with(Arc::new(RawF32)))
}

pub fn export_frame(frame: &IetsFrame, format: &str) -> Result<Vec<u8>, ExportError> {
    encoders().get(format)?.encode(frame)
}

pub fn write_frame(frame: &IetsFrame, encoder: &dyn FrameEncoder, path: &Path) -> Result<(), ExportError> {
    let bytes = encoder.encode(frame)?;
    std::fs::write(path, bytes).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}
