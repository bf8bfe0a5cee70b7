use super::{split_header, Decoded, EventCodec, IngestError};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::registry::Strategy;

const RECORD: usize = 8;
const COORD_MASK: u32 = 0x3FFF;
const CD_EVENT_TYPE: u8 = 0x00;

/// Prophesee DAT (CD events).
///
/// `%` header lines, an optional 2-byte type/size tag, then 8-byte
/// little-endian records: `u32` timestamp, `u32` word with x in bits 0-13,
/// y in bits 14-27 and polarity in bits 28-31.
#[derive(Debug, Default, Clone, Copy)]
pub struct PropheseeDat;

impl Strategy for PropheseeDat {
    fn name(&self) -> &'static str {
        "dat"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["prophesee"]
    }
}

fn parse_header(lines: &[&str]) -> Result<(Option<u16>, Option<u16>), IngestError> {
    let (mut width, mut height) = (None, None);
    let num = |s: &str| {
        s.trim()
            .parse::<u16>()
            .map_err(|_| IngestError::Header(format!("bad dimension `{}`", s.trim())))
    };
    for line in lines {
        let body = line.trim_start_matches('%').trim();
        let (key, value) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        match key.to_ascii_lowercase().as_str() {
            "width" => width = Some(num(value)?),
            "height" => height = Some(num(value)?),
            "geometry" => {
                let (w, h) = value
                    .trim()
                    .split_once('x')
                    .ok_or_else(|| IngestError::Header(format!("bad geometry `{}`", value.trim())))?;
                width = Some(num(w)?);
                height = Some(num(h)?);
            }
            _ => {}
        }
    }
    Ok((width, height))
}

impl EventCodec for PropheseeDat {
    fn extensions(&self) -> &'static [&'static str] {
        &["dat"]
    }

    fn decode(&self, bytes: &[u8]) -> Result<Decoded, IngestError> {
        let (lines, mut pos) = split_header(bytes, b'%', RECORD, |rest| matches!(rest % RECORD, 0 | 2));
        let header: Vec<String> = lines.iter().map(|l| String::from_utf8_lossy(l).into_owned()).collect();
        let (width, height) = parse_header(&header.iter().map(String::as_str).collect::<Vec<_>>())?;

        if (bytes.len() - pos) % RECORD == 2 {
            let size = bytes[pos + 1];
            if size as usize != RECORD {
                return Err(IngestError::Header(format!("unsupported event size {size}")));
            }
            pos += 2;
        }
        let payload = &bytes[pos..];
        let whole = payload.len() / RECORD * RECORD;
        if whole != payload.len() {
            return Err(IngestError::Truncated { offset: pos + whole });
        }

        let mut events = Vec::with_capacity(payload.len() / RECORD);
        for (i, rec) in payload.chunks_exact(RECORD).enumerate() {
            let t = u32::from_le_bytes(rec[0..4].try_into().unwrap());
            let word = u32::from_le_bytes(rec[4..8].try_into().unwrap());
            let p = word >> 28;
            if p > 1 {
                return Err(IngestError::BadPolarity {
                    offset: pos + i * RECORD,
                    value: p,
                });
            }
            events.push(Event::new(
                (word & COORD_MASK) as u16,
                ((word >> 14) & COORD_MASK) as u16,
                t as u64,
                Polarity::from_bit(p == 1),
            ));
        }
        let geometry = match (width, height) {
            (Some(w), Some(h)) => SensorGeometry::new(w, h)?,
            _ => SensorGeometry::infer(&events),
        };
        Decoded::build(events, geometry, 0)
    }

    fn encode(&self, stream: &EventStream) -> Result<Vec<u8>, IngestError> {
        let g = stream.geometry();
        let mut out = format!(
            "% Data file containing CD events.\n% Version 2\n% Width {}\n% Height {}\n",
            g.width, g.height
        )
        .into_bytes();
        out.extend_from_slice(&[CD_EVENT_TYPE, RECORD as u8]);
        out.reserve(stream.len() * RECORD);
        for e in stream.events() {
            let t = u32::try_from(e.t).map_err(|_| IngestError::Unencodable {
                format: "dat",
                reason: format!("timestamp {} exceeds 32 bits", e.t),
            })?;
            if e.x as u32 > COORD_MASK || e.y as u32 > COORD_MASK {
                return Err(IngestError::Unencodable {
                    format: "dat",
                    reason: format!("coordinate ({}, {}) exceeds 14 bits", e.x, e.y),
                });
            }
            let word = e.x as u32 | (e.y as u32) << 14 | (e.p.bit() as u32) << 28;
            out.extend_from_slice(&t.to_le_bytes());
            out.extend_from_slice(&word.to_le_bytes());
        }
        Ok(out)
    }
}
