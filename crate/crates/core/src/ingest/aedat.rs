use super::{split_header, Decoded, EventCodec, IngestError};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::registry::Strategy;

const RECORD: usize = 8;
const VERSION_PREFIX: &str = "#!AER-DAT";
const APS_FLAG: u32 = 1 << 31;
const X_SHIFT: u32 = 12;
const X_MASK: u32 = 0x3FF;
const Y_SHIFT: u32 = 22;
const Y_MASK: u32 = 0x1FF;
const POLARITY_BIT: u32 = 11;

/// DAVIS240 sensor size assumed for every AEDAT 2.0 file.
pub const AEDAT2_GEOMETRY: SensorGeometry = SensorGeometry {
    width: 240,
    height: 180,
};

/// AEDAT 2.0 (jAER) recordings.
///
/// `#` header lines including `#!AER-DAT2.0`, then 8-byte big-endian
/// records: `u32` address, `u32` timestamp. Polarity-event addresses carry
/// y in bits 22-30, x in bits 12-21 and polarity in bit 11; records with
/// bit 31 set are APS/IMU samples and are skipped.
#[derive(Debug, Default, Clone, Copy)]
pub struct Aedat2;

impl Strategy for Aedat2 {
    fn name(&self) -> &'static str {
        "aedat2"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["aedat"]
    }
}

impl EventCodec for Aedat2 {
    fn extensions(&self) -> &'static [&'static str] {
        &["aedat"]
    }

    fn decode(&self, bytes: &[u8]) -> Result<Decoded, IngestError> {
        let (lines, pos) = split_header(bytes, b'#', RECORD, |rest| rest % RECORD == 0);
        let mut version = None;
        for line in lines {
            if let Some(v) = String::from_utf8_lossy(line).strip_prefix(VERSION_PREFIX) {
                version = Some(v.trim().to_string());
            }
        }
        match version.as_deref() {
            None => return Err(IngestError::MissingVersion),
            Some("2.0") => {}
            Some(other) => return Err(IngestError::UnsupportedVersion(other.to_string())),
        }

        let payload = &bytes[pos..];
        let whole = payload.len() / RECORD * RECORD;
        if whole != payload.len() {
            return Err(IngestError::Truncated { offset: pos + whole });
        }
        let mut events = Vec::with_capacity(payload.len() / RECORD);
        let mut skipped = 0;
        for rec in payload.chunks_exact(RECORD) {
            let address = u32::from_be_bytes(rec[0..4].try_into().unwrap());
            let t = u32::from_be_bytes(rec[4..8].try_into().unwrap());
            if address & APS_FLAG != 0 {
                skipped += 1;
                continue;
            }
            events.push(Event::new(
                ((address >> X_SHIFT) & X_MASK) as u16,
                ((address >> Y_SHIFT) & Y_MASK) as u16,
                t as u64,
                Polarity::from_bit((address >> POLARITY_BIT) & 1 == 1),
            ));
        }
        Decoded::build(events, AEDAT2_GEOMETRY, skipped)
    }

    fn encode(&self, stream: &EventStream) -> Result<Vec<u8>, IngestError> {
        let mut out = Vec::with_capacity(128 + stream.len() * RECORD);
        out.extend_from_slice(b"#!AER-DAT2.0\r\n");
        out.extend_from_slice(b"# Data format: int32 address, int32 timestamp (big-endian), 1 us ticks\r\n");
        for e in stream.events() {
            let t = u32::try_from(e.t).map_err(|_| IngestError::Unencodable {
                format: "aedat2",
                reason: format!("timestamp {} exceeds 32 bits", e.t),
            })?;
            if !AEDAT2_GEOMETRY.contains(e.x, e.y) {
                return Err(IngestError::Unencodable {
                    format: "aedat2",
                    reason: format!("({}, {}) is outside the 240x180 sensor", e.x, e.y),
                });
            }
            let address =
                (e.y as u32) << Y_SHIFT | (e.x as u32) << X_SHIFT | (e.p.bit() as u32) << POLARITY_BIT;
            out.extend_from_slice(&address.to_be_bytes());
            out.extend_from_slice(&t.to_be_bytes());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(records: &[(u32, u32)]) -> Vec<u8> {
        let mut v = b"#!AER-DAT2.0\r\n# comment\r\n".to_vec();
        for &(a, t) in records {
            v.extend_from_slice(&a.to_be_bytes());
            v.extend_from_slice(&t.to_be_bytes());
        }
        v
    }

    #[test]
    fn single_dvs_record() {
        let address = 7 << 22 | 5 << 12 | 1 << 11;
        let d = Aedat2.decode(&file(&[(address, 100)])).unwrap();
        assert_eq!(d.stream.events(), &[Event::new(5, 7, 100, Polarity::Pos)]);
        assert_eq!(d.stream.geometry(), AEDAT2_GEOMETRY);
    }

    #[test]
    fn aps_records_are_skipped() {
        let d = Aedat2.decode(&file(&[(APS_FLAG | 3, 1), (APS_FLAG, 2), (APS_FLAG | 1 << 12, 3)])).unwrap();
        assert!(d.stream.is_empty());
        assert_eq!(d.skipped, 3);
    }

    #[test]
    fn record_starting_with_hash_is_not_header() {
        // y = 140 puts 0x23 ('#') in the first address byte, x = 160 a newline in the second
        let address: u32 = 140 << 22 | 160 << 12 | 1 << 11;
        assert_eq!(address.to_be_bytes()[..2], *b"#\n");
        let d = Aedat2.decode(&file(&[(address, 9), (address, 10)])).unwrap();
        assert_eq!(d.stream.len(), 2);
        assert_eq!(d.stream.events()[0], Event::new(160, 140, 9, Polarity::Pos));
    }

    #[test]
    fn version_line_required() {
        assert!(matches!(Aedat2.decode(b"# hello\n"), Err(IngestError::MissingVersion)));
        assert!(matches!(
            Aedat2.decode(b"#!AER-DAT3.1\r\n"),
            Err(IngestError::UnsupportedVersion(v)) if v == "3.1"
        ));
    }

    #[test]
    fn truncated_record() {
        let mut bytes = file(&[(0, 0)]);
        let len = bytes.len();
        bytes.push(1);
        assert!(matches!(Aedat2.decode(&bytes), Err(IngestError::Truncated { offset }) if offset == len));
    }
}
