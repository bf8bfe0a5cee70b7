use std::fmt::Write as _;

use super::{Decoded, EventCodec, IngestError};
use crate::event::{Event, EventStream, Polarity, SensorGeometry, Timestamp};
use crate::registry::Strategy;

/// Plain-text events.
///
/// `#` lines are comments. The first other line is `width,height` or
/// `width,height,t_start,t_end`; every following line is `t,x,y,p` with
/// `p` either `-1` or `1`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Csv;

impl Strategy for Csv {
    fn name(&self) -> &'static str {
        "csv"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["txt"]
    }
}

fn fields<const N: usize>(line: &str, lineno: usize) -> Result<[&str; N], IngestError> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    parts.try_into().map_err(|p: Vec<&str>| IngestError::Line {
        line: lineno,
        message: format!("expected {N} fields, found {}", p.len()),
    })
}

fn number<T: std::str::FromStr>(s: &str, what: &str, lineno: usize) -> Result<T, IngestError> {
    s.parse().map_err(|_| IngestError::Line {
        line: lineno,
        message: format!("invalid {what} `{s}`"),
    })
}

pub fn read_csv_events(text: &str) -> Result<Decoded, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(IngestError::Line {
        line: 1,
        message: "missing `width,height` header".into(),
    })?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    let (w, h, window) = match parts.as_slice() {
        [w, h] => (*w, *h, None),
        [w, h, a, b] => (
            *w,
            *h,
            Some((number::<Timestamp>(a, "t_start", hline)?, number::<Timestamp>(b, "t_end", hline)?)),
        ),
        _ => {
            return Err(IngestError::Line {
                line: hline,
                message: "header must be `width,height[,t_start,t_end]`".into(),
            })
        }
    };
    let geometry = SensorGeometry::new(number(w, "width", hline)?, number(h, "height", hline)?).map_err(|e| {
        IngestError::Line {
            line: hline,
            message: e.to_string(),
        }
    })?;

    let mut events = Vec::new();
    for (lineno, line) in lines {
        let [t, x, y, p] = fields::<4>(line, lineno)?;
        let p: i64 = number(p, "polarity", lineno)?;
        let event = Event::new(
            number(x, "x", lineno)?,
            number(y, "y", lineno)?,
            number(t, "timestamp", lineno)?,
            Polarity::from_sign(p).ok_or_else(|| IngestError::Line {
                line: lineno,
                message: format!("polarity must be -1 or 1, found {p}"),
            })?,
        );
        if !geometry.contains(event.x, event.y) {
            return Err(IngestError::Line {
                line: lineno,
                message: format!("({}, {}) outside the {geometry} sensor", event.x, event.y),
            });
        }
        events.push(event);
    }
    let mut decoded = Decoded::build(events, geometry, 0)?;
    if let Some((a, b)) = window {
        decoded.stream = decoded.stream.with_window(a, b)?;
    }
    Ok(decoded)
}

pub fn write_csv_events(stream: &EventStream) -> String {
    let g = stream.geometry();
    let mut out = String::with_capacity(32 + stream.len() * 16);
    let _ = writeln!(out, "{},{},{},{}", g.width, g.height, stream.t_start(), stream.t_end());
    for e in stream.events() {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.sign());
    }
    out
}

impl EventCodec for Csv {
    fn extensions(&self) -> &'static [&'static str] {
        &["csv"]
    }

    fn decode(&self, bytes: &[u8]) -> Result<Decoded, IngestError> {
        let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Line {
            line: bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1,
            message: "invalid UTF-8".into(),
        })?;
        read_csv_events(text)
    }

    fn encode(&self, stream: &EventStream) -> Result<Vec<u8>, IngestError> {
        Ok(write_csv_events(stream).into_bytes())
    }
}
