//! Event file readers and writers.
//!
//! Each on-disk format is an [`EventCodec`] registered by name; see
//! `docs/FORMATS.md` for the exact byte layouts. Decoders always return a
//! canonical [`EventStream`] plus counters for anything they had to repair
//! or skip.

mod aedat;
mod csv;
mod dat;

pub use aedat::{Aedat2, AEDAT2_GEOMETRY};
pub use csv::{read_csv_events, write_csv_events, Csv};
pub use dat::PropheseeDat;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::event::{canonicalize, Event, EventError, EventStream, SensorGeometry, Timestamp};
use crate::registry::{Registry, Strategy, UnknownStrategy};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid polarity {value} in record at byte offset {offset}")]
    BadPolarity { offset: usize, value: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("missing AEDAT version line")]
    MissingVersion,
    #[error("unsupported AEDAT version `{0}`")]
    UnsupportedVersion(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("event cannot be encoded in {format}: {reason}")]
    Unencodable { format: &'static str, reason: String },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    UnknownFormat(#[from] UnknownStrategy),
    #[error("no codec handles `{0}`")]
    UnknownExtension(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Output of a decoder.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub stream: EventStream,
    /// Records whose timestamp was smaller than the previous record's.
    pub out_of_order: usize,
    /// Records that were not polarity events (e.g. APS or IMU samples).
    pub skipped: usize,
    /// Exact duplicate events collapsed during canonicalization.
    pub duplicates: usize,
}

impl Decoded {
    pub(crate) fn build(
        events: Vec<Event>,
        geometry: SensorGeometry,
        skipped: usize,
    ) -> Result<Self, IngestError> {
        let out_of_order = events.windows(2).filter(|w| w[1].t < w[0].t).count();
        let canonical = canonicalize(events, geometry)?;
        if out_of_order > 0 {
            log::debug!("re-sorted {out_of_order} out-of-order records");
        }
        Ok(Self {
            stream: canonical.stream,
            out_of_order,
            skipped,
            duplicates: canonical.duplicates,
        })
    }
}

pub trait EventCodec: Strategy {
    /// Lower-case file extensions, without the dot.
    fn extensions(&self) -> &'static [&'static str];

    fn decode(&self, bytes: &[u8]) -> Result<Decoded, IngestError>;

    fn encode(&self, stream: &EventStream) -> Result<Vec<u8>, IngestError>;
}

/// Built-in codecs: `dat`, `aedat2`, `csv`.
pub fn codecs() -> &'static Registry<dyn EventCodec> {
    static REGISTRY: OnceLock<Registry<dyn EventCodec>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn EventCodec>::new("event format")
            .with(Arc::new(PropheseeDat))
            .with(Arc::new(Aedat2))
            .with(Arc::new(Csv))
    })
}

/// Codec whose extension list contains `path`'s extension.
pub fn codec_for_path(path: &Path) -> Result<Arc<dyn EventCodec>, IngestError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    codecs()
        .iter()
        .find(|c| c.extensions().contains(&ext.as_str()))
        .cloned()
        .ok_or_else(|| IngestError::UnknownExtension(path.to_path_buf()))
}

pub fn read_file(path: &Path, codec: &dyn EventCodec) -> Result<Decoded, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    codec.decode(&bytes)
}

pub fn write_file(path: &Path, codec: &dyn EventCodec, stream: &EventStream) -> Result<(), IngestError> {
    let bytes = codec.encode(stream)?;
    std::fs::write(path, bytes).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits leading text header lines, each starting with `marker`, from a
/// binary payload of `record`-byte records.
///
/// Only printable, newline-terminated lines count as header. The first
/// record can still look like a short header line; such a line is given
/// back to the payload when that is what makes `payload_ok(remaining
/// length)` hold. Returned lines have their line ending removed.
pub(crate) fn split_header(
    bytes: &[u8],
    marker: u8,
    record: usize,
    payload_ok: impl Fn(usize) -> bool,
) -> (Vec<&[u8]>, usize) {
    let mut lines = Vec::new();
    let mut starts = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() && bytes[pos] == marker {
        let Some(n) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let line = &bytes[pos..pos + n];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if !line.iter().all(|&b| b == b'\t' || (0x20..0x7f).contains(&b)) {
            break;
        }
        lines.push(line);
        starts.push(pos);
        pos += n + 1;
    }
    if let Some(&last) = starts.last() {
        if pos - last <= record && !payload_ok(bytes.len() - pos) && payload_ok(bytes.len() - last) {
            lines.pop();
            pos = last;
        }
    }
    (lines, pos)
}

/// One labeled recording from a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub stream: EventStream,
    pub label: Option<String>,
    pub source_path: PathBuf,
    pub duration_us: Timestamp,
}

#[derive(Debug, Default)]
pub struct DatasetLoad {
    pub samples: Vec<DatasetSample>,
    /// Files that could not be read, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fixed sample window starting at each sample's first event. Samples
    /// whose events overrun it are reported as failures.
    pub window_us: Option<Timestamp>,
}

/// Files under `root` that `codec` can read: `<root>/<label>/<file>` plus
/// unlabeled files directly in `root`, in sorted path order.
pub fn dataset_files(root: &Path, codec: &dyn EventCodec) -> Result<Vec<(Option<String>, PathBuf)>, IngestError> {
    let io = |source| IngestError::Io {
        path: root.to_path_buf(),
        source,
    };
    let matches = |p: &Path| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| codec.extensions().contains(&e.to_ascii_lowercase().as_str()))
    };
    let mut files = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            let label = entry.file_name().map(|n| n.to_string_lossy().into_owned());
            let mut inner: Vec<PathBuf> = match std::fs::read_dir(&entry) {
                Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                Err(err) => {
                    log::warn!("skipping unreadable directory {}: {err}", entry.display());
                    continue;
                }
            };
            inner.sort();
            files.extend(inner.into_iter().filter(|p| p.is_file() && matches(p)).map(|p| (label.clone(), p)));
        } else if matches(&entry) {
            files.push((None, entry));
        }
    }
    Ok(files)
}

/// Loads every sample under `root`. Unreadable files are skipped with a
/// warning and listed in [`DatasetLoad::failures`].
pub fn load_dataset(root: &Path, codec: &dyn EventCodec, options: LoadOptions) -> Result<DatasetLoad, IngestError> {
    let files = dataset_files(root, codec)?;
    let results: Vec<_> = files
        .into_par_iter()
        .map(|(label, path)| {
            let loaded = read_file(&path, codec).and_then(|d| {
                let stream = match options.window_us {
                    Some(w) => {
                        let start = d.stream.t_start();
                        d.stream.with_window(start, start + w)?
                    }
                    None => d.stream,
                };
                Ok(stream)
            });
            (label, path, loaded)
        })
        .collect();

    let mut load = DatasetLoad::default();
    for (label, path, loaded) in results {
        match loaded {
            Ok(stream) => load.samples.push(DatasetSample {
                duration_us: stream.duration_us(),
                stream,
                label,
                source_path: path,
            }),
            Err(err) => {
                log::warn!("skipping {}: {err}", path.display());
                load.failures.push((path, err.to_string()));
            }
        }
    }
    if !load.failures.is_empty() {
        log::warn!("{} of {} files skipped", load.failures.len(), load.failures.len() + load.samples.len());
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn sample_stream(n: u64) -> EventStream {
        let g = SensorGeometry::new(8, 8).unwrap();
        EventStream::new(
            (0..n).map(|i| Event::new((i % 8) as u16, (i / 8 % 8) as u16, i * 10, Polarity::from_bit(i % 3 == 0))).collect(),
            g,
        )
        .unwrap()
    }

    #[test]
    fn labeled_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (label, n) in [("cars", 2), ("background", 3)] {
            std::fs::create_dir(dir.path().join(label)).unwrap();
            for i in 0..n {
                write_file(&dir.path().join(label).join(format!("s{i}.csv")), &Csv, &sample_stream(5 + i)).unwrap();
            }
        }
        std::fs::write(dir.path().join("cars").join("notes.txt"), "ignored").unwrap();
        let load = load_dataset(dir.path(), &Csv, LoadOptions::default()).unwrap();
        assert_eq!(load.samples.len(), 5);
        assert!(load.failures.is_empty());
        let labels: Vec<_> = load.samples.iter().map(|s| s.label.clone().unwrap()).collect();
        assert_eq!(labels, ["background", "background", "background", "cars", "cars"]);
        assert_eq!(load.samples[0].stream.len(), 5);
    }

    #[test]
    fn empty_root_gives_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        let load = load_dataset(dir.path(), &PropheseeDat, LoadOptions::default()).unwrap();
        assert!(load.samples.is_empty());
    }

    #[test]
    fn broken_file_is_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        write_file(&dir.path().join("a/good.csv"), &Csv, &sample_stream(4)).unwrap();
        std::fs::write(dir.path().join("a/bad.csv"), "2,2\n0,0,0,7\n").unwrap();
        let load = load_dataset(dir.path(), &Csv, LoadOptions::default()).unwrap();
        assert_eq!(load.samples.len(), 1);
        assert_eq!(load.failures.len(), 1);
        assert!(load.failures[0].0.ends_with("bad.csv"));
    }

    #[test]
    fn window_option_fixes_duration() {
        let dir = tempfile::tempdir().unwrap();
        write_file(&dir.path().join("x.csv"), &Csv, &sample_stream(10)).unwrap();
        let load = load_dataset(dir.path(), &Csv, LoadOptions { window_us: Some(100_000) }).unwrap();
        assert_eq!(load.samples[0].duration_us, 100_000);
        assert_eq!(load.samples[0].label, None);
        let load = load_dataset(dir.path(), &Csv, LoadOptions { window_us: Some(5) }).unwrap();
        assert_eq!(load.failures.len(), 1);
    }

    #[test]
    fn codec_lookup_by_extension() {
        assert_eq!(codec_for_path(Path::new("a/b.DAT")).unwrap().name(), "dat");
        assert_eq!(codec_for_path(Path::new("b.aedat")).unwrap().name(), "aedat2");
        assert_eq!(codec_for_path(Path::new("b.csv")).unwrap().name(), "csv");
        assert!(codec_for_path(Path::new("b.bin")).is_err());
    }
}
