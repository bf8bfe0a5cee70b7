use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};

use iets_core::ingest::{self, EventCodec, LoadOptions};
use iets_core::EventStream;

pub struct Sample {
    pub label: Option<String>,
    pub path: PathBuf,
    pub stream: EventStream,
}

impl Sample {
    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sample".into())
    }

    /// `label/stem` or just `stem`.
    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => format!("{l}/{}", self.stem()),
            None => self.stem(),
        }
    }
}

pub struct Loaded {
    pub samples: Vec<Sample>,
    pub failures: Vec<(PathBuf, String)>,
}

impl Loaded {
    /// Prints every failure to stderr; true if there were any.
    pub fn report_failures(&self) -> bool {
        for (path, reason) in &self.failures {
            eprintln!("failed: {}: {reason}", path.display());
        }
        !self.failures.is_empty()
    }
}

pub fn codec(format: Option<&str>, path: &Path) -> Result<Arc<dyn EventCodec>> {
    match format {
        Some(name) => Ok(ingest::codecs().get(name)?),
        None => Ok(ingest::codec_for_path(path)?),
    }
}

/// The first registered codec with at least one file under `root`.
fn detect_dir_codec(root: &Path) -> Result<Arc<dyn EventCodec>> {
    for codec in ingest::codecs().iter() {
        if !ingest::dataset_files(root, codec.as_ref())?.is_empty() {
            return Ok(codec.clone());
        }
    }
    anyhow::bail!("no event files under {}", root.display())
}

/// A single file, or every readable file of a dataset directory. Without
/// `format` the codec follows the file extension.
pub fn load(path: &Path, format: Option<&str>, window_us: Option<u64>) -> Result<Loaded> {
    let options = LoadOptions { window_us };
    if path.is_dir() {
        let codec = match format {
            Some(name) => ingest::codecs().get(name)?,
            None => detect_dir_codec(path)?,
        };
        let load = ingest::load_dataset(path, codec.as_ref(), options)
            .with_context(|| format!("listing {}", path.display()))?;
        return Ok(Loaded {
            samples: load
                .samples
                .into_iter()
                .map(|s| Sample {
                    label: s.label,
                    path: s.source_path,
                    stream: s.stream,
                })
                .collect(),
            failures: load.failures,
        });
    }
    let codec = codec(format, path)?;
    let read = ingest::read_file(path, codec.as_ref()).and_then(|d| match window_us {
        Some(w) => {
            let start = d.stream.t_start();
            Ok(d.stream.with_window(start, start + w)?)
        }
        None => Ok(d.stream),
    });
    Ok(match read {
        Ok(stream) => Loaded {
            samples: vec![Sample {
                label: None,
                path: path.to_path_buf(),
                stream,
            }],
            failures: Vec::new(),
        },
        Err(err) => Loaded {
            samples: Vec::new(),
            failures: vec![(path.to_path_buf(), err.to_string())],
        },
    })
}
