use std::sync::{Arc, OnceLock};

use crate::event::Timestamp;
use crate::registry::{Registry, Strategy};

/// Reduces a pixel's timestamps to one time-surface value.
///
/// `times` is non-empty and ascending. The result is expressed relative to
/// `origin` (which is ≤ every time), so surfaces built from time-shifted
/// streams are bit-identical.
pub trait Aggregator: Strategy {
    fn aggregate(&self, times: &[Timestamp], origin: Timestamp) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Mean;

#[derive(Debug, Default, Clone, Copy)]
pub struct Min;

#[derive(Debug, Default, Clone, Copy)]
pub struct Max;

#[derive(Debug, Default, Clone, Copy)]
pub struct Median;

impl Strategy for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }
}

impl Aggregator for Mean {
    fn aggregate(&self, times: &[Timestamp], origin: Timestamp) -> f64 {
        mean_since(times, origin)
    }
}

impl Strategy for Min {
    fn name(&self) -> &'static str {
        "min"
    }
}

impl Aggregator for Min {
    fn aggregate(&self, times: &[Timestamp], origin: Timestamp) -> f64 {
        (times[0] - origin) as f64
    }
}

impl Strategy for Max {
    fn name(&self) -> &'static str {
        "max"
    }
}

impl Aggregator for Max {
    fn aggregate(&self, times: &[Timestamp], origin: Timestamp) -> f64 {
        (times[times.len() - 1] - origin) as f64
    }
}

impl Strategy for Median {
    fn name(&self) -> &'static str {
        "median"
    }
}

impl Aggregator for Median {
    fn aggregate(&self, times: &[Timestamp], origin: Timestamp) -> f64 {
        let n = times.len();
        let mid = n / 2;
        if n % 2 == 1 {
            (times[mid] - origin) as f64
        } else {
            ((times[mid - 1] - origin) + (times[mid] - origin)) as f64 / 2.0
        }
    }
}

/// Arithmetic mean of `times - origin`, exact up to the final division.
pub fn mean_since(times: &[Timestamp], origin: Timestamp) -> f64 {
    let sum: u128 = times.iter().map(|&t| (t - origin) as u128).sum();
    sum as f64 / times.len() as f64
}

/// Built-in aggregators: `mean`, `min`, `max`, `median`.
pub fn aggregators() -> &'static Registry<dyn Aggregator> {
    static REGISTRY: OnceLock<Registry<dyn Aggregator>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn Aggregator>::new("aggregator")
            .with(Arc::new(Mean))
            .with(Arc::new(Min))
            .with(Arc::new(Max))
            .with(Arc::new(Median))
    })
}
