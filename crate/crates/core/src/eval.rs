//! Linear-classifier harness for comparing frame variants.
//!
//! Frames are block-averaged to a fixed grid and fed to a binary logistic
//! regression trained by full-batch gradient descent.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::event::EventStream;
use crate::filters::{FilterParams, Fsae, Inceptive, TrackFilter, Unfiltered};
use crate::surfaces::{Aggregator, FramePipeline, IetsFrame, Mean};

pub const MODEL_MAGIC: &[u8; 8] = b"IETSLIN\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty data set")]
    Empty,
    #[error("training needs two classes, found {0}")]
    ClassCount(usize),
    #[error("feature dimension {found} does not match {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("label {0} is not 0 or 1")]
    Label(usize),
    #[error("malformed model: {0}")]
    Malformed(String),
}

/// Frame variant under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceVariant {
    RawTs,
    FsaeTs,
    Iets,
}

impl SurfaceVariant {
    pub const ALL: [SurfaceVariant; 3] = [SurfaceVariant::RawTs, SurfaceVariant::FsaeTs, SurfaceVariant::Iets];

    pub fn tag(self) -> &'static str {
        match self {
            SurfaceVariant::RawTs => "raw_ts",
            SurfaceVariant::FsaeTs => "fsae_ts",
            SurfaceVariant::Iets => "iets",
        }
    }

    pub fn filter(self) -> Arc<dyn TrackFilter> {
        match self {
            SurfaceVariant::RawTs => Arc::new(Unfiltered),
            SurfaceVariant::FsaeTs => Arc::new(Fsae),
            SurfaceVariant::Iets => Arc::new(Inceptive),
        }
    }

    pub fn pipeline(self, params: FilterParams, aggregator: Arc<dyn Aggregator>) -> FramePipeline {
        FramePipeline::new(self.filter(), aggregator, params)
    }
}

impl fmt::Display for SurfaceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SurfaceVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_ts" | "raw" => Ok(SurfaceVariant::RawTs),
            "fsae_ts" | "fsae" => Ok(SurfaceVariant::FsaeTs),
            "iets" | "ie" => Ok(SurfaceVariant::Iets),
            other => Err(format!("unknown variant `{other}` (expected raw_ts, fsae_ts or iets)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn square(n: usize) -> Self {
        Self { width: n, height: n }
    }

    /// Features per sample: three channels of `width * height` cells.
    pub fn dimension(&self) -> usize {
        3 * self.width * self.height
    }
}

/// Block-average one dense `w x h` plane onto `grid`. A plane smaller than
/// the grid along an axis is first centered on a zero canvas.
fn pool(values: &[f64], w: usize, h: usize, grid: Grid, out: &mut Vec<f64>) {
    let cw = w.max(grid.width);
    let ch = h.max(grid.height);
    let (ox, oy) = ((cw - w) / 2, (ch - h) / 2);
    let at = |x: usize, y: usize| {
        if x >= ox && x < ox + w && y >= oy && y < oy + h {
            values[(y - oy) * w + (x - ox)]
        } else {
            0.0
        }
    };
    for gy in 0..grid.height {
        let (y0, y1) = (gy * ch / grid.height, (gy + 1) * ch / grid.height);
        for gx in 0..grid.width {
            let (x0, x1) = (gx * cw / grid.width, (gx + 1) * cw / grid.width);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += at(x, y);
                }
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
}

/// Pooled `pos`, `neg` and `count` planes, concatenated.
pub fn featurize(frame: &IetsFrame, grid: Grid) -> Vec<f64> {
    let g = frame.geometry();
    let mut out = Vec::with_capacity(grid.dimension());
    for channel in frame.channels() {
        let dense: Vec<f64> = channel.dense().collect();
        pool(&dense, g.width as usize, g.height as usize, grid, &mut out);
    }
    out
}

/// Mirrors features left to right, plane by plane.
pub fn flip_horizontal(features: &[f64], grid: Grid) -> Vec<f64> {
    features
        .chunks(grid.width)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    /// 0 or 1.
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight penalty `l2 / 2 * |w|^2`.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub classes: [String; 2],
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Mean logistic loss plus the L2 penalty; the bias is not penalized.
pub fn loss(weights: &[f64], bias: f64, data: &[Example], l2: f64) -> f64 {
    let data_loss: f64 = data
        .iter()
        .map(|e| {
            let z = dot(weights, &e.features) + bias;
            // -log(sigmoid(z)) for 1, -log(1 - sigmoid(z)) for 0
            if e.label == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum::<f64>()
        / data.len() as f64;
    data_loss + 0.5 * l2 * dot(weights, weights)
}

/// Analytic gradient of [`loss`]: `(d/dw, d/db)`.
pub fn gradient(weights: &[f64], bias: f64, data: &[Example], l2: f64) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut gw: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut gb = 0.0;
    for e in data {
        let r = (sigmoid(dot(weights, &e.features) + bias) - e.label as f64) / n;
        for (g, x) in gw.iter_mut().zip(&e.features) {
            *g += r * x;
        }
        gb += r;
    }
    (gw, gb)
}

fn check(data: &[Example], dim: usize) -> Result<(), EvalError> {
    for e in data {
        if e.features.len() != dim {
            return Err(EvalError::Dimension {
                expected: dim,
                found: e.features.len(),
            });
        }
        if e.label > 1 {
            return Err(EvalError::Label(e.label));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: LinearModel,
    /// Training loss after initialization and after every epoch.
    pub losses: Vec<f64>,
}

/// Gradient descent with step halving: a step that would raise the loss
/// is retried at half the rate, so the loss history never increases.
pub fn train_linear(data: &[Example], classes: [String; 2], config: &TrainConfig) -> Result<Trained, EvalError> {
    let first = data.first().ok_or(EvalError::Empty)?;
    let dim = first.features.len();
    check(data, dim)?;
    let present = [0, 1].iter().filter(|&&c| data.iter().any(|e| e.label == c)).count();
    if present < 2 {
        return Err(EvalError::ClassCount(present));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut w: Vec<f64> = (0..dim).map(|_| init.sample(&mut rng)).collect();
    let mut b = 0.0;
    let mut current = loss(&w, b, data, config.l2);
    let mut losses = vec![current];
    let mut rate = config.learning_rate;

    for _ in 0..config.epochs {
        let (gw, gb) = gradient(&w, b, data, config.l2);
        loop {
            let cand: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w - rate * g).collect();
            let cb = b - rate * gb;
            let next = loss(&cand, cb, data, config.l2);
            if next <= current {
                w = cand;
                b = cb;
                current = next;
                break;
            }
            rate *= 0.5;
            if rate < 1e-12 {
                break;
            }
        }
        losses.push(current);
    }
    Ok(Trained {
        model: LinearModel {
            classes,
            weights: w,
            bias: b,
        },
        losses,
    })
}

impl LinearModel {
    pub fn score(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features) + self.bias
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        (self.score(features) > 0.0) as usize
    }

    /// Flat little-endian container; see `docs/FORMATS.md`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MODEL_MAGIC.to_vec();
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for name in &self.classes {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvalError> {
        let bad = |m: &str| EvalError::Malformed(m.to_string());
        let mut rest = bytes.strip_prefix(MODEL_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
        let mut take = |n: usize| -> Result<&[u8], EvalError> {
            if rest.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut classes: [String; 2] = Default::default();
        for class in &mut classes {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            *class = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("class name is not UTF-8"))?;
        }
        let weights = (0..dim)
            .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
            .collect::<Result<Vec<_>, EvalError>>()?;
        let bias = f64::from_le_bytes(take(8)?.try_into().unwrap());
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { classes, weights, bias })
    }
}

/// Area under the ROC curve from the Mann-Whitney rank sum, ties sharing
/// their average rank. `None` unless both labels are present.
pub fn auc(scores: &[f64], labels: &[usize]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j + 2) as f64 / 2.0;
        rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let pos = pos as f64;
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCounts {
    pub class: String,
    pub support: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub variant: Option<SurfaceVariant>,
    pub samples: usize,
    pub accuracy: f64,
    /// Absent when the test set holds a single class.
    pub auc: Option<f64>,
    pub per_class: Vec<ClassCounts>,
}

pub fn evaluate(model: &LinearModel, test: &[Example]) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    check(test, model.weights.len())?;
    let scores: Vec<f64> = test.iter().map(|e| model.score(&e.features)).collect();
    let labels: Vec<usize> = test.iter().map(|e| e.label).collect();
    let mut per_class: Vec<ClassCounts> = model
        .classes
        .iter()
        .map(|c| ClassCounts {
            class: c.clone(),
            support: 0,
            correct: 0,
        })
        .collect();
    for (s, &l) in scores.iter().zip(&labels) {
        per_class[l].support += 1;
        per_class[l].correct += ((*s > 0.0) as usize == l) as usize;
    }
    let correct: usize = per_class.iter().map(|c| c.correct).sum();
    Ok(EvalReport {
        variant: None,
        samples: test.len(),
        accuracy: correct as f64 / test.len() as f64,
        auc: auc(&scores, &labels),
        per_class,
    })
}

/// Seeded stratified split: about `test_fraction` of each class goes to the
/// test side. Returns `(train, test)` index lists in ascending order.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in 0..=labels.iter().copied().max().unwrap_or(0) {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experiment {
    pub params: FilterParams,
    pub grid: Grid,
    pub train: TrainConfig,
    pub test_fraction: f64,
    /// Adds mirrored copies of the training examples.
    pub flip_augment: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            params: FilterParams::default(),
            grid: Grid::square(32),
            train: TrainConfig::default(),
            test_fraction: 0.3,
            flip_augment: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub model: LinearModel,
    pub report: EvalReport,
}

/// Featurizes every stream with `variant`, trains on a split seeded by
/// `experiment.train.seed` and reports on the held-out side.
pub fn run_variant(
    streams: &[&EventStream],
    labels: &[usize],
    classes: [String; 2],
    variant: SurfaceVariant,
    experiment: &Experiment,
) -> Result<VariantOutcome, EvalError> {
    use rayon::prelude::*;
    let pipeline = variant.pipeline(experiment.params, Arc::new(Mean));
    let features: Vec<Vec<f64>> = streams
        .par_iter()
        .map(|s| featurize(&pipeline.compose(s), experiment.grid))
        .collect();
    let (train_idx, test_idx) = stratified_split(labels, experiment.test_fraction, experiment.train.seed);
    let mut train: Vec<Example> = train_idx
        .iter()
        .map(|&i| Example {
            features: features[i].clone(),
            label: labels[i],
        })
        .collect();
    if experiment.flip_augment {
        let mirrored: Vec<Example> = train
            .iter()
            .map(|e| Example {
                features: flip_horizontal(&e.features, experiment.grid),
                label: e.label,
            })
            .collect();
        train.extend(mirrored);
    }
    let test: Vec<Example> = test_idx
        .iter()
        .map(|&i| Example {
            features: features[i].clone(),
            label: labels[i],
        })
        .collect();
    let trained = train_linear(&train, classes, &experiment.train)?;
    let mut report = evaluate(&trained.model, &test)?;
    report.variant = Some(variant);
    Ok(VariantOutcome {
        model: trained.model,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity, SensorGeometry};

    fn blobs(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        (0..n)
            .map(|i| {
                let label = i % 2;
                let c = if label == 1 { 0.8 } else { 0.2 };
                Example {
                    features: (0..4).map(|_| c + noise.sample(&mut rng)).collect(),
                    label,
                }
            })
            .collect()
    }

    fn names() -> [String; 2] {
        ["a".into(), "b".into()]
    }

    #[test]
    fn pooling_averages_blocks() {
        let mut out = Vec::new();
        pool(&[0.0, 0.0, 1.0, 1.0], 2, 2, Grid::square(1), &mut out);
        assert_eq!(out, [0.5]);
        out.clear();
        pool(&[0.7; 12], 4, 3, Grid { width: 2, height: 3 }, &mut out);
        assert!(out.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn small_planes_are_centered() {
        let mut out = Vec::new();
        pool(&[1.0], 1, 1, Grid::square(3), &mut out);
        assert_eq!(out, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn featurize_has_fixed_dimension() {
        let g = SensorGeometry::new(10, 6).unwrap();
        let s = EventStream::new(vec![Event::new(1, 1, 5, Polarity::Pos)], g).unwrap();
        let frame = crate::compose_frame(&s, &FilterParams::default());
        let f = featurize(&frame, Grid::square(4));
        assert_eq!(f.len(), 48);
        assert_eq!(f, featurize(&frame, Grid::square(4)));
        assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn flip_mirrors_rows() {
        let g = Grid { width: 2, height: 1 };
        assert_eq!(flip_horizontal(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], g), [2.0, 1.0, 4.0, 3.0, 6.0, 5.0]);
    }

    #[test]
    fn separable_blobs_train_to_perfect_accuracy() {
        let data = blobs(40, 1);
        let trained = train_linear(&data, names(), &TrainConfig::default()).unwrap();
        assert!(trained.losses.windows(2).all(|w| w[1] <= w[0]));
        let report = evaluate(&trained.model, &data).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.auc, Some(1.0));
    }

    #[test]
    fn training_is_seeded() {
        let data = blobs(20, 2);
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let a = train_linear(&data, names(), &cfg).unwrap();
        assert_eq!(a, train_linear(&data, names(), &cfg).unwrap());
    }

    #[test]
    fn training_rejects_bad_input() {
        let one_class: Vec<Example> = blobs(10, 3).into_iter().filter(|e| e.label == 0).collect();
        assert_eq!(
            train_linear(&one_class, names(), &TrainConfig::default()),
            Err(EvalError::ClassCount(1))
        );
        assert_eq!(train_linear(&[], names(), &TrainConfig::default()), Err(EvalError::Empty));
        let mut mixed = blobs(4, 3);
        mixed[2].features.push(0.0);
        assert!(matches!(train_linear(&mixed, names(), &TrainConfig::default()), Err(EvalError::Dimension { .. })));
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let trained = train_linear(&blobs(10, 4), names(), &TrainConfig::default()).unwrap();
        let wrong = [Example {
            features: vec![0.0; 3],
            label: 0,
        }];
        assert!(matches!(evaluate(&trained.model, &wrong), Err(EvalError::Dimension { .. })));
        assert_eq!(evaluate(&trained.model, &[]), Err(EvalError::Empty));
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.1, 0.9], &[0, 1]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.1], &[0, 1]), Some(0.0));
        assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]), Some(0.5));
        assert_eq!(auc(&[0.2, 0.4], &[1, 1]), None);
    }

    #[test]
    fn model_container_round_trip() {
        let model = LinearModel {
            classes: ["background".into(), "cars".into()],
            weights: vec![0.5, -1.25, f64::MIN_POSITIVE],
            bias: -0.1,
        };
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        assert_eq!(LinearModel::from_bytes(&bytes).unwrap(), model);
        assert!(LinearModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(LinearModel::from_bytes(b"IETSLIN").is_err());
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let (train, test) = stratified_split(&labels, 0.3, 5);
        assert_eq!(test.len(), 6);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 3);
        assert_eq!(train.len() + test.len(), 20);
        assert_eq!((train.clone(), test.clone()), stratified_split(&labels, 0.3, 5));
    }

    #[test]
    fn variant_names_parse() {
        for v in SurfaceVariant::ALL {
            assert_eq!(v.tag().parse::<SurfaceVariant>().unwrap(), v);
        }
        assert!("nope".parse::<SurfaceVariant>().is_err());
    }
}
