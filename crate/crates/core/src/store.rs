//! Few-shot classification tasks expressed in feature space.
//!
//! A [`FeatureDataset`] holds unit-normalized image features for three splits
//! plus one text embedding per class. Datasets live on disk in a small
//! little-endian container (`EVLF`), are immutable once loaded, and can be
//! synthesized deterministically for desk-scale experiments.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EVLF";
pub const FORMAT_VERSION: u32 = 1;

/// Rows within this distance of unit norm are accepted as-is.
const NORM_EXACT_TOL: f64 = 1e-3;
/// Rows within this distance are silently re-normalized; beyond it the file is rejected.
const NORM_REPAIR_TOL: f64 = 1e-2;

/// The shot counts used throughout the search and the downstream tables.
pub const STANDARD_SHOTS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected EVLF")]
    BadMagic,
    #[error("unsupported container version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} at {split} row {row} is outside [0, {classes})")]
    LabelOutOfRange {
        split: Split,
        row: usize,
        label: i64,
        classes: usize,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{what} has norm {norm:.6}, too far from 1 to re-normalize")]
    Denormalized { what: String, norm: f64 },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("class {class} has {available} training samples, {shots} requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        shots: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Features (rows, `n × d`) and their labels for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub feats: DMatrix<f32>,
    pub labels: Vec<usize>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct Header {
    name: String,
    d: usize,
    #[serde(rename = "C")]
    classes: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
}

#[derive(Debug)]
pub struct FeatureDataset {
    name: String,
    train: SplitData,
    val: SplitData,
    test: SplitData,
    /// `d × C`, one text embedding per class column.
    clip_weights: DMatrix<f32>,
    id: OnceLock<String>,
}

impl Clone for FeatureDataset {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
            clip_weights: self.clip_weights.clone(),
            id: OnceLock::new(),
        }
    }
}

impl PartialEq for FeatureDataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.train == other.train
            && self.val == other.val
            && self.test == other.test
            && self.clip_weights == other.clip_weights
    }
}

impl FeatureDataset {
    /// Builds a dataset from raw parts, enforcing every invariant
    /// (unit norms with small-drift repair, label ranges, consistent shapes).
    pub fn new(
        name: impl Into<String>,
        train: SplitData,
        val: SplitData,
        test: SplitData,
        clip_weights: DMatrix<f32>,
    ) -> Result<Self, StoreError> {
        let mut ds = Self {
            name: name.into(),
            train,
            val,
            test,
            clip_weights,
            id: OnceLock::new(),
        };
        ds.validate_and_repair()?;
        Ok(ds)
    }

    fn validate_and_repair(&mut self) -> Result<(), StoreError> {
        let d = self.clip_weights.nrows();
        let classes = self.clip_weights.ncols();
        if d == 0 || classes == 0 {
            return Err(StoreError::ShapeMismatch(format!(
                "clip_weights must be non-empty, got {d}x{classes}"
            )));
        }
        for (split, data) in [
            (Split::Train, &mut self.train),
            (Split::Val, &mut self.val),
            (Split::Test, &mut self.test),
        ] {
            if data.is_empty() {
                return Err(StoreError::ShapeMismatch(format!("{split} split is empty")));
            }
            if data.feats.nrows() != data.labels.len() || data.feats.ncols() != d {
                return Err(StoreError::ShapeMismatch(format!(
                    "{split} features are {}x{}, expected {}x{d}",
                    data.feats.nrows(),
                    data.feats.ncols(),
                    data.labels.len()
                )));
            }
            if let Some((row, &label)) = data.labels.iter().enumerate().find(|(_, &l)| l >= classes)
            {
                return Err(StoreError::LabelOutOfRange {
                    split,
                    row,
                    label: label as i64,
                    classes,
                });
            }
            for r in 0..data.feats.nrows() {
                let mut row = data.feats.row_mut(r);
                let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                repair_norm(norm, &format!("{split} row {r}"))?;
                if (norm - 1.0).abs() >= NORM_EXACT_TOL {
                    row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
                }
            }
        }
        for c in 0..classes {
            let mut col = self.clip_weights.column_mut(c);
            let norm = col.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            repair_norm(norm, &format!("clip_weights column {c}"))?;
            if (norm - 1.0).abs() >= NORM_EXACT_TOL {
                col.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Feature channel count.
    pub fn dim(&self) -> usize {
        self.clip_weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.clip_weights.ncols()
    }

    pub fn split(&self, split: Split) -> &SplitData {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn clip_weights(&self) -> &DMatrix<f32> {
        &self.clip_weights
    }

    /// Stable identifier derived from the encoded bytes: `<name>-<12 hex digits>`.
    /// Every worker that registers the same file arrives at the same id.
    pub fn id(&self) -> &str {
        self.id.get_or_init(|| {
            let digest = Sha256::digest(self.to_bytes());
            format!("{}-{}", self.name, &hex::encode(digest)[..12])
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            name: self.name.clone(),
            d: self.dim(),
            classes: self.num_classes(),
            n_train: self.train.len(),
            n_val: self.val.len(),
            n_test: self.test.len(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let payload_len = 4 * (self.dim() * (self.train.len() + self.val.len() + self.test.len())
            + self.train.len()
            + self.val.len()
            + self.test.len()
            + self.dim() * self.num_classes());
        let mut out = Vec::with_capacity(16 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for split in [&self.train, &self.val, &self.test] {
            // row-major on disk; nalgebra stores column-major
            for r in 0..split.feats.nrows() {
                for v in split.feats.row(r).iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            for &l in &split.labels {
                out.extend_from_slice(&(l as i32).to_le_bytes());
            }
        }
        // column-major matches nalgebra's storage
        for v in self.clip_weights.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(4).map_err(|_| StoreError::BadMagic)? != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(StoreError::VersionMismatch { found: version });
        }
        let header_len = cur.u64()? as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| StoreError::Header(e.to_string()))?;
        let (d, classes) = (header.d, header.classes);
        if d == 0 || classes == 0 {
            return Err(StoreError::ShapeMismatch(format!(
                "header declares d={d}, C={classes}"
            )));
        }
        let expected = 4 * (d * (header.n_train + header.n_val + header.n_test)
            + header.n_train
            + header.n_val
            + header.n_test
            + d * classes);
        if cur.remaining() != expected {
            return Err(StoreError::ShapeMismatch(format!(
                "header implies {expected} payload bytes, file has {}",
                cur.remaining()
            )));
        }
        let mut read_split = |n: usize, split: Split| -> Result<SplitData, StoreError> {
            let feats = cur.f32s(n * d)?;
            let feats = DMatrix::from_row_slice(n, d, &feats);
            let labels = cur
                .i32s(n)?
                .into_iter()
                .enumerate()
                .map(|(row, l)| {
                    if l < 0 || l as usize >= classes {
                        Err(StoreError::LabelOutOfRange {
                            split,
                            row,
                            label: l as i64,
                            classes,
                        })
                    } else {
                        Ok(l as usize)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SplitData { feats, labels })
        };
        let train = read_split(header.n_train, Split::Train)?;
        let val = read_split(header.n_val, Split::Val)?;
        let test = read_split(header.n_test, Split::Test)?;
        let clip = cur.f32s(d * classes)?;
        let clip_weights = DMatrix::from_column_slice(d, classes, &clip);
        Self::new(header.name, train, val, test, clip_weights)
    }
}

fn repair_norm(norm: f64, what: &str) -> Result<(), StoreError> {
    if !norm.is_finite() || (norm - 1.0).abs() >= NORM_REPAIR_TOL {
        return Err(StoreError::Denormalized {
            what: what.to_string(),
            norm,
        });
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.remaining() < n {
            return Err(StoreError::ShapeMismatch(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, StoreError> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn i32s(&mut self, n: usize) -> Result<Vec<i32>, StoreError> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FeatureDataset, StoreError> {
    FeatureDataset::from_bytes(&fs::read(path)?)
}

pub fn write_dataset(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<(), StoreError> {
    fs::write(path, ds.to_bytes())?;
    Ok(())
}

/// An evaluation split materialized in `f64` for the numeric routines.
#[derive(Debug, Clone)]
pub struct EvalView {
    pub feats: DMatrix<f64>,
    pub labels: Vec<usize>,
}

/// A k-shot training set drawn from a dataset, plus its validation and test views.
#[derive(Debug, Clone)]
pub struct FewShotTask {
    pub source: String,
    pub shots: usize,
    pub seed: u64,
    /// Rows of the parent train split, class-major.
    pub train_indices: Vec<usize>,
    pub train_feats: DMatrix<f64>,
    pub train_labels: Vec<usize>,
    /// `d × C`.
    pub clip_weights: DMatrix<f64>,
    pub num_classes: usize,
    dataset: Arc<FeatureDataset>,
}

impl FewShotTask {
    pub fn dim(&self) -> usize {
        self.clip_weights.nrows()
    }

    pub fn dataset(&self) -> &Arc<FeatureDataset> {
        &self.dataset
    }

    /// Features and labels of `split` in the parent dataset.
    pub fn view(&self, split: Split) -> EvalView {
        let data = self.dataset.split(split);
        EvalView {
            feats: data.feats.map(|v| v as f64),
            labels: data.labels.clone(),
        }
    }

    /// Test features only; used where labels must stay untouched.
    pub fn features(&self, split: Split) -> DMatrix<f64> {
        self.dataset.split(split).feats.map(|v| v as f64)
    }
}

/// Draws exactly `shots` training rows per class with a seeded shuffle of
/// each class's index list.
pub fn sample_few_shot(
    ds: &Arc<FeatureDataset>,
    shots: usize,
    seed: u64,
) -> Result<FewShotTask, StoreError> {
    if shots == 0 {
        return Err(StoreError::InvalidSpec("shots must be at least 1".into()));
    }
    let classes = ds.num_classes();
    let train = ds.split(Split::Train);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in train.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    if let Some((class, idx)) = per_class.iter().enumerate().find(|(_, v)| v.len() < shots) {
        return Err(StoreError::InsufficientSamples {
            class,
            available: idx.len(),
            shots,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_indices = Vec::with_capacity(shots * classes);
    let mut train_labels = Vec::with_capacity(shots * classes);
    for (class, mut idx) in per_class.into_iter().enumerate() {
        idx.shuffle(&mut rng);
        train_indices.extend_from_slice(&idx[..shots]);
        train_labels.extend(std::iter::repeat_n(class, shots));
    }
    let d = ds.dim();
    let train_feats = DMatrix::from_fn(train_indices.len(), d, |r, c| {
        train.feats[(train_indices[r], c)] as f64
    });
    Ok(FewShotTask {
        source: ds.name().to_string(),
        shots,
        seed,
        train_indices,
        train_feats,
        train_labels,
        clip_weights: ds.clip_weights().map(|v| v as f64),
        num_classes: classes,
        dataset: Arc::clone(ds),
    })
}

/// Parameters for a synthetic clustered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub d: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// Per-coordinate standard deviation of image-feature noise around the class mean.
    pub sigma: f64,
    /// Per-coordinate standard deviation of text-embedding noise around the class mean.
    pub tau: f64,
}

impl SynthSpec {
    pub fn new(name: &str, d: usize, classes: usize, per_class: usize, sigma: f64, tau: f64) -> Self {
        Self {
            name: name.to_string(),
            d,
            classes,
            train_per_class: per_class,
            val_per_class: per_class,
            test_per_class: per_class,
            sigma,
            tau,
        }
    }
}

/// Generates class means on the unit sphere, then noisy unit-norm samples and
/// text embeddings around them.
///
/// The random stream is consumed in a fixed order (means, text noise, train,
/// val, test), so two specs that differ only in `sigma` share class means,
/// text embeddings and the underlying noise directions.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<FeatureDataset, StoreError> {
    if spec.d < 2 || spec.classes < 2 {
        return Err(StoreError::InvalidSpec(format!(
            "need d >= 2 and C >= 2, got d={} C={}",
            spec.d, spec.classes
        )));
    }
    if !(spec.sigma >= 0.0 && spec.tau >= 0.0) {
        return Err(StoreError::InvalidSpec("sigma and tau must be non-negative".into()));
    }
    if spec.train_per_class == 0 || spec.val_per_class == 0 || spec.test_per_class == 0 {
        return Err(StoreError::InvalidSpec("per-class counts must be positive".into()));
    }
    let (d, classes) = (spec.d, spec.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        means.push(normalized(&v));
    }
    let mut clip = DMatrix::<f32>::zeros(d, classes);
    for (c, mean) in means.iter().enumerate() {
        let v: Vec<f64> = mean.iter().map(|m| m + spec.tau * normal(&mut rng)).collect();
        for (r, x) in normalized(&v).into_iter().enumerate() {
            clip[(r, c)] = x as f32;
        }
    }
    let make_split = |per_class: usize, rng: &mut ChaCha8Rng| -> SplitData {
        let n = per_class * classes;
        let mut feats = DMatrix::<f32>::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                let v: Vec<f64> = mean.iter().map(|m| m + spec.sigma * normal(rng)).collect();
                let row = labels.len();
                for (j, x) in normalized(&v).into_iter().enumerate() {
                    feats[(row, j)] = x as f32;
                }
                labels.push(c);
            }
        }
        SplitData { feats, labels }
    };
    let train = make_split(spec.train_per_class, &mut rng);
    let val = make_split(spec.val_per_class, &mut rng);
    let test = make_split(spec.test_per_class, &mut rng);
    FeatureDataset::new(spec.name.clone(), train, val, test, clip)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // measure-zero draw; fall back to the first axis
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.iter().map(|x| x / norm).collect()
}
