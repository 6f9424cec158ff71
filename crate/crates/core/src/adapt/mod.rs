//! Reference implementations of the training-free baselines (zero-shot,
//! Tip-Adapter cache model, APE channel selection and logits, shared-covariance
//! GDA), the top-1 metric, the fitness grid and the fitness function.
//!
//! Everything here is a pure function of its inputs. These routines back the
//! `native` execution backend and double as the oracle the other modules are
//! tested against.

mod cache;
mod fitness;
mod gda;

pub use cache::{ape_logits, ape_select_channels, ape_channel_scores, tip_adapter_logits};
pub use fitness::{
    fitness_from_accuracies, fitness_of, hyper_grid, task_accuracy, FitnessError, GRID_ALPHAS,
};
pub use gda::{gda_logits, gda_scores, Ridge};

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::FewShotTask;

/// CLIP's logit scale applied to the zero-shot term.
pub const ZERO_SHOT_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum AdaptError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in output")]
    NonFinite,
    #[error("class {0} has no training sample")]
    MissingClass(usize),
    #[error("topk {topk} outside [1, {d}]")]
    TopkOutOfRange { topk: usize, d: usize },
    #[error("empty channel set")]
    EmptyChannelSet,
    #[error("invalid channel set: {0}")]
    InvalidChannels(String),
    #[error("covariance is singular even after regularization")]
    SingularCovariance,
    #[error("{rows} logit rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
}

/// Selection hyper-parameters `(w0, w1, topk)` and logits hyper-parameters
/// `(alpha0, alpha1, alpha2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub w0: f64,
    pub w1: f64,
    pub topk: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl HyperParams {
    pub fn validate(&self, d: usize) -> Result<(), AdaptError> {
        if self.topk == 0 || self.topk > d {
            return Err(AdaptError::TopkOutOfRange { topk: self.topk, d });
        }
        for (name, a) in [("alpha0", self.alpha0), ("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(a.is_finite() && a > 0.0) {
                return Err(AdaptError::InvalidHyperParams(format!("{name} = {a} must be > 0")));
            }
        }
        if !(self.w0.is_finite() && self.w1.is_finite()) {
            return Err(AdaptError::InvalidHyperParams("w0/w1 must be finite".into()));
        }
        Ok(())
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "w0={} w1={} topk={} alpha0={} alpha1={} alpha2={}",
            self.w0, self.w1, self.topk, self.alpha0, self.alpha1, self.alpha2
        )
    }
}

/// Sorted, unique feature-channel indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelSet(Vec<usize>);

impl ChannelSet {
    /// Validates that `indices` is strictly increasing and below `d`.
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self, AdaptError> {
        if indices.is_empty() {
            return Err(AdaptError::EmptyChannelSet);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AdaptError::InvalidChannels(
                "indices must be sorted and unique".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= d {
                return Err(AdaptError::InvalidChannels(format!(
                    "index {last} out of range for d={d}"
                )));
            }
        }
        Ok(Self(indices))
    }

    pub fn all(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-sample class scores, `N × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsMatrix(pub DMatrix<f64>);

impl LogitsMatrix {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn checked(self) -> Result<Self, AdaptError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(AdaptError::NonFinite)
        }
    }

    /// Row-major copy, as carried on the wire.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|r| self.0.row(r).iter().copied().collect())
            .collect()
    }
}

/// Borrowed arguments of a logits function, mirroring the candidate signature
/// `compute_logits(train_feats, train_labels, test_feats, clip_weights, ...)`.
#[derive(Debug, Clone, Copy)]
pub struct AdaptInputs<'a> {
    /// `M × d`.
    pub train_feats: &'a DMatrix<f64>,
    pub train_labels: &'a [usize],
    /// `N × d`.
    pub test_feats: &'a DMatrix<f64>,
    /// `d × C`.
    pub clip_weights: &'a DMatrix<f64>,
}

impl<'a> AdaptInputs<'a> {
    pub fn from_task(task: &'a FewShotTask, test_feats: &'a DMatrix<f64>) -> Self {
        Self {
            train_feats: &task.train_feats,
            train_labels: &task.train_labels,
            test_feats,
            clip_weights: &task.clip_weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.clip_weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.clip_weights.ncols()
    }

    fn check(&self) -> Result<(), AdaptError> {
        let d = self.dim();
        if self.train_feats.ncols() != d || self.test_feats.ncols() != d {
            return Err(AdaptError::ShapeMismatch(format!(
                "train {}x{}, test {}x{}, clip_weights {}x{}",
                self.train_feats.nrows(),
                self.train_feats.ncols(),
                self.test_feats.nrows(),
                self.test_feats.ncols(),
                d,
                self.num_classes()
            )));
        }
        if self.train_feats.nrows() != self.train_labels.len() {
            return Err(AdaptError::ShapeMismatch(format!(
                "{} train rows but {} labels",
                self.train_feats.nrows(),
                self.train_labels.len()
            )));
        }
        let c = self.num_classes();
        if let Some(&bad) = self.train_labels.iter().find(|&&l| l >= c) {
            return Err(AdaptError::ShapeMismatch(format!(
                "train label {bad} outside [0, {c})"
            )));
        }
        Ok(())
    }

    fn one_hot(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.train_labels.len(), self.num_classes());
        for (r, &l) in self.train_labels.iter().enumerate() {
            m[(r, l)] = 1.0;
        }
        m
    }
}

/// `100 · test_feats · clip_weights`.
pub fn clip_zero_shot_logits(
    test_feats: &DMatrix<f64>,
    clip_weights: &DMatrix<f64>,
) -> Result<LogitsMatrix, AdaptError> {
    if test_feats.ncols() != clip_weights.nrows() {
        return Err(AdaptError::ShapeMismatch(format!(
            "test features have {} channels, clip_weights {}",
            test_feats.ncols(),
            clip_weights.nrows()
        )));
    }
    LogitsMatrix(test_feats * clip_weights * ZERO_SHOT_SCALE).checked()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if i == 0 || v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn top1_accuracy(logits: &LogitsMatrix, labels: &[usize]) -> Result<f64, AdaptError> {
    if logits.nrows() != labels.len() {
        return Err(AdaptError::LengthMismatch {
            rows: logits.nrows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(AdaptError::EmptyInput);
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| argmax(logits.0.row(r).iter().copied()) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
