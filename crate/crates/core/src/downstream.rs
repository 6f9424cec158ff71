//! Downstream evaluation of a finished algorithm pair: validation-split
//! hyper-parameter search, test scoring over shots and seeds, and domain
//! transfer with frozen choices.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::adapt::HyperParams;
use crate::evolve::AlgorithmPair;
use crate::fabric::{parse_logits, AccessLog, Fabric, FabricError, HoldoutTask, LogitsKind};
use crate::store::Split;

/// Label phase for everything before final scoring.
pub const PHASE_HPO: &str = "hpo";
/// Label phase for test scoring; the only phase allowed to read test labels.
pub const PHASE_FINAL: &str = "final";

pub const DEFAULT_TRIALS: usize = 500;
pub const GDA_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRange {
    LogUniform { lo: f64, hi: f64 },
    Choice(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopkRange {
    Uniform { lo: usize, hi: usize },
    Choice(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoSpace {
    pub alpha0: AlphaRange,
    pub alpha1: AlphaRange,
    pub alpha2: AlphaRange,
    pub topk: TopkRange,
    pub w0: f64,
    pub w1: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DownstreamError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("all {failed} trial(s) failed")]
    NoViableTrial { failed: usize },
    #[error("source is {source_d}x{source_c} but `{target}` is {target_d}x{target_c}")]
    DimensionMismatch {
        target: String,
        source_d: usize,
        source_c: usize,
        target_d: usize,
        target_c: usize,
    },
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

impl HpoSpace {
    /// α ∈ [1e-9, 100] log-uniform, topk ∈ [1, d], w0 = w1 = 0.5.
    pub fn standard(d: usize, trials: usize) -> Self {
        let alpha = AlphaRange::LogUniform { lo: 1e-9, hi: 100.0 };
        Self {
            alpha0: alpha.clone(),
            alpha1: alpha.clone(),
            alpha2: alpha,
            topk: TopkRange::Uniform { lo: 1, hi: d },
            w0: 0.5,
            w1: 0.5,
            trials,
        }
    }

    /// Standard space with the trial budget for `pair`: fewer trials when the
    /// logits function is GDA-derived.
    pub fn for_pair(pair: &AlgorithmPair, d: usize) -> Self {
        let gda = matches!(parse_logits(&pair.logits), Ok(dir) if dir.kind == LogitsKind::Gda);
        Self::standard(d, if gda { GDA_TRIALS } else { DEFAULT_TRIALS })
    }

    pub fn validate(&self, d: usize) -> Result<(), DownstreamError> {
        let bad = |m: String| Err(DownstreamError::InvalidSpace(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        for (name, r) in [("alpha0", &self.alpha0), ("alpha1", &self.alpha1), ("alpha2", &self.alpha2)] {
            match r {
                AlphaRange::LogUniform { lo, hi } if !(*lo > 0.0 && lo <= hi && hi.is_finite()) => {
                    return bad(format!("{name}: need 0 < lo <= hi, got [{lo}, {hi}]"));
                }
                AlphaRange::Choice(v) if v.is_empty() || v.iter().any(|a| !(*a > 0.0 && a.is_finite())) => {
                    return bad(format!("{name}: choices must be positive and non-empty"));
                }
                _ => {}
            }
        }
        match &self.topk {
            TopkRange::Uniform { lo, hi } if *lo == 0 || lo > hi || *hi > d => {
                bad(format!("topk: need 1 <= lo <= hi <= {d}, got [{lo}, {hi}]"))
            }
            TopkRange::Choice(v) if v.is_empty() || v.iter().any(|&k| k == 0 || k > d) => {
                bad(format!("topk choices must lie in [1, {d}]"))
            }
            _ => Ok(()),
        }
    }

    fn draw_alpha(r: &AlphaRange, rng: &mut ChaCha8Rng) -> f64 {
        match r {
            AlphaRange::LogUniform { lo, hi } => {
                let u: f64 = rng.random();
                (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi)
            }
            AlphaRange::Choice(v) => v[rng.random_range(0..v.len())],
        }
    }

    /// The first `trials` points of the seeded sequence. Every point consumes
    /// the stream in a fixed order, so a larger budget extends a smaller one.
    pub fn sample(&self, seed: u64) -> Vec<HyperParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.trials)
            .map(|_| {
                let alpha0 = Self::draw_alpha(&self.alpha0, &mut rng);
                let alpha1 = Self::draw_alpha(&self.alpha1, &mut rng);
                let alpha2 = Self::draw_alpha(&self.alpha2, &mut rng);
                let topk = match &self.topk {
                    TopkRange::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
                    TopkRange::Choice(v) => v[rng.random_range(0..v.len())],
                };
                HyperParams { w0: self.w0, w1: self.w1, topk, alpha0, alpha1, alpha2 }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub best: HyperParams,
    pub val_accuracy: f64,
    /// Index of the winning trial.
    pub best_trial: usize,
    /// Distinct points actually evaluated.
    pub evaluated: usize,
    pub failed: usize,
}

fn point_key(hp: &HyperParams) -> [u64; 6] {
    [
        hp.w0.to_bits(),
        hp.w1.to_bits(),
        hp.topk as u64,
        hp.alpha0.to_bits(),
        hp.alpha1.to_bits(),
        hp.alpha2.to_bits(),
    ]
}

/// Accuracy of `pair` with `hp` on `split`, optionally scoring another dataset.
pub fn pair_accuracy(
    fabric: &Fabric,
    pair: &AlgorithmPair,
    task: &HoldoutTask,
    hp: &HyperParams,
    split: Split,
    eval_dataset_id: Option<&str>,
) -> Result<f64, FabricError> {
    let indices = match &pair.selection {
        Some(code) => Some(fabric.select(task, code, hp)?),
        None => None,
    };
    fabric.score(task, &pair.logits, indices.as_deref(), hp, split, eval_dataset_id)
}

/// Seeded random search on the validation split; ties go to the earliest trial.
pub fn optimize_hyperparams(
    fabric: &Fabric,
    pair: &AlgorithmPair,
    task: &HoldoutTask,
    space: &HpoSpace,
    seed: u64,
) -> Result<HpoResult, DownstreamError> {
    space.validate(task.d)?;
    let points = space.sample(seed);
    let mut first_of: HashMap<[u64; 6], usize> = HashMap::new();
    let mut distinct = Vec::new();
    for (i, p) in points.iter().enumerate() {
        first_of.entry(point_key(p)).or_insert_with(|| {
            distinct.push(i);
            i
        });
    }
    let width = fabric.size().max(1);
    let mut scores: HashMap<usize, Result<f64, FabricError>> = HashMap::new();
    let pts = &points;
    for chunk in distinct.chunks(width) {
        let got: Vec<(usize, Result<f64, FabricError>)> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| (i, s.spawn(move || pair_accuracy(fabric, pair, task, &pts[i], Split::Val, None))))
                .collect();
            handles.into_iter().map(|(i, h)| (i, h.join().expect("trial panicked"))).collect()
        });
        scores.extend(got);
    }
    let mut best: Option<(usize, f64)> = None;
    let mut failed = 0;
    for &i in &distinct {
        match &scores[&i] {
            Ok(acc) => {
                if best.is_none_or(|(_, b)| *acc > b) {
                    best = Some((i, *acc));
                }
            }
            Err(FabricError::Candidate(_)) => failed += 1,
            Err(e) => return Err(e.clone().into()),
        }
    }
    let (best_trial, val_accuracy) = best.ok_or(DownstreamError::NoViableTrial { failed })?;
    Ok(HpoResult {
        best: points[best_trial],
        val_accuracy,
        best_trial,
        evaluated: distinct.len(),
        failed,
    })
}

/// A registered downstream dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub dataset_id: String,
    pub d: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub shots: usize,
    pub seed: u64,
    pub hp: HyperParams,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Shot count, or `average`.
    pub label: String,
    /// Mean test accuracy per dataset (seed-averaged), in `datasets` order.
    pub per_dataset: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub datasets: Vec<String>,
    pub rows: Vec<TableRow>,
    pub cells: Vec<Cell>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl AccuracyTable {
    fn from_cells(datasets: Vec<String>, shots: &[usize], cells: Vec<Cell>) -> Self {
        let acc = |f: &dyn Fn(&Cell) -> bool| -> Vec<f64> {
            cells.iter().filter(|c| f(c)).map(|c| c.test_accuracy).collect()
        };
        let mut rows = Vec::with_capacity(shots.len() + 1);
        for &k in shots {
            rows.push(TableRow {
                label: k.to_string(),
                per_dataset: datasets
                    .iter()
                    .map(|d| mean(&acc(&|c| c.shots == k && &c.dataset == d)))
                    .collect(),
                mean: mean(&acc(&|c| c.shots == k)),
            });
        }
        rows.push(TableRow {
            label: "average".into(),
            per_dataset: datasets.iter().map(|d| mean(&acc(&|c| &c.dataset == d))).collect(),
            mean: mean(&acc(&|_| true)),
        });
        Self { datasets, rows, cells }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("shots");
        for d in &self.datasets {
            s.push(',');
            s.push_str(d);
        }
        s.push_str(",mean\n");
        for r in &self.rows {
            s.push_str(&r.label);
            for v in &r.per_dataset {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", r.mean);
        }
        s
    }
}

/// Per-cell HPO seed derived from the run seed and the cell coordinates.
pub fn cell_seed(base: u64, dataset: usize, shots: usize, seed: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for v in [dataset as u64, shots as u64, seed] {
        h = (h ^ v).wrapping_mul(0x0100_0000_01B3);
    }
    h
}

/// Tunes on validation and scores on test for every (dataset, shots, seed).
///
/// When `audit` is given, it is switched to [`PHASE_HPO`] during tuning and to
/// [`PHASE_FINAL`] only around test scoring.
pub fn evaluate_downstream(
    fabric: &Fabric,
    pair: &AlgorithmPair,
    datasets: &[DatasetRef],
    shots: &[usize],
    seeds: &[u64],
    trials: Option<usize>,
    hpo_seed: u64,
    audit: Option<&AccessLog>,
) -> Result<AccuracyTable, DownstreamError> {
    let mut cells = Vec::new();
    for (di, ds) in datasets.iter().enumerate() {
        for &k in shots {
            for &s in seeds {
                let task = HoldoutTask { dataset_id: ds.dataset_id.clone(), shots: k, seed: s, d: ds.d };
                let mut space = HpoSpace::for_pair(pair, ds.d);
                if let Some(t) = trials {
                    space.trials = t;
                }
                if let Some(log) = audit {
                    log.set_phase(PHASE_HPO);
                }
                let hpo = optimize_hyperparams(fabric, pair, &task, &space, cell_seed(hpo_seed, di, k, s))?;
                if let Some(log) = audit {
                    log.set_phase(PHASE_FINAL);
                }
                let test = pair_accuracy(fabric, pair, &task, &hpo.best, Split::Test, None)?;
                if let Some(log) = audit {
                    log.set_phase(PHASE_HPO);
                }
                info!(dataset = %ds.name, shots = k, seed = s, val = hpo.val_accuracy, test, "cell done");
                cells.push(Cell {
                    dataset: ds.name.clone(),
                    shots: k,
                    seed: s,
                    hp: hpo.best,
                    val_accuracy: hpo.val_accuracy,
                    test_accuracy: test,
                });
            }
        }
    }
    Ok(AccuracyTable::from_cells(
        datasets.iter().map(|d| d.name.clone()).collect(),
        shots,
        cells,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub hp: HyperParams,
    pub source_accuracy: f64,
    pub targets: Vec<(String, f64)>,
}

/// Fits hyper-parameters and the few-shot set on `source` once, then scores
/// every target's test split with those frozen choices.
pub fn domain_generalization_eval(
    fabric: &Fabric,
    pair: &AlgorithmPair,
    source: &DatasetRef,
    targets: &[DatasetRef],
    shots: usize,
    seed: u64,
    trials: Option<usize>,
    hpo_seed: u64,
) -> Result<TransferResult, DownstreamError> {
    for t in targets {
        if t.d != source.d || t.classes != source.classes {
            return Err(DownstreamError::DimensionMismatch {
                target: t.name.clone(),
                source_d: source.d,
                source_c: source.classes,
                target_d: t.d,
                target_c: t.classes,
            });
        }
    }
    let task = HoldoutTask { dataset_id: source.dataset_id.clone(), shots, seed, d: source.d };
    let mut space = HpoSpace::for_pair(pair, source.d);
    if let Some(t) = trials {
        space.trials = t;
    }
    let hpo = optimize_hyperparams(fabric, pair, &task, &space, hpo_seed)?;
    let indices = match &pair.selection {
        Some(code) => Some(fabric.select(&task, code, &hpo.best)?),
        None => None,
    };
    let score = |target: Option<&str>| {
        fabric.score(&task, &pair.logits, indices.as_deref(), &hpo.best, Split::Test, target)
    };
    let source_accuracy = score(None)?;
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        out.push((t.name.clone(), score(Some(&t.dataset_id))?));
    }
    Ok(TransferResult { hp: hpo.best, source_accuracy, targets: out })
}
