use thiserror::Error;

use super::{top1_accuracy, AdaptError, ChannelSet, HyperParams, LogitsMatrix};
use crate::store::{FewShotTask, Split};

/// Per-axis values of `(alpha0, alpha1, alpha2)` in the fitness grid.
pub const GRID_ALPHAS: [f64; 3] = [0.1, 1.0, 10.0];

/// The 27-point fitness grid: `w0 = w1 = 0.5`, `topk = ⌊0.7·d⌋`, and
/// `(alpha0, alpha1, alpha2)` over `{0.1, 1, 10}³` in lexicographic order.
pub fn hyper_grid(d: usize) -> Vec<HyperParams> {
    // ⌊0.7·d⌋ computed exactly in integers
    let topk = (7 * d / 10).max(1);
    let mut grid = Vec::with_capacity(27);
    for &alpha0 in &GRID_ALPHAS {
        for &alpha1 in &GRID_ALPHAS {
            for &alpha2 in &GRID_ALPHAS {
                grid.push(HyperParams { w0: 0.5, w1: 0.5, topk, alpha0, alpha1, alpha2 });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("task {task} ({stage}) failed at [{theta}]: {source}")]
pub struct FitnessError<E: std::error::Error + 'static> {
    pub task: usize,
    pub stage: &'static str,
    pub theta: HyperParams,
    #[source]
    pub source: E,
}

/// Best top-1 test accuracy over `grid` for one task.
///
/// The selection function runs once with the grid's `(w0, w1, topk)`; without
/// one every channel is kept. Ties in accuracy resolve to the earliest grid point.
pub fn task_accuracy<E, S, L>(
    fs: Option<&S>,
    lg: &L,
    task: &FewShotTask,
    grid: &[HyperParams],
) -> Result<f64, (HyperParams, &'static str, E)>
where
    E: From<AdaptError>,
    S: Fn(&FewShotTask, &HyperParams) -> Result<ChannelSet, E> + ?Sized,
    L: Fn(&FewShotTask, &ChannelSet, &HyperParams) -> Result<LogitsMatrix, E> + ?Sized,
{
    let first = grid
        .first()
        .copied()
        .ok_or_else(|| (placeholder(), "grid", E::from(AdaptError::EmptyInput)))?;
    let channels = match fs {
        Some(fs) => fs(task, &first).map_err(|e| (first, "feat_select", e))?,
        None => ChannelSet::all(task.dim()),
    };
    let labels = &task.dataset().split(Split::Test).labels;
    let mut best = f64::NEG_INFINITY;
    for theta in grid {
        let logits = lg(task, &channels, theta).map_err(|e| (*theta, "logit_comput", e))?;
        let acc = top1_accuracy(&logits, labels).map_err(|e| (*theta, "eval", E::from(e)))?;
        if acc > best {
            best = acc;
        }
    }
    Ok(best)
}

fn placeholder() -> HyperParams {
    HyperParams { w0: 0.0, w1: 0.0, topk: 0, alpha0: 0.0, alpha1: 0.0, alpha2: 0.0 }
}

/// `1 − mean(per-task best accuracy)`. Shared by every evaluation path so that
/// native and service routes agree bit-for-bit.
pub fn fitness_from_accuracies(accs: &[f64]) -> f64 {
    let sum: f64 = accs.iter().sum();
    1.0 - sum / accs.len() as f64
}

/// Fitness of a (selection, logits) pair over holdout tasks; lower is better.
pub fn fitness_of<E, S, L>(
    fs: Option<&S>,
    lg: &L,
    tasks: &[FewShotTask],
    grid: &[HyperParams],
) -> Result<f64, FitnessError<E>>
where
    E: std::error::Error + From<AdaptError> + 'static,
    S: Fn(&FewShotTask, &HyperParams) -> Result<ChannelSet, E> + ?Sized,
    L: Fn(&FewShotTask, &ChannelSet, &HyperParams) -> Result<LogitsMatrix, E> + ?Sized,
{
    if tasks.is_empty() {
        return Err(FitnessError {
            task: 0,
            stage: "tasks",
            theta: placeholder(),
            source: E::from(AdaptError::EmptyInput),
        });
    }
    let accs = tasks
        .iter()
        .enumerate()
        .map(|(i, task)| {
            task_accuracy(fs, lg, task, grid).map_err(|(theta, stage, source)| FitnessError {
                task: i,
                stage,
                theta,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(fitness_from_accuracies(&accs))
}
