use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Stage;

pub const CSV_HEADER: &str = "iteration,min_fitness,mean_fitness,errors,tokens_in,tokens_out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub min_fitness: f64,
    pub mean_fitness: f64,
    /// Offspring whose evaluation failed.
    pub errors: usize,
    /// Offspring submitted for evaluation.
    pub attempted: usize,
    /// Proposals abandoned after exhausting parse retries (never evaluated).
    pub parse_failures: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Survivor fitnesses after selection, ascending.
    pub population: Vec<f64>,
    pub member_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHistory {
    pub stage: Stage,
    pub round: usize,
    pub seed_fitness: Option<f64>,
    pub records: Vec<IterationRecord>,
}

impl SearchHistory {
    pub fn min_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.min_fitness).collect()
    }

    pub fn total_errors(&self) -> usize {
        self.records.iter().map(|r| r.errors).sum()
    }

    pub fn total_attempted(&self) -> usize {
        self.records.iter().map(|r| r.attempted).sum()
    }

    /// Failed evaluations over attempted evaluations.
    pub fn error_rate(&self) -> f64 {
        let attempted = self.total_attempted();
        if attempted == 0 {
            0.0
        } else {
            self.total_errors() as f64 / attempted as f64
        }
    }

    pub fn tokens(&self) -> (u64, u64) {
        self.records
            .iter()
            .fold((0, 0), |(i, o), r| (i + r.tokens_in, o + r.tokens_out))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iteration, r.min_fitness, r.mean_fitness, r.errors, r.tokens_in, r.tokens_out
            );
        }
        s
    }
}

/// Parses the CSV written by [`SearchHistory::to_csv`] into
/// `(iteration, min_fitness, mean_fitness, errors, tokens_in, tokens_out)` rows.
pub fn parse_csv(text: &str) -> Result<Vec<(usize, f64, f64, usize, u64, u64)>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let err = |what: &str| format!("row {}: bad {what} in `{line}`", n + 1);
            if f.len() != 6 {
                return Err(err("column count"));
            }
            Ok((
                f[0].parse().map_err(|_| err("iteration"))?,
                f[1].parse().map_err(|_| err("min_fitness"))?,
                f[2].parse().map_err(|_| err("mean_fitness"))?,
                f[3].parse().map_err(|_| err("errors"))?,
                f[4].parse().map_err(|_| err("tokens_in"))?,
                f[5].parse().map_err(|_| err("tokens_out"))?,
            ))
        })
        .collect()
}
