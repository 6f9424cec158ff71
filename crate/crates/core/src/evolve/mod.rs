//! Population search over candidate algorithms.

mod engine;
mod history;
mod population;
mod seeds;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fabric::FabricError;
use crate::llm::{GatewayError, ParseError, PromptError};

pub use engine::{
    propose_offspring, run_search, run_stage, AlgorithmPair, ArchivedIndividual, Proposal,
    SearchConfig, SearchContext, SearchOutcome, StageRun, StageSpec,
};
pub use history::{parse_csv, IterationRecord, SearchHistory, CSV_HEADER};
pub use population::{parent_probabilities, sample_parents, select_survivors, Population};
pub use seeds::{init_population, joint_seed, seed_algorithm, selection_for_init, SeedAlgorithm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FeatureSelection,
    LogitsComputation,
    Joint,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::FeatureSelection => "feature_selection",
            Stage::LogitsComputation => "logits_computation",
            Stage::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Init,
    Crossover,
    Mutation,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Init => "init",
            Operator::Crossover => "crossover",
            Operator::Mutation => "mutation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    TipAdapter,
    Ape,
    Gda,
    None,
}

impl fmt::Display for InitChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitChoice::TipAdapter => "tip_adapter",
            InitChoice::Ape => "ape",
            InitChoice::Gda => "gda",
            InitChoice::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FsThenLogit,
    LogitThenFs,
    Joint,
    LogitOnly,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::FsThenLogit => "fs_then_logit",
            Strategy::LogitThenFs => "logit_then_fs",
            Strategy::Joint => "joint",
            Strategy::LogitOnly => "logit_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parents: Vec<u64>,
    pub operator: Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub thoughts: String,
    pub code: String,
    pub stage: Stage,
    pub fitness: Option<f64>,
    pub lineage: Lineage,
    pub code_hash: String,
}

impl Individual {
    pub fn new(id: u64, thoughts: String, code: String, stage: Stage, lineage: Lineage) -> Self {
        let code_hash = hex::encode(Sha256::digest(code.as_bytes()));
        Self { id, thoughts, code, stage, fitness: None, lineage, code_hash }
    }

    /// Fitness of an evaluated individual; unevaluated ones sort last.
    pub fn score(&self) -> f64 {
        self.fitness.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("stage {stage} cannot be initialized from {init}")]
    InvalidCombination { stage: Stage, init: InitChoice },
    #[error("no parsable response after {attempts} attempts: {last}")]
    ParseExhausted { attempts: u32, last: ParseError },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("seed algorithm failed to evaluate: {0}")]
    SeedFailed(FabricError),
    #[error(transparent)]
    Fabric(FabricError),
    #[error("no viable candidate left in stage {0}")]
    NoViableCandidates(Stage),
}
