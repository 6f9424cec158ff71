use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::history::{IterationRecord, SearchHistory};
use super::population::{sample_parents, select_survivors, Population};
use super::seeds::{init_population, joint_seed, seed_algorithm, selection_for_init, SeedAlgorithm};
use super::{EvolveError, Individual, InitChoice, Lineage, Operator, Stage, Strategy};
use crate::fabric::{Fabric, FabricError, HoldoutTask};
use crate::llm::{build_prompt, parse_algorithm, ChatGateway, ParentAlgorithm, PromptSpec, UsageMeter, UsageTotals};
use crate::rewrite::{to_half_precision, RewriteTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub init: InitChoice,
    pub population_size: usize,
    pub iterations: usize,
    pub offspring_per_iter: usize,
    /// Times the two-stage order is repeated; ignored by single-stage strategies.
    pub alternations: usize,
    pub seed: u64,
    pub max_parse_attempts: u32,
    pub prompt_max_chars: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::FsThenLogit,
            init: InitChoice::Ape,
            population_size: 10,
            iterations: 10,
            offspring_per_iter: 10,
            alternations: 1,
            seed: 0,
            max_parse_attempts: 3,
            prompt_max_chars: None,
        }
    }
}

pub struct SearchContext<'a> {
    pub fabric: &'a Fabric,
    pub gateway: &'a dyn ChatGateway,
    pub tasks: &'a [HoldoutTask],
    pub table: &'a RewriteTable,
    pub config: &'a SearchConfig,
    pub meter: &'a UsageMeter,
}

/// What one stage evolves and what it is paired with during evaluation.
#[derive(Debug, Clone)]
pub struct StageSpec {
    pub stage: Stage,
    pub seeds: Vec<(SeedAlgorithm, Vec<u64>)>,
    /// The seed only parents the first generation and never joins the population.
    pub starts_empty: bool,
    /// Logits code for a selection stage; optional selection code for a logits stage.
    pub partner: Option<String>,
}

impl StageSpec {
    fn job(&self, code: &str) -> (Option<String>, String) {
        match self.stage {
            Stage::FeatureSelection => (
                Some(code.to_string()),
                self.partner.clone().expect("selection stage has a logits partner"),
            ),
            Stage::LogitsComputation => (self.partner.clone(), code.to_string()),
            Stage::Joint => (Some(code.to_string()), code.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedIndividual {
    #[serde(flatten)]
    pub individual: Individual,
    pub round: usize,
    pub iteration: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub best: Individual,
    pub population: Population,
    pub history: SearchHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub individual: Individual,
    pub attempts: u32,
}

/// Asks the model for one offspring of `pop` and parses it, re-prompting on
/// unparsable responses.
pub fn propose_offspring(
    ctx: &SearchContext<'_>,
    pop: &[Individual],
    operator: Operator,
    stage: Stage,
    id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Proposal, EvolveError> {
    let m = match operator {
        Operator::Crossover => 2,
        _ => 1,
    };
    let parents = sample_parents(pop, m, rng)?;
    let spec = PromptSpec {
        operator,
        stage,
        parents: parents
            .iter()
            .map(|p| ParentAlgorithm { thoughts: p.thoughts.clone(), code: p.code.clone() })
            .collect(),
        max_chars: ctx.config.prompt_max_chars,
    };
    let prompt = build_prompt(&spec)?;
    let attempts = ctx.config.max_parse_attempts.max(1);
    let mut last = None;
    for attempt in 1..=attempts {
        let completion = ctx.gateway.complete(&prompt.text)?;
        ctx.meter.record(&completion.usage);
        match parse_algorithm(&completion.text) {
            Ok(parsed) => {
                let code = to_half_precision(&parsed.code, ctx.table);
                let lineage = Lineage { parents: parents.iter().map(|p| p.id).collect(), operator };
                return Ok(Proposal {
                    individual: Individual::new(id, parsed.thoughts, code, stage, lineage),
                    attempts: attempt,
                });
            }
            Err(e) => {
                debug!(attempt, error = %e, "unparsable response");
                last = Some(e);
            }
        }
    }
    Err(EvolveError::ParseExhausted { attempts, last: last.expect("at least one attempt") })
}

fn evaluate_into(
    ctx: &SearchContext<'_>,
    spec: &StageSpec,
    inds: &mut [Individual],
) -> Result<Vec<Option<FabricError>>, EvolveError> {
    let jobs: Vec<_> = inds.iter().map(|i| spec.job(&i.code)).collect();
    let results = ctx.fabric.evaluate_many(&jobs, ctx.tasks);
    let mut errors = Vec::with_capacity(inds.len());
    for (ind, r) in inds.iter_mut().zip(results) {
        match r {
            Ok(f) => {
                ind.fitness = Some(f);
                errors.push(None);
            }
            Err(e @ FabricError::Candidate(_)) => errors.push(Some(e)),
            Err(e) => return Err(EvolveError::Fabric(e)),
        }
    }
    Ok(errors)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs `iterations` generations of one stage.
pub fn run_stage(
    ctx: &SearchContext<'_>,
    spec: &StageSpec,
    round: usize,
    rng: &mut ChaCha8Rng,
    next_id: &mut u64,
    archive: &mut Vec<ArchivedIndividual>,
) -> Result<StageRun, EvolveError> {
    let cfg = ctx.config;
    let mut seeds: Vec<Individual> = spec
        .seeds
        .iter()
        .map(|(s, parents)| {
            let id = *next_id;
            *next_id += 1;
            let lineage = Lineage { parents: parents.clone(), operator: Operator::Init };
            Individual::new(id, s.thoughts.clone(), s.code.clone(), spec.stage, lineage)
        })
        .collect();
    let seed_errors = evaluate_into(ctx, spec, &mut seeds)?;
    for (ind, err) in seeds.iter().zip(&seed_errors) {
        archive.push(ArchivedIndividual {
            individual: ind.clone(),
            round,
            iteration: 0,
            error: err.as_ref().map(ToString::to_string),
        });
    }
    if let Some(e) = seed_errors.into_iter().flatten().next() {
        return Err(EvolveError::SeedFailed(e));
    }
    let seed_fitness = seeds.iter().map(Individual::score).reduce(f64::min);
    info!(stage = %spec.stage, round, ?seed_fitness, "stage seeded");

    let stub = seeds.clone();
    let mut pop = if spec.starts_empty {
        Population { members: Vec::new(), capacity: cfg.population_size }
    } else {
        select_survivors(seeds, cfg.population_size)
    };
    let mut records = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let parent_pool: &[Individual] = if pop.is_empty() { &stub } else { &pop.members };
        let crossover_only = spec.starts_empty && iteration == 1;
        let n_cross = if crossover_only {
            cfg.offspring_per_iter
        } else {
            cfg.offspring_per_iter.div_ceil(2)
        };
        let before = ctx.meter.totals();
        let mut offspring = Vec::with_capacity(cfg.offspring_per_iter);
        let mut parse_failures = 0;
        for k in 0..cfg.offspring_per_iter {
            let op = if k < n_cross { Operator::Crossover } else { Operator::Mutation };
            let id = *next_id;
            *next_id += 1;
            match propose_offspring(ctx, parent_pool, op, spec.stage, id, rng) {
                Ok(p) => offspring.push(p.individual),
                Err(EvolveError::ParseExhausted { .. }) => parse_failures += 1,
                Err(e) => return Err(e),
            }
        }
        let errors = evaluate_into(ctx, spec, &mut offspring)?;
        let attempted = offspring.len();
        let mut failed = 0;
        let mut pool = pop.members.clone();
        for (ind, err) in offspring.into_iter().zip(errors) {
            if err.is_some() {
                failed += 1;
            } else {
                pool.push(ind.clone());
            }
            archive.push(ArchivedIndividual {
                individual: ind,
                round,
                iteration,
                error: err.map(|e| e.to_string()),
            });
        }
        pop = select_survivors(pool, cfg.population_size);
        let after = ctx.meter.totals();
        let fits = pop.fitnesses();
        let record = IterationRecord {
            iteration,
            min_fitness: fits.first().copied().unwrap_or(f64::NAN),
            mean_fitness: if fits.is_empty() { f64::NAN } else { mean(&fits) },
            errors: failed,
            attempted,
            parse_failures,
            tokens_in: after.input_tokens - before.input_tokens,
            tokens_out: after.output_tokens - before.output_tokens,
            population: fits,
            member_ids: pop.members.iter().map(|i| i.id).collect(),
        };
        info!(
            stage = %spec.stage,
            iteration,
            min = record.min_fitness,
            errors = failed,
            attempted,
            "generation done"
        );
        records.push(record);
    }
    let best = pop.best().cloned().ok_or(EvolveError::NoViableCandidates(spec.stage))?;
    Ok(StageRun {
        best,
        population: pop,
        history: SearchHistory { stage: spec.stage, round, seed_fitness, records },
    })
}

/// The finished (selection, logits) pair in the form the services execute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmPair {
    pub selection: Option<String>,
    pub logits: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub strategy: Strategy,
    pub init: InitChoice,
    /// Best selection algorithm; for the joint strategy the joint individual.
    pub selection: Option<Individual>,
    pub logits: Individual,
    pub fitness: f64,
    pub histories: Vec<SearchHistory>,
    pub archive: Vec<ArchivedIndividual>,
    pub usage: UsageTotals,
}

impl SearchOutcome {
    pub fn pair(&self) -> AlgorithmPair {
        AlgorithmPair {
            selection: self.selection.as_ref().map(|s| s.code.clone()),
            logits: self.logits.code.clone(),
        }
    }

    /// Writes one CSV per stage run, the individuals archive and a summary;
    /// returns the written paths.
    pub fn write_artifacts(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (k, h) in self.histories.iter().enumerate() {
            let p = dir.join(format!("history_{}_{}.csv", k + 1, h.stage));
            fs::write(&p, h.to_csv())?;
            paths.push(p);
        }
        let p = dir.join("individuals.json");
        fs::write(&p, serde_json::to_string_pretty(&self.archive)?)?;
        paths.push(p);
        let summary = serde_json::json!({
            "strategy": self.strategy,
            "init": self.init,
            "fitness": self.fitness,
            "pair": self.pair(),
            "selection_id": self.selection.as_ref().map(|s| s.id),
            "logits_id": self.logits.id,
            "histories": self.histories,
            "usage": self.usage,
        });
        let p = dir.join("summary.json");
        fs::write(&p, serde_json::to_string_pretty(&summary)?)?;
        paths.push(p);
        Ok(paths)
    }
}

fn as_seed(ind: &Individual) -> (SeedAlgorithm, Vec<u64>) {
    (SeedAlgorithm { thoughts: ind.thoughts.clone(), code: ind.code.clone() }, vec![ind.id])
}

/// Runs the configured strategy end to end.
pub fn run_search(ctx: &SearchContext<'_>) -> Result<SearchOutcome, EvolveError> {
    let cfg = ctx.config;
    let init = cfg.init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next_id = 0u64;
    let mut archive = Vec::new();
    let mut histories = Vec::new();

    let (selection, logits, fitness) = match cfg.strategy {
        Strategy::LogitOnly => {
            // selection stays the identity: every channel, no selection calls
            let (seed, starts_empty) = init_population(Stage::LogitsComputation, init)?;
            let spec = StageSpec {
                stage: Stage::LogitsComputation,
                seeds: vec![(seed, vec![])],
                starts_empty,
                partner: None,
            };
            let run = run_stage(ctx, &spec, 1, &mut rng, &mut next_id, &mut archive)?;
            histories.push(run.history);
            let f = run.best.score();
            (None, run.best, f)
        }
        Strategy::Joint => {
            let spec = StageSpec {
                stage: Stage::Joint,
                seeds: vec![(joint_seed(init), vec![])],
                starts_empty: false,
                partner: None,
            };
            let run = run_stage(ctx, &spec, 1, &mut rng, &mut next_id, &mut archive)?;
            histories.push(run.history);
            let f = run.best.score();
            (Some(run.best.clone()), run.best, f)
        }
        Strategy::FsThenLogit | Strategy::LogitThenFs => {
            let fs_first = cfg.strategy == Strategy::FsThenLogit;
            let ape_logits = seed_algorithm(Stage::LogitsComputation, InitChoice::Ape)?.code;
            let (logits_seed, logits_empty) = init_population(Stage::LogitsComputation, init)?;
            let (fs_seed, _) = init_population(Stage::FeatureSelection, InitChoice::Ape)?;
            let mut best_fs: Option<Individual> = None;
            let mut best_lg: Option<Individual> = None;
            let mut fitness = f64::INFINITY;
            for round in 1..=cfg.alternations.max(1) {
                for step in 0..2 {
                    let fs_step = (step == 0) == fs_first;
                    let run = if fs_step {
                        let partner = match &best_lg {
                            Some(lg) => lg.code.clone(),
                            None => ape_logits.clone(),
                        };
                        let seeds = match &best_fs {
                            Some(b) => vec![as_seed(b)],
                            None => vec![(fs_seed.clone(), vec![])],
                        };
                        let spec = StageSpec {
                            stage: Stage::FeatureSelection,
                            seeds,
                            starts_empty: false,
                            partner: Some(partner),
                        };
                        run_stage(ctx, &spec, round, &mut rng, &mut next_id, &mut archive)?
                    } else {
                        let partner = match &best_fs {
                            Some(fs) => Some(fs.code.clone()),
                            None => selection_for_init(init).map(|s| s.code),
                        };
                        let (seeds, starts_empty) = match &best_lg {
                            Some(b) => (vec![as_seed(b)], false),
                            None => (vec![(logits_seed.clone(), vec![])], logits_empty),
                        };
                        let spec = StageSpec {
                            stage: Stage::LogitsComputation,
                            seeds,
                            starts_empty,
                            partner,
                        };
                        run_stage(ctx, &spec, round, &mut rng, &mut next_id, &mut archive)?
                    };
                    fitness = run.best.score();
                    if fs_step {
                        best_fs = Some(run.best);
                    } else {
                        best_lg = Some(run.best);
                    }
                    histories.push(run.history);
                }
            }
            (best_fs, best_lg.expect("logits stage ran"), fitness)
        }
    };
    Ok(SearchOutcome {
        strategy: cfg.strategy,
        init,
        selection,
        logits,
        fitness,
        histories,
        archive,
        usage: ctx.meter.totals(),
    })
}
