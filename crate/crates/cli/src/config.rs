use std::path::{Path, PathBuf};
use std::time::Duration;

use adaptsearch::evolve::SearchConfig;
use adaptsearch::fabric::FabricConfig;
use adaptsearch::llm::EndpointConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Executors live inside the CLI process.
    #[default]
    Native,
    /// Each worker is a separate `adaptsearch serve` process.
    Process,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FabricSection {
    pub workers: usize,
    pub backend: Backend,
    /// Zero disables the background monitor.
    pub probe_interval_s: f64,
    pub timeout_s: f64,
    pub spawn_timeout_s: f64,
    pub probe_deadline_s: f64,
    pub crash_retries: u32,
    /// Per-request cap enforced by process workers themselves.
    pub worker_max_seconds: Option<f64>,
}

impl Default for FabricSection {
    fn default() -> Self {
        Self {
            workers: 4,
            backend: Backend::Native,
            probe_interval_s: 30.0,
            timeout_s: 60.0,
            spawn_timeout_s: 15.0,
            probe_deadline_s: 10.0,
            crash_retries: 2,
            worker_max_seconds: None,
        }
    }
}

impl FabricSection {
    pub fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            workers: self.workers,
            call_timeout: Duration::from_secs_f64(self.timeout_s),
            probe_deadline: Duration::from_secs_f64(self.probe_deadline_s),
            crash_retries: self.crash_retries,
            ..FabricConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub holdout: Vec<PathBuf>,
    pub downstream: Vec<PathBuf>,
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Shot count and seeds of the few-shot draws scored during search.
    pub holdout_shots: usize,
    pub holdout_seeds: Vec<u64>,
    /// Feature file whose tuned choices transfer to `transfer_targets`.
    pub transfer_source: Option<PathBuf>,
    pub transfer_targets: Vec<PathBuf>,
    pub transfer_shots: usize,
    pub rewrite_table: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            holdout: Vec::new(),
            downstream: Vec::new(),
            shots: vec![1, 2, 4, 8, 16],
            seeds: vec![1, 2, 3],
            holdout_shots: 16,
            holdout_seeds: vec![1],
            transfer_source: None,
            transfer_targets: Vec::new(),
            transfer_shots: 16,
            rewrite_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Overrides the per-pair trial budget.
    pub trials: Option<usize>,
    pub hpo_seed: u64,
    /// Apply the half-precision rewrite to the evaluated pair.
    pub half_precision: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { trials: None, hpo_seed: 0, half_precision: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub llm: EndpointConfig,
    pub search: SearchConfig,
    pub fabric: FabricSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Parses `path`; relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.holdout.iter_mut().for_each(fix);
        cfg.data.downstream.iter_mut().for_each(fix);
        cfg.data.transfer_targets.iter_mut().for_each(fix);
        if let Some(p) = cfg.data.transfer_source.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.data.rewrite_table.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn check_paths(&self, paths: &[PathBuf]) -> Result<(), String> {
        match paths.iter().find(|p| !p.exists()) {
            Some(p) => Err(format!("missing data file {}", p.display())),
            None => Ok(()),
        }
    }
}
