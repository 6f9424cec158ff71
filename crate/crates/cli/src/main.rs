mod config;

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use adaptsearch::downstream::{
    domain_generalization_eval, evaluate_downstream, AccuracyTable, DatasetRef, TransferResult,
};
use adaptsearch::evolve::{
    parse_csv, run_search, seed_algorithm, selection_for_init, AlgorithmPair, InitChoice, SearchContext, Stage,
};
use adaptsearch::fabric::{
    serve, DatasetSource, Fabric, HoldoutTask, Monitor, NativeExecutor, NativeLauncher, ProcessLauncher,
    ServeOptions, WorkerLauncher,
};
use adaptsearch::llm::{ChatGateway, OpenAiGateway, ScriptedGateway, UsageMeter};
use adaptsearch::rewrite::{to_half_precision, RewriteTable};
use adaptsearch::store::{load_dataset, synth_dataset, write_dataset, FeatureDataset, Split, SynthSpec};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Backend, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "adaptsearch", version, about = "Search for training-free few-shot adaptation algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the evolutionary search and write its history and archive.
    Search(SearchArgs),
    /// Tune and score an algorithm pair on the downstream datasets.
    Eval(EvalArgs),
    /// Create or inspect feature files.
    #[command(subcommand)]
    Data(DataCommand),
    /// Host one fabric worker over HTTP.
    Serve(ServeArgs),
    /// Start the configured pool and run probe-and-heal cycles.
    Monitor(MonitorArgs),
    /// Render curves from a history CSV or tables from an evaluation JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON array of canned model responses, replayed in order.
    #[arg(long)]
    mock_llm: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/search")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// `summary.json` written by `search`.
    #[arg(long, conflicts_with = "baseline")]
    summary: Option<PathBuf>,
    /// Evaluate a hand-designed method instead of a searched pair.
    #[arg(long, value_parser = parse_init)]
    baseline: Option<InitChoice>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    half_precision: bool,
    #[arg(long, default_value = "runs/eval")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum DataCommand {
    /// Write a synthetic clustered feature file.
    Gen(GenArgs),
    /// Print a feature file's header as JSON.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    per_class: usize,
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Relative dataset paths resolve against this directory.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Per-request cap; overrunning requests are cancelled.
    #[arg(long)]
    max_seconds: Option<f64>,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// Seconds between cycles; defaults to `fabric.probe_interval_s`.
    #[arg(long)]
    interval: Option<f64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    path: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_init(s: &str) -> Result<InitChoice, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown method `{s}` (tip_adapter, ape, gda, none)"))
}

struct Failure {
    kind: &'static str,
    message: String,
}

type CmdResult = Result<(), Failure>;

fn fail(kind: &'static str) -> impl Fn(String) -> Failure {
    move |message| Failure { kind, message }
}

fn fail_with<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure { kind, message: e.to_string() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let result = match cli.command {
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Data(DataCommand::Gen(a)) => cmd_data_gen(a),
        Command::Data(DataCommand::Inspect { path }) => cmd_data_inspect(&path),
        Command::Serve(a) => cmd_serve(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(fail("config"))
}

fn start_fabric(cfg: &RunConfig) -> Result<Arc<Fabric>, Failure> {
    let launcher: Arc<dyn WorkerLauncher> = match cfg.fabric.backend {
        Backend::Native => Arc::new(NativeLauncher::new()),
        Backend::Process => {
            let exe = std::env::current_exe().map_err(fail_with("fabric"))?;
            let mut args = vec!["serve".to_string()];
            if let Some(s) = cfg.fabric.worker_max_seconds {
                args.extend(["--max-seconds".to_string(), s.to_string()]);
            }
            let mut l = ProcessLauncher::new(exe, args);
            l.spawn_timeout = Duration::from_secs_f64(cfg.fabric.spawn_timeout_s);
            Arc::new(l)
        }
    };
    Fabric::start(launcher, cfg.fabric.fabric_config())
        .map(Arc::new)
        .map_err(fail_with("fabric"))
}

fn start_monitor(cfg: &RunConfig, fabric: &Arc<Fabric>) -> Option<Monitor> {
    (cfg.fabric.probe_interval_s > 0.0)
        .then(|| Monitor::spawn(Arc::clone(fabric), Duration::from_secs_f64(cfg.fabric.probe_interval_s)))
}

fn register(fabric: &Fabric, path: &Path) -> Result<(Arc<FeatureDataset>, String), Failure> {
    let path = fs::canonicalize(path).map_err(|e| fail("data")(format!("{}: {e}", path.display())))?;
    let ds = Arc::new(load_dataset(&path).map_err(|e| fail("data")(format!("{}: {e}", path.display())))?);
    let id = fabric
        .register(DatasetSource::from_file(Arc::clone(&ds), path))
        .map_err(fail_with("fabric"))?;
    Ok((ds, id))
}

fn dataset_ref(fabric: &Fabric, path: &Path) -> Result<DatasetRef, Failure> {
    let (ds, id) = register(fabric, path)?;
    Ok(DatasetRef {
        name: ds.name().to_string(),
        dataset_id: id,
        d: ds.dim(),
        classes: ds.num_classes(),
    })
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn cmd_search(a: SearchArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.search.seed = seed;
    }
    if cfg.data.holdout.is_empty() {
        return Err(fail("config")("data.holdout lists no feature files".into()));
    }
    cfg.check_paths(&cfg.data.holdout).map_err(fail("config"))?;
    let table = match &cfg.data.rewrite_table {
        Some(p) => RewriteTable::load(p).map_err(fail_with("config"))?,
        None => RewriteTable::default(),
    };
    let gateway: Box<dyn ChatGateway> = match &a.mock_llm {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| fail("config")(format!("{}: {e}", p.display())))?;
            let script: Vec<String> = serde_json::from_str(&text)
                .map_err(|e| fail("config")(format!("{}: expected a JSON array of strings: {e}", p.display())))?;
            if script.is_empty() {
                return Err(fail("config")(format!("{}: script is empty", p.display())));
            }
            Box::new(ScriptedGateway::new(script))
        }
        None => Box::new(OpenAiGateway::new(cfg.llm.clone()).map_err(fail_with("llm"))?),
    };

    let fabric = start_fabric(&cfg)?;
    let _monitor = start_monitor(&cfg, &fabric);
    let mut tasks = Vec::new();
    for path in &cfg.data.holdout {
        let (ds, id) = register(&fabric, path)?;
        for &seed in &cfg.data.holdout_seeds {
            tasks.push(HoldoutTask { dataset_id: id.clone(), shots: cfg.data.holdout_shots, seed, d: ds.dim() });
        }
    }
    let meter = UsageMeter::default();
    let ctx = SearchContext {
        fabric: &fabric,
        gateway: gateway.as_ref(),
        tasks: &tasks,
        table: &table,
        config: &cfg.search,
        meter: &meter,
    };
    let outcome = run_search(&ctx).map_err(fail_with("search"))?;
    let paths = outcome.write_artifacts(&a.out).map_err(fail_with("io"))?;
    print_paths(&paths);
    Ok(())
}

fn baseline_pair(init: InitChoice) -> Result<AlgorithmPair, Failure> {
    let logits = seed_algorithm(Stage::LogitsComputation, init).map_err(fail_with("config"))?;
    Ok(AlgorithmPair { selection: selection_for_init(init).map(|s| s.code), logits: logits.code })
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let mut pair = match (&a.summary, a.baseline) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| fail("io")(format!("{}: {e}", p.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(fail_with("config"))?;
            serde_json::from_value::<AlgorithmPair>(v["pair"].clone())
                .map_err(|e| fail("config")(format!("{}: no algorithm pair: {e}", p.display())))?
        }
        (None, Some(init)) => baseline_pair(init)?,
        (None, None) => return Err(fail("usage")("pass --summary or --baseline".into())),
    };
    if a.half_precision || cfg.eval.half_precision {
        let table = match &cfg.data.rewrite_table {
            Some(p) => RewriteTable::load(p).map_err(fail_with("config"))?,
            None => RewriteTable::default(),
        };
        pair.selection = pair.selection.map(|s| to_half_precision(&s, &table));
        pair.logits = to_half_precision(&pair.logits, &table);
    }
    let transfer_paths: Vec<PathBuf> =
        cfg.data.transfer_source.iter().chain(&cfg.data.transfer_targets).cloned().collect();
    if cfg.data.downstream.is_empty() && cfg.data.transfer_source.is_none() {
        return Err(fail("config")("data.downstream lists no feature files".into()));
    }
    cfg.check_paths(&cfg.data.downstream).map_err(fail("config"))?;
    cfg.check_paths(&transfer_paths).map_err(fail("config"))?;
    let trials = a.trials.or(cfg.eval.trials);

    let fabric = start_fabric(&cfg)?;
    let _monitor = start_monitor(&cfg, &fabric);
    let datasets = cfg
        .data
        .downstream
        .iter()
        .map(|p| dataset_ref(&fabric, p))
        .collect::<Result<Vec<_>, _>>()?;
    let table = if datasets.is_empty() {
        None
    } else {
        Some(
            evaluate_downstream(&fabric, &pair, &datasets, &cfg.data.shots, &cfg.data.seeds, trials, cfg.eval.hpo_seed, None)
                .map_err(fail_with("eval"))?,
        )
    };
    let transfer: Option<TransferResult> = match &cfg.data.transfer_source {
        Some(src) => {
            let source = dataset_ref(&fabric, src)?;
            let targets = cfg
                .data
                .transfer_targets
                .iter()
                .map(|p| dataset_ref(&fabric, p))
                .collect::<Result<Vec<_>, _>>()?;
            let seed = cfg.data.seeds.first().copied().unwrap_or(1);
            Some(
                domain_generalization_eval(&fabric, &pair, &source, &targets, cfg.data.transfer_shots, seed, trials, cfg.eval.hpo_seed)
                    .map_err(fail_with("eval"))?,
            )
        }
        None => None,
    };

    fs::create_dir_all(&a.out).map_err(fail_with("io"))?;
    let mut paths = Vec::new();
    if let Some(t) = &table {
        let p = a.out.join("accuracy.csv");
        fs::write(&p, t.to_csv()).map_err(fail_with("io"))?;
        paths.push(p);
    }
    let p = a.out.join("accuracy.json");
    let summary = json!({ "pair": pair, "table": table, "transfer": transfer });
    fs::write(&p, serde_json::to_string_pretty(&summary).map_err(fail_with("io"))?).map_err(fail_with("io"))?;
    paths.push(p);
    print_paths(&paths);
    Ok(())
}

fn cmd_data_gen(a: GenArgs) -> CmdResult {
    let spec = SynthSpec::new(&a.name, a.d, a.classes, a.per_class, a.sigma, a.tau);
    let ds = synth_dataset(&spec, a.seed).map_err(fail_with("data"))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail_with("io"))?;
    }
    write_dataset(&ds, &a.out).map_err(fail_with("io"))?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_data_inspect(path: &Path) -> CmdResult {
    let ds = load_dataset(path).map_err(|e| fail("data")(format!("{}: {e}", path.display())))?;
    let info = json!({
        "name": ds.name(),
        "id": ds.id(),
        "d": ds.dim(),
        "C": ds.num_classes(),
        "n_train": ds.split(Split::Train).len(),
        "n_val": ds.split(Split::Val).len(),
        "n_test": ds.split(Split::Test).len(),
    });
    println!("{info}");
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    let mut ex = NativeExecutor::new();
    if let Some(root) = a.data_root {
        ex = ex.with_data_root(root);
    }
    let opts = ServeOptions {
        addr: SocketAddr::new(a.host, a.port),
        max_duration: a.max_seconds.map(Duration::from_secs_f64),
    };
    serve(Arc::new(ex), opts).map_err(fail_with("io"))
}

fn cmd_monitor(a: MonitorArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let fabric = start_fabric(&cfg)?;
    let interval = Duration::from_secs_f64(a.interval.unwrap_or(cfg.fabric.probe_interval_s));
    for round in 0..a.rounds {
        if round > 0 {
            std::thread::sleep(interval);
        }
        let report = fabric.probe_and_heal();
        println!(
            "{}",
            json!({ "round": round + 1, "report": report, "live": fabric.live_workers(), "size": fabric.size() })
        );
    }
    Ok(())
}

fn default_out(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}_{suffix}"))
}

fn curve_csv(rows: &[(usize, f64, f64, usize, u64, u64)]) -> String {
    let mut s = String::from("iteration,min_fitness,best_so_far\n");
    let mut best = f64::INFINITY;
    for r in rows {
        best = best.min(r.1);
        s.push_str(&format!("{},{},{}\n", r.0, r.1, best));
    }
    s
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let text = fs::read_to_string(&a.path).map_err(|e| fail("io")(format!("{}: {e}", a.path.display())))?;
    let is_csv = a.path.extension().is_some_and(|e| e == "csv");
    let (out, body) = if is_csv {
        let rows = parse_csv(&text).map_err(fail("report"))?;
        (a.out.unwrap_or_else(|| default_out(&a.path, "curve.csv")), curve_csv(&rows))
    } else {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(fail_with("report"))?;
        if let Ok(table) = serde_json::from_value::<AccuracyTable>(v["table"].clone()) {
            (a.out.unwrap_or_else(|| default_out(&a.path, "table.csv")), table.to_csv())
        } else if let Some(hs) = v["histories"].as_array() {
            let mut s = String::from("run,stage,iteration,min_fitness\n");
            for (k, h) in hs.iter().enumerate() {
                let stage = h["stage"].as_str().unwrap_or("?");
                for r in h["records"].as_array().into_iter().flatten() {
                    s.push_str(&format!("{},{stage},{},{}\n", k + 1, r["iteration"], r["min_fitness"]));
                }
            }
            (a.out.unwrap_or_else(|| default_out(&a.path, "curves.csv")), s)
        } else {
            return Err(fail("report")(format!(
                "{}: neither an evaluation table nor a search summary",
                a.path.display()
            )));
        }
    };
    fs::write(&out, body).map_err(fail_with("io"))?;
    println!("{}", out.display());
    Ok(())
}
