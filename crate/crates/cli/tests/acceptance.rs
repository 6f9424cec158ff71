//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/support/fixtures.rs"]
#[allow(dead_code)]
mod fixtures;
#[path = "../../core/tests/support/lexer.rs"]
#[allow(dead_code)]
mod lexer;
#[path = "../../core/tests/support/oracle.rs"]
#[allow(dead_code)]
mod oracle;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use adaptsearch::adapt::{
    ape_logits, ape_select_channels, fitness_of, gda_logits, hyper_grid, tip_adapter_logits, AdaptError, AdaptInputs,
    ChannelSet, HyperParams, LogitsMatrix,
};
use adaptsearch::downstream::{evaluate_downstream, DatasetRef, PHASE_FINAL};
use adaptsearch::evolve::{
    joint_seed, run_search, sample_parents, Individual, InitChoice, Lineage, Operator, SearchConfig, SearchContext,
    SearchOutcome, Stage, Strategy,
};
use adaptsearch::fabric::{
    AccessLog, DatasetSource, Fabric, FabricConfig, HoldoutTask, Monitor, NativeLauncher, ProcessLauncher,
};
use adaptsearch::llm::{ScriptedGateway, UsageMeter};
use adaptsearch::rewrite::{rewrite, to_half_precision, RewriteTable};
use adaptsearch::store::{sample_few_shot, synth_dataset, write_dataset, FewShotTask, Split, SynthSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const ORACLE_INSTANCES: u64 = 120;
const ORACLE_REL_TOL: f64 = 1e-6;
const GDA_REL_TOL: f64 = 1e-4;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const SEP_FITNESS_MAX: f64 = 0.02;
const DRAWS: usize = 100_000;
const CHI2_ALPHA: f64 = 0.01;
const SEARCH_BUDGET: Duration = Duration::from_secs(120);
const PROBE_INTERVAL: Duration = Duration::from_secs(30);
const SPAWN_TIMEOUT: Duration = Duration::from_secs(15);

fn random_hp(rng: &mut ChaCha8Rng, d: usize) -> HyperParams {
    let log = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    HyperParams {
        w0: rng.random_range(0.0..1.0),
        w1: rng.random_range(0.0..1.0),
        topk: rng.random_range(1..=d),
        alpha0: log(rng, 0.01, 10.0),
        alpha1: log(rng, 0.1, 10.0),
        alpha2: log(rng, 0.1, 10.0),
    }
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..ORACLE_INSTANCES {
        let inst = oracle::instance(seed);
        ensure!(inst.d <= 16 && inst.c <= 5, "instance {seed} out of range");
        let train = oracle::to_dm(&inst.train, inst.d);
        let test = oracle::to_dm(&inst.test, inst.d);
        let clip = oracle::to_dm(&inst.clip, inst.c);
        let x = AdaptInputs { train_feats: &train, train_labels: &inst.labels, test_feats: &test, clip_weights: &clip };
        let hp = random_hp(&mut ChaCha8Rng::seed_from_u64(seed + 77), inst.d);

        let tip = tip_adapter_logits(&x, &hp).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max(oracle::max_rel_err(&tip.0, &oracle::tip(&inst, hp.alpha0, hp.alpha1)));

        let want_ch = oracle::ape_select(&inst, hp.w0, hp.w1, hp.topk);
        let ch = ape_select_channels(&clip, &train, &inst.labels, &hp).map_err(|e| e.to_string())?;
        ensure!(ch.indices() == want_ch.as_slice(), "instance {seed}: selection {:?} vs {want_ch:?}", ch.indices());

        let set = ChannelSet::new(want_ch.clone(), inst.d).map_err(|e| e.to_string())?;
        let ape = ape_logits(&x, &set, &hp).map_err(|e| e.to_string())?;
        let ape_want = oracle::ape_logits(&inst, &want_ch, hp.alpha0, hp.alpha1, hp.alpha2);
        worst[1] = worst[1].max(oracle::max_rel_err(&ape.0, &ape_want));

        let gda = gda_logits(&x, &hp).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max(oracle::max_rel_err(&gda.0, &oracle::gda(&inst, hp.alpha0)));
    }
    let took = started.elapsed();
    ensure!(worst[0] <= ORACLE_REL_TOL, "tip rel err {:.2e}", worst[0]);
    ensure!(worst[1] <= ORACLE_REL_TOL, "ape rel err {:.2e}", worst[1]);
    ensure!(worst[2] <= GDA_REL_TOL, "gda rel err {:.2e}", worst[2]);
    ensure!(took < ORACLE_BUDGET, "took {took:?}");
    Ok(format!(
        "{ORACLE_INSTANCES} instances, max rel err tip {:.1e} ape {:.1e} gda {:.1e}, {took:.2?}",
        worst[0], worst[1], worst[2]
    ))
}

fn grid_and_fitness() -> Verdict {
    let grid = hyper_grid(16);
    ensure!(grid.len() == 27, "{} grid points", grid.len());
    let vals = [0.1, 1.0, 10.0];
    for (i, p) in grid.iter().enumerate() {
        let want = (vals[i / 9], vals[(i / 3) % 3], vals[i % 3]);
        ensure!((p.alpha0, p.alpha1, p.alpha2) == want, "point {i} is {p:?}");
        ensure!((p.w0, p.w1, p.topk) == (0.5, 0.5, 11), "point {i} is {p:?}");
    }

    let ds = Arc::new(synth_dataset(&SynthSpec::new("land", 8, 3, 10, 0.1, 0.05), 5).map_err(|e| e.to_string())?);
    let task = sample_few_shot(&ds, 4, 1).map_err(|e| e.to_string())?;
    let labels = ds.split(Split::Test).labels.clone();
    let n = labels.len();
    let correct = |i: usize| (i * 7 + 3) % 23;
    let index = |hp: &HyperParams| {
        let pos = |a: f64| vals.iter().position(|&v| v == a).unwrap();
        9 * pos(hp.alpha0) + 3 * pos(hp.alpha1) + pos(hp.alpha2)
    };
    let lg = |t: &FewShotTask, _: &ChannelSet, hp: &HyperParams| -> Result<LogitsMatrix, AdaptError> {
        let k = correct(index(hp));
        let c = t.num_classes;
        Ok(LogitsMatrix(DMatrix::from_fn(n, c, |r, j| {
            let target = if r < k { labels[r] } else { (labels[r] + 1) % c };
            f64::from(u8::from(j == target))
        })))
    };
    let no_fs: Option<&fn(&FewShotTask, &HyperParams) -> Result<ChannelSet, AdaptError>> = None;
    let got = fitness_of(no_fs, &lg, std::slice::from_ref(&task), &hyper_grid(8)).map_err(|e| e.to_string())?;
    let best = (0..27).map(|i| correct(i) as f64 / n as f64).fold(f64::NEG_INFINITY, f64::max);
    ensure!(got.to_bits() == (1.0 - best).to_bits(), "fitness {got} vs {}", 1.0 - best);
    Ok(format!("27 points in order, fitness {got} == 1 - {best} bit-exact"))
}

fn separable_gda() -> Verdict {
    let ds = Arc::new(synth_dataset(&SynthSpec::new("sep", 16, 4, 32, 0.15, 0.05), 0).map_err(|e| e.to_string())?);
    let tasks: Vec<FewShotTask> = (1..=3).map(|s| sample_few_shot(&ds, 16, s).unwrap()).collect();
    let lg = |t: &FewShotTask, _: &ChannelSet, hp: &HyperParams| -> Result<LogitsMatrix, AdaptError> {
        let feats = t.features(Split::Test);
        gda_logits(&AdaptInputs::from_task(t, &feats), hp)
    };
    let no_fs: Option<&fn(&FewShotTask, &HyperParams) -> Result<ChannelSet, AdaptError>> = None;
    let fitness = fitness_of(no_fs, &lg, &tasks, &hyper_grid(16)).map_err(|e| e.to_string())?;

    // nearest class centre under isotropic noise, centres from the full train split
    let (train, test) = (ds.split(Split::Train), ds.split(Split::Test));
    let mut centre = vec![vec![0.0f64; 16]; 4];
    let mut count = [0usize; 4];
    for (r, &l) in train.labels.iter().enumerate() {
        count[l] += 1;
        for j in 0..16 {
            centre[l][j] += f64::from(train.feats[(r, j)]);
        }
    }
    let mut hits = 0;
    for (r, &l) in test.labels.iter().enumerate() {
        let dist = |k: usize| {
            (0..16).map(|j| (f64::from(test.feats[(r, j)]) - centre[k][j] / count[k] as f64).powi(2)).sum::<f64>()
        };
        hits += usize::from((0..4).min_by(|&a, &b| dist(a).total_cmp(&dist(b))) == Some(l));
    }
    let bayes_err = 1.0 - hits as f64 / test.labels.len() as f64;
    ensure!(bayes_err <= SEP_FITNESS_MAX, "reference error {bayes_err} already above threshold");
    ensure!(fitness <= SEP_FITNESS_MAX, "fitness {fitness}");
    Ok(format!("fitness {fitness:.4}, reference error {bayes_err:.4}, threshold {SEP_FITNESS_MAX}"))
}

fn parent_sampling() -> Verdict {
    let fit = [0.4, 0.1, 0.5, 0.2, 0.3];
    let rank_of = [3usize, 0, 4, 1, 2];
    let pop: Vec<Individual> = fit
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut ind = Individual::new(
                i as u64,
                String::new(),
                format!("c{i}"),
                Stage::LogitsComputation,
                Lineage { parents: vec![], operator: Operator::Init },
            );
            ind.fitness = Some(f);
            ind
        })
        .collect();
    let w: Vec<f64> = (1..=5).map(|r| 1.0 / (r as f64 + 5.0)).collect();
    let total: f64 = w.iter().sum();
    let mut counts = [0usize; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..DRAWS {
        let id = sample_parents(&pop, 1, &mut rng).map_err(|e| e.to_string())?[0].id;
        counts[rank_of[id as usize]] += 1;
    }
    let mut chi2 = 0.0;
    for r in 0..5 {
        let p = w[r] / total;
        let expected = DRAWS as f64 * p;
        let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
        ensure!((counts[r] as f64 - expected).abs() <= 3.0 * sigma, "rank {}: {} vs {expected:.0}", r + 1, counts[r]);
        chi2 += (counts[r] as f64 - expected).powi(2) / expected;
    }
    let p_value = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    ensure!(p_value > CHI2_ALPHA, "chi2 {chi2:.2}, p {p_value:.4}");
    Ok(format!("counts {counts:?}, chi2 {chi2:.2}, p {p_value:.3}"))
}

fn search(fabric: &Fabric, tasks: &[HoldoutTask], script: Vec<String>, cfg: &SearchConfig) -> Result<SearchOutcome, String> {
    let gw = ScriptedGateway::new(script);
    let table = RewriteTable::default();
    let meter = UsageMeter::default();
    run_search(&SearchContext { fabric, gateway: &gw, tasks, table: &table, config: cfg, meter: &meter })
        .map_err(|e| e.to_string())
}

fn config(strategy: Strategy, init: InitChoice, pop: usize, iters: usize) -> SearchConfig {
    SearchConfig {
        strategy,
        init,
        population_size: pop,
        iterations: iters,
        offspring_per_iter: pop,
        seed: 42,
        ..SearchConfig::default()
    }
}

fn search_dynamics() -> Verdict {
    let started = Instant::now();
    let cfg = config(Strategy::LogitOnly, InitChoice::TipAdapter, 10, 10);
    let mut runs = Vec::new();
    let mut summary = String::new();
    for _ in 0..2 {
        let (fabric, tasks) = fixtures::native_fabric(4);
        let out = search(&fabric, &tasks, fixtures::improving_script(100), &cfg)?;
        let h = &out.histories[0];
        ensure!(h.records.len() == 10, "{} iterations recorded", h.records.len());
        let curve = h.min_curve();
        ensure!(curve.windows(2).all(|w| w[1] <= w[0]), "curve rises: {curve:?}");
        let seed = h.seed_fitness.ok_or("no seed fitness")?;
        let last = *curve.last().unwrap();
        ensure!(last < seed, "final {last} not below seed {seed}");
        for r in &h.records {
            ensure!(r.population.len() == 10, "iteration {} has {} members", r.iteration, r.population.len());
        }
        summary = format!("seed {seed:.4} -> final {last:.4}");
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let paths = out.write_artifacts(dir.path()).map_err(|e| e.to_string())?;
        runs.push(paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    ensure!(runs[0] == runs[1], "artifacts differ between runs");
    let took = started.elapsed();
    ensure!(took < 2 * SEARCH_BUDGET, "two runs took {took:?}");
    Ok(format!("{summary}, {} identical artifacts, {took:.1?} for two runs", runs[0].len()))
}

fn strategies() -> Verdict {
    let mut done = 0;
    for strategy in [Strategy::FsThenLogit, Strategy::LogitThenFs, Strategy::Joint, Strategy::LogitOnly] {
        for init in [InitChoice::TipAdapter, InitChoice::Ape, InitChoice::Gda] {
            let (fabric, tasks) = fixtures::native_fabric(4);
            let out = search(&fabric, &tasks, fixtures::improving_script(24), &config(strategy, init, 4, 3))?;
            ensure!(out.fitness.is_finite(), "{strategy} {init}: fitness {}", out.fitness);
            if strategy == Strategy::Joint {
                let first = &out.archive[0].individual;
                ensure!(first.code == joint_seed(init).code, "{strategy} {init}: not seeded by the combined initializer");
            }
            if strategy == Strategy::LogitOnly {
                let calls = fabric.stats().feat_select;
                ensure!(calls == 0, "{strategy} {init}: {calls} selection calls");
                ensure!(out.selection.is_none(), "{strategy} {init}: selection present");
            }
            done += 1;
        }
    }
    Ok(format!("{done} strategy/init runs completed"))
}

fn broken_candidates() -> Verdict {
    let (fabric, tasks) = fixtures::native_fabric(4);
    let out = search(&fabric, &tasks, fixtures::broken_script(100), &config(Strategy::LogitOnly, InitChoice::TipAdapter, 10, 10))?;
    let h = &out.histories[0];
    let rate = h.error_rate();
    ensure!(rate == 0.4, "error rate {rate} ({} of {})", h.total_errors(), h.total_attempted());
    let broken: HashSet<u64> = out.archive.iter().filter(|a| a.error.is_some()).map(|a| a.individual.id).collect();
    for r in &h.records {
        ensure!(r.member_ids.iter().all(|id| !broken.contains(id)), "broken member at iteration {}", r.iteration);
    }
    Ok(format!("{} of {} broken, rate {rate}", h.total_errors(), h.total_attempted()))
}

fn rewriter() -> Verdict {
    let table = RewriteTable::default();
    ensure!(table.len() == 12, "{} mappings", table.len());
    let sources: Vec<String> = table.entries().iter().map(|e| e.source.clone()).collect();
    let replacements: Vec<String> = table.entries().iter().map(|e| e.replacement.clone()).collect();
    let (mut found, mut replaced) = (0usize, 0usize);
    let mut seen = [false; 12];
    for seed in 0..20 {
        let code = lexer::corpus(&table, seed, 60);
        let expected = lexer::name_counts(&code, &sources);
        let out = rewrite(&code, &table);
        let body = lexer::strip_preamble(&out.code, &table);
        ensure!(lexer::name_counts(body, &sources).iter().all(|&n| n == 0), "seed {seed}: source names left");
        let got = lexer::name_counts(body, &replacements);
        ensure!(got == expected && out.counts == expected, "seed {seed}: counts {got:?} vs {expected:?}");
        ensure!(lexer::literals(body) == lexer::literals(&code), "seed {seed}: literals changed");
        let again = to_half_precision(&out.code, &table);
        ensure!(again == out.code, "seed {seed}: not idempotent");
        found += expected.iter().sum::<usize>();
        replaced += got.iter().sum::<usize>();
        for (s, &n) in seen.iter_mut().zip(&expected) {
            *s |= n > 0;
        }
    }
    ensure!(seen.iter().all(|&s| s), "unexercised mapping: {seen:?}");
    Ok(format!("12/12 mappings, {replaced}/{found} occurrences replaced, idempotent"))
}

fn healing() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("heal.evf");
    let ds = Arc::new(synth_dataset(&fixtures::holdout_spec(), 3).map_err(|e| e.to_string())?);
    write_dataset(&ds, &path).map_err(|e| e.to_string())?;

    let mut launcher = ProcessLauncher::new(env!("CARGO_BIN_EXE_adaptsearch"), vec!["serve".into()]);
    launcher.spawn_timeout = SPAWN_TIMEOUT;
    let cfg = FabricConfig {
        workers: 4,
        call_timeout: Duration::from_secs(2),
        probe_deadline: Duration::from_secs(5),
        ..FabricConfig::default()
    };
    let fabric = Arc::new(Fabric::start(Arc::new(launcher), cfg).map_err(|e| e.0)?);
    let id = fabric.register(DatasetSource::from_file(ds, &path)).map_err(|e| e.to_string())?;
    let task = HoldoutTask { dataset_id: id, shots: 8, seed: 1, d: 16 };
    let hp = hyper_grid(16)[13];
    let tip = "#native: tip_adapter";
    let reference = fabric.score(&task, tip, None, &hp, Split::Test, None).map_err(|e| e.to_string())?;
    let before = fabric.pids();

    let monitor = Monitor::spawn(Arc::clone(&fabric), PROBE_INTERVAL);
    let stop = Arc::new(AtomicBool::new(false));
    let (ok, bad) = (Arc::new(AtomicUsize::new(0)), Arc::new(AtomicUsize::new(0)));
    let clients: Vec<_> = (0..2)
        .map(|_| {
            let (fabric, task, stop, ok, bad) =
                (Arc::clone(&fabric), task.clone(), Arc::clone(&stop), Arc::clone(&ok), Arc::clone(&bad));
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match fabric.score(&task, tip, None, &hp, Split::Test, None) {
                        Ok(acc) if acc == reference => ok.fetch_add(1, Ordering::SeqCst),
                        _ => bad.fetch_add(1, Ordering::SeqCst),
                    };
                    thread::sleep(Duration::from_millis(50));
                }
            })
        })
        .collect();

    let injected = Instant::now();
    let victim = before[0].ok_or("worker 0 has no process")?;
    let killed = Command::new("kill").args(["-9", &victim.to_string()]).status().map_err(|e| e.to_string())?;
    ensure!(killed.success(), "kill -9 {victim} failed");
    let wedge = fabric.score(&task, "#native: spin", None, &hp, Split::Test, None);
    ensure!(wedge.is_err(), "spinning candidate returned {wedge:?}");

    let bound = PROBE_INTERVAL + SPAWN_TIMEOUT;
    let healed = loop {
        let replaced: usize = monitor.reports().iter().map(|r| r.replaced.len()).sum();
        if replaced >= 2 && fabric.live_workers() == fabric.size() {
            break Some(injected.elapsed());
        }
        if injected.elapsed() > bound + Duration::from_secs(5) {
            break None;
        }
        thread::sleep(Duration::from_millis(100));
    };
    thread::sleep(Duration::from_millis(500));
    stop.store(true, Ordering::SeqCst);
    for c in clients {
        let _ = c.join();
    }
    drop(monitor);
    let after = fabric.pids();
    let took = healed.ok_or_else(|| format!("pool at {}/{} after {bound:?}", fabric.live_workers(), fabric.size()))?;
    ensure!(took <= bound, "healed after {took:?}, bound {bound:?}");
    let fresh = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    ensure!(fresh >= 2, "only {fresh} workers replaced");
    let (ok, bad) = (ok.load(Ordering::SeqCst), bad.load(Ordering::SeqCst));
    ensure!(bad == 0 && ok > 0, "healthy requests: {ok} ok, {bad} failed or wrong");
    Ok(format!("{}/{} live after {took:.1?} (bound {bound:?}), {ok} healthy requests unaffected", fabric.size(), fabric.size()))
}

fn label_isolation() -> Verdict {
    let log = Arc::new(AccessLog::new());
    let fabric = Fabric::start(Arc::new(NativeLauncher::with_audit(Arc::clone(&log))), FabricConfig { workers: 3, ..FabricConfig::default() })
        .map_err(|e| e.0)?;
    let datasets: Vec<DatasetRef> = [("a", 8, 3, 1), ("b", 12, 4, 2)]
        .iter()
        .map(|&(name, d, c, seed)| {
            let ds = Arc::new(synth_dataset(&SynthSpec::new(name, d, c, 10, 0.5, 0.4), seed).unwrap());
            let dataset_id = fabric.register(DatasetSource::in_memory(ds)).unwrap();
            DatasetRef { name: name.into(), dataset_id, d, classes: c }
        })
        .collect();
    let pair = adaptsearch::evolve::AlgorithmPair {
        selection: Some("#native: ape_select".into()),
        logits: "#native: ape".into(),
    };
    let table = evaluate_downstream(&fabric, &pair, &datasets, &[1, 4], &[1, 2], Some(20), 0, Some(&log))
        .map_err(|e| e.to_string())?;
    let early = log.reads_outside(Split::Test, PHASE_FINAL);
    ensure!(early == 0, "{early} test-label reads before final scoring");
    let events = log.events();
    let vals = events.iter().filter(|e| e.split == Split::Val).count();
    let finals = events.iter().filter(|e| e.split == Split::Test).count();
    ensure!(finals == table.cells.len(), "{finals} test reads for {} cells", table.cells.len());
    Ok(format!("0 early test reads, {vals} val reads during tuning, {finals} test reads for {} cells", table.cells.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("hyper grid and fitness", grid_and_fitness),
        ("separable synth gda fitness", separable_gda),
        ("parent sampling distribution", parent_sampling),
        ("search dynamics", search_dynamics),
        ("strategies", strategies),
        ("broken candidates", broken_candidates),
        ("precision rewriter", rewriter),
        ("monitor healing", healing),
        ("test-label isolation", label_isolation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
