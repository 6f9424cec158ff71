use std::sync::Arc;

use adaptsearch::downstream::{
    domain_generalization_eval, evaluate_downstream, optimize_hyperparams, AlphaRange, DatasetRef, DownstreamError,
    HpoSpace, TopkRange, PHASE_FINAL,
};
use adaptsearch::evolve::AlgorithmPair;
use adaptsearch::fabric::{AccessLog, DatasetSource, Fabric, FabricConfig, HoldoutTask, NativeLauncher};
use adaptsearch::store::{synth_dataset, Split, SynthSpec};

fn fabric_with(log: Option<Arc<AccessLog>>) -> Fabric {
    let launcher = match log {
        Some(l) => NativeLauncher::with_audit(l),
        None => NativeLauncher::new(),
    };
    Fabric::start(Arc::new(launcher), FabricConfig { workers: 3, ..FabricConfig::default() }).unwrap()
}

fn add(fabric: &Fabric, name: &str, d: usize, c: usize, seed: u64) -> DatasetRef {
    let ds = Arc::new(synth_dataset(&SynthSpec::new(name, d, c, 10, 0.5, 0.4), seed).unwrap());
    let id = fabric.register(DatasetSource::in_memory(Arc::clone(&ds))).unwrap();
    DatasetRef { name: name.into(), dataset_id: id, d, classes: c }
}

fn ape_pair() -> AlgorithmPair {
    AlgorithmPair { selection: Some("#native: ape_select".into()), logits: "#native: ape".into() }
}

#[test]
fn test_labels_are_read_only_during_final_scoring() {
    let log = Arc::new(AccessLog::new());
    let fabric = fabric_with(Some(Arc::clone(&log)));
    let datasets = vec![add(&fabric, "a", 8, 3, 1), add(&fabric, "b", 8, 4, 2)];
    let table = evaluate_downstream(&fabric, &ape_pair(), &datasets, &[1, 4], &[1, 2], Some(15), 0, Some(&log)).unwrap();
    assert_eq!(table.cells.len(), 8);
    assert_eq!(log.reads_outside(Split::Test, PHASE_FINAL), 0);
    let events = log.events();
    let test_reads = events.iter().filter(|e| e.split == Split::Test).count();
    assert_eq!(test_reads, table.cells.len());
    assert!(events.iter().any(|e| e.split == Split::Val));
    assert_eq!(log.reads_outside(Split::Val, "hpo"), 0);
}

#[test]
fn averages_are_plain_means_of_cells() {
    let fabric = fabric_with(None);
    let datasets = vec![add(&fabric, "a", 8, 3, 3), add(&fabric, "b", 8, 3, 4)];
    let t = evaluate_downstream(&fabric, &ape_pair(), &datasets, &[1, 2], &[1, 2, 3], Some(5), 0, None).unwrap();
    assert_eq!(t.rows.len(), 3);
    let avg = t.rows.last().unwrap();
    assert_eq!(avg.label, "average");
    let all: Vec<f64> = t.cells.iter().map(|c| c.test_accuracy).collect();
    assert_eq!(avg.mean, all.iter().sum::<f64>() / all.len() as f64);
    for (k, row) in t.rows[..2].iter().enumerate() {
        let shots = [1, 2][k];
        let v: Vec<f64> = t.cells.iter().filter(|c| c.shots == shots).map(|c| c.test_accuracy).collect();
        assert_eq!(row.mean, v.iter().sum::<f64>() / v.len() as f64);
        let va: Vec<f64> =
            t.cells.iter().filter(|c| c.shots == shots && c.dataset == "a").map(|c| c.test_accuracy).collect();
        assert_eq!(row.per_dataset[0], va.iter().sum::<f64>() / va.len() as f64);
    }
    let csv = t.to_csv();
    assert!(csv.starts_with("shots,a,b,mean\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn more_trials_never_lower_the_validation_best() {
    let fabric = fabric_with(None);
    let r = add(&fabric, "a", 8, 3, 5);
    let task = HoldoutTask { dataset_id: r.dataset_id.clone(), shots: 2, seed: 1, d: 8 };
    let pair = AlgorithmPair { selection: None, logits: "#native: tip_adapter".into() };
    let mut last = f64::NEG_INFINITY;
    for trials in [1, 5, 20, 60] {
        let space = HpoSpace::standard(8, trials);
        let res = optimize_hyperparams(&fabric, &pair, &task, &space, 9).unwrap();
        assert!(res.val_accuracy >= last);
        last = res.val_accuracy;
    }
}

#[test]
fn degenerate_space_is_one_evaluation() {
    let fabric = fabric_with(None);
    let r = add(&fabric, "a", 8, 3, 6);
    let task = HoldoutTask { dataset_id: r.dataset_id.clone(), shots: 2, seed: 1, d: 8 };
    let space = HpoSpace {
        alpha0: AlphaRange::Choice(vec![1.0]),
        alpha1: AlphaRange::Choice(vec![2.0]),
        alpha2: AlphaRange::LogUniform { lo: 0.5, hi: 0.5 },
        topk: TopkRange::Choice(vec![4]),
        w0: 0.5,
        w1: 0.5,
        trials: 50,
    };
    let before = fabric.stats().logit_comput;
    let res = optimize_hyperparams(&fabric, &ape_pair(), &task, &space, 0).unwrap();
    assert_eq!(res.evaluated, 1);
    assert_eq!(res.best_trial, 0);
    assert_eq!(fabric.stats().logit_comput - before, 1);
}

#[test]
fn all_trials_failing_is_reported() {
    let fabric = fabric_with(None);
    let r = add(&fabric, "a", 8, 3, 7);
    let task = HoldoutTask { dataset_id: r.dataset_id.clone(), shots: 1, seed: 1, d: 8 };
    let pair = AlgorithmPair { selection: None, logits: "#native: nan".into() };
    let err = optimize_hyperparams(&fabric, &pair, &task, &HpoSpace::standard(8, 4), 0).unwrap_err();
    assert_eq!(err, DownstreamError::NoViableTrial { failed: 4 });
}

#[test]
fn transfer_freezes_source_choices() {
    let fabric = fabric_with(None);
    let source = add(&fabric, "src", 8, 3, 8);
    let targets = vec![add(&fabric, "t1", 8, 3, 9), add(&fabric, "t2", 8, 3, 10)];
    let res = domain_generalization_eval(&fabric, &ape_pair(), &source, &targets, 4, 1, Some(10), 3).unwrap();
    assert_eq!(res.targets.len(), 2);
    assert!(res.targets.iter().all(|(_, a)| (0.0..=1.0).contains(a)));
    // scoring the source through the transfer path equals the plain path
    let task = HoldoutTask { dataset_id: source.dataset_id.clone(), shots: 4, seed: 1, d: 8 };
    let plain = adaptsearch::downstream::pair_accuracy(&fabric, &ape_pair(), &task, &res.hp, Split::Test, None).unwrap();
    assert_eq!(plain, res.source_accuracy);

    let wide = add(&fabric, "wide", 12, 3, 11);
    let err = domain_generalization_eval(&fabric, &ape_pair(), &source, &[wide], 4, 1, Some(2), 0).unwrap_err();
    assert!(matches!(err, DownstreamError::DimensionMismatch { target_d: 12, .. }));
}
