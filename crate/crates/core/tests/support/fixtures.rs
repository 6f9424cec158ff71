//! Shared holdout data and scripted model responses for search tests.

#![allow(dead_code)]

use std::sync::Arc;

use adaptsearch::fabric::{DatasetSource, Fabric, FabricConfig, HoldoutTask, NativeLauncher};
use adaptsearch::llm::render_algorithm;
use adaptsearch::store::{synth_dataset, SynthSpec};

/// Noisy enough that the channel count matters to GDA and text embeddings
/// are weak, so the tip-adapter seed is beaten by full-width GDA.
pub fn holdout_spec() -> SynthSpec {
    SynthSpec::new("holdout", 16, 4, 40, 0.4, 1.5)
}

pub fn native_fabric(workers: usize) -> (Fabric, Vec<HoldoutTask>) {
    let cfg = FabricConfig { workers, ..FabricConfig::default() };
    let fabric = Fabric::start(Arc::new(NativeLauncher::new()), cfg).unwrap();
    let ds = Arc::new(synth_dataset(&holdout_spec(), 7).unwrap());
    let id = fabric.register(DatasetSource::in_memory(ds)).unwrap();
    let tasks = [1u64, 2]
        .iter()
        .map(|&seed| HoldoutTask { dataset_id: id.clone(), shots: 16, seed, d: 16 })
        .collect();
    (fabric, tasks)
}

pub fn response(thoughts: &str, directives: &[String]) -> String {
    let mut code = String::from("def candidate(*args):\n");
    for d in directives {
        code.push_str(&format!("    #native: {d}\n"));
    }
    code.push_str("    return None");
    render_algorithm(thoughts, &code)
}

/// `n` responses whose GDA channel budget ramps from 2 to 16.
pub fn improving_script(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| {
            let dims = 2 + 14 * j / (n - 1).max(1);
            response(
                &format!("Use GDA on the first {dims} channels (variant {j})."),
                &["ape_select".to_string(), format!("gda dims={dims}")],
            )
        })
        .collect()
}

/// Every fifth response's slots 1 and 3 raise inside the candidate: 40 % broken.
pub fn broken_script(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| {
            if matches!(j % 5, 1 | 3) {
                response(&format!("Broken variant {j}."), &["select_fail".into(), "fail".into()])
            } else {
                let dims = 4 + j % 13;
                response(&format!("Working variant {j}."), &["ape_select".into(), format!("gda dims={dims}")])
            }
        })
        .collect()
}
