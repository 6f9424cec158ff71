use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::{Operator, Stage};

pub const FS_SIGNATURE: &str = "feat_selection(clip_weights, train_feats, w0, w1, topk)";
pub const LOGITS_SIGNATURE: &str =
    "compute_logits(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2)";
pub const JOINT_LOGITS_WITH_FS_SIGNATURE: &str =
    "compute_logits_with_fs(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2)";
pub const JOINT_SIGNATURE: &str =
    "compute_logits(train_feats, train_labels, test_feats, clip_weights, w0, w1, topk, alpha0, alpha1, alpha2)";

pub const NO_RANDOM: &str = "Do not use any random operations in the code, so that the results are reproducible.";
pub const NO_DEEP_LOOPS: &str = "Avoid deep nested loops, so that the code runs fast.";
pub const NO_LEARNABLE: &str =
    "Do not introduce learnable variables or any training procedure; the algorithm must be training-free.";
pub const READABILITY: &str = "Pay attention to the readability of the generated code.";

pub const CROSSOVER_NOVELTY: &str =
    "Please help me create a new algorithm that has a different form from the parent algorithms.";
pub const MUTATION_NOVELTY: &str = "Please modify the algorithm above and generate novel algorithm as much as possible.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentAlgorithm {
    pub thoughts: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub operator: Operator,
    pub stage: Stage,
    pub parents: Vec<ParentAlgorithm>,
    /// Character ceiling for the whole prompt; parent code listings are
    /// truncated oldest-first to fit.
    pub max_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{operator} needs {needed} parent(s), got {got}")]
    InvalidSpec {
        operator: Operator,
        needed: &'static str,
        got: usize,
    },
}

const TRUNCATION_MARK: &str = "\n# ... (truncated)";

/// Renders the structured prompt: task definition, parent listings,
/// requirements with exact I/O, constraints, then the novelty instruction.
pub fn build_prompt(spec: &PromptSpec) -> Result<Prompt, PromptError> {
    let ok = match spec.operator {
        Operator::Crossover => spec.parents.len() >= 2,
        Operator::Mutation => spec.parents.len() == 1,
        Operator::Init => false,
    };
    if !ok {
        return Err(PromptError::InvalidSpec {
            operator: spec.operator,
            needed: match spec.operator {
                Operator::Crossover => "at least 2",
                Operator::Mutation => "exactly 1",
                Operator::Init => "no operator prompt for init;",
            },
            got: spec.parents.len(),
        });
    }
    let mut codes: Vec<String> = spec.parents.iter().map(|p| p.code.clone()).collect();
    let mut text = render(spec, &codes);
    let Some(budget) = spec.max_chars else {
        return Ok(Prompt { text, truncated: false });
    };
    let mut truncated = false;
    for i in 0..codes.len() {
        let over = text.chars().count().saturating_sub(budget);
        if over == 0 {
            break;
        }
        truncated = true;
        let keep = codes[i].chars().count().saturating_sub(over + TRUNCATION_MARK.len());
        let mut cut: String = codes[i].chars().take(keep).collect();
        cut.push_str(TRUNCATION_MARK);
        codes[i] = cut;
        text = render(spec, &codes);
    }
    Ok(Prompt { text, truncated })
}

fn render(spec: &PromptSpec, codes: &[String]) -> String {
    let mut s = String::with_capacity(4096);
    let _ = writeln!(s, "## Task");
    let _ = writeln!(s, "{}", task_definition(spec.stage));
    s.push('\n');

    let _ = writeln!(s, "## Existing algorithms");
    let _ = writeln!(
        s,
        "I have {} existing algorithm(s) with their thoughts and code as follows:",
        spec.parents.len()
    );
    for (i, (p, code)) in spec.parents.iter().zip(codes).enumerate() {
        let _ = writeln!(s, "No.{} algorithm's thoughts: {{{}}}", i + 1, p.thoughts.trim());
        let _ = writeln!(s, "No.{} algorithm's code:\n```python\n{}\n```", i + 1, code);
    }
    s.push('\n');

    let _ = writeln!(s, "## Requirements");
    let _ = writeln!(
        s,
        "First, describe your new algorithm and its main steps in one paragraph. \
         The description must be inside a brace {{}}. Next, implement it in Python inside a single \
         ```python code block."
    );
    s.push_str(io_requirements(spec.stage));
    s.push('\n');

    let _ = writeln!(s, "## Other information");
    for line in [NO_RANDOM, NO_DEEP_LOOPS, NO_LEARNABLE, READABILITY] {
        let _ = writeln!(s, "- {line}");
    }
    if spec.stage == Stage::Joint {
        let _ = writeln!(
            s,
            "- Only design the `feat_selection` and `compute_logits_with_fs` functions; keep `compute_logits` calling them."
        );
    }
    let _ = writeln!(s, "- Design an algorithm different from the ones in the literature.");
    let _ = writeln!(s, "- Do not give additional explanations.");
    s.push('\n');
    let _ = writeln!(
        s,
        "{}",
        match spec.operator {
            Operator::Crossover => CROSSOVER_NOVELTY,
            _ => MUTATION_NOVELTY,
        }
    );
    s
}

fn task_definition(stage: Stage) -> &'static str {
    match stage {
        Stage::FeatureSelection => {
            "We adapt the CLIP vision-language model to few-shot image classification without training. \
             Your task is to select the best feature channels of the CLIP features, so that a cache-based \
             classifier using only the selected channels classifies test images accurately."
        }
        Stage::LogitsComputation => {
            "We adapt the CLIP vision-language model to few-shot image classification without training. \
             Your task is to devise a good function for computing the classification logits of test images \
             from a few labeled training images and the text features of the class names."
        }
        Stage::Joint => {
            "We adapt the CLIP vision-language model to few-shot image classification without training. \
             Your task is to design an algorithm with two steps: 1) selecting important feature channels; \
             2) computing the classification logits of test images using the selected channels."
        }
    }
}

fn io_requirements(stage: Stage) -> &'static str {
    match stage {
        Stage::FeatureSelection => concat!(
            "The function must be `feat_selection(clip_weights, train_feats, w0, w1, topk)`.\n",
            "Inputs:\n",
            "- clip_weights: torch.Tensor of shape [d, C], text features of the C class names (unit-norm columns), d is the feature dimension.\n",
            "- train_feats: torch.Tensor of shape [C*K, d], unit-norm image features of the K training images per class, grouped by class.\n",
            "- w0, w1: float weights of the selection criterion.\n",
            "- topk: int, the number of feature channels to keep.\n",
            "Output:\n",
            "- indices: torch.LongTensor of shape [topk], the indices of the selected feature channels.\n",
        ),
        Stage::LogitsComputation => concat!(
            "The function must be `compute_logits(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2)`.\n",
            "Inputs:\n",
            "- train_feats: torch.Tensor of shape [C*K, d], unit-norm image features of the K training images per class.\n",
            "- train_labels: torch.LongTensor of shape [C*K], class indices of the training images.\n",
            "- test_feats: torch.Tensor of shape [N, d], unit-norm image features of the N test images.\n",
            "- clip_weights: torch.Tensor of shape [d, C], text features of the C class names (unit-norm columns).\n",
            "- indices: torch.LongTensor of shape [topk], indices of selected feature channels.\n",
            "- alpha0, alpha1, alpha2: float hyper-parameters; not all of them must be used.\n",
            "Output:\n",
            "- logits: torch.Tensor of shape [N, C], the classification logits of the test images.\n",
        ),
        Stage::Joint => concat!(
            "The code must define `feat_selection(clip_weights, train_feats, w0, w1, topk)`, ",
            "`compute_logits_with_fs(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2)` and ",
            "`compute_logits(train_feats, train_labels, test_feats, clip_weights, w0, w1, topk, alpha0, alpha1, alpha2)`.\n",
            "Inputs:\n",
            "- train_feats: torch.Tensor of shape [C*K, d], unit-norm image features of the K training images per class.\n",
            "- train_labels: torch.LongTensor of shape [C*K], class indices of the training images.\n",
            "- test_feats: torch.Tensor of shape [N, d], unit-norm image features of the N test images.\n",
            "- clip_weights: torch.Tensor of shape [d, C], text features of the C class names (unit-norm columns).\n",
            "- w0, w1: float weights of the selection criterion; topk: int, the number of channels to keep.\n",
            "- indices: torch.LongTensor of shape [topk], returned by feat_selection.\n",
            "- alpha0, alpha1, alpha2: float hyper-parameters; not all of them must be used.\n",
            "Output:\n",
            "- logits: torch.Tensor of shape [N, C], the classification logits of the test images.\n",
        ),
    }
}
