//! Initial algorithms: thoughts and code of the published baselines.

use super::{EvolveError, InitChoice, Stage};

const APE_SELECT_CODE: &str = include_str!("../../assets/seeds/ape_select.py");
const APE_CODE: &str = include_str!("../../assets/seeds/ape.py");
const TIP_CODE: &str = include_str!("../../assets/seeds/tip_adapter.py");
const GDA_CODE: &str = include_str!("../../assets/seeds/gda.py");
const ZERO_SHOT_CODE: &str = include_str!("../../assets/seeds/zero_shot.py");
const FIRST_CHANNELS_CODE: &str = include_str!("../../assets/seeds/first_channels.py");

const APE_SELECT_THOUGHTS: &str = "The feature selection algorithm defines a criterion that aims to extract the feature channels that minimize the inter-class similarity of the concatenated features of visual and category textual features, but maximize the variance of category textual features.";

const APE_THOUGHTS: &str = "The algorithm sums up two logits: the logits generated by zero-shot classifier and the logits generated by a cache model. The first logits are computed by applying linear transformation to test features. The second logits are obtained by first computing the similarity matrix between test and train features and then multiplying the transformed similarity matrix to soft train label matrix. While computing image-image similarity, selected feature channels are used.";

const TIP_THOUGHTS: &str = "The algorithm sums up two logits: the logits generated by zero-shot classifier and the logits generated by a cache model. The first logits are computed by applying linear transformation to test features. The second logits are obtained by first computing the similarity matrix between test and train features and then multiplying the transformed similarity matrix to train label matrix.";

const GDA_THOUGHTS: &str = "The logits consist of two parts: the logits computed by CLIP's zero-shot classifier and the logits computed by Gaussian Discriminant Analysis (GDA) model. In each part, all feature channels are used. GDA is a probabilistic generative model for classification that assumes all classes are generated by Gaussian distributions with a common covariance matrix but different mean vectors. GDA first computes per-class mean vector and then estimates the inverted covariance matrix. After that the weight and bias of the GDA classifier can be computed.";

const ZERO_SHOT_THOUGHTS: &str =
    "The logits are computed by CLIP's zero-shot classifier only, applying a linear transformation to test features.";

const FIRST_CHANNELS_THOUGHTS: &str = "The feature selection keeps the leading topk feature channels.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedAlgorithm {
    pub thoughts: String,
    pub code: String,
}

impl SeedAlgorithm {
    fn new(thoughts: &str, code: &str) -> Self {
        Self { thoughts: thoughts.to_string(), code: code.to_string() }
    }
}

/// The initial algorithm for a stage, or `None` when the population starts
/// empty and only a stub parent is available (see [`init_population`]).
pub fn seed_algorithm(stage: Stage, init: InitChoice) -> Result<SeedAlgorithm, EvolveError> {
    match (stage, init) {
        (Stage::FeatureSelection, InitChoice::Ape) => Ok(SeedAlgorithm::new(APE_SELECT_THOUGHTS, APE_SELECT_CODE)),
        (Stage::FeatureSelection, _) => Err(EvolveError::InvalidCombination { stage, init }),
        (Stage::LogitsComputation, InitChoice::Ape) => Ok(SeedAlgorithm::new(APE_THOUGHTS, APE_CODE)),
        (Stage::LogitsComputation, InitChoice::TipAdapter) => Ok(SeedAlgorithm::new(TIP_THOUGHTS, TIP_CODE)),
        (Stage::LogitsComputation, InitChoice::Gda) => Ok(SeedAlgorithm::new(GDA_THOUGHTS, GDA_CODE)),
        (Stage::LogitsComputation, InitChoice::None) => Ok(SeedAlgorithm::new(ZERO_SHOT_THOUGHTS, ZERO_SHOT_CODE)),
        (Stage::Joint, init) => Ok(joint_seed(init)),
    }
}

/// The selection that accompanies a logits initializer when selection is not
/// searched: APE brings its own, the others use every channel.
pub fn selection_for_init(init: InitChoice) -> Option<SeedAlgorithm> {
    match init {
        InitChoice::Ape => Some(SeedAlgorithm::new(APE_SELECT_THOUGHTS, APE_SELECT_CODE)),
        _ => None,
    }
}

/// Combined initializer: `feat_selection` from APE, `compute_logits_with_fs`
/// from the chosen logits algorithm, and a `compute_logits` calling both.
pub fn joint_seed(init: InitChoice) -> SeedAlgorithm {
    let (logits_thoughts, logits_code, select_thoughts, select_code) = match init {
        InitChoice::Ape => (APE_THOUGHTS, APE_CODE, APE_SELECT_THOUGHTS, APE_SELECT_CODE),
        InitChoice::TipAdapter => (TIP_THOUGHTS, TIP_CODE, APE_SELECT_THOUGHTS, APE_SELECT_CODE),
        InitChoice::Gda => (GDA_THOUGHTS, GDA_CODE, APE_SELECT_THOUGHTS, APE_SELECT_CODE),
        InitChoice::None => (ZERO_SHOT_THOUGHTS, ZERO_SHOT_CODE, FIRST_CHANNELS_THOUGHTS, FIRST_CHANNELS_CODE),
    };
    let thoughts = format!(
        "The algorithm consists of two steps: 1) selecting important features; 2) computing logits. \
         For the first step: {select_thoughts} For the second step: {logits_thoughts}"
    );
    let select_body = strip_imports(select_code);
    let logits_body = strip_imports(logits_code).replacen("def compute_logits(", "def compute_logits_with_fs(", 1);
    let code = format!(
        "import torch\n\n\n{select_body}\n\n{logits_body}\n\n\
         def compute_logits(train_feats, train_labels, test_feats, clip_weights, w0, w1, topk, alpha0, alpha1, alpha2):\n    \
         indices = feat_selection(clip_weights, train_feats, w0, w1, topk)\n    \
         return compute_logits_with_fs(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2)\n"
    );
    SeedAlgorithm { thoughts, code }
}

fn strip_imports(code: &str) -> String {
    code.lines()
        .skip_while(|l| l.starts_with("import ") || l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
        .trim_end()
        .to_string()
}

/// Seeds for one stage: the initial algorithm and whether the population
/// starts empty (`none` outside the joint stage).
pub fn init_population(stage: Stage, init: InitChoice) -> Result<(SeedAlgorithm, bool), EvolveError> {
    let seed = seed_algorithm(stage, init)?;
    let starts_empty = init == InitChoice::None && stage == Stage::LogitsComputation;
    Ok((seed, starts_empty))
}
