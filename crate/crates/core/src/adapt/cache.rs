use nalgebra::DMatrix;

use super::{clip_zero_shot_logits, AdaptError, AdaptInputs, ChannelSet, HyperParams, LogitsMatrix};

/// Zero-shot logits plus a cache term:
/// `Z + α0 · exp(−α1 · (1 − test · trainᵀ)) · OneHot(train_labels)`.
///
/// `alpha2` is accepted and ignored.
pub fn tip_adapter_logits(
    inputs: &AdaptInputs<'_>,
    hp: &HyperParams,
) -> Result<LogitsMatrix, AdaptError> {
    inputs.check()?;
    let zero_shot = clip_zero_shot_logits(inputs.test_feats, inputs.clip_weights)?;
    let affinity = (inputs.test_feats * inputs.train_feats.transpose())
        .map(|s| (-hp.alpha1 * (1.0 - s)).exp());
    let cache = affinity * inputs.one_hot() * hp.alpha0;
    LogitsMatrix(zero_shot.0 + cache).checked()
}

/// Per-channel selection score
/// `w1 · Var_i(t_ic) − w0 · (mean_{i≠j} v_ic v_jc + mean_{i≠j} t_ic t_jc)`,
/// where `v_i` is the mean training feature of class `i` and `t_i` its text
/// embedding.
pub fn ape_channel_scores(
    clip_weights: &DMatrix<f64>,
    train_feats: &DMatrix<f64>,
    train_labels: &[usize],
    w0: f64,
    w1: f64,
) -> Result<Vec<f64>, AdaptError> {
    let (d, classes) = (clip_weights.nrows(), clip_weights.ncols());
    if train_feats.ncols() != d || train_feats.nrows() != train_labels.len() {
        return Err(AdaptError::ShapeMismatch(format!(
            "train {}x{} with {} labels, clip_weights {d}x{classes}",
            train_feats.nrows(),
            train_feats.ncols(),
            train_labels.len()
        )));
    }
    let mut means = DMatrix::<f64>::zeros(classes, d);
    let mut counts = vec![0usize; classes];
    for (r, &l) in train_labels.iter().enumerate() {
        if l >= classes {
            return Err(AdaptError::ShapeMismatch(format!(
                "train label {l} outside [0, {classes})"
            )));
        }
        counts[l] += 1;
        let mut row = means.row_mut(l);
        row += train_feats.row(r);
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(AdaptError::MissingClass(missing));
    }
    for (c, &n) in counts.iter().enumerate() {
        means.row_mut(c).unscale_mut(n as f64);
    }
    if classes < 2 {
        return Err(AdaptError::ShapeMismatch(
            "channel scoring needs at least two classes".into(),
        ));
    }
    let pairs = (classes * (classes - 1)) as f64;
    // mean over ordered pairs i != j of x_i x_j = ((Σx)² − Σx²) / (C(C−1))
    let cross = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let (s, sq) = xs.fold((0.0, 0.0), |(s, sq), x| (s + x, sq + x * x));
        (s * s - sq) / pairs
    };
    let scores = (0..d)
        .map(|ch| {
            let text = clip_weights.row(ch);
            let mean_t = text.iter().sum::<f64>() / classes as f64;
            let var_t = text.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>() / classes as f64;
            let inter_v = cross(&mut means.column(ch).iter().copied());
            let inter_t = cross(&mut text.iter().copied());
            w1 * var_t - w0 * (inter_v + inter_t)
        })
        .collect();
    Ok(scores)
}

/// Keeps the `topk` highest-scoring channels (ties to the lower index),
/// returned in ascending index order.
pub fn ape_select_channels(
    clip_weights: &DMatrix<f64>,
    train_feats: &DMatrix<f64>,
    train_labels: &[usize],
    hp: &HyperParams,
) -> Result<ChannelSet, AdaptError> {
    let d = clip_weights.nrows();
    if hp.topk == 0 || hp.topk > d {
        return Err(AdaptError::TopkOutOfRange { topk: hp.topk, d });
    }
    let scores = ape_channel_scores(clip_weights, train_feats, train_labels, hp.w0, hp.w1)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AdaptError::NonFinite);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..hp.topk].to_vec();
    keep.sort_unstable();
    ChannelSet::new(keep, d)
}

fn restricted_unit_rows(m: &DMatrix<f64>, channels: &[usize]) -> DMatrix<f64> {
    let mut out = m.select_columns(channels);
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row.unscale_mut(n);
        }
    }
    out
}

/// APE-style logits: zero-shot term plus a cache term whose affinities use
/// cosine similarity over the selected channels and whose label matrix is
/// reweighted per sample by zero-shot confidence `exp(α2 · (f_n · w_{y_n} − 1))`.
pub fn ape_logits(
    inputs: &AdaptInputs<'_>,
    channels: &ChannelSet,
    hp: &HyperParams,
) -> Result<LogitsMatrix, AdaptError> {
    inputs.check()?;
    if channels.is_empty() {
        return Err(AdaptError::EmptyChannelSet);
    }
    let d = inputs.dim();
    if channels.indices().iter().any(|&c| c >= d) {
        return Err(AdaptError::InvalidChannels(format!(
            "channel index out of range for d={d}"
        )));
    }
    let zero_shot = clip_zero_shot_logits(inputs.test_feats, inputs.clip_weights)?;
    let test = restricted_unit_rows(inputs.test_feats, channels.indices());
    let train = restricted_unit_rows(inputs.train_feats, channels.indices());
    let affinity = (test * train.transpose()).map(|s| (-hp.alpha1 * (1.0 - s)).exp());

    let mut soft = inputs.one_hot();
    for (n, &label) in inputs.train_labels.iter().enumerate() {
        let conf = inputs.train_feats.row(n).dot(&inputs.clip_weights.column(label).transpose());
        soft[(n, label)] = (hp.alpha2 * (conf - 1.0)).exp();
    }
    let cache = affinity * soft * hp.alpha0;
    LogitsMatrix(zero_shot.0 + cache).checked()
}
