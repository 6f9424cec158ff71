use nalgebra::DMatrix;

use super::{clip_zero_shot_logits, AdaptError, AdaptInputs, HyperParams, LogitsMatrix};

/// Diagonal loading applied to the shared covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-4 · mean(diag Σ) + 1e-8`.
    Scaled,
    Fixed(f64),
}

impl Ridge {
    fn epsilon(self, cov: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Scaled => 1e-4 * cov.diagonal().mean() + 1e-8,
            Ridge::Fixed(eps) => eps,
        }
    }
}

/// Linear discriminant scores `test · (P μ) + b` with `P = (Σ + εI)⁻¹`,
/// shared maximum-likelihood covariance, uniform priors and
/// `b_c = log(1/C) − ½ μ_cᵀ P μ_c`. Returns `N × C`.
pub fn gda_scores(
    train_feats: &DMatrix<f64>,
    train_labels: &[usize],
    test_feats: &DMatrix<f64>,
    classes: usize,
    ridge: Ridge,
) -> Result<DMatrix<f64>, AdaptError> {
    let d = train_feats.ncols();
    let m = train_feats.nrows();
    if m == 0 || m != train_labels.len() || test_feats.ncols() != d || classes == 0 {
        return Err(AdaptError::ShapeMismatch(format!(
            "train {m}x{d} with {} labels, test {}x{}, C={classes}",
            train_labels.len(),
            test_feats.nrows(),
            test_feats.ncols()
        )));
    }
    // d × C, one mean per column
    let mut means = DMatrix::<f64>::zeros(d, classes);
    let mut counts = vec![0usize; classes];
    for (r, &l) in train_labels.iter().enumerate() {
        if l >= classes {
            return Err(AdaptError::ShapeMismatch(format!(
                "train label {l} outside [0, {classes})"
            )));
        }
        counts[l] += 1;
        let mut col = means.column_mut(l);
        col += train_feats.row(r).transpose();
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(AdaptError::MissingClass(missing));
    }
    for (c, &n) in counts.iter().enumerate() {
        means.column_mut(c).unscale_mut(n as f64);
    }

    let mut centered = train_feats.clone();
    for (r, &l) in train_labels.iter().enumerate() {
        let mut row = centered.row_mut(r);
        row -= means.column(l).transpose();
    }
    let mut cov = centered.transpose() * &centered;
    cov.unscale_mut(m as f64);

    let eps = ridge.epsilon(&cov);
    for i in 0..d {
        cov[(i, i)] += eps;
    }
    let precision = invert_spd(cov)?;

    let weights = &precision * &means;
    let prior = (1.0 / classes as f64).ln();
    let bias: Vec<f64> = (0..classes)
        .map(|c| prior - 0.5 * means.column(c).dot(&weights.column(c)))
        .collect();
    let mut scores = test_feats * weights;
    for (c, b) in bias.iter().enumerate() {
        scores.column_mut(c).add_scalar_mut(*b);
    }
    Ok(scores)
}

fn invert_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>, AdaptError> {
    if let Some(chol) = m.clone().cholesky() {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Ok(inv);
        }
    }
    match m.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => Ok(inv),
        _ => Err(AdaptError::SingularCovariance),
    }
}

/// `Z + α0 · (GDA scores)`, all channels; `alpha1`/`alpha2` unused.
pub fn gda_logits(inputs: &AdaptInputs<'_>, hp: &HyperParams) -> Result<LogitsMatrix, AdaptError> {
    inputs.check()?;
    let zero_shot = clip_zero_shot_logits(inputs.test_feats, inputs.clip_weights)?;
    let scores = gda_scores(
        inputs.train_feats,
        inputs.train_labels,
        inputs.test_feats,
        inputs.num_classes(),
        Ridge::Scaled,
    )?;
    LogitsMatrix(zero_shot.0 + scores * hp.alpha0).checked()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::argmax;

    #[test]
    fn one_shot_reduces_to_nearest_mean() {
        // Σ = 0 with one sample per class; distinct orthonormal means, Z ≡ 0
        let train = DMatrix::<f64>::identity(3, 3);
        let clip = DMatrix::<f64>::zeros(3, 3);
        for c in 0..3 {
            let test = DMatrix::from_fn(1, 3, |_, j| if j == c { 1.0 } else { 0.0 });
            let inputs = AdaptInputs {
                train_feats: &train,
                train_labels: &[0, 1, 2],
                test_feats: &test,
                clip_weights: &clip,
            };
            let hp = HyperParams { w0: 0.5, w1: 0.5, topk: 2, alpha0: 1.0, alpha1: 1.0, alpha2: 1.0 };
            let l = gda_logits(&inputs, &hp).unwrap();
            assert_eq!(argmax(l.0.row(0).iter().copied()), c);
        }
    }

    #[test]
    fn singular_without_ridge_is_reported() {
        let train = DMatrix::<f64>::identity(2, 3);
        let test = DMatrix::<f64>::identity(1, 3);
        assert!(matches!(
            gda_scores(&train, &[0, 1], &test, 2, Ridge::Fixed(0.0)),
            Err(AdaptError::SingularCovariance)
        ));
    }

    #[test]
    fn missing_class_is_reported() {
        let train = DMatrix::<f64>::identity(2, 3);
        let test = DMatrix::<f64>::identity(1, 3);
        assert!(matches!(
            gda_scores(&train, &[0, 0], &test, 2, Ridge::Scaled),
            Err(AdaptError::MissingClass(1))
        ));
    }
}
