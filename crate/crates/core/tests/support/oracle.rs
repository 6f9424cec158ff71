//! Scalar-loop reference implementations, written without matrix algebra so
//! they share no code path with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub struct Instance {
    pub d: usize,
    pub c: usize,
    pub train: Mat,
    pub labels: Vec<usize>,
    pub test: Mat,
    /// d rows, C columns.
    pub clip: Mat,
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random unit-norm features around random class centres; every class has at
/// least one training row.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=16);
    let c = rng.random_range(2..=5);
    let shots = rng.random_range(1..=4);
    let n_test = rng.random_range(1..=12);
    let centres: Mat = (0..c).map(|_| unit((0..d).map(|_| gauss(&mut rng)).collect())).collect();
    let noisy = |rng: &mut ChaCha8Rng, k: usize, s: f64| -> Vec<f64> {
        unit((0..d).map(|j| centres[k][j] + s * gauss(rng)).collect())
    };
    let mut train = Vec::new();
    let mut labels = Vec::new();
    for k in 0..c {
        for _ in 0..shots {
            train.push(noisy(&mut rng, k, 0.4));
            labels.push(k);
        }
    }
    let test = (0..n_test)
        .map(|_| {
            let k = rng.random_range(0..c);
            noisy(&mut rng, k, 0.4)
        })
        .collect();
    let cols: Mat = (0..c).map(|k| noisy(&mut rng, k, 0.2)).collect();
    let clip = (0..d).map(|j| (0..c).map(|k| cols[k][j]).collect()).collect();
    Instance { d, c, train, labels, test, clip }
}

pub fn to_dm(m: &Mat, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), cols, |r, c| m[r][c])
}

pub fn zero_shot(test: &Mat, clip: &Mat) -> Mat {
    let c = clip[0].len();
    test.iter()
        .map(|x| {
            (0..c)
                .map(|k| {
                    let mut s = 0.0;
                    for j in 0..x.len() {
                        s += x[j] * clip[j][k];
                    }
                    100.0 * s
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn tip(inst: &Instance, a0: f64, a1: f64) -> Mat {
    let mut out = zero_shot(&inst.test, &inst.clip);
    for (n, x) in inst.test.iter().enumerate() {
        for (m, t) in inst.train.iter().enumerate() {
            out[n][inst.labels[m]] += a0 * (-a1 * (1.0 - dot(x, t))).exp();
        }
    }
    out
}

fn class_means(inst: &Instance) -> Mat {
    let mut means = vec![vec![0.0; inst.d]; inst.c];
    let mut counts = vec![0.0; inst.c];
    for (row, &l) in inst.train.iter().zip(&inst.labels) {
        counts[l] += 1.0;
        for j in 0..inst.d {
            means[l][j] += row[j];
        }
    }
    for k in 0..inst.c {
        for j in 0..inst.d {
            means[k][j] /= counts[k];
        }
    }
    means
}

pub fn ape_scores(inst: &Instance, w0: f64, w1: f64) -> Vec<f64> {
    let means = class_means(inst);
    let c = inst.c;
    (0..inst.d)
        .map(|j| {
            let t: Vec<f64> = (0..c).map(|k| inst.clip[j][k]).collect();
            let mu = t.iter().sum::<f64>() / c as f64;
            let var = t.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let (mut sv, mut st, mut pairs) = (0.0, 0.0, 0.0);
            for a in 0..c {
                for b in 0..c {
                    if a != b {
                        sv += means[a][j] * means[b][j];
                        st += t[a] * t[b];
                        pairs += 1.0;
                    }
                }
            }
            w1 * var - w0 * (sv / pairs + st / pairs)
        })
        .collect()
}

/// Highest-scoring `topk` channels, ties to the lower index, returned sorted.
pub fn ape_select(inst: &Instance, w0: f64, w1: f64, topk: usize) -> Vec<usize> {
    let s = ape_scores(inst, w0, w1);
    let mut chosen = Vec::new();
    let mut taken = vec![false; inst.d];
    for _ in 0..topk {
        let mut best: Option<usize> = None;
        for j in 0..inst.d {
            if !taken[j] && best.is_none_or(|b| s[j] > s[b]) {
                best = Some(j);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        chosen.push(b);
    }
    chosen.sort();
    chosen
}

fn restrict_unit(x: &[f64], ch: &[usize]) -> Vec<f64> {
    let v: Vec<f64> = ch.iter().map(|&j| x[j]).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|a| a / n).collect()
    } else {
        v
    }
}

pub fn ape_logits(inst: &Instance, ch: &[usize], a0: f64, a1: f64, a2: f64) -> Mat {
    let mut out = zero_shot(&inst.test, &inst.clip);
    for (n, x) in inst.test.iter().enumerate() {
        let xr = restrict_unit(x, ch);
        for (m, t) in inst.train.iter().enumerate() {
            let l = inst.labels[m];
            let tr = restrict_unit(t, ch);
            let aff = (-a1 * (1.0 - dot(&xr, &tr))).exp();
            let mut conf = 0.0;
            for j in 0..inst.d {
                conf += t[j] * inst.clip[j][l];
            }
            out[n][l] += a0 * aff * (a2 * (conf - 1.0)).exp();
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// Shared-covariance discriminant scores via linear solves, ridge
/// `1e-4 · mean(diag Σ) + 1e-8`, uniform prior.
pub fn gda(inst: &Instance, a0: f64) -> Mat {
    let d = inst.d;
    let means = class_means(inst);
    let m = inst.train.len() as f64;
    let mut cov = vec![vec![0.0; d]; d];
    for (row, &l) in inst.train.iter().zip(&inst.labels) {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] - means[l][i]) * (row[j] - means[l][j]) / m;
            }
        }
    }
    let eps = 1e-4 * (0..d).map(|i| cov[i][i]).sum::<f64>() / d as f64 + 1e-8;
    for i in 0..d {
        cov[i][i] += eps;
    }
    let w: Mat = means.iter().map(|mu| solve(cov.clone(), mu.clone())).collect();
    let prior = (1.0 / inst.c as f64).ln();
    let mut out = zero_shot(&inst.test, &inst.clip);
    for (n, x) in inst.test.iter().enumerate() {
        for k in 0..inst.c {
            out[n][k] += a0 * (dot(x, &w[k]) + prior - 0.5 * dot(&means[k], &w[k]));
        }
    }
    out
}

pub fn accuracy(logits: &Mat, labels: &[usize]) -> f64 {
    let mut correct = 0;
    for (row, &l) in logits.iter().zip(labels) {
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best == l {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Largest `|a - b| / max(1, |b|)` over all entries.
pub fn max_rel_err(a: &DMatrix<f64>, b: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    assert_eq!(a.nrows(), b.len());
    for r in 0..a.nrows() {
        assert_eq!(a.ncols(), b[r].len());
        for c in 0..a.ncols() {
            worst = worst.max((a[(r, c)] - b[r][c]).abs() / b[r][c].abs().max(1.0));
        }
    }
    worst
}
