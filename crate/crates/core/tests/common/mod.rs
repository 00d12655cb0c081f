//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use mvnmf::matrix::{DenseMatrix, MaskMatrix, Matrix};

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Minimizer of `½xᵀQx − cᵀx` over `x ≥ 0` by trying every passive set.
pub fn brute_force(q: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let k = c.len();
    let scale = c.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for set in 0u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| set & (1 << i) != 0).collect();
        let sub: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| q[i][j]).collect())
            .collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
        let Some(z) = gauss_solve(sub, rhs) else {
            continue;
        };
        if z.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut x = vec![0.0; k];
        for (&i, v) in idx.iter().zip(z) {
            x[i] = v.max(0.0);
        }
        let grad: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| q[i][j] * x[j]).sum::<f64>() - c[i])
            .collect();
        if (0..k).any(|i| set & (1 << i) == 0 && grad[i] < -1e-9 * scale) {
            continue;
        }
        let obj: f64 = 0.5
            * (0..k)
                .map(|i| x[i] * (0..k).map(|j| q[i][j] * x[j]).sum::<f64>())
                .sum::<f64>()
            - (0..k).map(|i| c[i] * x[i]).sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.expect("a KKT point always exists").1
}

/// `AᵀA` by the textbook triple loop.
pub fn naive_gram(a: &DenseMatrix) -> Vec<Vec<f64>> {
    let (m, k) = a.shape();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            for r in 0..m {
                g[i][j] += a[(r, i)] * a[(r, j)];
            }
        }
    }
    g
}

/// `Σ (X − WH)²` over observed entries, one entry at a time.
pub fn naive_residual(
    x: &Matrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: Option<&MaskMatrix>,
) -> f64 {
    let (m, n) = x.shape();
    let mut total = 0.0;
    for r in 0..m {
        for c in 0..n {
            if mask.is_some_and(|mk| !mk.is_observed(r, c)) {
                continue;
            }
            let p: f64 = (0..w.cols()).map(|i| w[(r, i)] * h[(i, c)]).sum();
            total += (x.get(r, c) - p).powi(2);
        }
    }
    total
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

fn col(h: &DenseMatrix, j: usize) -> Vec<f64> {
    (0..h.rows()).map(|i| h[(i, j)]).collect()
}

/// All other items, best cosine first, ties by index.
pub fn brute_ranking(h: &DenseMatrix, q: usize) -> Vec<(usize, f64)> {
    let qv = col(h, q);
    let mut all: Vec<(usize, f64)> = (0..h.cols())
        .filter(|&j| j != q)
        .map(|j| (j, cosine(&qv, &col(h, j))))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all
}

pub fn brute_precision(h: &DenseMatrix, cohort: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for &m in cohort {
        let hits = brute_ranking(h, m)
            .iter()
            .take(k)
            .filter(|(j, _)| cohort.contains(j))
            .count();
        total += hits as f64 / k as f64;
    }
    total / cohort.len() as f64
}

/// (tp, fp, positives, negatives) under `score >= t`.
pub fn confusion_brute(scores: &[f64], labels: &[bool], t: f64) -> (usize, usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    for i in 0..scores.len() {
        if scores[i] >= t {
            if labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let p = labels.iter().filter(|&&l| l).count();
    (tp, fp, p, labels.len() - p)
}

/// Area under the polyline through every (FPR, TPR) point of the threshold sweep.
pub fn trapezoid_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for &t in &ts {
        let c = confusion_brute(scores, labels, t);
        pts.push((c.1 as f64 / c.3 as f64, c.0 as f64 / c.2 as f64));
    }
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Best `(J, t)` over observed thresholds; a smaller threshold wins unless beaten by more than 1e-12.
pub fn youden_scan(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let mut ts = scores.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, f64)> = None;
    for &t in &ts {
        let (tp, fp, p, q) = confusion_brute(scores, labels, t);
        let j = tp as f64 / p as f64 - fp as f64 / q as f64;
        if best.is_none_or(|(bj, _)| j > bj + 1e-12) {
            best = Some((j, t));
        }
    }
    best.expect("non-empty scores")
}
