//! Dense, sparse and mask matrix types plus the kernels the factorization needs.

mod dense;
pub mod io;
mod mask;
mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dense::DenseMatrix;
pub use mask::MaskMatrix;
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// Either storage kind for a feature-by-item matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows(),
            Matrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Sparse(s) => s.cols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self {
            Matrix::Dense(d) => d[(r, c)],
            Matrix::Sparse(s) => s.get(r, c),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.clone(),
            Matrix::Sparse(s) => s.to_dense(),
        }
    }

    /// CSR copy; dense storage drops exact zeros.
    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            Matrix::Dense(d) => SparseMatrix::from_dense(d),
            Matrix::Sparse(s) => s.clone(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            Matrix::Dense(d) => d.frobenius_sq(),
            Matrix::Sparse(s) => s.frobenius_sq(),
        }
    }

    fn stored_values(&self) -> &[f64] {
        match self {
            Matrix::Dense(d) => d.as_slice(),
            Matrix::Sparse(s) => s.values(),
        }
    }

    fn has_implicit_zeros(&self) -> bool {
        match self {
            Matrix::Dense(_) => false,
            Matrix::Sparse(s) => s.nnz() < s.rows() * s.cols(),
        }
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(d: DenseMatrix) -> Self {
        Matrix::Dense(d)
    }
}

impl From<SparseMatrix> for Matrix {
    fn from(s: SparseMatrix) -> Self {
        Matrix::Sparse(s)
    }
}

/// Global min/max used to map a block into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
    /// Set when `min == max`; every scaled value is then zero.
    pub degenerate: bool,
}

impl ScaleParams {
    pub const IDENTITY: ScaleParams = ScaleParams {
        min: 0.0,
        max: 1.0,
        degenerate: false,
    };

    pub fn apply(&self, v: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            x * (self.max - self.min) + self.min
        }
    }
}

/// Min-max scales a whole matrix with one global minimum and maximum.
///
/// Implicit zeros of sparse input take part in the minimum. When that minimum
/// is zero the result keeps the input's sparsity pattern; otherwise implicit
/// zeros map to a nonzero value and the result is dense. A constant matrix
/// scales to all zeros with `degenerate` set.
pub fn minmax_scale(y: &Matrix) -> Result<(Matrix, ScaleParams)> {
    let (rows, cols) = y.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("cannot scale an empty matrix".into()));
    }
    let stored = y.stored_values();
    let mut min = stored.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max = stored.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y.has_implicit_zeros() {
        min = min.min(0.0);
        max = max.max(0.0);
    }
    if min == max {
        let params = ScaleParams {
            min,
            max,
            degenerate: true,
        };
        let zeros = match y {
            Matrix::Dense(_) => Matrix::Dense(DenseMatrix::zeros(rows, cols)),
            Matrix::Sparse(_) => Matrix::Sparse(SparseMatrix::zeros(rows, cols)),
        };
        return Ok((zeros, params));
    }
    let params = ScaleParams {
        min,
        max,
        degenerate: false,
    };
    let scaled = match y {
        Matrix::Dense(d) => {
            let data = d.as_slice().iter().map(|&v| params.apply(v)).collect();
            Matrix::Dense(DenseMatrix::from_raw(rows, cols, data))
        }
        Matrix::Sparse(s) if min == 0.0 => {
            let mut out = s.clone();
            out.values_mut()
                .iter_mut()
                .for_each(|v| *v = params.apply(*v));
            Matrix::Sparse(out)
        }
        Matrix::Sparse(s) => {
            let mut dense = DenseMatrix::from_raw(rows, cols, vec![params.apply(0.0); rows * cols]);
            for r in 0..rows {
                for (c, v) in s.row_iter(r) {
                    dense[(r, c)] = params.apply(v);
                }
            }
            Matrix::Dense(dense)
        }
    };
    Ok((scaled, params))
}

fn add_outer_upper(acc: &mut [f64], k: usize, v: &[f64], weight: f64) {
    for (p, &vp) in v.iter().enumerate() {
        let a = weight * vp;
        if a == 0.0 {
            continue;
        }
        let row = &mut acc[p * k..(p + 1) * k];
        for q in p..k {
            row[q] += a * v[q];
        }
    }
}

fn mirror_upper(acc: &mut [f64], k: usize) {
    for p in 0..k {
        for q in 0..p {
            acc[p * k + q] = acc[q * k + p];
        }
    }
}

/// `AᵀA`, accumulated row by row. Exactly symmetric.
pub fn gram(a: &Matrix) -> Result<DenseMatrix> {
    let k = a.cols();
    if k == 0 {
        return Err(Error::InvalidInput(
            "gram of a matrix with no columns".into(),
        ));
    }
    let mut acc = vec![0.0; k * k];
    match a {
        Matrix::Dense(d) => {
            for r in 0..d.rows() {
                add_outer_upper(&mut acc, k, d.row(r), 1.0);
            }
        }
        Matrix::Sparse(s) => {
            for r in 0..s.rows() {
                let idx = s.row_indices(r);
                let val = s.row_values(r);
                for (a_pos, (&p, &vp)) in idx.iter().zip(val).enumerate() {
                    for (&q, &vq) in idx[a_pos..].iter().zip(&val[a_pos..]) {
                        acc[p * k + q] += vp * vq;
                    }
                }
            }
        }
    }
    mirror_upper(&mut acc, k);
    Ok(DenseMatrix::from_raw(k, k, acc))
}

/// Gram of the rows of a dense matrix selected by `rows`: `Σ_{r ∈ rows} a_r a_rᵀ`.
pub(crate) fn partial_gram(a: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    let k = a.cols();
    let mut acc = vec![0.0; k * k];
    for &r in rows {
        add_outer_upper(&mut acc, k, a.row(r), 1.0);
    }
    mirror_upper(&mut acc, k);
    DenseMatrix::from_raw(k, k, acc)
}

/// Squared residual of one row over the given observed columns.
///
/// `x_idx`/`x_val` are the row's stored entries (sorted by column); entries not
/// in `cols` are never read. `ht` is `Hᵀ` (n×k).
pub(crate) fn row_residual_sq(
    x_idx: &[usize],
    x_val: &[f64],
    w_row: &[f64],
    ht: &DenseMatrix,
    cols: Option<&[usize]>,
) -> f64 {
    let mut total = 0.0;
    let mut cursor = 0usize;
    let mut visit = |c: usize| {
        while cursor < x_idx.len() && x_idx[cursor] < c {
            cursor += 1;
        }
        let x = if cursor < x_idx.len() && x_idx[cursor] == c {
            x_val[cursor]
        } else {
            0.0
        };
        let pred: f64 = w_row.iter().zip(ht.row(c)).map(|(a, b)| a * b).sum();
        let d = x - pred;
        total += d * d;
    };
    match cols {
        Some(cols) => cols.iter().for_each(|&c| visit(c)),
        None => (0..ht.rows()).for_each(visit),
    }
    total
}

/// `Σ_{(i,j) observed} (X_ij − (WH)_ij)²`; `mask = None` means every entry is observed.
///
/// Masked-out entries of `X` are never read.
pub fn masked_residual_sq(
    x: &Matrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: Option<&MaskMatrix>,
) -> Result<f64> {
    let (m, n) = x.shape();
    if w.rows() != m || h.cols() != n || w.cols() != h.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X is {m}x{n}, W is {}x{}, H is {}x{}",
            w.rows(),
            w.cols(),
            h.rows(),
            h.cols()
        )));
    }
    if let Some(mask) = mask {
        if mask.shape() != (m, n) {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{}, X is {m}x{n}",
                mask.rows(),
                mask.cols()
            )));
        }
    }
    let ht = h.transpose();
    let mask_rows = mask.map(MaskMatrix::transpose);
    let per_row: Vec<f64> = match x {
        Matrix::Sparse(s) => (0..m)
            .into_par_iter()
            .map(|r| {
                let cols = mask_rows.as_ref().map(|mr| mr.column(r));
                row_residual_sq(s.row_indices(r), s.row_values(r), w.row(r), &ht, cols)
            })
            .collect(),
        Matrix::Dense(d) => {
            let all: Vec<usize> = (0..n).collect();
            (0..m)
                .into_par_iter()
                .map(|r| {
                    let cols = mask_rows.as_ref().map(|mr| mr.column(r));
                    row_residual_sq(&all, d.row(r), w.row(r), &ht, cols)
                })
                .collect()
        }
    };
    Ok(per_row.iter().sum())
}
