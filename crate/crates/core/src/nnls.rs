//! Nonnegative least squares by block principal pivoting.
//!
//! Every problem is given in normal-equation form: for each right-hand side
//! `b` we minimize `½ xᵀ(AᵀA)x − (Aᵀb)ᵀx` subject to `x ≥ 0`, which has the same
//! minimizer as `‖Ax − b‖²`. Columns of `AᵀB` are solved independently.
//!
//! The pivoting loop keeps a passive set `F` (free variables) and its
//! complement `G` (variables pinned at zero). Each iteration solves the
//! unconstrained system on `F`, computes the gradient `y = AᵀAx − Aᵀb` on `G`,
//! and swaps every infeasible variable (`x_F < 0` or `y_G < 0`). When the
//! number of infeasible variables fails to shrink, the full exchange is retried
//! `max_backup` times and then replaced by a single-variable exchange of the
//! largest infeasible index, which guarantees termination.
//!
//! Gradient feasibility is judged against `tol · max|Aᵀb|`, so the tolerance
//! is relative to the right-hand side and independent of view weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{partial_gram, DenseMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_BACKUP: usize = 3;
pub const DEFAULT_ITERATION_FACTOR: usize = 5;

/// Relative pivot size below which a passive-set Cholesky factorization is
/// considered singular and the Tikhonov fallback kicks in.
const PIVOT_EPS: f64 = 1e-14;
const RIDGE_FACTOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NnlsError {
    #[error("invalid NNLS problem: {0}")]
    InvalidProblem(String),

    #[error("block pivoting did not converge for column {column} after {iterations} iterations")]
    NonConvergence { column: usize, iterations: usize },

    #[error("singular passive-set system for column {column}, even after regularization")]
    SingularSystem { column: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BppOptions {
    /// Relative KKT tolerance on the gradient.
    pub tol: f64,
    /// Full exchanges allowed without progress before falling back to single exchanges.
    pub max_backup: usize,
    /// Pivot iteration budget per column is `iteration_factor · k`.
    pub iteration_factor: usize,
}

impl Default for BppOptions {
    fn default() -> Self {
        BppOptions {
            tol: DEFAULT_TOL,
            max_backup: DEFAULT_MAX_BACKUP,
            iteration_factor: DEFAULT_ITERATION_FACTOR,
        }
    }
}

/// Diagnostic counters accumulated over solved columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnlsStats {
    pub columns: u64,
    pub pivot_iterations: u64,
    pub backup_exchanges: u64,
    pub single_exchanges: u64,
    pub regularized_solves: u64,
    pub pinned_variables: u64,
}

impl NnlsStats {
    pub fn merge(&mut self, other: &NnlsStats) {
        self.columns += other.columns;
        self.pivot_iterations += other.pivot_iterations;
        self.backup_exchanges += other.backup_exchanges;
        self.single_exchanges += other.single_exchanges;
        self.regularized_solves += other.regularized_solves;
        self.pinned_variables += other.pinned_variables;
    }
}

#[derive(Debug, Clone)]
pub struct NnlsProblem {
    ata: DenseMatrix,
    atb: DenseMatrix,
}

impl NnlsProblem {
    /// `ata` is k×k symmetric, `atb` is k×r with one column per right-hand side.
    pub fn new(ata: DenseMatrix, atb: DenseMatrix) -> Result<Self, NnlsError> {
        let k = ata.rows();
        if k == 0 || ata.cols() != k {
            return Err(NnlsError::InvalidProblem(format!(
                "Gram matrix must be square and non-empty, got {}x{}",
                ata.rows(),
                ata.cols()
            )));
        }
        if atb.rows() != k || atb.cols() == 0 {
            return Err(NnlsError::InvalidProblem(format!(
                "right-hand side must be {k}xr with r >= 1, got {}x{}",
                atb.rows(),
                atb.cols()
            )));
        }
        let scale = ata.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..i {
                if (ata[(i, j)] - ata[(j, i)]).abs() > 1e-10 * scale {
                    return Err(NnlsError::InvalidProblem(format!(
                        "Gram matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(NnlsProblem { ata, atb })
    }

    pub fn ata(&self) -> &DenseMatrix {
        &self.ata
    }

    pub fn atb(&self) -> &DenseMatrix {
        &self.atb
    }
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    /// k×r, every entry ≥ 0.
    pub x: DenseMatrix,
    /// Largest relative KKT violation over all columns.
    pub kkt_residual: f64,
    /// Largest pivot iteration count over all columns.
    pub iterations: usize,
    pub stats: NnlsStats,
}

pub fn solve_bpp(
    problem: &NnlsProblem,
    tol: f64,
    max_backup: usize,
) -> Result<NnlsSolution, NnlsError> {
    solve_bpp_with(
        problem,
        &BppOptions {
            tol,
            max_backup,
            ..BppOptions::default()
        },
    )
}

pub fn solve_bpp_with(problem: &NnlsProblem, opts: &BppOptions) -> Result<NnlsSolution, NnlsError> {
    let (k, r) = problem.atb.shape();
    let results: Vec<Result<ColumnSolution, NnlsError>> = (0..r)
        .into_par_iter()
        .map(|j| {
            let rhs = problem.atb.column(j);
            solve_column(&problem.ata, &rhs, opts).map_err(|e| e.at_column(j))
        })
        .collect();
    let mut x = DenseMatrix::zeros(k, r);
    let mut stats = NnlsStats::default();
    let mut kkt_residual = 0.0f64;
    let mut iterations = 0;
    for (j, res) in results.into_iter().enumerate() {
        let col = res?;
        x.set_column(j, &col.x);
        stats.merge(&col.stats);
        kkt_residual = kkt_residual.max(col.kkt_residual);
        iterations = iterations.max(col.iterations);
    }
    Ok(NnlsSolution {
        x,
        kkt_residual,
        iterations,
        stats,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct ColumnSolution {
    pub x: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub stats: NnlsStats,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ColumnError {
    NonConvergence(usize),
    Singular,
}

impl ColumnError {
    pub(crate) fn at_column(self, column: usize) -> NnlsError {
        match self {
            ColumnError::NonConvergence(iterations) => {
                NnlsError::NonConvergence { column, iterations }
            }
            ColumnError::Singular => NnlsError::SingularSystem { column },
        }
    }
}

impl From<ColumnError> for NnlsError {
    fn from(e: ColumnError) -> Self {
        e.at_column(0)
    }
}

/// Cholesky solve of `(A[idx, idx] + shift·I) z = rhs[idx]`.
fn cholesky_solve(
    ata: &DenseMatrix,
    idx: &[usize],
    rhs: &[f64],
    shift: f64,
    strict: bool,
) -> Option<Vec<f64>> {
    let n = idx.len();
    let max_diag = idx
        .iter()
        .map(|&i| ata[(i, i)] + shift)
        .fold(0.0f64, f64::max);
    let threshold = if strict { PIVOT_EPS * max_diag } else { 0.0 };
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = ata[(idx[j], idx[j])] + shift;
        for p in 0..j {
            d -= l[j * n + p] * l[j * n + p];
        }
        if d.is_nan() || d <= threshold {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = ata[(idx[i], idx[j])];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut z: Vec<f64> = idx.iter().map(|&i| rhs[i]).collect();
    for i in 0..n {
        let mut s = z[i];
        for p in 0..i {
            s -= l[i * n + p] * z[p];
        }
        z[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for p in i + 1..n {
            s -= l[p * n + i] * z[p];
        }
        z[i] = s / l[i * n + i];
    }
    Some(z)
}

/// Solves the unconstrained system on the passive set and writes `x`; `x` is zero off the set.
fn solve_passive(
    ata: &DenseMatrix,
    rhs: &[f64],
    passive: &[bool],
    x: &mut [f64],
    stats: &mut NnlsStats,
) -> Result<(), ColumnError> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    x.iter_mut().for_each(|v| *v = 0.0);
    if idx.is_empty() {
        return Ok(());
    }
    let z = match cholesky_solve(ata, &idx, rhs, 0.0, true) {
        Some(z) => z,
        None => {
            stats.regularized_solves += 1;
            let k = ata.rows();
            let trace: f64 = (0..k).map(|i| ata[(i, i)]).sum();
            let ridge = RIDGE_FACTOR * trace / k as f64;
            cholesky_solve(ata, &idx, rhs, ridge, false).ok_or(ColumnError::Singular)?
        }
    };
    for (&i, v) in idx.iter().zip(z) {
        x[i] = v;
    }
    Ok(())
}

fn gradient(ata: &DenseMatrix, rhs: &[f64], x: &[f64]) -> Vec<f64> {
    (0..rhs.len())
        .map(|i| {
            let ax: f64 = ata.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            ax - rhs[i]
        })
        .collect()
}

/// Relative KKT violation: `|y_i|` where `x_i > 0`, `max(0, −y_i)` where `x_i = 0`.
pub fn kkt_violation(ata: &DenseMatrix, rhs: &[f64], x: &[f64]) -> f64 {
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let y = gradient(ata, rhs, x);
    let worst = x
        .iter()
        .zip(&y)
        .enumerate()
        .filter(|(i, _)| ata[(*i, *i)] > 0.0)
        .map(|(_, (&xi, &yi))| if xi > 0.0 { yi.abs() } else { (-yi).max(0.0) })
        .fold(0.0, f64::max);
    worst / scale
}

/// One right-hand side. Variables with a zero Gram diagonal carry no data and stay at zero.
pub(crate) fn solve_column(
    ata: &DenseMatrix,
    rhs: &[f64],
    opts: &BppOptions,
) -> Result<ColumnSolution, ColumnError> {
    let k = rhs.len();
    debug_assert_eq!(ata.rows(), k);
    let mut stats = NnlsStats {
        columns: 1,
        ..NnlsStats::default()
    };
    let usable: Vec<bool> = (0..k).map(|i| ata[(i, i)] > 0.0).collect();
    stats.pinned_variables = usable.iter().filter(|u| !**u).count() as u64;
    let scale = (0..k)
        .filter(|&i| usable[i])
        .fold(0.0f64, |m, i| m.max(rhs[i].abs()));
    let mut x = vec![0.0; k];
    if scale == 0.0 {
        return Ok(ColumnSolution {
            x,
            kkt_residual: 0.0,
            iterations: 0,
            stats,
        });
    }
    let tol_y = opts.tol * scale;
    let budget = opts.iteration_factor * k;

    let mut passive = vec![false; k];
    let mut y: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let mut best = k + 1;
    let mut backup = opts.max_backup;
    let mut iterations = 0usize;

    loop {
        let infeasible: Vec<usize> = (0..k)
            .filter(|&i| {
                usable[i]
                    && if passive[i] {
                        x[i] < 0.0
                    } else {
                        y[i] < -tol_y
                    }
            })
            .collect();
        if infeasible.is_empty() {
            break;
        }
        iterations += 1;
        if iterations > budget {
            return Err(ColumnError::NonConvergence(iterations - 1));
        }
        if infeasible.len() < best {
            best = infeasible.len();
            backup = opts.max_backup;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else if backup > 0 {
            backup -= 1;
            stats.backup_exchanges += 1;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else {
            stats.single_exchanges += 1;
            let i = *infeasible.last().unwrap();
            passive[i] = !passive[i];
        }
        solve_passive(ata, rhs, &passive, &mut x, &mut stats)?;
        y = gradient(ata, rhs, &x);
        for i in 0..k {
            if passive[i] {
                y[i] = 0.0;
            }
        }
    }
    stats.pivot_iterations = iterations as u64;
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let kkt_residual = kkt_violation(ata, rhs, &x);
    Ok(ColumnSolution {
        x,
        kkt_residual,
        iterations,
        stats,
    })
}

/// Result of a masked single-row fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedRowSolution {
    pub w: Vec<f64>,
    /// True when no column was observed; `w` is then all zeros.
    pub unconstrained: bool,
}

/// Stored entries of one data row, sorted by column.
#[derive(Debug, Clone, Copy)]
pub enum RowValues<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl RowValues<'_> {
    /// Value at each observed column, in order. Other columns are not read.
    fn observed(&self, cols: &[usize]) -> Vec<f64> {
        match *self {
            RowValues::Dense(v) => cols.iter().map(|&c| v[c]).collect(),
            RowValues::Sparse { indices, values } => {
                let mut cursor = 0;
                cols.iter()
                    .map(|&c| {
                        while cursor < indices.len() && indices[cursor] < c {
                            cursor += 1;
                        }
                        if cursor < indices.len() && indices[cursor] == c {
                            values[cursor]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }
}

/// `argmin_{w ≥ 0} Σ_{c ∈ observed} (x_c − w·H[:, c])²` for a k×n basis `H`.
///
/// The reduced Gram `Σ h_c h_cᵀ` over observed columns is built directly;
/// no diagonal selector matrix is formed.
pub fn solve_masked_row(
    h: &DenseMatrix,
    x_row: RowValues<'_>,
    observed: &[usize],
    tol: f64,
) -> Result<MaskedRowSolution, NnlsError> {
    let k = h.rows();
    if observed.is_empty() {
        return Ok(MaskedRowSolution {
            w: vec![0.0; k],
            unconstrained: true,
        });
    }
    if observed.iter().any(|&c| c >= h.cols()) || observed.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NnlsError::InvalidProblem(
            "observed columns must be sorted, unique and within range".into(),
        ));
    }
    let ht = h.transpose();
    let gram = partial_gram(&ht, observed);
    let xs = x_row.observed(observed);
    let mut rhs = vec![0.0; k];
    for (&c, &v) in observed.iter().zip(&xs) {
        if v != 0.0 {
            for (r, hv) in rhs.iter_mut().zip(ht.row(c)) {
                *r += v * hv;
            }
        }
    }
    let opts = BppOptions {
        tol,
        ..BppOptions::default()
    };
    let sol = solve_column(&gram, &rhs, &opts)?;
    Ok(MaskedRowSolution {
        w: sol.x,
        unconstrained: false,
    })
}
