use std::collections::HashMap;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{
    gram, partial_gram, row_residual_sq, DenseMatrix, MaskMatrix, Matrix, SparseMatrix,
};
use crate::nnls::{solve_column, BppOptions, NnlsStats};

use super::{
    observed_stats, EmptyRows, FactorModel, FitDiagnostics, Init, LabelFactor, LabelSpec,
    ModelConfig, ViewFactor, ViewSpec,
};

/// Below this fraction of the weighted data energy, the objective counts as zero
/// for the relative-decrease test; exactly factorizable data otherwise never stops.
const OBJECTIVE_FLOOR: f64 = 1e-6;

/// One loss term (a view or the label matrix) in solver-ready form.
///
/// Masked-out entries are dropped when the term is built, so nothing
/// downstream can read them.
struct Term {
    name: String,
    alpha: f64,
    /// m × n observed entries, row-major.
    by_row: SparseMatrix,
    /// n × m observed entries, one row per item.
    by_col: SparseMatrix,
    /// Per-item observed feature rows; `None` for a full mask.
    mask_cols: Option<MaskMatrix>,
    /// Per-feature observed items; `None` for a full mask.
    mask_rows: Option<MaskMatrix>,
}

impl Term {
    fn new(name: &str, alpha: f64, x: &Matrix, mask: Option<&MaskMatrix>) -> Term {
        let sparse = x.to_sparse();
        let by_row = match mask {
            None => sparse,
            Some(mask) => sparse.filter(|r, c| mask.is_observed(r, c)),
        };
        let by_col = by_row.transpose();
        Term {
            name: name.to_string(),
            alpha,
            by_row,
            by_col,
            mask_cols: mask.cloned(),
            mask_rows: mask.map(MaskMatrix::transpose),
        }
    }

    fn rows(&self) -> usize {
        self.by_row.rows()
    }

    fn energy(&self) -> f64 {
        self.alpha * self.by_row.frobenius_sq()
    }
}

fn validate_observed_values(name: &str, x: &Matrix, mask: Option<&MaskMatrix>) -> Result<()> {
    let bad = |v: f64| !v.is_finite() || v < 0.0;
    let found = match (x, mask) {
        (Matrix::Dense(d), None) => d.as_slice().iter().any(|&v| bad(v)),
        (Matrix::Sparse(s), None) => s.values().iter().any(|&v| bad(v)),
        (_, Some(mask)) => mask.entries().any(|(r, c)| bad(x.get(r, c))),
    };
    if found {
        return Err(Error::InvalidInput(format!(
            "`{name}` has a negative or non-finite observed entry"
        )));
    }
    Ok(())
}

fn validate(views: &[ViewSpec], labels: Option<&LabelSpec>, config: &ModelConfig) -> Result<usize> {
    let first = views
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one view is required".into()))?;
    let n = first.x.cols();
    let mut names = std::collections::HashSet::new();
    for v in views {
        if v.name.is_empty() || !names.insert(v.name.as_str()) {
            return Err(Error::InvalidInput(format!(
                "view name `{}` is empty or repeated",
                v.name
            )));
        }
        if v.x.cols() != n {
            return Err(Error::ShapeMismatch(format!(
                "view `{}` has {} items, expected {n}",
                v.name,
                v.x.cols()
            )));
        }
        if !(v.alpha > 0.0 && v.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "view `{}` needs alpha > 0",
                v.name
            )));
        }
        if let Some(mask) = v.mask() {
            if mask.shape() != v.x.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "view `{}` mask is {}x{}, data is {}x{}",
                    v.name,
                    mask.rows(),
                    mask.cols(),
                    v.x.rows(),
                    v.x.cols()
                )));
            }
        }
        v.layout.validate(v.x.rows(), &v.name)?;
        validate_observed_values(&v.name, &v.x, v.mask())?;
    }
    if let Some(l) = labels {
        if l.x.cols() != n || l.mask.shape() != l.x.shape() || l.classes.len() != l.x.rows() {
            return Err(Error::ShapeMismatch(format!(
                "label matrix is {}x{} with {} classes and a {}x{} mask; expected {n} items",
                l.x.rows(),
                l.x.cols(),
                l.classes.len(),
                l.mask.rows(),
                l.mask.cols()
            )));
        }
        if !(l.alpha > 0.0 && l.alpha.is_finite()) {
            return Err(Error::InvalidConfig("label alpha must be > 0".into()));
        }
        if l.mask.entries().any(|(r, c)| {
            let v = l.x.get(r, c);
            v != 0.0 && v != 1.0
        }) {
            return Err(Error::InvalidInput("observed labels must be 0 or 1".into()));
        }
    }
    let min_rows = views.iter().map(|v| v.x.rows()).min().unwrap_or(0);
    let k = config.rank;
    if k == 0 || k > min_rows || k > n {
        return Err(Error::InvalidConfig(format!(
            "rank {k} must satisfy 1 <= k <= min(smallest view rows {min_rows}, items {n})"
        )));
    }
    if config.rel_tol.is_nan() || config.rel_tol <= 0.0 || config.max_sweeps == 0 {
        return Err(Error::InvalidConfig(
            "rel_tol must be > 0 and max_sweeps >= 1".into(),
        ));
    }
    if let Init::Provided(h0) = &config.init {
        if h0.shape() != (k, n) || h0.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "provided initial embedding must be a nonnegative {k}x{n} matrix"
            )));
        }
    }
    Ok(n)
}

fn build_terms(views: &[ViewSpec], labels: Option<&LabelSpec>) -> Vec<Term> {
    let mut terms: Vec<Term> = views
        .iter()
        .map(|v| Term::new(&v.name, v.alpha, &v.x, v.mask()))
        .collect();
    if let Some(l) = labels.filter(|l| !l.mask.is_empty()) {
        terms.push(Term::new("labels", l.alpha, &l.x, Some(&l.mask)));
    }
    terms
}

/// Seeded starting embedding: uniform `(0, 1]` scaled by `√(mean / k)`, where
/// `mean` averages each view's mean observed value.
pub fn initial_h(views: &[ViewSpec], rank: usize, seed: u64) -> DenseMatrix {
    let n = views.first().map_or(0, |v| v.x.cols());
    let means: Vec<f64> = views
        .iter()
        .map(|v| {
            let (_, sum, count) = observed_stats(&v.x, v.mask());
            if count > 0 {
                sum / count as f64
            } else {
                0.0
            }
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
    let scale = (mean / rank as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rank * n)
        .map(|_| (1.0 - rng.gen::<f64>()) * scale)
        .collect();
    DenseMatrix::from_raw(rank, n, data)
}

fn rhs_from_entries(idx: &[usize], val: &[f64], basis: &DenseMatrix, k: usize) -> Vec<f64> {
    let mut rhs = vec![0.0; k];
    for (&r, &v) in idx.iter().zip(val) {
        for (acc, b) in rhs.iter_mut().zip(basis.row(r)) {
            *acc += v * b;
        }
    }
    rhs
}

/// Groups indices by an identical observed set, in order of first appearance.
fn group_by_observed(mask: &MaskMatrix) -> Vec<(&[usize], Vec<usize>)> {
    let mut lookup: HashMap<&[usize], usize> = HashMap::new();
    let mut groups: Vec<(&[usize], Vec<usize>)> = Vec::new();
    for i in 0..mask.cols() {
        let key = mask.column(i);
        match lookup.get(key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                lookup.insert(key, groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    groups
}

struct TermUpdate {
    w: DenseMatrix,
    empty_rows: Vec<usize>,
    stats: NnlsStats,
}

fn update_term_w(term: &Term, ht: &DenseMatrix, opts: &BppOptions) -> Result<TermUpdate> {
    let m = term.rows();
    let k = ht.cols();
    // Gram per row: shared for a full mask, shared within each identical mask row otherwise.
    let (grams, row_group): (Vec<Option<DenseMatrix>>, Vec<usize>) = match &term.mask_rows {
        None => (vec![Some(gram(&Matrix::Dense(ht.clone()))?)], vec![0; m]),
        Some(mask_rows) => {
            let groups = group_by_observed(mask_rows);
            let grams = groups
                .par_iter()
                .map(|(obs, _)| (!obs.is_empty()).then(|| partial_gram(ht, obs)))
                .collect();
            let mut row_group = vec![0; m];
            for (g, (_, rows)) in groups.iter().enumerate() {
                rows.iter().for_each(|&r| row_group[r] = g);
            }
            (grams, row_group)
        }
    };
    let solved: Vec<std::result::Result<Option<_>, _>> = (0..m)
        .into_par_iter()
        .map(|r| match &grams[row_group[r]] {
            None => Ok(None),
            Some(g) => {
                let rhs =
                    rhs_from_entries(term.by_row.row_indices(r), term.by_row.row_values(r), ht, k);
                solve_column(g, &rhs, opts)
                    .map(Some)
                    .map_err(|e| e.at_column(r))
            }
        })
        .collect();
    let mut w = DenseMatrix::zeros(m, k);
    let mut empty_rows = Vec::new();
    let mut stats = NnlsStats::default();
    for (r, res) in solved.into_iter().enumerate() {
        match res? {
            Some(col) => {
                w.row_mut(r).copy_from_slice(&col.x);
                stats.merge(&col.stats);
            }
            None => empty_rows.push(r),
        }
    }
    Ok(TermUpdate {
        w,
        empty_rows,
        stats,
    })
}

struct HSolve {
    h: DenseMatrix,
    empty_columns: Vec<usize>,
    stats: NnlsStats,
}

fn update_terms_h(
    terms: &[Term],
    ws: &[&DenseMatrix],
    n: usize,
    opts: &BppOptions,
) -> Result<HSolve> {
    let k = ws[0].cols();
    let closed_gram: Option<DenseMatrix> = {
        let mut acc: Option<DenseMatrix> = None;
        for (t, w) in terms.iter().zip(ws) {
            if t.mask_cols.is_none() {
                let mut g = gram(&Matrix::Dense((*w).clone()))?;
                g.scale(t.alpha);
                acc = Some(match acc {
                    None => g,
                    Some(mut a) => {
                        add_into(&mut a, &g);
                        a
                    }
                });
            }
        }
        acc
    };
    let open: Vec<(usize, &MaskMatrix)> = terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.mask_cols.as_ref().map(|m| (i, m)))
        .collect();

    // Columns with the same observed rows in every open term share one Gram.
    let mut lookup: HashMap<Vec<&[usize]>, usize> = HashMap::new();
    let mut groups: Vec<Vec<&[usize]>> = Vec::new();
    let mut col_group = vec![0usize; n];
    for (j, slot) in col_group.iter_mut().enumerate() {
        let key: Vec<&[usize]> = open.iter().map(|(_, m)| m.column(j)).collect();
        *slot = *lookup.entry(key.clone()).or_insert_with(|| {
            groups.push(key);
            groups.len() - 1
        });
    }
    let grams: Vec<Option<DenseMatrix>> = groups
        .par_iter()
        .map(|key| {
            if closed_gram.is_none() && key.iter().all(|s| s.is_empty()) {
                return None;
            }
            let mut acc = DenseMatrix::zeros(k, k);
            let mut open_pos = 0;
            for (i, (t, w)) in terms.iter().zip(ws).enumerate() {
                if t.mask_cols.is_none() {
                    continue;
                }
                debug_assert_eq!(open[open_pos].0, i);
                let mut g = partial_gram(w, key[open_pos]);
                g.scale(t.alpha);
                add_into(&mut acc, &g);
                open_pos += 1;
            }
            if let Some(c) = &closed_gram {
                add_into(&mut acc, c);
            }
            Some(acc)
        })
        .collect();

    let solved: Vec<std::result::Result<Option<_>, _>> = (0..n)
        .into_par_iter()
        .map(|j| match &grams[col_group[j]] {
            None => Ok(None),
            Some(g) => {
                let mut rhs = vec![0.0; k];
                for (t, w) in terms.iter().zip(ws) {
                    let part =
                        rhs_from_entries(t.by_col.row_indices(j), t.by_col.row_values(j), w, k);
                    for (a, p) in rhs.iter_mut().zip(part) {
                        *a += t.alpha * p;
                    }
                }
                solve_column(g, &rhs, opts)
                    .map(Some)
                    .map_err(|e| e.at_column(j))
            }
        })
        .collect();
    let mut h = DenseMatrix::zeros(k, n);
    let mut empty_columns = Vec::new();
    let mut stats = NnlsStats::default();
    for (j, res) in solved.into_iter().enumerate() {
        match res? {
            Some(col) => {
                h.set_column(j, &col.x);
                stats.merge(&col.stats);
            }
            None => empty_columns.push(j),
        }
    }
    Ok(HSolve {
        h,
        empty_columns,
        stats,
    })
}

fn add_into(acc: &mut DenseMatrix, other: &DenseMatrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

fn term_residual(term: &Term, w: &DenseMatrix, ht: &DenseMatrix) -> f64 {
    let per_row: Vec<f64> = (0..term.rows())
        .into_par_iter()
        .map(|r| {
            let cols = term.mask_rows.as_ref().map(|m| m.column(r));
            row_residual_sq(
                term.by_row.row_indices(r),
                term.by_row.row_values(r),
                w.row(r),
                ht,
                cols,
            )
        })
        .collect();
    per_row.iter().sum()
}

fn terms_objective(terms: &[Term], ws: &[&DenseMatrix], h: &DenseMatrix) -> f64 {
    let ht = h.transpose();
    terms
        .iter()
        .zip(ws)
        .map(|(t, w)| t.alpha * term_residual(t, w, &ht))
        .sum()
}

fn check_finite(m: &DenseMatrix, factor: &str, sweep: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            factor: factor.to_string(),
            sweep,
        })
    }
}

/// Runs block coordinate descent to convergence or `max_sweeps`.
pub fn fit(
    views: &[ViewSpec],
    labels: Option<&LabelSpec>,
    config: &ModelConfig,
) -> Result<FactorModel> {
    let n = validate(views, labels, config)?;
    let k = config.rank;
    let terms = build_terms(views, labels);
    let use_labels = terms.len() > views.len();
    if labels.is_some() && !use_labels {
        info!("label matrix has no observed entries; fitting without labels");
    }
    let mut h = match &config.init {
        Init::RandomUniform => initial_h(views, k, config.seed),
        Init::Provided(h0) => h0.clone(),
    };
    let mut ws: Vec<DenseMatrix> = terms
        .iter()
        .map(|t| DenseMatrix::zeros(t.rows(), k))
        .collect();
    let floor = OBJECTIVE_FLOOR * terms.iter().map(Term::energy).sum::<f64>();
    let mut history: Vec<f64> = Vec::new();
    let mut diagnostics = FitDiagnostics::default();
    let mut converged = false;

    for sweep in 1..=config.max_sweeps {
        let ht = h.transpose();
        let mut empty_w_rows = Vec::new();
        for (t, w) in terms.iter().zip(ws.iter_mut()) {
            let up = update_term_w(t, &ht, &config.nnls)?;
            check_finite(&up.w, &t.name, sweep)?;
            diagnostics.nnls.merge(&up.stats);
            if !up.empty_rows.is_empty() {
                empty_w_rows.push(EmptyRows {
                    view: t.name.clone(),
                    rows: up.empty_rows,
                });
            }
            *w = up.w;
        }
        let w_refs: Vec<&DenseMatrix> = ws.iter().collect();
        let hs = update_terms_h(&terms, &w_refs, n, &config.nnls)?;
        check_finite(&hs.h, "H", sweep)?;
        diagnostics.nnls.merge(&hs.stats);
        diagnostics.empty_w_rows = empty_w_rows;
        diagnostics.empty_h_columns = hs.empty_columns;
        h = hs.h;

        let f = terms_objective(&terms, &w_refs_of(&ws), &h);
        if !f.is_finite() {
            return Err(Error::NonFinite {
                factor: "objective".into(),
                sweep,
            });
        }
        debug!("sweep {sweep}: objective {f:.6e}");
        let prev = history.last().copied();
        history.push(f);
        diagnostics.sweeps = sweep;
        if let Some(prev) = prev {
            if (f - prev).abs() / prev.max(floor).max(f64::MIN_POSITIVE) < config.rel_tol {
                converged = true;
                break;
            }
        }
    }
    if !diagnostics.empty_h_columns.is_empty() {
        info!(
            "{} items have no observed data and embed to zero",
            diagnostics.empty_h_columns.len()
        );
    }

    normalize(&mut h, &mut ws);
    let mut ws = ws.into_iter();
    let view_factors = views
        .iter()
        .map(|v| ViewFactor {
            name: v.name.clone(),
            alpha: v.alpha,
            closed: v.is_closed(),
            layout: v.layout.clone(),
            w: ws.next().expect("one factor per view"),
        })
        .collect();
    let label_factor = if use_labels {
        let l = labels.expect("labels present");
        Some(LabelFactor {
            classes: l.classes.clone(),
            alpha: l.alpha,
            w: ws.next().expect("label factor"),
        })
    } else {
        None
    };
    Ok(FactorModel {
        views: view_factors,
        labels: label_factor,
        h,
        item_ids: (0..n).map(|j| j.to_string()).collect(),
        objective_history: history,
        converged,
        config: config.echo(),
        diagnostics,
    })
}

fn w_refs_of(ws: &[DenseMatrix]) -> Vec<&DenseMatrix> {
    ws.iter().collect()
}

/// Scales each row of `H` to unit max and pushes the factor into the matching
/// column of every basis. The product `W H` is unchanged.
fn normalize(h: &mut DenseMatrix, ws: &mut [DenseMatrix]) {
    for c in 0..h.rows() {
        let s = h.row(c).iter().copied().fold(0.0, f64::max);
        if s <= 0.0 {
            continue;
        }
        h.row_mut(c).iter_mut().for_each(|v| *v /= s);
        for w in ws.iter_mut() {
            for r in 0..w.rows() {
                w[(r, c)] *= s;
            }
        }
    }
}

/// Result of one standalone basis update.
#[derive(Debug, Clone)]
pub struct WUpdate {
    pub w: DenseMatrix,
    /// Rows with an empty mask row; left at zero.
    pub empty_rows: Vec<usize>,
    pub stats: NnlsStats,
}

/// Exact minimizer of `‖M ∘ (X − W H)‖²` over `W ≥ 0` for a fixed embedding.
pub fn update_w(view: &ViewSpec, h: &DenseMatrix, opts: &BppOptions) -> Result<WUpdate> {
    if h.cols() != view.x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "H has {} columns, view `{}` has {} items",
            h.cols(),
            view.name,
            view.x.cols()
        )));
    }
    let term = Term::new(&view.name, view.alpha, &view.x, view.mask());
    let up = update_term_w(&term, &h.transpose(), opts)?;
    Ok(WUpdate {
        w: up.w,
        empty_rows: up.empty_rows,
        stats: up.stats,
    })
}

#[derive(Debug, Clone)]
pub struct HUpdate {
    pub h: DenseMatrix,
    /// Items observed by no view or label; left at zero.
    pub empty_columns: Vec<usize>,
    pub stats: NnlsStats,
}

/// Exact minimizer of the full objective over `H ≥ 0` for fixed bases.
pub fn update_h(
    views: &[ViewSpec],
    labels: Option<&LabelSpec>,
    ws: &[DenseMatrix],
    w_labels: Option<&DenseMatrix>,
    opts: &BppOptions,
) -> Result<HUpdate> {
    let terms = build_terms(views, labels);
    let mut refs: Vec<&DenseMatrix> = ws.iter().collect();
    if terms.len() > views.len() {
        refs.push(
            w_labels
                .ok_or_else(|| Error::InvalidInput("labels given without a label basis".into()))?,
        );
    }
    check_term_shapes(&terms, &refs)?;
    let n = views
        .first()
        .map(|v| v.x.cols())
        .ok_or_else(|| Error::InvalidInput("at least one view is required".into()))?;
    let hs = update_terms_h(&terms, &refs, n, opts)?;
    Ok(HUpdate {
        h: hs.h,
        empty_columns: hs.empty_columns,
        stats: hs.stats,
    })
}

fn check_term_shapes(terms: &[Term], ws: &[&DenseMatrix]) -> Result<()> {
    if terms.len() != ws.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} loss terms but {} basis matrices",
            terms.len(),
            ws.len()
        )));
    }
    let k = ws.first().map_or(0, |w| w.cols());
    for (t, w) in terms.iter().zip(ws) {
        if w.rows() != t.rows() || w.cols() != k {
            return Err(Error::ShapeMismatch(format!(
                "basis for `{}` is {}x{}, expected {}x{k}",
                t.name,
                w.rows(),
                w.cols(),
                t.rows()
            )));
        }
    }
    Ok(())
}

/// Weighted masked objective of `model` on the given data, using the model's weights.
pub fn objective(
    model: &FactorModel,
    views: &[ViewSpec],
    labels: Option<&LabelSpec>,
) -> Result<f64> {
    if views.len() != model.views.len() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} views, {} given",
            model.views.len(),
            views.len()
        )));
    }
    let mut terms = Vec::new();
    let mut ws = Vec::new();
    for (v, f) in views.iter().zip(&model.views) {
        if v.name != f.name {
            return Err(Error::UnknownView(v.name.clone()));
        }
        if v.x.cols() != model.n_items() {
            return Err(Error::ShapeMismatch(format!(
                "view `{}` item count",
                v.name
            )));
        }
        terms.push(Term::new(&v.name, f.alpha, &v.x, v.mask()));
        ws.push(&f.w);
    }
    if let (Some(l), Some(lf)) = (labels, &model.labels) {
        terms.push(Term::new("labels", lf.alpha, &l.x, Some(&l.mask)));
        ws.push(&lf.w);
    }
    check_term_shapes(&terms, &ws)?;
    Ok(terms_objective(&terms, &ws, &model.h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn update_w_identity_embedding_is_exact() {
        let x = dense(&[vec![0.2, 0.0, 0.7], vec![1.0, 0.5, 0.0]]);
        let view = ViewSpec::closed("v", x.clone(), 1.0);
        let h = DenseMatrix::identity(3);
        let up = update_w(&view, &h, &BppOptions::default()).unwrap();
        assert!(up.w.max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn update_w_empty_mask_row_is_zero() {
        let x = dense(&[vec![0.2, 0.4], vec![1.0, 0.5]]);
        let mask = MaskMatrix::from_entries(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let view = ViewSpec::open("v", x, mask, 1.0);
        let h = dense(&[vec![1.0, 0.5]]);
        let up = update_w(&view, &h, &BppOptions::default()).unwrap();
        assert_eq!(up.empty_rows, vec![1]);
        assert_eq!(up.w.row(1), &[0.0]);
        assert!(up.w[(0, 0)] > 0.0);
    }

    #[test]
    fn update_h_orthonormal_basis_clips() {
        let x = dense(&[vec![0.3, 0.0], vec![0.0, 0.8], vec![0.5, 0.1]]);
        let view = ViewSpec::closed("v", x.clone(), 1.0);
        // Orthonormal columns e1 and (e2 − e3)/√2.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = dense(&[vec![1.0, 0.0], vec![0.0, s], vec![0.0, -s]]);
        let up = update_h(
            &[view],
            None,
            std::slice::from_ref(&w),
            None,
            &BppOptions::default(),
        )
        .unwrap();
        let wtx = w.transpose().matmul(&x).unwrap();
        for (got, want) in up.h.as_slice().iter().zip(wtx.as_slice()) {
            assert!((got - want.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn update_h_fully_masked_column_is_zero() {
        let x = dense(&[vec![0.3, 0.9], vec![0.2, 0.8]]);
        let mask = MaskMatrix::from_observed_columns(2, 2, &[true, false]);
        let view = ViewSpec::open("v", x, mask, 1.0);
        let w = dense(&[vec![1.0], vec![0.5]]);
        let up = update_h(&[view], None, &[w], None, &BppOptions::default()).unwrap();
        assert_eq!(up.empty_columns, vec![1]);
        assert_eq!(up.h[(0, 1)], 0.0);
        assert!(up.h[(0, 0)] > 0.0);
    }

    #[test]
    fn rank_validation() {
        let view = ViewSpec::closed("v", DenseMatrix::zeros(2, 5), 1.0);
        for k in [0, 3] {
            let err = fit(std::slice::from_ref(&view), None, &ModelConfig::new(k)).unwrap_err();
            assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
        }
    }

    #[test]
    fn rejects_negative_observed_data() {
        let view = ViewSpec::closed("v", dense(&[vec![-1.0, 0.0], vec![0.0, 1.0]]), 1.0);
        assert!(matches!(
            fit(&[view], None, &ModelConfig::new(1)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn shape_mismatch_between_views() {
        let a = ViewSpec::closed("a", DenseMatrix::zeros(2, 3), 1.0);
        let b = ViewSpec::closed("b", DenseMatrix::zeros(2, 4), 1.0);
        assert!(matches!(
            fit(&[a, b], None, &ModelConfig::new(1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn normalization_gives_unit_row_max() {
        let x = dense(&[
            vec![0.9, 0.1, 0.4],
            vec![0.2, 0.8, 0.3],
            vec![0.5, 0.5, 0.5],
        ]);
        let model = fit(&[ViewSpec::closed("v", x, 1.0)], None, &ModelConfig::new(2)).unwrap();
        for c in 0..2 {
            let m = model.h.row(c).iter().copied().fold(0.0, f64::max);
            assert!(m == 0.0 || (m - 1.0).abs() < 1e-15);
        }
    }
}
