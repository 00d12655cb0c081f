//! Fold-in of unseen items against fixed bases.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::matrix::{gram, DenseMatrix, Matrix};
use crate::nnls::{solve_column, NnlsStats};

use super::{FactorModel, ViewFactor};

/// Raw (unscaled) feature vectors of one item, keyed by view name. Views may be absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingQuery {
    pub views: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingQuery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_view(mut self, name: impl Into<String>, raw: Vec<f64>) -> Self {
        self.views.insert(name.into(), raw);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldIn {
    /// Length-k nonnegative embedding.
    pub h: Vec<f64>,
    /// Scaled values that fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
    pub stats: NnlsStats,
}

/// Holds the per-view weighted Gram matrices so repeated fold-ins only pay for the solve.
pub struct Transformer<'a> {
    model: &'a FactorModel,
    grams: Vec<DenseMatrix>,
}

impl<'a> Transformer<'a> {
    pub fn new(model: &'a FactorModel) -> Result<Self> {
        let grams = model
            .views
            .iter()
            .map(|v| {
                let mut g = gram(&Matrix::Dense(v.w.clone()))?;
                g.scale(v.alpha);
                Ok(g)
            })
            .collect::<Result<_>>()?;
        Ok(Transformer { model, grams })
    }

    /// `argmin_{h ≥ 0} Σ_{present views} α_i ‖x_i − W_i h‖²`.
    pub fn transform(&self, query: &EmbeddingQuery) -> Result<FoldIn> {
        if query.views.is_empty() {
            return Err(Error::NoViewsPresent);
        }
        for name in query.views.keys() {
            if self.model.view(name).is_none() {
                return Err(Error::UnknownView(name.clone()));
            }
        }
        let k = self.model.rank();
        let mut ata = DenseMatrix::zeros(k, k);
        let mut atb = vec![0.0; k];
        let mut clamped = 0;
        for (view, g) in self.model.views.iter().zip(&self.grams) {
            let Some(raw) = query.views.get(&view.name) else {
                continue;
            };
            let (x, c) = scale_query(view, raw)?;
            clamped += c;
            for (a, b) in ata.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
            for (r, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (acc, wv) in atb.iter_mut().zip(view.w.row(r)) {
                    *acc += view.alpha * xv * wv;
                }
            }
        }
        if clamped > 0 {
            warn!("{clamped} query values outside the training range were clamped");
        }
        let sol = solve_column(&ata, &atb, &self.model.config.nnls).map_err(|e| e.at_column(0))?;
        Ok(FoldIn {
            h: sol.x,
            clamped,
            stats: sol.stats,
        })
    }
}

/// Scales each block with its training parameters and clamps into `[0, 1]`.
fn scale_query(view: &ViewFactor, raw: &[f64]) -> Result<(Vec<f64>, usize)> {
    if raw.len() != view.w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "query for view `{}` has {} features, expected {}",
            view.name,
            raw.len(),
            view.w.rows()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "query for view `{}` has a non-finite value",
            view.name
        )));
    }
    let mut out = vec![0.0; raw.len()];
    let mut clamped = 0;
    for block in &view.layout.blocks {
        for r in block.start..block.end {
            let s = block.scale.apply(raw[r]);
            if !(0.0..=1.0).contains(&s) {
                clamped += 1;
            }
            out[r] = s.clamp(0.0, 1.0);
        }
    }
    Ok((out, clamped))
}

/// One-off fold-in; prefer [`Transformer`] for batches.
pub fn transform(model: &FactorModel, query: &EmbeddingQuery) -> Result<Vec<f64>> {
    Ok(Transformer::new(model)?.transform(query)?.h)
}
