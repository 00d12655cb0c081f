//! Joint factorization of several views that share one item embedding.
//!
//! Each view `i` is a nonnegative feature-by-item matrix `X_i` (m_i × n). The
//! engine minimizes
//!
//! ```text
//! Σ_i α_i ‖M_i ∘ (X_i − W_i H)‖²  +  α_l ‖M_l ∘ (X_l − W_l H)‖²
//! ```
//!
//! over `W_i, W_l, H ≥ 0`, where closed-world views use an all-ones mask and the
//! label term is optional. Minimization is block coordinate descent: every
//! sweep solves each `W_i` exactly, then `W_l`, then `H`, each as a set of
//! independent nonnegative least squares problems.

mod persist;
mod solve;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix, Matrix, ScaleParams};
use crate::nnls::{BppOptions, NnlsStats};

pub use persist::{is_valid_name, load_model, save_model, FORMAT_VERSION};
pub(crate) use persist::{read_lines, read_vocab, write_lines, write_vocab};
pub use solve::{fit, initial_h, objective, update_h, update_w, HUpdate, WUpdate};
pub use transform::{transform, EmbeddingQuery, FoldIn, Transformer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Term-frequency rows; each row is a vocabulary token.
    Tf,
    /// Precomputed dense feature rows.
    Dense,
}

/// A contiguous row range of a view, scaled with its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub name: String,
    pub start: usize,
    pub end: usize,
    pub scale: ScaleParams,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// How the rows of a view map back to their sources.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewLayout {
    pub blocks: Vec<Block>,
    /// Tokens of the TF block, in row order.
    pub vocab: Option<Vec<String>>,
}

impl ViewLayout {
    /// One unnamed dense block with identity scaling.
    pub fn plain(rows: usize) -> Self {
        ViewLayout {
            blocks: vec![Block {
                kind: BlockKind::Dense,
                name: "x".into(),
                start: 0,
                end: rows,
                scale: ScaleParams::IDENTITY,
            }],
            vocab: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end)
    }

    pub fn tf_block(&self) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == BlockKind::Tf)
    }

    fn validate(&self, rows: usize, view: &str) -> Result<()> {
        let mut next = 0;
        for b in &self.blocks {
            if b.start != next || b.end < b.start {
                return Err(Error::InvalidInput(format!(
                    "view `{view}`: blocks do not partition the rows"
                )));
            }
            next = b.end;
        }
        if next != rows {
            return Err(Error::InvalidInput(format!(
                "view `{view}`: blocks cover {next} rows, matrix has {rows}"
            )));
        }
        if let (Some(vocab), Some(tf)) = (&self.vocab, self.tf_block()) {
            if vocab.len() != tf.len() {
                return Err(Error::InvalidInput(format!(
                    "view `{view}`: vocabulary has {} tokens, TF block has {} rows",
                    vocab.len(),
                    tf.len()
                )));
            }
        }
        Ok(())
    }
}

/// Whether unobserved entries mean "no relationship" or "unknown".
#[derive(Debug, Clone, PartialEq)]
pub enum WorldAssumption {
    /// Every entry is observed; missing data is a true zero.
    Closed,
    /// Only entries marked in the mask take part in the loss.
    Open(MaskMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub name: String,
    pub x: Matrix,
    pub world: WorldAssumption,
    pub alpha: f64,
    pub layout: ViewLayout,
}

impl ViewSpec {
    pub fn closed(name: impl Into<String>, x: impl Into<Matrix>, alpha: f64) -> Self {
        let x = x.into();
        let layout = ViewLayout::plain(x.rows());
        ViewSpec {
            name: name.into(),
            x,
            world: WorldAssumption::Closed,
            alpha,
            layout,
        }
    }

    pub fn open(
        name: impl Into<String>,
        x: impl Into<Matrix>,
        mask: MaskMatrix,
        alpha: f64,
    ) -> Self {
        let x = x.into();
        let layout = ViewLayout::plain(x.rows());
        ViewSpec {
            name: name.into(),
            x,
            world: WorldAssumption::Open(mask),
            alpha,
            layout,
        }
    }

    pub fn with_layout(mut self, layout: ViewLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn mask(&self) -> Option<&MaskMatrix> {
        match &self.world {
            WorldAssumption::Closed => None,
            WorldAssumption::Open(m) => Some(m),
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.world, WorldAssumption::Closed)
    }

    /// Squared Frobenius norm over observed entries only.
    pub fn observed_frobenius_sq(&self) -> f64 {
        observed_stats(&self.x, self.mask()).0
    }

    /// Default balancing weight `1 / ‖X‖²` over observed entries (1 for an all-zero view).
    pub fn auto_alpha(&self) -> f64 {
        let norm = self.observed_frobenius_sq();
        if norm > 0.0 {
            1.0 / norm
        } else {
            1.0
        }
    }
}

/// (Σ x², Σ x, observed count) over observed entries.
pub(crate) fn observed_stats(x: &Matrix, mask: Option<&MaskMatrix>) -> (f64, f64, usize) {
    match mask {
        None => {
            let sparse = x.to_sparse();
            let sq = sparse.values().iter().map(|v| v * v).sum();
            let sum = sparse.values().iter().sum();
            (sq, sum, x.rows() * x.cols())
        }
        Some(mask) => {
            let (mut sq, mut sum) = (0.0, 0.0);
            for c in 0..mask.cols() {
                for &r in mask.column(c) {
                    let v = x.get(r, c);
                    sq += v * v;
                    sum += v;
                }
            }
            (sq, sum, mask.count())
        }
    }
}

/// Partially observed class memberships: `x[(class, item)] ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpec {
    pub classes: Vec<String>,
    pub x: Matrix,
    pub mask: MaskMatrix,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Seeded uniform `(0, 1]` entries scaled by `√(mean(X) / k)`.
    RandomUniform,
    /// Caller-supplied k×n starting embedding.
    Provided(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub init: Init,
    pub nnls: BppOptions,
}

impl ModelConfig {
    pub const DEFAULT_MAX_SWEEPS: usize = 200;
    pub const DEFAULT_REL_TOL: f64 = 1e-4;

    pub fn new(rank: usize) -> Self {
        ModelConfig {
            rank,
            max_sweeps: Self::DEFAULT_MAX_SWEEPS,
            rel_tol: Self::DEFAULT_REL_TOL,
            seed: 0,
            init: Init::RandomUniform,
            nnls: BppOptions::default(),
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            rank: self.rank,
            max_sweeps: self.max_sweeps,
            rel_tol: self.rel_tol,
            seed: self.seed,
            init: match self.init {
                Init::RandomUniform => InitKind::RandomUniform,
                Init::Provided(_) => InitKind::Provided,
            },
            nnls: self.nnls,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    RandomUniform,
    Provided,
}

/// The configuration a model was fitted with, as stored alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub rank: usize,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub init: InitKind,
    pub nnls: BppOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFactor {
    pub name: String,
    pub alpha: f64,
    pub closed: bool,
    pub layout: ViewLayout,
    /// m_i × k basis.
    pub w: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelFactor {
    pub classes: Vec<String>,
    pub alpha: f64,
    /// p × k basis.
    pub w: DenseMatrix,
}

/// Rows of one view's basis that had no observed data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmptyRows {
    pub view: String,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sweeps: usize,
    /// Basis rows set to zero because their mask row is empty.
    pub empty_w_rows: Vec<EmptyRows>,
    /// Embedding columns set to zero because no view observes the item.
    pub empty_h_columns: Vec<usize>,
    pub nnls: NnlsStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub views: Vec<ViewFactor>,
    pub labels: Option<LabelFactor>,
    /// k × n shared embedding; column j embeds item j.
    pub h: DenseMatrix,
    pub item_ids: Vec<String>,
    /// Full objective after every sweep.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub config: ConfigEcho,
    pub diagnostics: FitDiagnostics,
}

impl FactorModel {
    pub fn rank(&self) -> usize {
        self.h.rows()
    }

    pub fn n_items(&self) -> usize {
        self.h.cols()
    }

    pub fn view(&self, name: &str) -> Option<&ViewFactor> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == id)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }

    /// Replaces the default `0..n` item ids.
    pub fn set_item_ids(&mut self, ids: Vec<String>) -> Result<()> {
        if ids.len() != self.n_items() {
            return Err(Error::ShapeMismatch(format!(
                "{} item ids for {} items",
                ids.len(),
                self.n_items()
            )));
        }
        self.item_ids = ids;
        Ok(())
    }
}
