//! From raw per-item records to scaled views and label matrices.

mod records;
mod store;

use std::collections::{HashMap, HashSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::engine::{Block, BlockKind, LabelSpec, ViewLayout, ViewSpec, WorldAssumption};
use crate::error::{Error, Result};
use crate::matrix::{minmax_scale, DenseMatrix, MaskMatrix, Matrix, SparseMatrix};

pub use records::{
    read_label_log, read_records, ItemCorpus, LabelRecord, Record, RecordBody, ViewRecords,
};
pub use store::{load_labels, load_view, save_labels, save_view, VIEW_FORMAT_VERSION};

/// Lowercases and splits on every non-alphanumeric character; tokens shorter
/// than two characters are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Token to TF-row mapping in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    frozen: bool,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// A frozen vocabulary over `tokens`, which must be distinct.
    pub fn frozen(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary token `{t}`"
                )));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            frozen: true,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    /// Row of `token`, adding it unless frozen.
    fn lookup_or_insert(&mut self, token: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(token) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        Some(i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfMatrix {
    /// term × item raw counts.
    pub counts: SparseMatrix,
    /// Tokens a frozen vocabulary did not know.
    pub dropped: usize,
}

/// Counts tokens per item. `docs[j]` is the concatenated token stream of item `j`.
pub fn build_tf(docs: &[Vec<String>], vocab: &mut Vocabulary) -> TfMatrix {
    let mut per_item: Vec<HashMap<usize, f64>> = Vec::with_capacity(docs.len());
    let mut dropped = 0;
    for doc in docs {
        let mut counts = HashMap::new();
        for tok in doc {
            match vocab.lookup_or_insert(tok) {
                Some(t) => *counts.entry(t).or_insert(0.0) += 1.0,
                None => dropped += 1,
            }
        }
        per_item.push(counts);
    }
    if dropped > 0 {
        debug!("{dropped} tokens outside the frozen vocabulary were dropped");
    }
    let mut triplets: Vec<(usize, usize, f64)> = per_item
        .into_iter()
        .enumerate()
        .flat_map(|(j, counts)| counts.into_iter().map(move |(t, c)| (t, j, c)))
        .collect();
    triplets.sort_unstable_by_key(|&(t, j, _)| (t, j));
    let counts =
        SparseMatrix::from_triplets(vocab.len(), docs.len(), &triplets).expect("indices in range");
    TfMatrix { counts, dropped }
}

/// Raw TF counts with the tokens naming its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TfBlock {
    pub counts: SparseMatrix,
    pub vocab: Vec<String>,
}

/// Precomputed feature rows (dimension × item).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub name: String,
    pub values: DenseMatrix,
}

/// Stacks the TF block (if any) above the dense blocks, scaling each block on its own.
///
/// `alpha = None` picks `1 / ‖X‖²` over observed entries of the scaled view.
pub fn assemble_view(
    name: &str,
    tf: Option<TfBlock>,
    dense: Vec<DenseBlock>,
    alpha: Option<f64>,
    world: WorldAssumption,
) -> Result<ViewSpec> {
    let mut n: Option<usize> = None;
    let mut check_cols = |cols: usize, what: &str| -> Result<()> {
        match n {
            Some(n) if n != cols => Err(Error::ShapeMismatch(format!(
                "view `{name}`: {what} has {cols} items, expected {n}"
            ))),
            _ => {
                n = Some(cols);
                Ok(())
            }
        }
    };
    let mut parts: Vec<SparseMatrix> = Vec::new();
    let mut blocks = Vec::new();
    let mut vocab = None;
    let mut start = 0;

    if let Some(tf) = tf.filter(|t| t.counts.rows() > 0) {
        check_cols(tf.counts.cols(), "the TF block")?;
        if tf.vocab.len() != tf.counts.rows() {
            return Err(Error::ShapeMismatch(format!(
                "view `{name}`: {} tokens for {} TF rows",
                tf.vocab.len(),
                tf.counts.rows()
            )));
        }
        let (scaled, scale) = minmax_scale(&Matrix::Sparse(tf.counts))?;
        if scale.degenerate {
            warn!("view `{name}`: TF block is constant and scales to zero");
        }
        let end = start + scaled.rows();
        blocks.push(Block {
            kind: BlockKind::Tf,
            name: "tf".into(),
            start,
            end,
            scale,
        });
        parts.push(scaled.to_sparse());
        vocab = Some(tf.vocab);
        start = end;
    }
    let mut seen = HashSet::new();
    for d in dense {
        check_cols(d.values.cols(), &format!("dense block `{}`", d.name))?;
        if d.name == "tf" || !seen.insert(d.name.clone()) {
            return Err(Error::InvalidInput(format!(
                "view `{name}`: dense block name `{}` is reserved or repeated",
                d.name
            )));
        }
        if d.values.rows() == 0 {
            continue;
        }
        let (scaled, scale) = minmax_scale(&Matrix::Dense(d.values))?;
        if scale.degenerate {
            warn!(
                "view `{name}`: dense block `{}` is constant and scales to zero",
                d.name
            );
        }
        let end = start + scaled.rows();
        blocks.push(Block {
            kind: BlockKind::Dense,
            name: d.name,
            start,
            end,
            scale,
        });
        parts.push(scaled.to_sparse());
        start = end;
    }
    if parts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "view `{name}` has no feature rows"
        )));
    }
    let refs: Vec<&SparseMatrix> = parts.iter().collect();
    let x = SparseMatrix::vstack(&refs)?;
    if let WorldAssumption::Open(mask) = &world {
        if mask.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "view `{name}`: mask is {}x{}, view is {}x{}",
                mask.rows(),
                mask.cols(),
                x.rows(),
                x.cols()
            )));
        }
    }
    let mut view = ViewSpec {
        name: name.to_string(),
        x: Matrix::Sparse(x),
        world,
        alpha: 1.0,
        layout: ViewLayout { blocks, vocab },
    };
    view.alpha = match alpha {
        Some(a) if a > 0.0 && a.is_finite() => a,
        Some(a) => {
            return Err(Error::InvalidConfig(format!(
                "view `{name}`: alpha {a} must be > 0"
            )))
        }
        None => view.auto_alpha(),
    };
    Ok(view)
}

/// Label matrix from a log: both logged ones and logged zeros are observed.
///
/// `alpha = None` picks `1 / (number of observed ones)`, or 1 when there are none.
pub fn build_labels(
    log: &[LabelRecord],
    items: &[String],
    classes: &[String],
    alpha: Option<f64>,
) -> Result<LabelSpec> {
    let item_index: HashMap<&str, usize> = items
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let class_index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut unknown: Vec<String> = log
        .iter()
        .filter(|r| !item_index.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(Error::UnknownItems(unknown));
    }
    let mut seen = HashSet::new();
    let mut triplets = Vec::new();
    let mut entries = Vec::new();
    for r in log {
        let c = *class_index
            .get(r.class.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("unknown label class `{}`", r.class)))?;
        let j = item_index[r.id.as_str()];
        if !seen.insert((c, j)) {
            return Err(Error::InvalidInput(format!(
                "duplicate label for item `{}` and class `{}`",
                r.id, r.class
            )));
        }
        if r.value != 0.0 && r.value != 1.0 {
            return Err(Error::InvalidInput(format!(
                "label value for item `{}` must be 0 or 1, got {}",
                r.id, r.value
            )));
        }
        if r.value == 1.0 {
            triplets.push((c, j, 1.0));
        }
        entries.push((c, j));
    }
    let x = SparseMatrix::from_triplets(classes.len(), items.len(), &triplets)?;
    let mask = MaskMatrix::from_entries(classes.len(), items.len(), &entries)?;
    let alpha = match alpha {
        Some(a) if a > 0.0 && a.is_finite() => a,
        Some(a) => return Err(Error::InvalidConfig(format!("label alpha {a} must be > 0"))),
        None if triplets.is_empty() => 1.0,
        None => 1.0 / triplets.len() as f64,
    };
    Ok(LabelSpec {
        classes: classes.to_vec(),
        x: Matrix::Sparse(x),
        mask,
        alpha,
    })
}

/// Distinct classes of a label log in first-seen order.
pub fn label_classes(log: &[LabelRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    log.iter()
        .filter(|r| seen.insert(r.class.as_str()))
        .map(|r| r.class.clone())
        .collect()
}

/// Whole columns observed for the items in `observed`, nothing for the rest.
pub fn build_diag_mask(rows: usize, items: &[String], observed: &[String]) -> Result<MaskMatrix> {
    let index: HashMap<&str, usize> = items
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let mut flags = vec![false; items.len()];
    let mut unknown = Vec::new();
    for id in observed {
        match index.get(id.as_str()) {
            Some(&j) => flags[j] = true,
            None => unknown.push(id.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownItems(unknown));
    }
    Ok(MaskMatrix::from_observed_columns(rows, items.len(), &flags))
}

/// Per-view shape and sparsity, as printed by the ingest command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub density: f64,
    pub alpha: f64,
    pub observed_items: Option<usize>,
    pub blocks: Vec<Block>,
    pub dropped_tokens: usize,
}

impl ViewSummary {
    pub fn of(view: &ViewSpec, dropped_tokens: usize) -> Self {
        let (rows, cols) = view.x.shape();
        let nnz = view.x.to_sparse().nnz();
        let cells = (rows * cols).max(1) as f64;
        ViewSummary {
            name: view.name.clone(),
            rows,
            cols,
            nnz,
            density: nnz as f64 / cells,
            alpha: view.alpha,
            observed_items: view
                .mask()
                .map(|m| (0..m.cols()).filter(|&c| !m.column(c).is_empty()).count()),
            blocks: view.layout.blocks.clone(),
            dropped_tokens,
        }
    }
}

/// Lays out raw query records like a trained view, for fold-in.
pub struct QueryEncoder<'a> {
    layout: &'a ViewLayout,
    vocab: Option<Vocabulary>,
}

impl<'a> QueryEncoder<'a> {
    pub fn new(layout: &'a ViewLayout) -> Result<Self> {
        let vocab = match (&layout.vocab, layout.tf_block()) {
            (Some(tokens), Some(_)) => Some(Vocabulary::frozen(tokens.clone())?),
            _ => None,
        };
        Ok(QueryEncoder { layout, vocab })
    }

    /// Raw (unscaled) features of item `j`: TF counts over the training vocabulary
    /// and dense blocks matched by name. Returns the vector and the number of
    /// tokens outside the vocabulary.
    pub fn encode(&self, view: &str, records: &ViewRecords, j: usize) -> Result<(Vec<f64>, usize)> {
        let mut out = vec![0.0; self.layout.rows()];
        let mut unknown = 0;
        let doc = &records.docs[j];
        match (&self.vocab, self.layout.tf_block()) {
            (Some(vocab), Some(tf)) => {
                for token in doc {
                    match vocab.get(token) {
                        Some(r) => out[tf.start + r] += 1.0,
                        None => unknown += 1,
                    }
                }
            }
            _ if !doc.is_empty() => {
                return Err(Error::InvalidInput(format!(
                    "view `{view}` was trained without text"
                )));
            }
            _ => {}
        }
        for (name, cols) in &records.dense {
            let Some(values) = &cols[j] else { continue };
            let block = self
                .layout
                .blocks
                .iter()
                .find(|b| b.kind == BlockKind::Dense && &b.name == name)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("view `{view}` has no dense block `{name}`"))
                })?;
            if values.len() != block.len() {
                return Err(Error::ShapeMismatch(format!(
                    "view `{view}` block `{name}`: {} values, expected {}",
                    values.len(),
                    block.len()
                )));
            }
            out[block.start..block.end].copy_from_slice(values);
        }
        Ok((out, unknown))
    }
}
