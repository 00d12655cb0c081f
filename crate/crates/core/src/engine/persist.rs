//! Model directory layout:
//!
//! ```text
//! model.json          metadata (format_version, views, weights, scaling, history)
//! h.txt               k × n embedding (dense text)
//! w.<view>.txt        m_i × k basis per view
//! w_labels.txt        p × k label basis, when labels were used
//! vocab.<view>.tsv    token<TAB>index, for views with a TF block
//! items.txt           one item id per line, in column order
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::io::{load_dense, save_dense};

use super::{Block, ConfigEcho, FactorModel, FitDiagnostics, LabelFactor, ViewFactor, ViewLayout};

pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "model.json";
const H_FILE: &str = "h.txt";
const ITEMS_FILE: &str = "items.txt";
const LABEL_FILE: &str = "w_labels.txt";

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    format_version: u32,
    rank: usize,
    n_items: usize,
    h_file: String,
    items_file: String,
    views: Vec<ViewMeta>,
    labels: Option<LabelMeta>,
    objective_history: Vec<f64>,
    converged: bool,
    config: ConfigEcho,
    diagnostics: FitDiagnostics,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewMeta {
    name: String,
    rows: usize,
    alpha: f64,
    assumption: Assumption,
    blocks: Vec<Block>,
    factor_file: String,
    vocab_file: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Assumption {
    Closed,
    Open,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelMeta {
    classes: Vec<String>,
    alpha: f64,
    factor_file: String,
}

/// View names double as file name components.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub(crate) fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_vocab(path: &Path, vocab: &[String]) -> Result<()> {
    write_lines(
        path,
        vocab.iter().enumerate().map(|(i, t)| format!("{t}\t{i}")),
    )
}

pub(crate) fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let mut vocab = Vec::new();
    for (ln, line) in read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (token, idx) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, ln + 1, "expected token<TAB>index"))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, ln + 1, "malformed index"))?;
        if idx != vocab.len() {
            return Err(Error::parse(
                path,
                ln + 1,
                "indices must be contiguous from 0",
            ));
        }
        vocab.push(token.to_string());
    }
    Ok(vocab)
}

pub fn save_model(model: &FactorModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if model.item_ids.iter().any(|id| id.contains('\n')) {
        return Err(Error::InvalidInput(
            "item ids may not contain newlines".into(),
        ));
    }
    let mut views = Vec::with_capacity(model.views.len());
    for v in &model.views {
        if !is_valid_name(&v.name) {
            return Err(Error::InvalidInput(format!(
                "view name `{}` is not file-safe",
                v.name
            )));
        }
        let factor_file = format!("w.{}.txt", v.name);
        save_dense(&dir.join(&factor_file), &v.w)?;
        let vocab_file = match &v.layout.vocab {
            Some(vocab) => {
                let f = format!("vocab.{}.tsv", v.name);
                write_vocab(&dir.join(&f), vocab)?;
                Some(f)
            }
            None => None,
        };
        views.push(ViewMeta {
            name: v.name.clone(),
            rows: v.w.rows(),
            alpha: v.alpha,
            assumption: if v.closed {
                Assumption::Closed
            } else {
                Assumption::Open
            },
            blocks: v.layout.blocks.clone(),
            factor_file,
            vocab_file,
        });
    }
    let labels = match &model.labels {
        Some(l) => {
            save_dense(&dir.join(LABEL_FILE), &l.w)?;
            Some(LabelMeta {
                classes: l.classes.clone(),
                alpha: l.alpha,
                factor_file: LABEL_FILE.into(),
            })
        }
        None => None,
    };
    save_dense(&dir.join(H_FILE), &model.h)?;
    write_lines(&dir.join(ITEMS_FILE), model.item_ids.iter().cloned())?;
    let meta = ModelMeta {
        format_version: FORMAT_VERSION,
        rank: model.rank(),
        n_items: model.n_items(),
        h_file: H_FILE.into(),
        items_file: ITEMS_FILE.into(),
        views,
        labels,
        objective_history: model.objective_history.clone(),
        converged: model.converged,
        config: model.config.clone(),
        diagnostics: model.diagnostics.clone(),
    };
    let path = dir.join(META_FILE);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_model(dir: &Path) -> Result<FactorModel> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported model format version {}",
            meta.format_version
        )));
    }
    let h = load_dense(&dir.join(&meta.h_file))?;
    if h.shape() != (meta.rank, meta.n_items) {
        return Err(Error::ShapeMismatch(format!(
            "embedding is {}x{}, metadata says {}x{}",
            h.rows(),
            h.cols(),
            meta.rank,
            meta.n_items
        )));
    }
    let item_ids = read_lines(&dir.join(&meta.items_file))?;
    if item_ids.len() != meta.n_items {
        return Err(Error::ShapeMismatch(format!(
            "{} item ids for {} items",
            item_ids.len(),
            meta.n_items
        )));
    }
    let mut views = Vec::with_capacity(meta.views.len());
    for v in meta.views {
        let w = load_dense(&dir.join(&v.factor_file))?;
        if w.shape() != (v.rows, meta.rank) {
            return Err(Error::ShapeMismatch(format!("basis for view `{}`", v.name)));
        }
        let vocab = match &v.vocab_file {
            Some(f) => Some(read_vocab(&dir.join(f))?),
            None => None,
        };
        let layout = ViewLayout {
            blocks: v.blocks,
            vocab,
        };
        layout.validate(v.rows, &v.name)?;
        views.push(ViewFactor {
            name: v.name,
            alpha: v.alpha,
            closed: matches!(v.assumption, Assumption::Closed),
            layout,
            w,
        });
    }
    let labels = match meta.labels {
        Some(l) => {
            let w = load_dense(&dir.join(&l.factor_file))?;
            if w.shape() != (l.classes.len(), meta.rank) {
                return Err(Error::ShapeMismatch("label basis".into()));
            }
            Some(LabelFactor {
                classes: l.classes,
                alpha: l.alpha,
                w,
            })
        }
        None => None,
    };
    Ok(FactorModel {
        views,
        labels,
        h,
        item_ids,
        objective_history: meta.objective_history,
        converged: meta.converged,
        config: meta.config,
        diagnostics: meta.diagnostics,
    })
}
