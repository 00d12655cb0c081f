//! View and label directories.
//!
//! ```text
//! <view>/manifest.json   name, shape, alpha, assumption, blocks with scale params
//! <view>/view.mtx        scaled feature × item matrix (coordinate text)
//! <view>/vocab.tsv       token<TAB>index for the TF block
//! <view>/mask.mtx        observed entries, open-world views only
//! <view>/items.txt       item ids in column order
//!
//! <labels>/labels.json   classes, alpha
//! <labels>/labels.mtx    class × item values
//! <labels>/mask.mtx      observed entries
//! <labels>/items.txt
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{
    read_lines, read_vocab, write_lines, write_vocab, Block, LabelSpec, ViewLayout, ViewSpec,
    WorldAssumption,
};
use crate::error::{Error, Result};
use crate::matrix::io::{load_mask, load_sparse, save_mask, save_sparse};
use crate::matrix::Matrix;

pub const VIEW_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const MATRIX: &str = "view.mtx";
const VOCAB: &str = "vocab.tsv";
const MASK: &str = "mask.mtx";
const ITEMS: &str = "items.txt";
const LABEL_META: &str = "labels.json";
const LABEL_MATRIX: &str = "labels.mtx";

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Assumption {
    Closed,
    Open,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewManifest {
    format_version: u32,
    name: String,
    rows: usize,
    cols: usize,
    nnz: usize,
    alpha: f64,
    assumption: Assumption,
    blocks: Vec<Block>,
    has_vocab: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelManifest {
    format_version: u32,
    classes: Vec<String>,
    alpha: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_items(dir: &Path, items: &[String], cols: usize) -> Result<()> {
    if items.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} item ids for {cols} columns",
            dir.display(),
            items.len()
        )));
    }
    if items.iter().any(|id| id.is_empty() || id.contains('\n')) {
        return Err(Error::InvalidInput(
            "item ids must be non-empty single-line strings".into(),
        ));
    }
    Ok(())
}

pub fn save_view(dir: &Path, view: &ViewSpec, items: &[String]) -> Result<()> {
    check_items(dir, items, view.x.cols())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let x = view.x.to_sparse();
    save_sparse(&dir.join(MATRIX), &x)?;
    if let Some(vocab) = &view.layout.vocab {
        write_vocab(&dir.join(VOCAB), vocab)?;
    }
    if let Some(mask) = view.mask() {
        save_mask(&dir.join(MASK), mask)?;
    }
    write_lines(&dir.join(ITEMS), items.iter().cloned())?;
    write_json(
        &dir.join(MANIFEST),
        &ViewManifest {
            format_version: VIEW_FORMAT_VERSION,
            name: view.name.clone(),
            rows: x.rows(),
            cols: x.cols(),
            nnz: x.nnz(),
            alpha: view.alpha,
            assumption: if view.is_closed() {
                Assumption::Closed
            } else {
                Assumption::Open
            },
            blocks: view.layout.blocks.clone(),
            has_vocab: view.layout.vocab.is_some(),
        },
    )
}

/// Loads a view directory, returning the view and its item ids.
pub fn load_view(dir: &Path) -> Result<(ViewSpec, Vec<String>)> {
    let meta: ViewManifest = read_json(&dir.join(MANIFEST))?;
    if meta.format_version != VIEW_FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported view format version {}",
            dir.display(),
            meta.format_version
        )));
    }
    let x = load_sparse(&dir.join(MATRIX))?;
    if x.shape() != (meta.rows, meta.cols) {
        return Err(Error::ShapeMismatch(format!(
            "{}: matrix is {}x{}, manifest says {}x{}",
            dir.display(),
            x.rows(),
            x.cols(),
            meta.rows,
            meta.cols
        )));
    }
    let items = read_lines(&dir.join(ITEMS))?;
    check_items(dir, &items, x.cols())?;
    let vocab = if meta.has_vocab {
        Some(read_vocab(&dir.join(VOCAB))?)
    } else {
        None
    };
    let world = match meta.assumption {
        Assumption::Closed => WorldAssumption::Closed,
        Assumption::Open => {
            let mask = load_mask(&dir.join(MASK))?;
            if mask.shape() != x.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: mask shape",
                    dir.display()
                )));
            }
            WorldAssumption::Open(mask)
        }
    };
    let view = ViewSpec {
        name: meta.name,
        x: Matrix::Sparse(x),
        world,
        alpha: meta.alpha,
        layout: ViewLayout {
            blocks: meta.blocks,
            vocab,
        },
    };
    Ok((view, items))
}

pub fn save_labels(dir: &Path, labels: &LabelSpec, items: &[String]) -> Result<()> {
    check_items(dir, items, labels.x.cols())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_sparse(&dir.join(LABEL_MATRIX), &labels.x.to_sparse())?;
    save_mask(&dir.join(MASK), &labels.mask)?;
    write_lines(&dir.join(ITEMS), items.iter().cloned())?;
    write_json(
        &dir.join(LABEL_META),
        &LabelManifest {
            format_version: VIEW_FORMAT_VERSION,
            classes: labels.classes.clone(),
            alpha: labels.alpha,
        },
    )
}

pub fn load_labels(dir: &Path) -> Result<(LabelSpec, Vec<String>)> {
    let meta: LabelManifest = read_json(&dir.join(LABEL_META))?;
    if meta.format_version != VIEW_FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported label format version {}",
            dir.display(),
            meta.format_version
        )));
    }
    let x = load_sparse(&dir.join(LABEL_MATRIX))?;
    let mask = load_mask(&dir.join(MASK))?;
    let items = read_lines(&dir.join(ITEMS))?;
    check_items(dir, &items, x.cols())?;
    if mask.shape() != x.shape() || x.rows() != meta.classes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}: label shapes disagree",
            dir.display()
        )));
    }
    Ok((
        LabelSpec {
            classes: meta.classes,
            x: Matrix::Sparse(x),
            mask,
            alpha: meta.alpha,
        },
        items,
    ))
}
