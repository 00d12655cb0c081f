//! Line-delimited JSON inputs.
//!
//! ```text
//! {"id": "u1", "view": "search", "text": "how to sleep better"}
//! {"id": "u1", "view": "search", "vector": [0.1, 0.4], "block": "gpt2"}
//! {"id": "u1", "class": "clicked", "value": 1}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::{build_tf, tokenize, DenseBlock, TfMatrix, Vocabulary};

const DEFAULT_BLOCK: &str = "dense";

#[derive(Debug, Clone, PartialEq)]
pub enum RecordBody {
    Text(String),
    Vector { block: String, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub view: String,
    pub body: RecordBody,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    view: String,
    text: Option<String>,
    vector: Option<Vec<f64>>,
    block: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub id: String,
    pub class: String,
    pub value: f64,
}

fn json_lines<T>(path: &Path, mut parse: impl FnMut(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line, i + 1)?);
    }
    Ok(out)
}

/// Reads item records; an input without any record is an error.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let records = json_lines(path, |line, ln| {
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, ln, e.to_string()))?;
        let body =
            match (raw.text, raw.vector) {
                (Some(text), None) if raw.block.is_none() => RecordBody::Text(text),
                (None, Some(values)) => {
                    if values.is_empty() {
                        return Err(Error::parse(path, ln, "empty vector"));
                    }
                    RecordBody::Vector {
                        block: raw.block.unwrap_or_else(|| DEFAULT_BLOCK.to_string()),
                        values,
                    }
                }
                _ => return Err(Error::parse(
                    path,
                    ln,
                    "a record needs exactly one of `text` or `vector` (`block` only with `vector`)",
                )),
            };
        Ok(Record {
            id: raw.id,
            view: raw.view,
            body,
        })
    })?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no records",
            path.display()
        )));
    }
    Ok(records)
}

pub fn read_label_log(path: &Path) -> Result<Vec<LabelRecord>> {
    json_lines(path, |line, ln| {
        serde_json::from_str(line).map_err(|e| Error::parse(path, ln, e.to_string()))
    })
}

/// Everything recorded for one view, indexed by item position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewRecords {
    /// Concatenated tokens per item.
    pub docs: Vec<Vec<String>>,
    /// Dense blocks in first-seen order; `None` where an item has no vector.
    pub dense: Vec<(String, Vec<Option<Vec<f64>>>)>,
    /// Items with at least one record in this view.
    pub present: Vec<bool>,
}

impl ViewRecords {
    fn with_items(n: usize) -> Self {
        ViewRecords {
            docs: vec![Vec::new(); n],
            dense: Vec::new(),
            present: vec![false; n],
        }
    }

    pub fn has_text(&self) -> bool {
        self.docs.iter().any(|d| !d.is_empty())
    }

    pub fn tf(&self, vocab: &mut Vocabulary) -> TfMatrix {
        build_tf(&self.docs, vocab)
    }

    /// Dense blocks as dimension × item matrices; items without a vector get a zero column.
    pub fn dense_blocks(&self) -> Vec<DenseBlock> {
        self.dense
            .iter()
            .map(|(name, cols)| {
                let dim = cols.iter().flatten().map(Vec::len).next().unwrap_or(0);
                let mut values = DenseMatrix::zeros(dim, cols.len());
                for (j, col) in cols.iter().enumerate() {
                    if let Some(v) = col {
                        values.set_column(j, v);
                    }
                }
                DenseBlock {
                    name: name.clone(),
                    values,
                }
            })
            .collect()
    }

    pub fn observed_items(&self, items: &[String]) -> Vec<String> {
        items
            .iter()
            .zip(&self.present)
            .filter(|(_, &p)| p)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Item universe plus per-view records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemCorpus {
    items: Vec<String>,
    views: BTreeMap<String, ViewRecords>,
}

impl ItemCorpus {
    /// Groups records by view. Without an explicit item list the universe is
    /// every record id in first-seen order.
    pub fn from_records(records: &[Record], items: Option<Vec<String>>) -> Result<Self> {
        let items = match items {
            Some(items) => items,
            None => {
                let mut seen = std::collections::HashSet::new();
                records
                    .iter()
                    .filter(|r| seen.insert(r.id.as_str()))
                    .map(|r| r.id.clone())
                    .collect()
            }
        };
        let mut index: HashMap<&str, usize> = HashMap::with_capacity(items.len());
        for (j, id) in items.iter().enumerate() {
            if index.insert(id.as_str(), j).is_some() {
                return Err(Error::InvalidInput(format!("duplicate item id `{id}`")));
            }
        }
        let mut unknown: Vec<String> = Vec::new();
        for r in records {
            if !index.contains_key(r.id.as_str()) && !unknown.contains(&r.id) {
                unknown.push(r.id.clone());
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownItems(unknown));
        }

        let n = items.len();
        let mut views: BTreeMap<String, ViewRecords> = BTreeMap::new();
        for r in records {
            let j = index[r.id.as_str()];
            let view = views
                .entry(r.view.clone())
                .or_insert_with(|| ViewRecords::with_items(n));
            view.present[j] = true;
            match &r.body {
                RecordBody::Text(text) => view.docs[j].extend(tokenize(text)),
                RecordBody::Vector { block, values } => {
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "item `{}` view `{}`: non-finite vector value",
                            r.id, r.view
                        )));
                    }
                    let slot = match view.dense.iter().position(|(b, _)| b == block) {
                        Some(p) => p,
                        None => {
                            view.dense.push((block.clone(), vec![None; n]));
                            view.dense.len() - 1
                        }
                    };
                    let cols = &mut view.dense[slot].1;
                    if let Some(len) = cols.iter().flatten().map(Vec::len).next() {
                        if len != values.len() {
                            return Err(Error::ShapeMismatch(format!(
                                "view `{}` block `{block}`: item `{}` has {} values, others have {len}",
                                r.view,
                                r.id,
                                values.len()
                            )));
                        }
                    }
                    if cols[j].is_some() {
                        return Err(Error::InvalidInput(format!(
                            "item `{}` has two vectors for view `{}` block `{block}`",
                            r.id, r.view
                        )));
                    }
                    cols[j] = Some(values.clone());
                }
            }
        }
        Ok(ItemCorpus { items, views })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn view(&self, name: &str) -> Option<&ViewRecords> {
        self.views.get(name)
    }

    pub fn view_names(&self) -> impl Iterator<Item = &str> {
        self.views.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(lines.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_text_and_vector_records() {
        let f = write(concat!(
            "{\"id\":\"u1\",\"view\":\"search\",\"text\":\"Sleep apnea\"}\n",
            "\n",
            "{\"id\":\"u2\",\"view\":\"search\",\"vector\":[1.0,2.0],\"block\":\"emb\"}\n",
        ));
        let recs = read_records(f.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].body, RecordBody::Text("Sleep apnea".into()));
        let corpus = ItemCorpus::from_records(&recs, None).unwrap();
        assert_eq!(corpus.items(), &["u1".to_string(), "u2".to_string()]);
        let v = corpus.view("search").unwrap();
        assert_eq!(v.docs[0], vec!["sleep".to_string(), "apnea".to_string()]);
        let blocks = v.dense_blocks();
        assert_eq!(blocks[0].values.column(0), vec![0.0, 0.0]);
        assert_eq!(blocks[0].values.column(1), vec![1.0, 2.0]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let f = write("{\"id\":\"u1\",\"view\":\"s\",\"text\":\"a\"}\n{\"id\":\"u2\"}\n");
        match read_records(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let both = write("{\"id\":\"u1\",\"view\":\"s\",\"text\":\"a\",\"vector\":[1]}\n");
        assert!(matches!(
            read_records(both.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_input_is_an_error() {
        let f = write("\n\n");
        assert!(matches!(
            read_records(f.path()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn vector_lengths_must_agree() {
        let recs = vec![
            Record {
                id: "a".into(),
                view: "v".into(),
                body: RecordBody::Vector {
                    block: "e".into(),
                    values: vec![1.0],
                },
            },
            Record {
                id: "b".into(),
                view: "v".into(),
                body: RecordBody::Vector {
                    block: "e".into(),
                    values: vec![1.0, 2.0],
                },
            },
        ];
        assert!(matches!(
            ItemCorpus::from_records(&recs, None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn explicit_item_list_rejects_strangers() {
        let recs = vec![Record {
            id: "zz".into(),
            view: "v".into(),
            body: RecordBody::Text("x".into()),
        }];
        match ItemCorpus::from_records(&recs, Some(vec!["a".into()])) {
            Err(Error::UnknownItems(ids)) => assert_eq!(ids, vec!["zz".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
