//! CSV and TSV files around the analysis operations.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::ReportRow;

/// Age and gender of one item, appended to its exported features.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Demographic {
    pub id: String,
    pub age: Option<f64>,
    pub gender: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    /// k × n, one column per row of the file.
    pub h: DenseMatrix,
    pub demographics: Option<Vec<Demographic>>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

fn write_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("writing output failed: {e}"))
}

/// Writes `id,h0,…,h{k-1}[,age,gender]`, one row per item. Embedding values
/// carry 17 significant digits so they read back exactly.
pub fn export_features<W: Write>(
    out: W,
    ids: &[String],
    h: &DenseMatrix,
    demographics: Option<&[Demographic]>,
) -> Result<()> {
    if ids.len() != h.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids for {} items",
            ids.len(),
            h.cols()
        )));
    }
    let by_id: Option<HashMap<&str, &Demographic>> = match demographics {
        None => None,
        Some(rows) => {
            let known: HashMap<&str, ()> = ids.iter().map(|s| (s.as_str(), ())).collect();
            let unknown: Vec<String> = rows
                .iter()
                .filter(|d| !known.contains_key(d.id.as_str()))
                .map(|d| d.id.clone())
                .collect();
            if !unknown.is_empty() {
                return Err(Error::UnknownItems(unknown));
            }
            Some(rows.iter().map(|d| (d.id.as_str(), d)).collect())
        }
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["id".into()];
    header.extend((0..h.rows()).map(|i| format!("h{i}")));
    if by_id.is_some() {
        header.push("age".into());
        header.push("gender".into());
    }
    w.write_record(&header).map_err(write_err)?;
    for (j, id) in ids.iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        rec.push(id.clone());
        rec.extend(h.column(j).iter().map(|v| format!("{v:.16e}")));
        if let Some(map) = &by_id {
            let d = map.get(id.as_str());
            rec.push(
                d.and_then(|d| d.age)
                    .map(|a| a.to_string())
                    .unwrap_or_default(),
            );
            rec.push(d.and_then(|d| d.gender.clone()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let k = header.iter().filter(|h| h.starts_with('h')).count();
    let with_demo = header.iter().any(|h| h == "age");
    let mut ids = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut demo = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let col: Vec<f64> = (1..=k)
            .map(|i| {
                rec.get(i).unwrap_or("").parse().map_err(|_| {
                    Error::parse(path, line, format!("malformed value in column {}", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        ids.push(rec[0].to_string());
        values.push(col);
        if with_demo {
            let age = rec.get(k + 1).filter(|s| !s.is_empty());
            let age = age
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::parse(path, line, "malformed age"))
                })
                .transpose()?;
            let gender = rec.get(k + 2).filter(|s| !s.is_empty()).map(str::to_string);
            demo.push(Demographic {
                id: rec[0].to_string(),
                age,
                gender,
            });
        }
    }
    let mut h = DenseMatrix::zeros(k, ids.len());
    for (j, col) in values.iter().enumerate() {
        h.set_column(j, col);
    }
    Ok(FeatureTable {
        ids,
        h,
        demographics: with_demo.then_some(demo),
    })
}

/// CSV with header `id,age,gender`; empty cells are missing values.
pub fn read_demographics(path: &Path) -> Result<Vec<Demographic>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub score: f64,
    pub label: bool,
}

#[derive(Deserialize)]
struct RawScore {
    id: String,
    score: f64,
    label: f64,
}

/// CSV with header `id,score,label`, label 0 or 1.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for row in r.deserialize::<RawScore>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let label = match row.label {
            1.0 => true,
            0.0 => false,
            v => {
                return Err(Error::parse(
                    path,
                    rows.len() + 2,
                    format!("label must be 0 or 1, got {v}"),
                ))
            }
        };
        rows.push(ScoreRow {
            id: row.id,
            score: row.score,
            label,
        });
    }
    Ok(rows)
}

/// One item id per line; blank lines are ignored.
pub fn read_cohort(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if !id.is_empty() {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

/// Tab-separated `cluster, size, view, rank, keyword, weight` with a header line.
pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["cluster", "size", "view", "rank", "keyword", "weight"])
        .map_err(write_err)?;
    for r in rows {
        w.write_record([
            r.cluster.to_string(),
            r.size.to_string(),
            r.view.clone(),
            r.rank.to_string(),
            r.keyword.clone(),
            format!("{:.6}", r.weight),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_without_demographics() {
        let h = DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![2.0, 0.0]]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        export_features(&mut buf, &ids, &h, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "id,h0,h1");
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 3);
    }

    #[test]
    fn features_with_demographics_round_trip() {
        let h = DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![2.0, 1e-300]]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let demo = vec![Demographic {
            id: "b".into(),
            age: Some(42.0),
            gender: Some("F".into()),
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        export_features(File::create(&p).unwrap(), &ids, &h, Some(&demo)).unwrap();
        let t = read_features(&p).unwrap();
        assert_eq!(t.ids, ids);
        assert_eq!(t.h, h);
        let d = t.demographics.unwrap();
        assert_eq!(d[0].age, None);
        assert_eq!(d[1], demo[0]);

        let stranger = vec![Demographic {
            id: "zz".into(),
            age: None,
            gender: None,
        }];
        assert!(matches!(
            export_features(Vec::new(), &ids, &h, Some(&stranger)),
            Err(Error::UnknownItems(_))
        ));
    }

    #[test]
    fn score_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "id,score,label\na,0.5,1\nb,0.25,0\n").unwrap();
        let rows = read_scores(&p).unwrap();
        assert_eq!(
            rows[1],
            ScoreRow {
                id: "b".into(),
                score: 0.25,
                label: false
            }
        );
        std::fs::write(&p, "id,score,label\na,0.5,2\n").unwrap();
        assert!(read_scores(&p).is_err());
    }
}
