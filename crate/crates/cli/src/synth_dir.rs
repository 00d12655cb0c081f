//! Writes a planted instance as a raw, ingest-ready directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvnmf::engine::{BlockKind, WorldAssumption};
use mvnmf::synth::{PlantedKeyword, SynthConfig, SynthInstance};
use serde::Serialize;
use serde_json::json;

use crate::config::{Alpha, Assumption, DataSection, LabelDecl, ModelSection, RunConfig, ViewDecl};

/// Ground truth kept next to the raw data.
#[derive(Debug, Serialize)]
pub struct Truth<'a> {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub noise: f64,
    pub items: &'a [String],
    pub dominant: &'a [usize],
    pub keywords: &'a [PlantedKeyword],
    pub cohorts: Vec<Vec<&'a str>>,
}

/// Files written for a planted instance; paths are inside the output directory.
#[derive(Debug, Serialize)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub records: usize,
    pub label_records: usize,
    pub cohorts: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Text and vector records per item. TF rows become `round(x · max_count)`
/// repetitions of their token; open-world views only emit observed items.
pub fn write_dir(
    dir: &Path,
    config: &SynthConfig,
    inst: &SynthInstance,
    max_count: u32,
) -> Result<SynthOutput> {
    if max_count == 0 {
        bail!("max count must be >= 1");
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = inst.n_items();
    let dense: Vec<_> = inst.views.iter().map(|v| v.x.to_dense()).collect();

    let mut out = create(&dir.join("records.jsonl"))?;
    let mut records = 0;
    for j in 0..n {
        let id = &inst.item_ids[j];
        for (v, x) in inst.views.iter().zip(&dense) {
            if let WorldAssumption::Open(mask) = &v.world {
                if mask.column(j).is_empty() {
                    continue;
                }
            }
            for block in &v.layout.blocks {
                match block.kind {
                    BlockKind::Tf => {
                        let vocab = v
                            .layout
                            .vocab
                            .as_ref()
                            .expect("synth TF blocks carry a vocabulary");
                        let mut words: Vec<&str> = Vec::new();
                        for r in block.start..block.end {
                            let count = (x[(r, j)] * max_count as f64).round() as usize;
                            words.extend(std::iter::repeat_n(
                                vocab[r - block.start].as_str(),
                                count,
                            ));
                        }
                        let line = json!({"id": id, "view": v.name, "text": words.join(" ")});
                        writeln!(out, "{line}")?;
                    }
                    BlockKind::Dense => {
                        let values: Vec<f64> =
                            (block.start..block.end).map(|r| x[(r, j)]).collect();
                        let line = json!({"id": id, "view": v.name, "block": block.name, "vector": values});
                        writeln!(out, "{line}")?;
                    }
                }
                records += 1;
            }
        }
    }
    out.flush()?;

    let mut out = create(&dir.join("items.txt"))?;
    for id in &inst.item_ids {
        writeln!(out, "{id}")?;
    }
    out.flush()?;

    let mut label_records = 0;
    if let Some(labels) = &inst.labels {
        let x = labels.x.to_dense();
        let mut out = create(&dir.join("labels.jsonl"))?;
        for j in 0..n {
            for &c in labels.mask.column(j) {
                let line =
                    json!({"id": inst.item_ids[j], "class": labels.classes[c], "value": x[(c, j)]});
                writeln!(out, "{line}")?;
                label_records += 1;
            }
        }
        out.flush()?;
    }

    let mut cohort_files = Vec::new();
    if !inst.cohorts.is_empty() {
        let cdir = dir.join("cohorts");
        fs::create_dir_all(&cdir)?;
        for (c, members) in inst.cohorts.iter().enumerate() {
            let path = cdir.join(format!("cohort{c}.txt"));
            let mut out = create(&path)?;
            for &j in members {
                writeln!(out, "{}", inst.item_ids[j])?;
            }
            out.flush()?;
            cohort_files.push(path);
        }
    }

    let truth = Truth {
        seed: config.seed,
        n,
        k: config.k,
        noise: config.noise,
        items: &inst.item_ids,
        dominant: &inst.dominant,
        keywords: &inst.keywords,
        cohorts: inst
            .cohorts
            .iter()
            .map(|m| m.iter().map(|&j| inst.item_ids[j].as_str()).collect())
            .collect(),
    };
    fs::write(
        dir.join("truth.json"),
        serde_json::to_string_pretty(&truth)?,
    )?;

    let run = RunConfig {
        data: DataSection {
            items: Some("items.txt".into()),
            ..DataSection::default()
        },
        views: inst
            .views
            .iter()
            .map(|v| ViewDecl {
                name: v.name.clone(),
                inputs: vec!["records.jsonl".into()],
                alpha: Alpha::Auto,
                assumption: if v.is_closed() {
                    Assumption::Closed
                } else {
                    Assumption::Open
                },
                mask: None,
            })
            .collect(),
        labels: inst.labels.as_ref().map(|l| LabelDecl {
            path: "labels.jsonl".into(),
            alpha: Alpha::Auto,
            classes: Some(l.classes.clone()),
        }),
        model: ModelSection {
            rank: config.k,
            rel_tol: mvnmf::engine::ModelConfig::DEFAULT_REL_TOL,
            max_sweeps: mvnmf::engine::ModelConfig::DEFAULT_MAX_SWEEPS,
            seed: config.seed,
            out: "model".into(),
        },
    };
    fs::write(dir.join("run.toml"), toml::to_string(&run)?)?;

    Ok(SynthOutput {
        dir: dir.to_path_buf(),
        records,
        label_records,
        cohorts: cohort_files,
    })
}
