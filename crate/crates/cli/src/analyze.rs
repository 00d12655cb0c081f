//! `report`, `similar`, `eval`, `metrics` and `export`.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use mvnmf::analysis::{
    cluster_report, export_features, random_baseline, read_cohort, read_demographics, read_scores,
    roc_auc, write_report, youden_threshold, EmbeddingIndex, Metric, Query,
};
use mvnmf::engine::{load_model, FactorModel};
use serde_json::{json, Value};

use crate::{open_output, Outcome};

pub fn report(
    model_dir: &Path,
    top_c: usize,
    top_m: usize,
    out: Option<&PathBuf>,
) -> Result<(Outcome, Value)> {
    let model = load_model(model_dir)?;
    let rows = cluster_report(&model, top_c, top_m)?;
    write_report(open_output(out)?, &rows)?;
    let clusters: Vec<usize> = rows
        .iter()
        .map(|r| r.cluster)
        .fold(Vec::new(), |mut acc, c| {
            if !acc.contains(&c) {
                acc.push(c);
            }
            acc
        });
    info!("report covers clusters {clusters:?}");
    Ok((
        Outcome::Done,
        json!({"command": "report", "rows": rows.len(), "clusters": clusters}),
    ))
}

/// Item positions for ids, failing on any id the model does not know.
fn indices(model: &FactorModel, ids: &[String], what: &str) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = model
        .item_ids
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let unknown: Vec<&str> = ids
        .iter()
        .filter(|id| !index.contains_key(id.as_str()))
        .map(String::as_str)
        .collect();
    ensure!(
        unknown.is_empty(),
        "{what} lists ids unknown to the model: {}",
        unknown.join(", ")
    );
    Ok(ids.iter().map(|id| index[id.as_str()]).collect())
}

fn universe(model: &FactorModel, path: Option<&PathBuf>) -> Result<Option<Vec<usize>>> {
    path.map(|p| indices(model, &read_cohort(p)?, &p.display().to_string()))
        .transpose()
}

pub struct SimilarArgs<'a> {
    pub item: Option<&'a str>,
    pub vector: Option<&'a [f64]>,
    pub top_k: usize,
    pub metric: Metric,
    pub universe: Option<&'a PathBuf>,
}

pub fn similar(
    model_dir: &Path,
    args: SimilarArgs,
    out: Option<&PathBuf>,
) -> Result<(Outcome, Value)> {
    let model = load_model(model_dir)?;
    let query = match (args.item, args.vector) {
        (Some(id), None) => Query::Item(
            model
                .item_index(id)
                .with_context(|| format!("item `{id}` is not in the model"))?,
        ),
        (None, Some(v)) => Query::Vector(v.to_vec()),
        _ => bail!("give exactly one of --item or --vector"),
    };
    let universe = universe(&model, args.universe)?;
    let hits = EmbeddingIndex::new(&model.h).similar(
        &query,
        args.top_k,
        args.metric,
        universe.as_deref(),
    )?;
    let mut w = open_output(out)?;
    writeln!(w, "rank\tid\tscore")?;
    for (i, n) in hits.iter().enumerate() {
        writeln!(w, "{}\t{}\t{:.6}", i + 1, model.item_ids[n.index], n.score)?;
    }
    w.flush()?;
    Ok((
        Outcome::Done,
        json!({"command": "similar", "results": hits.len()}),
    ))
}

pub fn eval(
    model_dir: &Path,
    cohorts: &[PathBuf],
    ks: &[usize],
    metric: Metric,
    universe_file: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<(Outcome, Value)> {
    ensure!(!ks.is_empty(), "give at least one k");
    let model = load_model(model_dir)?;
    let universe = universe(&model, universe_file)?;
    let n = universe.as_ref().map_or(model.n_items(), Vec::len);
    let index = EmbeddingIndex::new(&model.h);

    let mut w = open_output(out)?;
    let header: Vec<String> = ks.iter().map(|k| format!("precision@{k}")).collect();
    writeln!(w, "cohort\tsize\t{}\trandom", header.join("\t"))?;
    let mut rows = Vec::new();
    for path in cohorts {
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        let ids = read_cohort(path)?;
        let members = indices(&model, &ids, &path.display().to_string())?;
        let precisions = ks
            .iter()
            .map(|&k| index.precision_at_k(&members, k, metric, universe.as_deref()))
            .collect::<Result<Vec<f64>, _>>()
            .with_context(|| format!("cohort {}", path.display()))?;
        let baseline = random_baseline(members.len(), n)?;
        let cells: Vec<String> = precisions.iter().map(|p| format!("{p:.4}")).collect();
        writeln!(
            w,
            "{name}\t{}\t{}\t{baseline:.4}",
            members.len(),
            cells.join("\t")
        )?;
        rows.push(json!({"cohort": name, "size": members.len(), "precision": precisions, "random": baseline}));
    }
    w.flush()?;
    Ok((
        Outcome::Done,
        json!({"command": "eval", "k": ks, "universe": n, "cohorts": rows}),
    ))
}

pub fn metrics(scores: &Path, out: Option<&PathBuf>) -> Result<(Outcome, Value)> {
    let rows = read_scores(scores)?;
    let s: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let l: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let auc = roc_auc(&s, &l)?;
    let y = youden_threshold(&s, &l)?;
    let c = y.confusion;
    let mut w = open_output(out)?;
    writeln!(w, "metric\tvalue")?;
    writeln!(w, "n\t{}", rows.len())?;
    writeln!(w, "roc_auc\t{auc:.6}")?;
    writeln!(w, "youden_threshold\t{}", y.threshold)?;
    writeln!(w, "youden_j\t{:.6}", y.j)?;
    writeln!(w, "tp\t{}\nfp\t{}\ntn\t{}\nfn\t{}", c.tp, c.fp, c.tn, c.fn_)?;
    w.flush()?;
    Ok((
        Outcome::Done,
        json!({"command": "metrics", "n": rows.len(), "roc_auc": auc, "youden": y}),
    ))
}

pub fn export(
    model_dir: &Path,
    demographics: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<(Outcome, Value)> {
    let model = load_model(model_dir)?;
    let demo = demographics.map(|p| read_demographics(p)).transpose()?;
    export_features(
        open_output(out)?,
        &model.item_ids,
        &model.h,
        demo.as_deref(),
    )?;
    Ok((
        Outcome::Done,
        json!({"command": "export", "items": model.n_items(), "demographics": demo.is_some()}),
    ))
}
