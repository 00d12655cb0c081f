//! `ingest`, `fit` and `transform`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use mvnmf::analysis::{export_features, read_cohort};
use mvnmf::engine::{
    fit, load_model, save_model, EmbeddingQuery, Transformer, ViewSpec, WorldAssumption,
};
use mvnmf::error::Error;
use mvnmf::ingest::{
    assemble_view, build_diag_mask, build_labels, label_classes, load_labels, load_view,
    read_label_log, read_records, save_labels, save_view, ItemCorpus, QueryEncoder, Record,
    TfBlock, ViewSummary, Vocabulary,
};
use mvnmf::matrix::DenseMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Alpha, Assumption, RunConfig};
use crate::{open_output, Outcome};

/// Reads every distinct input file once, in declaration order.
fn read_inputs(cfg: &RunConfig) -> Result<Vec<Record>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for path in cfg.views.iter().flat_map(|v| &v.inputs) {
        if seen.insert(path.clone()) {
            records.extend(read_records(path)?);
        }
    }
    let declared: HashSet<&str> = cfg.views.iter().map(|v| v.name.as_str()).collect();
    if let Some(r) = records.iter().find(|r| !declared.contains(r.view.as_str())) {
        bail!(
            "record for item `{}` names undeclared view `{}`",
            r.id,
            r.view
        );
    }
    Ok(records)
}

#[derive(Serialize)]
struct LabelSummary {
    classes: Vec<String>,
    observed: usize,
    alpha: f64,
}

pub fn ingest(cfg: &RunConfig) -> Result<(Outcome, Value)> {
    let records = read_inputs(cfg)?;
    let items = cfg.data.items.as_deref().map(read_cohort).transpose()?;
    let corpus = ItemCorpus::from_records(&records, items)?;
    let items = corpus.items();
    info!("{} records over {} items", records.len(), items.len());

    let mut summaries = Vec::new();
    for decl in &cfg.views {
        let recs = corpus
            .view(&decl.name)
            .with_context(|| format!("view `{}` has no records", decl.name))?;
        let (tf, dropped) = if recs.has_text() {
            let mut vocab = Vocabulary::new();
            let tf = recs.tf(&mut vocab);
            (
                Some(TfBlock {
                    counts: tf.counts,
                    vocab: vocab.into_tokens(),
                }),
                tf.dropped,
            )
        } else {
            (None, 0)
        };
        let dense = recs.dense_blocks();
        let world = match decl.assumption {
            Assumption::Closed => WorldAssumption::Closed,
            Assumption::Open => {
                let rows = tf.as_ref().map_or(0, |t| t.counts.rows())
                    + dense.iter().map(|d| d.values.rows()).sum::<usize>();
                let observed = match &decl.mask {
                    Some(path) => read_cohort(path)?,
                    None => recs.observed_items(items),
                };
                WorldAssumption::Open(build_diag_mask(rows, items, &observed)?)
            }
        };
        let view = assemble_view(&decl.name, tf, dense, decl.alpha.value(), world)?;
        save_view(&cfg.view_dir(&decl.name), &view, items)?;
        let s = ViewSummary::of(&view, dropped);
        info!(
            "view {}: {}x{}, {} nonzeros ({:.4} dense), alpha {:.4e}{}",
            s.name,
            s.rows,
            s.cols,
            s.nnz,
            s.density,
            s.alpha,
            s.observed_items
                .map(|o| format!(", {o} observed items"))
                .unwrap_or_default()
        );
        summaries.push(s);
    }

    let mut label_summary = None;
    if let Some(decl) = &cfg.labels {
        let log = read_label_log(&decl.path)?;
        let classes = decl.classes.clone().unwrap_or_else(|| label_classes(&log));
        let labels = build_labels(&log, items, &classes, decl.alpha.value())?;
        save_labels(&cfg.labels_dir(), &labels, items)?;
        info!(
            "labels: {} classes, {} observed entries, alpha {:.4e}",
            classes.len(),
            labels.mask.count(),
            labels.alpha
        );
        label_summary = Some(LabelSummary {
            classes,
            observed: labels.mask.count(),
            alpha: labels.alpha,
        });
    }
    let summary = json!({
        "command": "ingest",
        "items": items.len(),
        "views": summaries,
        "labels": label_summary,
        "ingest_dir": cfg.data.ingest_dir,
    });
    Ok((Outcome::Done, summary))
}

fn check_items(what: &str, got: &[String], want: &[String]) -> Result<()> {
    ensure!(
        got == want,
        "{what} was ingested over a different item list; run ingest again"
    );
    Ok(())
}

pub fn load_views(cfg: &RunConfig) -> Result<(Vec<ViewSpec>, Vec<String>)> {
    let mut views = Vec::new();
    let mut items: Option<Vec<String>> = None;
    for decl in &cfg.views {
        let dir = cfg.view_dir(&decl.name);
        let (mut view, view_items) = load_view(&dir)
            .with_context(|| format!("loading view `{}`; run ingest first", decl.name))?;
        match &items {
            None => items = Some(view_items),
            Some(first) => check_items(&format!("view `{}`", decl.name), &view_items, first)?,
        }
        if let Alpha::Value(a) = decl.alpha {
            view.alpha = a;
        }
        views.push(view);
    }
    Ok((views, items.expect("at least one view")))
}

pub fn fit_cmd(cfg: &RunConfig) -> Result<(Outcome, Value)> {
    let (views, items) = load_views(cfg)?;
    let labels = match &cfg.labels {
        None => None,
        Some(decl) => {
            let (mut labels, label_items) =
                load_labels(&cfg.labels_dir()).context("loading labels; run ingest first")?;
            check_items("the label log", &label_items, &items)?;
            if let Alpha::Value(a) = decl.alpha {
                labels.alpha = a;
            }
            Some(labels)
        }
    };
    let config = cfg.model.engine_config();
    let mut model = fit(&views, labels.as_ref(), &config)?;
    model.set_item_ids(items)?;
    save_model(&model, &cfg.model.out)?;

    let energy: f64 = views
        .iter()
        .map(|v| v.alpha * v.observed_frobenius_sq())
        .sum::<f64>()
        + labels.as_ref().map_or(0.0, |l| {
            l.alpha
                * l.mask
                    .entries()
                    .map(|(r, c)| l.x.get(r, c).powi(2))
                    .sum::<f64>()
        });
    let history = &model.objective_history;
    let last = model.final_objective().unwrap_or(f64::NAN);
    info!(
        "{} sweeps, objective {:.6e} -> {:.6e} ({:.3e} of data energy), {}",
        model.diagnostics.sweeps,
        history.first().copied().unwrap_or(f64::NAN),
        last,
        last / energy,
        if model.converged {
            "converged"
        } else {
            "NOT converged"
        }
    );
    if !model.converged {
        warn!(
            "stopped at max_sweeps = {}; the model was saved anyway",
            config.max_sweeps
        );
    }
    let summary = json!({
        "command": "fit",
        "converged": model.converged,
        "sweeps": model.diagnostics.sweeps,
        "objective": last,
        "relative_objective": last / energy,
        "objective_history": history,
        "rank": model.rank(),
        "items": model.n_items(),
        "out": cfg.model.out,
    });
    let outcome = if model.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    };
    Ok((outcome, summary))
}

fn is_blank(path: &Path) -> Result<bool> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.trim().is_empty())
}

/// Embedding and unknown-token count, or None when the query has no view present.
type Folded = Option<(Vec<f64>, usize)>;

pub fn transform_cmd(
    model_dir: &Path,
    queries: &Path,
    out: Option<&PathBuf>,
) -> Result<(Outcome, Value)> {
    let model = load_model(model_dir)?;
    let k = model.rank();
    let records = if is_blank(queries)? {
        Vec::new()
    } else {
        read_records(queries)?
    };
    let corpus = ItemCorpus::from_records(&records, None)?;
    for name in corpus.view_names() {
        if model.view(name).is_none() {
            return Err(Error::UnknownView(name.to_string()).into());
        }
    }
    let encoders = model
        .views
        .iter()
        .map(|v| QueryEncoder::new(&v.layout).map(|e| (v.name.as_str(), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let transformer = Transformer::new(&model)?;

    let results: Vec<Result<Folded>> = (0..corpus.items().len())
        .into_par_iter()
        .map(|j| {
            let mut query = EmbeddingQuery::new();
            let mut unknown = 0;
            for (name, enc) in &encoders {
                let Some(recs) = corpus.view(name) else {
                    continue;
                };
                if !recs.present[j] {
                    continue;
                }
                let (raw, u) = enc.encode(name, recs, j)?;
                unknown += u;
                query = query.with_view(*name, raw);
            }
            match transformer.transform(&query) {
                Ok(fold) => Ok(Some((fold.h, unknown))),
                Err(Error::NoViewsPresent) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect();

    let mut ids = Vec::new();
    let mut cols = Vec::new();
    let mut skipped = 0;
    let mut unknown_tokens = 0;
    for (id, r) in corpus.items().iter().zip(results) {
        match r.with_context(|| format!("query `{id}`"))? {
            Some((h, u)) => {
                ids.push(id.clone());
                cols.push(h);
                unknown_tokens += u;
            }
            None => {
                warn!("query `{id}` has no view present; skipped");
                skipped += 1;
            }
        }
    }
    let mut h = DenseMatrix::zeros(k, cols.len());
    for (j, c) in cols.iter().enumerate() {
        h.set_column(j, c);
    }
    export_features(open_output(out)?, &ids, &h, None)?;
    if unknown_tokens > 0 {
        info!("{unknown_tokens} query tokens are outside the training vocabulary and were ignored");
    }
    info!("embedded {} queries, skipped {skipped}", ids.len());
    let summary = json!({
        "command": "transform",
        "embedded": ids.len(),
        "skipped": skipped,
        "unknown_tokens": unknown_tokens,
    });
    Ok((Outcome::Done, summary))
}
