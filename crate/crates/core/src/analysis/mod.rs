//! Reading a fitted model: soft clusters, keywords, neighbours and metrics.

mod export;
mod metrics;
mod similarity;

use serde::Serialize;

use crate::engine::FactorModel;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub use export::{
    export_features, read_cohort, read_demographics, read_features, read_scores, write_report,
    Demographic, FeatureTable, ScoreRow,
};
pub use metrics::{confusion_at, random_baseline, roc_auc, youden_threshold, Confusion, Youden};
pub use similarity::{precision_at_k, similar_items, EmbeddingIndex, Metric, Neighbor, Query};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub item: String,
    /// Nonnegative weights summing to one.
    pub distribution: Vec<f64>,
    /// Argmax of the distribution, lowest index on ties.
    pub primary: usize,
    /// The embedding column was all zero; the distribution is uniform.
    pub unassigned: bool,
}

/// Normalizes one embedding column into a distribution.
pub fn assign(item: &str, column: &[f64]) -> ClusterAssignment {
    let k = column.len();
    let total: f64 = column.iter().sum();
    if total > 0.0 {
        let distribution: Vec<f64> = column.iter().map(|v| v / total).collect();
        let mut primary = 0;
        for (i, &v) in column.iter().enumerate() {
            if v > column[primary] {
                primary = i;
            }
        }
        ClusterAssignment {
            item: item.to_string(),
            distribution,
            primary,
            unassigned: false,
        }
    } else {
        ClusterAssignment {
            item: item.to_string(),
            distribution: vec![1.0 / k as f64; k],
            primary: 0,
            unassigned: true,
        }
    }
}

pub fn soft_cluster(model: &FactorModel) -> Vec<ClusterAssignment> {
    soft_cluster_h(&model.h, &model.item_ids)
}

pub fn soft_cluster_h(h: &DenseMatrix, items: &[String]) -> Vec<ClusterAssignment> {
    items
        .iter()
        .enumerate()
        .map(|(j, id)| assign(id, &h.column(j)))
        .collect()
}

/// Cluster ids with their primary-member counts, largest first, lowest index on ties.
///
/// Unassigned items and empty clusters are left out.
pub fn largest_clusters(assignments: &[ClusterAssignment], top_c: usize) -> Vec<(usize, usize)> {
    let k = assignments.first().map_or(0, |a| a.distribution.len());
    let mut counts = vec![0usize; k];
    for a in assignments.iter().filter(|a| !a.unassigned) {
        counts[a.primary] += 1;
    }
    let mut ranked: Vec<(usize, usize)> = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_c);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Keyword {
    pub token: String,
    /// Row in the view (and in the vocabulary).
    pub row: usize,
    pub weight: f64,
}

/// The `m` TF tokens with the largest basis weight on `cluster`.
pub fn top_keywords(
    model: &FactorModel,
    view: &str,
    cluster: usize,
    m: usize,
) -> Result<Vec<Keyword>> {
    let v = model
        .view(view)
        .ok_or_else(|| Error::UnknownView(view.to_string()))?;
    if cluster >= model.rank() {
        return Err(Error::ClusterOutOfRange {
            index: cluster,
            rank: model.rank(),
        });
    }
    let (Some(tf), Some(vocab)) = (v.layout.tf_block(), &v.layout.vocab) else {
        return Err(Error::InvalidInput(format!(
            "view `{view}` has no vocabulary"
        )));
    };
    let mut rows: Vec<usize> = (tf.start..tf.end).collect();
    rows.sort_by(|&a, &b| {
        v.w[(b, cluster)]
            .total_cmp(&v.w[(a, cluster)])
            .then(a.cmp(&b))
    });
    rows.truncate(m);
    Ok(rows
        .into_iter()
        .map(|r| Keyword {
            token: vocab[r - tf.start].clone(),
            row: r,
            weight: v.w[(r, cluster)],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub cluster: usize,
    pub size: usize,
    pub view: String,
    pub rank: usize,
    pub keyword: String,
    pub weight: f64,
}

/// Top `top_m` keywords per view for each of the `top_c` largest clusters.
pub fn cluster_report(model: &FactorModel, top_c: usize, top_m: usize) -> Result<Vec<ReportRow>> {
    let views: Vec<&str> = model
        .views
        .iter()
        .filter(|v| v.layout.vocab.is_some() && v.layout.tf_block().is_some())
        .map(|v| v.name.as_str())
        .collect();
    if views.is_empty() {
        return Err(Error::InvalidInput(
            "no view of the model has a vocabulary".into(),
        ));
    }
    let assignments = soft_cluster(model);
    let mut rows = Vec::new();
    for (cluster, size) in largest_clusters(&assignments, top_c) {
        for view in &views {
            for (i, kw) in top_keywords(model, view, cluster, top_m)?
                .into_iter()
                .enumerate()
            {
                rows.push(ReportRow {
                    cluster,
                    size,
                    view: view.to_string(),
                    rank: i + 1,
                    keyword: kw.token,
                    weight: kw.weight,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distributions_and_ties() {
        let a = assign("x", &[0.2, 0.8]);
        assert_eq!((a.primary, a.unassigned), (1, false));
        assert!((a.distribution[0] - 0.2).abs() < 1e-15);
        assert_eq!(assign("x", &[0.5, 0.5]).primary, 0);
        let z = assign("x", &[0.0, 0.0]);
        assert!(z.unassigned);
        assert_eq!(z.distribution, vec![0.5, 0.5]);
    }

    fn with_primary(p: &[usize], k: usize) -> Vec<ClusterAssignment> {
        p.iter()
            .map(|&c| {
                let mut col = vec![0.0; k];
                col[c] = 1.0;
                assign("i", &col)
            })
            .collect()
    }

    #[test]
    fn largest_first_then_lowest_index() {
        assert_eq!(
            largest_clusters(&with_primary(&[0, 0, 0, 1, 1, 1, 1, 1], 2), 1),
            vec![(1, 5)]
        );
        assert_eq!(largest_clusters(&with_primary(&[2, 2], 3), 5), vec![(2, 2)]);
        assert_eq!(
            largest_clusters(&with_primary(&[1, 0], 2), 2),
            vec![(0, 1), (1, 1)]
        );
    }
}
