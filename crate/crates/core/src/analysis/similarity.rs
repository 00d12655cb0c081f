use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::FactorModel;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Higher is closer.
    #[default]
    Cosine,
    /// Lower is closer.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// An item of the index; it is left out of its own results.
    Item(usize),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
}

/// Item embeddings laid out for repeated neighbour queries.
pub struct EmbeddingIndex {
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl EmbeddingIndex {
    /// One vector per column of `h`.
    pub fn new(h: &DenseMatrix) -> Self {
        let vectors: Vec<Vec<f64>> = (0..h.cols()).map(|j| h.column(j)).collect();
        let norms = vectors.iter().map(|v| norm(v)).collect();
        EmbeddingIndex { vectors, norms }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j]
    }

    fn score(&self, q: &[f64], q_norm: f64, j: usize, metric: Metric) -> f64 {
        let v = &self.vectors[j];
        match metric {
            Metric::Cosine if self.norms[j] == 0.0 => 0.0,
            Metric::Cosine => dot(q, v) / (q_norm * self.norms[j]),
            Metric::Euclidean => q
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Ranks `candidates` (all items when `None`) against the query; best first, ties by index.
    pub fn similar(
        &self,
        query: &Query,
        top_k: usize,
        metric: Metric,
        candidates: Option<&[usize]>,
    ) -> Result<Vec<Neighbor>> {
        let (q, skip) = match query {
            Query::Item(j) => {
                let v = self
                    .vectors
                    .get(*j)
                    .ok_or_else(|| Error::InvalidInput(format!("item index {j} out of range")))?;
                (v.as_slice(), Some(*j))
            }
            Query::Vector(v) => {
                if let Some(first) = self.vectors.first() {
                    if v.len() != first.len() {
                        return Err(Error::ShapeMismatch(format!(
                            "query has {} dimensions, embeddings have {}",
                            v.len(),
                            first.len()
                        )));
                    }
                }
                (v.as_slice(), None)
            }
        };
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query vector is not finite".into()));
        }
        let q_norm = norm(q);
        if metric == Metric::Cosine && q_norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let all: Vec<usize>;
        let pool = match candidates {
            Some(c) => c,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let mut scored: Vec<Neighbor> = pool
            .iter()
            .filter(|&&j| Some(j) != skip)
            .map(|&j| {
                if j >= self.len() {
                    return Err(Error::InvalidInput(format!(
                        "candidate index {j} out of range"
                    )));
                }
                Ok(Neighbor {
                    index: j,
                    score: self.score(q, q_norm, j, metric),
                })
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| {
            let by_score = match metric {
                Metric::Cosine => b.score.total_cmp(&a.score),
                Metric::Euclidean => a.score.total_cmp(&b.score),
            };
            by_score.then(a.index.cmp(&b.index))
        });
        scored.truncate(top_k);
        Ok(scored)
    }

    /// Mean over cohort members of the share of their top-k neighbours inside the cohort.
    ///
    /// Members whose embedding is zero under cosine have no defined neighbours
    /// and count as precision zero.
    pub fn precision_at_k(
        &self,
        cohort: &[usize],
        k: usize,
        metric: Metric,
        universe: Option<&[usize]>,
    ) -> Result<f64> {
        if cohort.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if k == 0 {
            return Err(Error::InvalidInput("precision@k needs k >= 1".into()));
        }
        let mut members = vec![false; self.len()];
        for &j in cohort {
            if j >= self.len() {
                return Err(Error::InvalidInput(format!(
                    "cohort index {j} out of range"
                )));
            }
            members[j] = true;
        }
        if let Some(u) = universe {
            let mut inside = vec![false; self.len()];
            u.iter()
                .filter(|&&j| j < self.len())
                .for_each(|&j| inside[j] = true);
            if cohort.iter().any(|&j| !inside[j]) {
                return Err(Error::InvalidInput(
                    "cohort members must lie in the candidate universe".into(),
                ));
            }
        }
        let per_member: Vec<f64> = cohort
            .par_iter()
            .map(
                |&j| match self.similar(&Query::Item(j), k, metric, universe) {
                    Ok(top) => {
                        Ok(top.iter().filter(|n| members[n.index]).count() as f64 / k as f64)
                    }
                    Err(Error::ZeroVector) => Ok(0.0),
                    Err(e) => Err(e),
                },
            )
            .collect::<Result<_>>()?;
        Ok(per_member.iter().sum::<f64>() / per_member.len() as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Nearest items to `query` in the model's embedding.
pub fn similar_items(
    model: &FactorModel,
    query: &Query,
    top_k: usize,
    metric: Metric,
) -> Result<Vec<Neighbor>> {
    EmbeddingIndex::new(&model.h).similar(query, top_k, metric, None)
}

pub fn precision_at_k(model: &FactorModel, cohort: &[usize], k: usize) -> Result<f64> {
    EmbeddingIndex::new(&model.h).precision_at_k(cohort, k, Metric::Cosine, None)
}
