//! Seeded planted multi-view instances with known factors, clusters, cohorts and keywords.
//!
//! Every item has one dominant cluster. Its true embedding is
//! `0.8·e_c + 0.2·s` with `s` drawn uniformly from the simplex, so the columns
//! of `H*` sum to one and the argmax is never ambiguous. Each view's TF block
//! starts with `keywords_per_cluster` rows per cluster that load 1.0 on that
//! cluster alone; the remaining rows load uniformly on `[0, 0.3)`. Because
//! every basis entry is at most 1, noiseless data already lies in `[0, 1]`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Block, BlockKind, LabelSpec, ViewLayout, ViewSpec, WorldAssumption};
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix, Matrix, ScaleParams};

const DOMINANT_WEIGHT: f64 = 0.8;
const BACKGROUND_MAX: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskGranularity {
    /// Whole item columns are observed or not.
    Column,
    /// Each entry is observed independently.
    Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMask {
    /// Probability that a column (or entry) is observed.
    pub density: f64,
    pub granularity: MaskGranularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthView {
    pub name: String,
    pub tf_rows: usize,
    pub dense_rows: usize,
    /// `None` for a closed-world view.
    pub mask: Option<SynthMask>,
}

impl SynthView {
    pub fn closed(name: impl Into<String>, tf_rows: usize, dense_rows: usize) -> Self {
        SynthView {
            name: name.into(),
            tf_rows,
            dense_rows,
            mask: None,
        }
    }

    pub fn open(
        name: impl Into<String>,
        tf_rows: usize,
        dense_rows: usize,
        density: f64,
        granularity: MaskGranularity,
    ) -> Self {
        SynthView {
            name: name.into(),
            tf_rows,
            dense_rows,
            mask: Some(SynthMask {
                density,
                granularity,
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.tf_rows + self.dense_rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLabels {
    /// Item `j` belongs to class `dominant(j) % classes`.
    pub classes: usize,
    /// Fraction of items whose labels are observed.
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCohorts {
    pub count: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub views: Vec<SynthView>,
    /// Additive uniform noise on `[0, noise]`, clamped back into `[0, 1]`.
    pub noise: f64,
    pub labels: Option<SynthLabels>,
    pub cohorts: Option<SynthCohorts>,
    pub keywords_per_cluster: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Closed-world views with the given TF row counts, no noise, labels or cohorts.
    pub fn planted(n: usize, k: usize, rows: &[usize], seed: u64) -> Self {
        SynthConfig {
            n,
            k,
            views: rows
                .iter()
                .enumerate()
                .map(|(i, &m)| SynthView::closed(format!("v{i}"), m, 0))
                .collect(),
            noise: 0.0,
            labels: None,
            cohorts: None,
            keywords_per_cluster: 2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.n < self.k {
            return bad(format!("need 1 <= k <= n, got k={} n={}", self.k, self.n));
        }
        if self.views.is_empty() {
            return bad("at least one view is required".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and >= 0".into());
        }
        let planted = self.k * self.keywords_per_cluster;
        for v in &self.views {
            if v.tf_rows < planted {
                return bad(format!(
                    "view `{}` needs at least {planted} TF rows for its planted keywords",
                    v.name
                ));
            }
            if let Some(m) = &v.mask {
                if !(m.density > 0.0 && m.density <= 1.0) {
                    return bad(format!("view `{}` mask density must be in (0, 1]", v.name));
                }
            }
        }
        if let Some(l) = &self.labels {
            if l.classes == 0 || l.classes > self.k || !(0.0..=1.0).contains(&l.coverage) {
                return bad("labels need 1 <= classes <= k and coverage in [0, 1]".into());
            }
        }
        if let Some(c) = self.cohorts {
            if c.count > self.k || c.size > self.n / self.k {
                return bad(format!(
                    "at most {} cohorts of at most {} items fit",
                    self.k,
                    self.n / self.k
                ));
            }
        }
        Ok(())
    }
}

/// A TF row that loads on one cluster only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedKeyword {
    pub view: String,
    pub token: String,
    pub row: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub views: Vec<ViewSpec>,
    pub labels: Option<LabelSpec>,
    pub w_true: Vec<DenseMatrix>,
    pub h_true: DenseMatrix,
    /// Dominant cluster of each item.
    pub dominant: Vec<usize>,
    pub cohorts: Vec<Vec<usize>>,
    pub keywords: Vec<PlantedKeyword>,
    pub item_ids: Vec<String>,
}

impl SynthInstance {
    pub fn n_items(&self) -> usize {
        self.h_true.cols()
    }
}

/// Lowercase alphanumeric token stem for a view, so generated tokens survive tokenization.
fn token_stem(view: &str) -> String {
    let stem: String = view
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if stem.is_empty() {
        "v".into()
    } else {
        stem
    }
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn draw_mask(rng: &mut ChaCha8Rng, rows: usize, n: usize, spec: &SynthMask) -> MaskMatrix {
    match spec.granularity {
        MaskGranularity::Column => {
            let observed: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < spec.density).collect();
            MaskMatrix::from_observed_columns(rows, n, &observed)
        }
        MaskGranularity::Entry => {
            let mut entries = Vec::new();
            for c in 0..n {
                for r in 0..rows {
                    if rng.gen::<f64>() < spec.density {
                        entries.push((r, c));
                    }
                }
            }
            MaskMatrix::from_entries(rows, n, &entries).expect("entries in range")
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthInstance> {
    config.validate()?;
    let SynthConfig { n, k, .. } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut dominant: Vec<usize> = (0..n).map(|j| j % k).collect();
    dominant.shuffle(&mut rng);
    let mut h_true = DenseMatrix::zeros(k, n);
    for (j, &c) in dominant.iter().enumerate() {
        let s = simplex(&mut rng, k);
        for (i, v) in s.into_iter().enumerate() {
            h_true[(i, j)] =
                (1.0 - DOMINANT_WEIGHT) * v + if i == c { DOMINANT_WEIGHT } else { 0.0 };
        }
    }

    let mut views = Vec::with_capacity(config.views.len());
    let mut w_true = Vec::with_capacity(config.views.len());
    let mut keywords = Vec::new();
    for spec in &config.views {
        let m = spec.rows();
        let stem = token_stem(&spec.name);
        let planted = k * config.keywords_per_cluster;
        let mut w = DenseMatrix::zeros(m, k);
        let mut vocab = Vec::with_capacity(spec.tf_rows);
        for r in 0..spec.tf_rows {
            if r < planted {
                let (c, i) = (
                    r / config.keywords_per_cluster,
                    r % config.keywords_per_cluster,
                );
                w[(r, c)] = 1.0;
                let token = format!("{stem}c{c}kw{i}");
                keywords.push(PlantedKeyword {
                    view: spec.name.clone(),
                    token: token.clone(),
                    row: r,
                    cluster: c,
                });
                vocab.push(token);
            } else {
                for c in 0..k {
                    w[(r, c)] = BACKGROUND_MAX * rng.gen::<f64>();
                }
                vocab.push(format!("{stem}bg{r}"));
            }
        }
        for r in spec.tf_rows..m {
            for c in 0..k {
                w[(r, c)] = rng.gen::<f64>();
            }
        }

        let mut x = w.matmul(&h_true)?;
        if config.noise > 0.0 {
            for v in x.as_mut_slice() {
                *v = (*v + config.noise * rng.gen::<f64>()).clamp(0.0, 1.0);
            }
        }
        let world = match &spec.mask {
            None => WorldAssumption::Closed,
            Some(ms) => {
                let mask = draw_mask(&mut rng, m, n, ms);
                // Unobserved entries get junk; a correct fit never reads them.
                for c in 0..n {
                    let observed = mask.column(c);
                    for r in 0..m {
                        let junk = rng.gen::<f64>();
                        if observed.binary_search(&r).is_err() {
                            x[(r, c)] = junk;
                        }
                    }
                }
                WorldAssumption::Open(mask)
            }
        };

        let mut blocks = vec![Block {
            kind: BlockKind::Tf,
            name: "tf".into(),
            start: 0,
            end: spec.tf_rows,
            scale: ScaleParams::IDENTITY,
        }];
        if spec.dense_rows > 0 {
            blocks.push(Block {
                kind: BlockKind::Dense,
                name: "dense".into(),
                start: spec.tf_rows,
                end: m,
                scale: ScaleParams::IDENTITY,
            });
        }
        views.push(ViewSpec {
            name: spec.name.clone(),
            x: Matrix::Dense(x),
            world,
            alpha: 1.0,
            layout: ViewLayout {
                blocks,
                vocab: Some(vocab),
            },
        });
        w_true.push(w);
    }

    let labels = config.labels.as_ref().map(|l| {
        let mut x = DenseMatrix::zeros(l.classes, n);
        let mut observed = vec![false; n];
        for j in 0..n {
            x[(dominant[j] % l.classes, j)] = 1.0;
            observed[j] = rng.gen::<f64>() < l.coverage;
        }
        LabelSpec {
            classes: (0..l.classes).map(|c| format!("class{c}")).collect(),
            x: Matrix::Dense(x),
            mask: MaskMatrix::from_observed_columns(l.classes, n, &observed),
            alpha: 1.0,
        }
    });

    let cohorts = match config.cohorts {
        None => Vec::new(),
        Some(spec) => (0..spec.count)
            .map(|c| {
                let pool: Vec<usize> = (0..n).filter(|&j| dominant[j] == c).collect();
                let mut members: Vec<usize> =
                    pool.choose_multiple(&mut rng, spec.size).copied().collect();
                members.sort_unstable();
                members
            })
            .collect(),
    };

    let width = n.to_string().len();
    Ok(SynthInstance {
        views,
        labels,
        w_true,
        h_true,
        dominant,
        cohorts,
        keywords,
        item_ids: (0..n).map(|j| format!("item{j:0width$}")).collect(),
    })
}
