//! Run configuration: one TOML file, every key overridable with `--set key=value`.
//!
//! ```toml
//! [data]
//! items = "items.txt"        # optional; default is first-seen record order
//! ingest_dir = "ingested"
//!
//! [[view]]
//! name = "search"
//! inputs = ["records.jsonl"]
//! alpha = "auto"             # or a positive number
//! assumption = "closed"      # or "open"
//! mask = "observed.txt"      # open views only; default is items with a record
//!
//! [labels]
//! path = "labels.jsonl"
//! alpha = "auto"
//!
//! [model]
//! rank = 5
//! out = "model"
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mvnmf::engine::{is_valid_name, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum Alpha {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<AlphaRepr> for Alpha {
    type Error = String;

    fn try_from(r: AlphaRepr) -> Result<Self, String> {
        match r {
            AlphaRepr::Number(a) if a > 0.0 && a.is_finite() => Ok(Alpha::Value(a)),
            AlphaRepr::Number(a) => Err(format!("alpha must be > 0, got {a}")),
            AlphaRepr::Word(w) if w == "auto" => Ok(Alpha::Auto),
            AlphaRepr::Word(w) => Err(format!("alpha must be a number or \"auto\", got \"{w}\"")),
        }
    }
}

impl From<Alpha> for AlphaRepr {
    fn from(a: Alpha) -> Self {
        match a {
            Alpha::Auto => AlphaRepr::Word("auto".into()),
            Alpha::Value(v) => AlphaRepr::Number(v),
        }
    }
}

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Auto => None,
            Alpha::Value(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assumption {
    #[default]
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    #[serde(default = "default_ingest_dir")]
    pub ingest_dir: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            items: None,
            ingest_dir: default_ingest_dir(),
        }
    }
}

fn default_ingest_dir() -> PathBuf {
    "ingested".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDecl {
    pub name: String,
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub alpha: Alpha,
    #[serde(default)]
    pub assumption: Assumption,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDecl {
    pub path: PathBuf,
    #[serde(default)]
    pub alpha: Alpha,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub rank: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_rel_tol() -> f64 {
    ModelConfig::DEFAULT_REL_TOL
}

fn default_max_sweeps() -> usize {
    ModelConfig::DEFAULT_MAX_SWEEPS
}

fn default_out() -> PathBuf {
    "model".into()
}

impl ModelSection {
    pub fn engine_config(&self) -> ModelConfig {
        let mut c = ModelConfig::new(self.rank);
        c.rel_tol = self.rel_tol;
        c.max_sweeps = self.max_sweeps;
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(rename = "view")]
    pub views: Vec<ViewDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelDecl>,
    pub model: ModelSection,
}

/// Error for a `--set` argument that cannot be applied.
#[derive(Debug)]
struct BadOverride(String);

impl fmt::Display for BadOverride {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid override `{}`", self.0)
    }
}

impl std::error::Error for BadOverride {}

/// Parses the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value`. After an array of tables (`view`) the next segment
/// selects an entry by index or by its `name`.
fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let bad = || BadOverride(spec.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let path: Vec<&str> = key.trim().split('.').collect();
    ensure!(path.iter().all(|s| !s.is_empty()), bad());
    let (last, parents) = path.split_last().ok_or_else(bad)?;
    let mut node = root;
    let mut segs = parents.iter();
    while let Some(seg) = segs.next() {
        let next = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match next {
            toml::Value::Table(t) => t,
            toml::Value::Array(items) => {
                let sel = segs.next().ok_or_else(bad)?;
                let found = match sel.parse::<usize>() {
                    Ok(i) => items.get_mut(i),
                    Err(_) => items
                        .iter_mut()
                        .find(|v| v.get("name").and_then(|n| n.as_str()) == Some(*sel)),
                };
                match found {
                    Some(toml::Value::Table(t)) => t,
                    _ => bail!("override `{spec}`: no `{seg}` entry `{sel}`"),
                }
            }
            _ => bail!(bad()),
        };
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads, overrides, checks and resolves paths against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing {}", path.display()))?;
        for spec in overrides {
            apply_override(&mut table, spec)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .with_context(|| format!("invalid configuration in {}", path.display()))?;
        cfg.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.views.is_empty(), "the configuration declares no view");
        let mut names = HashSet::new();
        for v in &self.views {
            ensure!(
                is_valid_name(&v.name),
                "view name `{}` may only use letters, digits, `_` and `-`",
                v.name
            );
            ensure!(
                names.insert(v.name.as_str()),
                "duplicate view name `{}`",
                v.name
            );
            ensure!(!v.inputs.is_empty(), "view `{}` has no inputs", v.name);
            ensure!(
                v.mask.is_none() || v.assumption == Assumption::Open,
                "view `{}`: a mask file needs assumption = \"open\"",
                v.name
            );
        }
        let m = &self.model;
        ensure!(m.rank >= 1, "model.rank must be >= 1");
        ensure!(
            m.rel_tol > 0.0 && m.rel_tol.is_finite(),
            "model.rel_tol must be > 0"
        );
        ensure!(m.max_sweeps >= 1, "model.max_sweeps must be >= 1");
        Ok(())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(items) = &mut self.data.items {
            fix(items);
        }
        fix(&mut self.data.ingest_dir);
        for v in &mut self.views {
            v.inputs.iter_mut().for_each(fix);
            if let Some(mask) = &mut v.mask {
                fix(mask);
            }
        }
        if let Some(l) = &mut self.labels {
            fix(&mut l.path);
        }
        fix(&mut self.model.out);
    }

    pub fn view_dir(&self, name: &str) -> PathBuf {
        self.data.ingest_dir.join("views").join(name)
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.data.ingest_dir.join("labels")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[[view]]
name = "search"
inputs = ["a.jsonl"]

[[view]]
name = "diag"
inputs = ["b.jsonl"]
assumption = "open"
alpha = 2.5

[model]
rank = 3
"#;

    fn load(text: &str, overrides: &[&str]) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::load(&p, &o)
    }

    #[test]
    fn defaults_and_paths() {
        let c = load(BASE, &[]).unwrap();
        assert_eq!(c.views[0].alpha, Alpha::Auto);
        assert_eq!(c.views[1].alpha, Alpha::Value(2.5));
        assert_eq!(c.views[1].assumption, Assumption::Open);
        assert_eq!(c.model.max_sweeps, ModelConfig::DEFAULT_MAX_SWEEPS);
        assert!(c.views[0].inputs[0].is_absolute());
        assert!(c.view_dir("search").ends_with("ingested/views/search"));
    }

    #[test]
    fn overrides_reach_every_key() {
        let c = load(
            BASE,
            &[
                "model.rank=5",
                "view.diag.alpha=\"auto\"",
                "view.0.alpha=0.5",
                "data.ingest_dir=work",
            ],
        )
        .unwrap();
        assert_eq!(c.model.rank, 5);
        assert_eq!(c.views[1].alpha, Alpha::Auto);
        assert_eq!(c.views[0].alpha, Alpha::Value(0.5));
        assert!(c.data.ingest_dir.ends_with("work"));
        assert!(load(BASE, &["view.nosuch.alpha=1"]).is_err());
        assert!(load(BASE, &["model.rank"]).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = BASE.replace("name = \"diag\"", "name = \"search\"");
        assert!(load(&dup, &[])
            .unwrap_err()
            .to_string()
            .contains("duplicate view name"));
        assert!(load(BASE, &["view.0.alpha=-1"]).is_err());
        assert!(load(BASE, &["view.0.alpha=\"big\""]).is_err());
        assert!(load(BASE, &["model.typo=1"]).is_err());
        let masked = BASE.replace(
            "inputs = [\"a.jsonl\"]",
            "inputs = [\"a.jsonl\"]\nmask = \"m.txt\"",
        );
        assert!(load(&masked, &[]).is_err());
    }

    #[test]
    fn serializes_back() {
        let c = load(BASE, &[]).unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
