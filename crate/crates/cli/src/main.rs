//! `mvnmf`: ingest multi-view records, fit a joint embedding, and query it.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 fit stopped without converging
//! (the model is saved all the same).

mod analyze;
mod config;
mod pipeline;
mod synth_dir;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use mvnmf::analysis::Metric;
use mvnmf::synth::{generate, MaskGranularity, SynthCohorts, SynthConfig, SynthLabels, SynthView};
use serde_json::{json, Value};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "mvnmf", version, about = "Multi-view joint NMF embeddings")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MVNMF_THREADS")]
    threads: Option<usize>,

    /// Write a machine-readable summary as JSON (to PATH, or stdout without one).
    #[arg(long, global = true, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    json_summary: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    config: PathBuf,

    /// Override a configuration key, e.g. `model.rank=8` or `view.search.alpha=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build scaled view matrices (and labels) from raw records.
    Ingest(ConfigArgs),
    /// Fit the joint factorization and save the model directory.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Model directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed new items against a saved model.
    Transform {
        #[arg(long)]
        model: PathBuf,
        /// Records in the ingest format; views may be missing per item.
        #[arg(long)]
        queries: PathBuf,
        /// Feature CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top keywords of the largest clusters.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        top_c: usize,
        #[arg(long, default_value_t = 5)]
        top_m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest items to an item or a raw embedding vector.
    Similar {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "vector", required_unless_present = "vector")]
        item: Option<String>,
        /// Comma-separated embedding, k values.
        #[arg(long, value_delimiter = ',')]
        vector: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
        /// Candidate item ids, one per line; all items when absent.
        #[arg(long)]
        universe: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohort precision@k against the random baseline.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Cohort file (one id per line); repeat for several cohorts.
        #[arg(long = "cohort", required = true)]
        cohorts: Vec<PathBuf>,
        #[arg(long = "k", value_delimiter = ',', default_values_t = [10, 20, 50])]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
        #[arg(long)]
        universe: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROC-AUC, Youden threshold and confusion counts for a score file.
    Metrics {
        /// CSV with header `id,score,label`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embedding features per item, optionally with age and gender.
    Export {
        #[arg(long)]
        model: PathBuf,
        /// CSV with header `id,age,gender`.
        #[arg(long)]
        demographics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted instance as a raw directory with run.toml and ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 120)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Additive uniform noise level.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// `NAME:TF_ROWS[:DENSE_ROWS[:DENSITY]]`; a density makes the view open-world
    /// with that fraction of items observed.
    #[arg(long = "view", default_values = ["search:40", "browse:30:4", "diagnosis:30:0:0.7"])]
    views: Vec<String>,
    /// `CLASSES:COVERAGE`.
    #[arg(long)]
    labels: Option<String>,
    /// `COUNT:SIZE`.
    #[arg(long)]
    cohorts: Option<String>,
    #[arg(long, default_value_t = 2)]
    keywords_per_cluster: usize,
    /// Token count for a TF value of 1.
    #[arg(long, default_value_t = 20)]
    max_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

/// Buffered file, or stdout when no path is given.
pub fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn pair<A: std::str::FromStr, B: std::str::FromStr>(spec: &str, what: &str) -> Result<(A, B)> {
    let parsed = spec
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.with_context(|| format!("{what} must look like A:B, got `{spec}`"))
}

fn parse_view(spec: &str) -> Result<SynthView> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |i: usize| -> Result<usize> {
        parts.get(i).map_or(Ok(0), |s| {
            s.parse()
                .with_context(|| format!("view spec `{spec}`: `{s}` is not a count"))
        })
    };
    if parts.len() < 2 || parts.len() > 4 {
        bail!("view spec `{spec}` must be NAME:TF_ROWS[:DENSE_ROWS[:DENSITY]]");
    }
    let (tf, dense) = (num(1)?, num(2)?);
    Ok(match parts.get(3) {
        None => SynthView::closed(parts[0], tf, dense),
        Some(d) => {
            let density: f64 = d
                .parse()
                .with_context(|| format!("view spec `{spec}`: bad density"))?;
            SynthView::open(parts[0], tf, dense, density, MaskGranularity::Column)
        }
    })
}

fn synth(args: &SynthArgs) -> Result<(Outcome, Value)> {
    let config = SynthConfig {
        n: args.n,
        k: args.k,
        views: args
            .views
            .iter()
            .map(|s| parse_view(s))
            .collect::<Result<_>>()?,
        noise: args.noise,
        labels: args
            .labels
            .as_deref()
            .map(|s| {
                pair(s, "--labels").map(|(classes, coverage)| SynthLabels { classes, coverage })
            })
            .transpose()?,
        cohorts: args
            .cohorts
            .as_deref()
            .map(|s| pair(s, "--cohorts").map(|(count, size)| SynthCohorts { count, size }))
            .transpose()?,
        keywords_per_cluster: args.keywords_per_cluster,
        seed: args.seed,
    };
    let inst = generate(&config)?;
    let out = synth_dir::write_dir(&args.out, &config, &inst, args.max_count)?;
    log::info!(
        "wrote {} records for {} items to {}",
        out.records,
        inst.n_items(),
        args.out.display()
    );
    Ok((
        Outcome::Done,
        json!({"command": "synth", "items": inst.n_items(), "output": out}),
    ))
}

fn run(cli: &Cli) -> Result<(Outcome, Value)> {
    match &cli.command {
        Command::Ingest(c) => pipeline::ingest(&RunConfig::load(&c.config, &c.set)?),
        Command::Fit {
            cfg,
            rank,
            seed,
            max_sweeps,
            rel_tol,
            out,
        } => {
            let mut set = cfg.set.clone();
            let mut add = |key: &str, v: Option<String>| {
                if let Some(v) = v {
                    set.push(format!("model.{key}={v}"));
                }
            };
            add("rank", rank.map(|v| v.to_string()));
            add("seed", seed.map(|v| v.to_string()));
            add("max_sweeps", max_sweeps.map(|v| v.to_string()));
            add("rel_tol", rel_tol.map(|v| format!("{v:?}")));
            let mut config = RunConfig::load(&cfg.config, &set)?;
            if let Some(o) = out {
                config.model.out = o.clone();
            }
            pipeline::fit_cmd(&config)
        }
        Command::Transform {
            model,
            queries,
            out,
        } => pipeline::transform_cmd(model, queries, out.as_ref()),
        Command::Report {
            model,
            top_c,
            top_m,
            out,
        } => analyze::report(model, *top_c, *top_m, out.as_ref()),
        Command::Similar {
            model,
            item,
            vector,
            top_k,
            metric,
            universe,
            out,
        } => analyze::similar(
            model,
            analyze::SimilarArgs {
                item: item.as_deref(),
                vector: vector.as_deref(),
                top_k: *top_k,
                metric: (*metric).into(),
                universe: universe.as_ref(),
            },
            out.as_ref(),
        ),
        Command::Eval {
            model,
            cohorts,
            ks,
            metric,
            universe,
            out,
        } => analyze::eval(
            model,
            cohorts,
            ks,
            (*metric).into(),
            universe.as_ref(),
            out.as_ref(),
        ),
        Command::Metrics { scores, out } => analyze::metrics(scores, out.as_ref()),
        Command::Export {
            model,
            demographics,
            out,
        } => analyze::export(model, demographics.as_ref(), out.as_ref()),
        Command::Synth(args) => synth(args),
    }
}

fn write_summary(path: &PathBuf, summary: &Value) -> Result<()> {
    let text = serde_json::to_string(summary)?;
    if path.as_os_str() == "-" {
        println!("{text}");
    } else {
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            error!("cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = run(&cli).and_then(|(outcome, summary)| {
        if let Some(path) = &cli.json_summary {
            write_summary(path, &summary)?;
        }
        Ok(outcome)
    });
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
