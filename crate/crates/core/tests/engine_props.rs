use mvnmf::engine::{
    fit, initial_h, load_model, objective, save_model, update_h, update_w, EmbeddingQuery,
    FactorModel, LabelSpec, ModelConfig, Transformer, ViewSpec,
};
use mvnmf::matrix::{DenseMatrix, MaskMatrix, Matrix};
use mvnmf::nnls::{solve_bpp, BppOptions, NnlsProblem, DEFAULT_MAX_BACKUP, DEFAULT_TOL};
use mvnmf::synth::{generate, MaskGranularity, SynthConfig, SynthLabels, SynthView};
use mvnmf::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_force, naive_gram, naive_residual};

fn rand_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen::<f64>()).collect(),
    )
    .unwrap()
}

fn rand_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> MaskMatrix {
    let mut entries = Vec::new();
    for c in 0..cols {
        for r in 0..rows {
            if rng.gen::<f64>() < density {
                entries.push((r, c));
            }
        }
    }
    MaskMatrix::from_entries(rows, cols, &entries).unwrap()
}

fn energy(views: &[ViewSpec]) -> f64 {
    views
        .iter()
        .map(|v| v.alpha * v.observed_frobenius_sq())
        .sum()
}

fn config(k: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::new(k);
    c.seed = seed;
    c
}

/// Three views (two closed, one open) plus labels, with noise.
fn mixed_instance(
    seed: u64,
    n: usize,
    k: usize,
    granularity: MaskGranularity,
) -> mvnmf::synth::SynthInstance {
    let mut cfg = SynthConfig::planted(n, k, &[3 * k, 2 * k + 3], seed);
    cfg.views
        .push(SynthView::open("diag", 2 * k + 2, 3, 0.6, granularity));
    cfg.noise = 0.1;
    cfg.labels = Some(SynthLabels {
        classes: 2.min(k),
        coverage: 0.5,
    });
    generate(&cfg).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn planted_instance_is_recovered() {
    for seed in 0..3 {
        let inst = generate(&SynthConfig::planted(40, 3, &[20, 25], seed)).unwrap();
        let model = fit(&inst.views, None, &config(3, seed)).unwrap();
        assert!(model.converged, "seed {seed}");
        let f = model.final_objective().unwrap();
        assert!(f <= 1e-6 * energy(&inst.views), "seed {seed}: {f}");
    }
}

/// Alternating NNLS on one matrix, written out directly.
fn plain_nmf_history(x: &DenseMatrix, h0: DenseMatrix, sweeps: usize) -> Vec<f64> {
    let (m, n) = x.shape();
    let k = h0.rows();
    let mut h = h0;
    let mut out = Vec::new();
    for _ in 0..sweeps {
        let ht = h.transpose();
        let mut atb = DenseMatrix::zeros(k, m);
        for r in 0..m {
            let col: Vec<f64> = (0..k)
                .map(|i| (0..n).map(|j| h[(i, j)] * x[(r, j)]).sum())
                .collect();
            atb.set_column(r, &col);
        }
        let gram = DenseMatrix::from_rows(&naive_gram(&ht)).unwrap();
        let w = solve_bpp(
            &NnlsProblem::new(gram, atb).unwrap(),
            DEFAULT_TOL,
            DEFAULT_MAX_BACKUP,
        )
        .unwrap()
        .x
        .transpose();
        let mut atb = DenseMatrix::zeros(k, n);
        for j in 0..n {
            let col: Vec<f64> = (0..k)
                .map(|i| (0..m).map(|r| w[(r, i)] * x[(r, j)]).sum())
                .collect();
            atb.set_column(j, &col);
        }
        let gram = DenseMatrix::from_rows(&naive_gram(&w)).unwrap();
        h = solve_bpp(
            &NnlsProblem::new(gram, atb).unwrap(),
            DEFAULT_TOL,
            DEFAULT_MAX_BACKUP,
        )
        .unwrap()
        .x;
        out.push(naive_residual(&Matrix::Dense(x.clone()), &w, &h, None));
    }
    out
}

#[test]
fn single_view_is_plain_nmf() {
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = rand_dense(&mut rng, 15, 20);
        let view = ViewSpec::closed("only", x.clone(), 1.0);
        let mut cfg = config(3, seed);
        cfg.max_sweeps = 25;
        cfg.rel_tol = 1e-300;
        let model = fit(std::slice::from_ref(&view), None, &cfg).unwrap();
        let oracle = plain_nmf_history(&x, initial_h(&[view], 3, seed), 25);
        assert_eq!(model.objective_history.len(), oracle.len());
        for (a, b) in model.objective_history.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * oracle[0], "seed {seed}: {a} vs {b}");
        }
    }
}

fn model_bytes(model: &FactorModel) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    save_model(model, dir.path()).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn corrupt_unobserved(x: &Matrix, mask: &MaskMatrix, rng: &mut ChaCha8Rng, hi: f64) -> Matrix {
    let mut d = x.to_dense();
    for c in 0..d.cols() {
        for r in 0..d.rows() {
            if !mask.is_observed(r, c) {
                d[(r, c)] = hi * rng.gen::<f64>();
            }
        }
    }
    Matrix::Dense(d)
}

#[test]
fn masked_entries_never_matter() {
    for (seed, gran) in [(1, MaskGranularity::Entry), (2, MaskGranularity::Column)] {
        let inst = mixed_instance(seed, 40, 3, gran);
        let cfg = config(3, seed);
        let base = fit(&inst.views, inst.labels.as_ref(), &cfg).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let mut views = inst.views.clone();
        let diag = views.iter_mut().find(|v| !v.is_closed()).unwrap();
        let mask = diag.mask().unwrap().clone();
        diag.x = corrupt_unobserved(&diag.x, &mask, &mut rng, 100.0);
        let mut labels = inst.labels.clone().unwrap();
        labels.x = corrupt_unobserved(&labels.x, &labels.mask, &mut rng, 7.0);

        let other = fit(&views, Some(&labels), &cfg).unwrap();
        assert_eq!(base, other);
        assert_eq!(model_bytes(&base), model_bytes(&other));
    }
}

/// Model with random factors, fitted for one sweep and then overwritten.
fn random_factor_model(
    rng: &mut ChaCha8Rng,
    views: &[ViewSpec],
    labels: Option<&LabelSpec>,
    k: usize,
) -> FactorModel {
    let mut cfg = ModelConfig::new(k);
    cfg.max_sweeps = 1;
    let mut model = fit(views, labels, &cfg).unwrap();
    for f in &mut model.views {
        f.w = rand_dense(rng, f.w.rows(), k);
    }
    if let Some(l) = &mut model.labels {
        l.w = rand_dense(rng, l.w.rows(), k);
    }
    model.h = rand_dense(rng, k, model.n_items());
    model
}

fn random_closed_views(rng: &mut ChaCha8Rng, rows: &[usize], n: usize) -> Vec<ViewSpec> {
    rows.iter()
        .enumerate()
        .map(|(i, &m)| {
            ViewSpec::closed(
                format!("v{i}"),
                rand_dense(rng, m, n),
                rng.gen_range(0.2..3.0),
            )
        })
        .collect()
}

fn stack_scaled(parts: &[(&DenseMatrix, f64)]) -> DenseMatrix {
    let cols = parts[0].0.cols();
    let mut rows = Vec::new();
    for (m, alpha) in parts {
        let s = alpha.sqrt();
        for r in 0..m.rows() {
            rows.push(m.row(r).iter().map(|v| v * s).collect::<Vec<f64>>());
        }
    }
    let out = DenseMatrix::from_rows(&rows).unwrap();
    assert_eq!(out.cols(), cols);
    out
}

#[test]
fn objective_equals_stacked_formulation() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed as usize % 4);
        let views = random_closed_views(&mut rng, &[6, 9, 5], 12);
        let model = random_factor_model(&mut rng, &views, None, k);
        let xs: Vec<DenseMatrix> = views.iter().map(|v| v.x.to_dense()).collect();
        let s = stack_scaled(
            &xs.iter()
                .zip(&views)
                .map(|(x, v)| (x, v.alpha))
                .collect::<Vec<_>>(),
        );
        let t = stack_scaled(
            &model
                .views
                .iter()
                .map(|f| (&f.w, f.alpha))
                .collect::<Vec<_>>(),
        );
        let stacked = naive_residual(&Matrix::Dense(s), &t, &model.h, None);
        let f = objective(&model, &views, None).unwrap();
        assert!(
            (f - stacked).abs() <= 1e-10 * stacked,
            "seed {seed}: {f} vs {stacked}"
        );
    }
}

#[test]
fn h_update_equals_one_stacked_solve() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let k = 2 + (seed as usize % 3);
        let views = random_closed_views(&mut rng, &[7, 5], 9);
        let ws: Vec<DenseMatrix> = views
            .iter()
            .map(|v| rand_dense(&mut rng, v.x.rows(), k))
            .collect();
        let up = update_h(&views, None, &ws, None, &BppOptions::default()).unwrap();

        let xs: Vec<DenseMatrix> = views.iter().map(|v| v.x.to_dense()).collect();
        let s = stack_scaled(
            &xs.iter()
                .zip(&views)
                .map(|(x, v)| (x, v.alpha))
                .collect::<Vec<_>>(),
        );
        let t = stack_scaled(
            &ws.iter()
                .zip(&views)
                .map(|(w, v)| (w, v.alpha))
                .collect::<Vec<_>>(),
        );
        let gram = DenseMatrix::from_rows(&naive_gram(&t)).unwrap();
        let atb = t.transpose().matmul(&s).unwrap();
        let oracle = solve_bpp(
            &NnlsProblem::new(gram, atb).unwrap(),
            DEFAULT_TOL,
            DEFAULT_MAX_BACKUP,
        )
        .unwrap();
        assert!(up.h.max_abs_diff(&oracle.x) <= 1e-9, "seed {seed}");
    }
}

#[test]
fn objective_history_never_increases() {
    for seed in 0..20u64 {
        let n = [40, 80, 120, 200][seed as usize % 4];
        let k = 2 + (seed as usize % 7);
        let gran = if seed % 2 == 0 {
            MaskGranularity::Entry
        } else {
            MaskGranularity::Column
        };
        let inst = mixed_instance(seed, n, k, gran);
        let labels = if seed % 3 == 0 {
            None
        } else {
            inst.labels.as_ref()
        };
        let views: Vec<ViewSpec> = if seed % 5 == 0 {
            inst.views
                .iter()
                .filter(|v| v.is_closed())
                .cloned()
                .collect()
        } else {
            inst.views.clone()
        };
        let mut cfg = config(k, seed);
        cfg.max_sweeps = 40;
        let model = fit(&views, labels, &cfg).unwrap();
        for (t, pair) in model.objective_history.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "seed {seed} sweep {}: {} -> {}",
                t + 2,
                pair[0],
                pair[1]
            );
        }
        assert!(model.h.min_value() >= 0.0);
        assert!(model.views.iter().all(|f| f.w.min_value() >= 0.0));
    }
}

#[test]
fn objective_is_invariant_to_diagonal_rescaling() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let k = 3;
        let inst = mixed_instance(seed, 30, k, MaskGranularity::Entry);
        let mut model = random_factor_model(&mut rng, &inst.views, inst.labels.as_ref(), k);
        let before = objective(&model, &inst.views, inst.labels.as_ref()).unwrap();
        let d: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..10.0)).collect();
        for f in &mut model.views {
            for r in 0..f.w.rows() {
                f.w.row_mut(r).iter_mut().zip(&d).for_each(|(v, s)| *v *= s);
            }
        }
        let lw = &mut model.labels.as_mut().unwrap().w;
        for r in 0..lw.rows() {
            lw.row_mut(r).iter_mut().zip(&d).for_each(|(v, s)| *v *= s);
        }
        for (c, s) in d.iter().enumerate() {
            model.h.row_mut(c).iter_mut().for_each(|v| *v /= s);
        }
        let after = objective(&model, &inst.views, inst.labels.as_ref()).unwrap();
        assert!((before - after).abs() <= 1e-9 * before, "seed {seed}");
    }
}

#[test]
fn objective_matches_entrywise_oracle() {
    for seed in 0..8 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let inst = mixed_instance(seed, 25, 3, MaskGranularity::Entry);
        let labels = inst.labels.as_ref().unwrap();
        let model = random_factor_model(&mut rng, &inst.views, Some(labels), 3);
        let mut want = 0.0;
        for (v, f) in inst.views.iter().zip(&model.views) {
            want += f.alpha * naive_residual(&v.x, &f.w, &model.h, v.mask());
        }
        let lf = model.labels.as_ref().unwrap();
        want += lf.alpha * naive_residual(&labels.x, &lf.w, &model.h, Some(&labels.mask));
        let got = objective(&model, &inst.views, Some(labels)).unwrap();
        assert!(
            (got - want).abs() <= 1e-10 * want,
            "seed {seed}: {got} vs {want}"
        );

        let mut zero = model.clone();
        zero.h = DenseMatrix::zeros(3, 25);
        let data: f64 = inst
            .views
            .iter()
            .zip(&model.views)
            .map(|(v, f)| f.alpha * v.observed_frobenius_sq())
            .sum::<f64>()
            + lf.alpha * naive_residual(&labels.x, &lf.w, &zero.h, Some(&labels.mask));
        let got = objective(&zero, &inst.views, Some(labels)).unwrap();
        assert!((got - data).abs() <= 1e-12 * data);
    }
}

#[test]
fn masked_w_rows_match_reduced_oracle() {
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (k, m, n) = (2, 4, 5);
        let x = rand_dense(&mut rng, m, n);
        let mask = rand_mask(&mut rng, m, n, 0.6);
        let h = rand_dense(&mut rng, k, n);
        let view = ViewSpec::open("d", x.clone(), mask.clone(), 1.0);
        let up = update_w(&view, &h, &BppOptions::default()).unwrap();
        for r in 0..m {
            let obs: Vec<usize> = (0..n).filter(|&c| mask.is_observed(r, c)).collect();
            if obs.is_empty() {
                assert_eq!(up.w.row(r), &[0.0, 0.0]);
                assert!(up.empty_rows.contains(&r));
                continue;
            }
            let q: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| obs.iter().map(|&c| h[(i, c)] * h[(j, c)]).sum())
                        .collect()
                })
                .collect();
            let rhs: Vec<f64> = (0..k)
                .map(|i| obs.iter().map(|&c| x[(r, c)] * h[(i, c)]).sum())
                .collect();
            let want = brute_force(&q, &rhs);
            let got = up.w.row(r);
            let value = |x: &[f64]| -> f64 {
                (0..k)
                    .map(|i| {
                        0.5 * x[i] * (0..k).map(|j| q[i][j] * x[j]).sum::<f64>() - rhs[i] * x[i]
                    })
                    .sum()
            };
            // Fewer observations than factors leaves the minimizer non-unique; only its value is fixed.
            assert!(
                (value(got) - value(&want)).abs() < 1e-10,
                "seed {seed} row {r}"
            );
            if obs.len() >= k {
                for i in 0..k {
                    assert!((got[i] - want[i]).abs() < 1e-8, "seed {seed} row {r}");
                }
            }
        }
    }
}

#[test]
fn fold_in_recovers_planted_columns() {
    let inst = generate(&SynthConfig::planted(40, 3, &[20, 25], 9)).unwrap();
    let model = fit(&inst.views, None, &config(3, 9)).unwrap();
    let tr = Transformer::new(&model).unwrap();
    for j in 0..40 {
        let mut q = EmbeddingQuery::new();
        for v in &inst.views {
            q = q.with_view(v.name.clone(), v.x.to_dense().column(j));
        }
        let h = tr.transform(&q).unwrap().h;
        assert!(cosine(&h, &model.h.column(j)) >= 0.99, "item {j}");
    }
}

#[test]
fn fold_in_is_no_worse_than_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let views = random_closed_views(&mut rng, &[8, 6], 15);
    let model = fit(&views, None, &config(3, 1)).unwrap();
    let tr = Transformer::new(&model).unwrap();
    let column_loss = |j: usize, h: &[f64]| -> f64 {
        views
            .iter()
            .zip(&model.views)
            .map(|(v, f)| {
                (0..v.x.rows())
                    .map(|r| {
                        let p: f64 = f.w.row(r).iter().zip(h).map(|(a, b)| a * b).sum();
                        (v.x.get(r, j) - p).powi(2)
                    })
                    .sum::<f64>()
                    * f.alpha
            })
            .sum()
    };
    for j in 0..15 {
        let mut q = EmbeddingQuery::new();
        for v in &views {
            q = q.with_view(v.name.clone(), v.x.to_dense().column(j));
        }
        let h = tr.transform(&q).unwrap().h;
        assert!(
            column_loss(j, &h) <= column_loss(j, &model.h.column(j)) + 1e-9,
            "item {j}"
        );
    }
}

#[test]
fn fold_in_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let views = random_closed_views(&mut rng, &[8, 6], 15);
    let model = fit(&views, None, &config(3, 2)).unwrap();
    let tr = Transformer::new(&model).unwrap();

    let zero = EmbeddingQuery::new()
        .with_view("v0", vec![0.0; 8])
        .with_view("v1", vec![0.0; 6]);
    assert_eq!(tr.transform(&zero).unwrap().h, vec![0.0; 3]);

    let raw = rand_dense(&mut rng, 8, 1).column(0);
    let got = tr
        .transform(&EmbeddingQuery::new().with_view("v0", raw.clone()))
        .unwrap()
        .h;
    let w = &model.view("v0").unwrap().w;
    let atb = w
        .transpose()
        .matmul(&DenseMatrix::from_vec(8, 1, raw).unwrap())
        .unwrap();
    let gram = DenseMatrix::from_rows(&naive_gram(w)).unwrap();
    let want = solve_bpp(
        &NnlsProblem::new(gram, atb).unwrap(),
        DEFAULT_TOL,
        DEFAULT_MAX_BACKUP,
    )
    .unwrap();
    for (a, b) in got.iter().zip(want.x.column(0)) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    }

    assert!(matches!(
        tr.transform(&EmbeddingQuery::new()),
        Err(Error::NoViewsPresent)
    ));
    let unknown = EmbeddingQuery::new().with_view("nope", vec![0.0; 8]);
    assert!(matches!(tr.transform(&unknown), Err(Error::UnknownView(_))));
    let short = EmbeddingQuery::new().with_view("v0", vec![0.0; 3]);
    assert!(matches!(tr.transform(&short), Err(Error::ShapeMismatch(_))));
}

#[test]
fn thread_count_does_not_change_the_fit() {
    let inst = mixed_instance(4, 120, 5, MaskGranularity::Entry);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&inst.views, inst.labels.as_ref(), &config(5, 4)).unwrap())
    };
    let one = run(1);
    let many = run(8);
    assert_eq!(model_bytes(&one), model_bytes(&many));
}

#[test]
fn saved_model_loads_back_identically() {
    let inst = mixed_instance(6, 30, 3, MaskGranularity::Column);
    let mut model = fit(&inst.views, inst.labels.as_ref(), &config(3, 6)).unwrap();
    model.set_item_ids(inst.item_ids.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    assert_eq!(load_model(dir.path()).unwrap(), model);
}

#[test]
fn fully_unobserved_items_embed_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let x = rand_dense(&mut rng, 6, 8);
    let observed: Vec<bool> = (0..8).map(|j| j % 3 != 0).collect();
    let mask = MaskMatrix::from_observed_columns(6, 8, &observed);
    let model = fit(&[ViewSpec::open("d", x, mask, 1.0)], None, &config(2, 0)).unwrap();
    assert_eq!(model.diagnostics.empty_h_columns, vec![0, 3, 6]);
    for j in [0, 3, 6] {
        assert_eq!(model.h.column(j), vec![0.0, 0.0]);
    }
}
