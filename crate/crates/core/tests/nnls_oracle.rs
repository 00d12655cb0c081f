//! Block principal pivoting against exhaustive passive-set enumeration.

use mvnmf::matrix::DenseMatrix;
use mvnmf::nnls::{solve_bpp, NnlsProblem, DEFAULT_MAX_BACKUP, DEFAULT_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::brute_force;

struct Instance {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    k: usize,
}

fn random_instance(seed: u64, k: usize, m: usize, r: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..m)
        .map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let b = (0..r)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Instance { a, b, k }
}

fn normal_equations(inst: &Instance) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = inst.k;
    let q = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| inst.a.iter().map(|row| row[i] * row[j]).sum())
                .collect()
        })
        .collect();
    let cs = inst
        .b
        .iter()
        .map(|b| {
            (0..k)
                .map(|i| inst.a.iter().zip(b).map(|(row, bv)| row[i] * bv).sum())
                .collect()
        })
        .collect();
    (q, cs)
}

fn to_problem(q: &[Vec<f64>], cs: &[Vec<f64>]) -> NnlsProblem {
    let k = q.len();
    let ata = DenseMatrix::from_rows(q).unwrap();
    let mut atb = DenseMatrix::zeros(k, cs.len());
    for (j, c) in cs.iter().enumerate() {
        atb.set_column(j, c);
    }
    NnlsProblem::new(ata, atb).unwrap()
}

#[test]
fn two_variable_example_matches_enumeration() {
    let q = vec![vec![1.0, 1.0], vec![1.0, 2.0]];
    let c = vec![2.0, 1.0];
    assert_eq!(brute_force(&q, &c), vec![2.0, 0.0]);
    let sol = solve_bpp(&to_problem(&q, &[c]), DEFAULT_TOL, DEFAULT_MAX_BACKUP).unwrap();
    assert!((sol.x[(0, 0)] - 2.0).abs() < 1e-12 && sol.x[(1, 0)] == 0.0);
}

#[test]
fn random_six_by_four_matches_enumeration() {
    for seed in 0..40 {
        let inst = random_instance(seed, 4, 6, 3);
        let (q, cs) = normal_equations(&inst);
        let sol = solve_bpp(&to_problem(&q, &cs), DEFAULT_TOL, DEFAULT_MAX_BACKUP).unwrap();
        for (j, c) in cs.iter().enumerate() {
            let expect = brute_force(&q, c);
            for i in 0..4 {
                assert!(
                    (sol.x[(i, j)] - expect[i]).abs() < 1e-8,
                    "seed {seed} col {j}: {:?} vs {expect:?}",
                    sol.x.column(j)
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn bpp_equals_enumeration(seed in any::<u64>(), k in 1usize..=8, extra in 0usize..6) {
        let inst = random_instance(seed, k, k + extra + 1, 2);
        let (q, cs) = normal_equations(&inst);
        let sol = solve_bpp(&to_problem(&q, &cs), DEFAULT_TOL, DEFAULT_MAX_BACKUP).unwrap();
        prop_assert!(sol.x.as_slice().iter().all(|&v| v >= 0.0));
        prop_assert!(sol.kkt_residual <= DEFAULT_TOL);
        for (j, c) in cs.iter().enumerate() {
            let expect = brute_force(&q, c);
            for i in 0..k {
                prop_assert!((sol.x[(i, j)] - expect[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn never_worse_than_zero(seed in any::<u64>(), k in 1usize..=8) {
        let inst = random_instance(seed, k, k + 3, 1);
        let (q, cs) = normal_equations(&inst);
        let sol = solve_bpp(&to_problem(&q, &cs), DEFAULT_TOL, DEFAULT_MAX_BACKUP).unwrap();
        let x = sol.x.column(0);
        let resid: f64 = inst.a.iter().zip(&inst.b[0])
            .map(|(row, bv)| { let p: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum(); (p - bv).powi(2) })
            .sum();
        let zero: f64 = inst.b[0].iter().map(|v| v * v).sum();
        prop_assert!(resid <= zero + 1e-12);
    }
}
