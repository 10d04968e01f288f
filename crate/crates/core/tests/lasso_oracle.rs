mod common;

use common::{lasso_projected_gradient, rng};
use hcr::regress::{gradient, lasso_fit, lasso_objective, LassoSolver};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn problem(n: usize, p: usize, seed: u64, corr: f64) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let shared: Vec<f64> = (0..n).map(|_| std.sample(&mut r)).collect();
    let mut x = DMatrix::from_fn(n, p, |i, _| corr * shared[i] + (1.0 - corr * corr).sqrt() * std.sample(&mut r));
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
        let s = (col.norm_squared() / n as f64).sqrt();
        col /= s;
    }
    let y = (0..n)
        .map(|i| 0.8 * x[(i, 0)] - 0.5 * x[(i, p - 1)] + 0.3 + std.sample(&mut r))
        .collect();
    (x, y)
}

#[test]
fn correlated_pair_matches_oracle() {
    let (x, y) = problem(50, 2, 3, 0.8);
    let m = lasso_fit(&x, &y, 5.0).unwrap();
    let obj = lasso_objective(&x, &y, m.intercept, &m.coefficients, 5.0);
    let oracle = lasso_projected_gradient(&x, &y, 5.0);
    assert!((obj - oracle).abs() < 1e-6, "{obj} vs {oracle}");
}

#[test]
fn kkt_conditions_hold() {
    for (seed, lambda) in [(1, 0.0), (2, 5.0), (3, 50.0)] {
        let (x, y) = problem(120, 15, seed, 0.3);
        let m = lasso_fit(&x, &y, lambda).unwrap();
        for (g, c) in gradient(&x, &y, &m).iter().zip(&m.coefficients) {
            if *c == 0.0 {
                assert!(g.abs() <= lambda + 1e-4);
            } else {
                assert!((g + lambda * c.signum()).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn objective_never_increases_across_sweeps() {
    let (x, y) = problem(80, 12, 9, 0.6);
    let mut solver = LassoSolver::new(&x, &y, 5.0).unwrap();
    let mut prev = solver.objective();
    for _ in 0..200 {
        let change = solver.sweep();
        let obj = solver.objective();
        assert!(obj <= prev + 1e-9 * prev.abs().max(1.0));
        prev = obj;
        if change < 1e-10 {
            break;
        }
    }
}

#[test]
fn penalty_induces_sparsity() {
    let (x, y) = problem(200, 25, 17, 0.2);
    let dense = lasso_fit(&x, &y, 0.0).unwrap();
    let sparse = lasso_fit(&x, &y, 50.0).unwrap();
    assert_eq!(dense.nonzero(), 25);
    assert!(sparse.nonzero() < dense.nonzero());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_lambda_shrinks_l1_norm(seed in 0u64..10_000, lambda in 0.5f64..80.0, p in 2usize..10) {
        let (x, y) = problem(60, p, seed, 0.5);
        let a = lasso_fit(&x, &y, lambda).unwrap();
        let b = lasso_fit(&x, &y, 2.0 * lambda).unwrap();
        prop_assert!(b.l1_norm() <= a.l1_norm() + 1e-8);
    }
}
