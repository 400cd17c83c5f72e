//! Property tests against brute-force or closed-form oracles.

use ipad::data::{self, Dataset};
use ipad::factor;
use ipad::forecast::dm_test;
use ipad::inference::{knockoff_threshold, StatisticKind, WStats};
use ipad::lasso::{self, LassoOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn brute_threshold(w: &[f64], q: f64, plus: bool) -> f64 {
    let offset = if plus { 1.0 } else { 0.0 };
    let mut best = f64::INFINITY;
    for t in w.iter().map(|v| v.abs()).filter(|&t| t > 0.0) {
        let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
        let pos = w.iter().filter(|&&v| v >= t).count().max(1) as f64;
        if (offset + neg) / pos <= q && t < best {
            best = t;
        }
    }
    best
}

/// Exact Lasso for a handful of columns: every support and sign pattern is
/// solved in closed form and the best sign-consistent candidate wins.
fn enumerate_lasso(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let m = a.ncols();
    let mut best = (lasso::objective(a, y, &vec![0.0; m], lambda), vec![0.0; m]);
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        let a_s = a.select_columns(&support);
        let gram = a_s.transpose() * &a_s;
        for signs in 0u32..(1 << support.len()) {
            let s = DVector::from_fn(support.len(), |k, _| if signs >> k & 1 == 1 { 1.0 } else { -1.0 });
            let rhs = a_s.transpose() * y - &s * (lambda / 2.0);
            let Some(b) = gram.clone().lu().solve(&rhs) else {
                continue;
            };
            if b.iter().zip(s.iter()).any(|(b, s)| b * s <= 0.0) {
                continue;
            }
            let mut beta = vec![0.0; m];
            for (k, &j) in support.iter().enumerate() {
                beta[j] = b[k];
            }
            let obj = lasso::objective(a, y, &beta, lambda);
            if obj < best.0 {
                best = (obj, beta);
            }
        }
    }
    best.1
}

fn matrix(n: usize, p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * p).prop_map(move |v| DMatrix::from_vec(n, p, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn threshold_matches_brute_force(
        raw in prop::collection::vec(-4i32..=4, 0..=12),
        qi in 0usize..3,
        plus in any::<bool>(),
    ) {
        let q = [0.1, 0.2, 0.5][qi];
        let w: Vec<f64> = raw.iter().map(|&v| v as f64 * 0.5).collect();
        let ws = WStats { w: w.clone(), statistic_kind: StatisticKind::Lcd };
        prop_assert_eq!(knockoff_threshold(&ws, q, plus), brute_threshold(&w, q, plus));
    }

    #[test]
    fn plus_threshold_is_never_smaller(raw in prop::collection::vec(-6i32..=6, 1..=15)) {
        let ws = WStats { w: raw.iter().map(|&v| v as f64).collect(), statistic_kind: StatisticKind::Lcd };
        prop_assert!(knockoff_threshold(&ws, 0.2, true) >= knockoff_threshold(&ws, 0.2, false));
    }

    #[test]
    fn dm_is_antisymmetric(
        e1 in prop::collection::vec(-5.0f64..5.0, 10..40),
        shift in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let e2: Vec<f64> = e1.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let ab = dm_test(&e1, &e2).unwrap();
        let ba = dm_test(&e2, &e1).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert_eq!(ab.stars, ba.stars);
    }

    #[test]
    fn standardization_round_trips(x in matrix(12, 4), y in prop::collection::vec(-10.0f64..10.0, 12)) {
        // guard against degenerate constant columns
        let x = x + DMatrix::from_fn(12, 4, |i, j| (i * (j + 1)) as f64 * 0.01);
        let d = Dataset::from_matrix(x, DVector::from_vec(y)).unwrap();
        let (s, record) = data::standardize(&d).unwrap();
        for col in s.x.column_iter() {
            prop_assert!((col.norm() - 1.0).abs() < 1e-12);
            prop_assert!(col.mean().abs() < 1e-12);
        }
        let back = record.restore(&s).unwrap();
        prop_assert!((&back.x - &d.x).amax() < 1e-9);
        prop_assert!((&back.y - &d.y).amax() < 1e-9);
    }

    #[test]
    fn lasso_matches_enumeration(
        a in matrix(15, 3),
        y in prop::collection::vec(-5.0f64..5.0, 15),
        m in 1usize..=3,
        frac in 0.01f64..1.1,
    ) {
        let a = a.columns(0, m).into_owned();
        let y = DVector::from_vec(y);
        let lambda = frac * lasso::lambda_max(&a, &y);
        prop_assume!(lambda > 0.0);
        let fit = lasso::lasso_cd(&a, &y, lambda, 1e-10, 100_000).unwrap();
        prop_assert!(fit.converged);
        let oracle = enumerate_lasso(&a, &y, lambda);
        for (b, o) in fit.beta.iter().zip(&oracle) {
            prop_assert!((b - o).abs() < 1e-6, "{:?} vs {:?}", fit.beta, oracle);
        }
    }

    #[test]
    fn truncation_matches_eigen_oracle(x in matrix(14, 9), r in 0usize..=4) {
        let est = factor::fit_pc(&x, r).unwrap();
        let eig = (x.transpose() * &x).symmetric_eigen();
        let mut order: Vec<usize> = (0..9).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // ties in the spectrum make the subspace ambiguous
        prop_assume!((0..8).all(|k| eig.eigenvalues[order[k]] - eig.eigenvalues[order[k + 1]] > 1e-6));
        let v_r = DMatrix::from_fn(9, r, |i, k| eig.eigenvectors[(i, order[k])]);
        let oracle = &x * &v_r * v_r.transpose();
        prop_assert!((&est.c_hat - &oracle).norm() < 1e-8);
        prop_assert!((est.c_hat.transpose() * &est.e_hat).amax() < 1e-8);
        prop_assert!((&est.c_hat + &est.e_hat - &x).amax() < 1e-12);
    }
}

#[test]
fn warm_and_cold_solutions_agree() {
    let a = DMatrix::from_fn(30, 8, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0 + 0.1 * j as f64);
    let y = DVector::from_fn(30, |i, _| (i % 5) as f64 - 2.0);
    let grid = lasso::lambda_grid(lasso::lambda_max(&a, &y), 20, 1e-3);
    let path = lasso::lasso_path(&a, &y, &grid, &LassoOptions::default()).unwrap();
    for (fit, &lambda) in path.iter().zip(&grid) {
        let cold = lasso::lasso_cd(&a, &y, lambda, 1e-10, 100_000).unwrap();
        let gap = fit.beta.iter().zip(&cold.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-4, "lambda {lambda}: gap {gap}");
        assert!(lasso::kkt_check(&a, &y, &fit.beta, lambda) / (lasso::max_correlation(&a, &y)) <= 1e-6);
    }
}
