//! Seeded Monte Carlo checks with "k of 20 seeds" style pass rules.

use std::fs;

use ipad::data::{self, Dataset};
use ipad::factor;
use ipad::forecast::{self, Window};
use ipad::forest::{self, ForestConfig};
use ipad::knockoff;
use ipad::lasso::{self, CvOptions, LassoOptions};
use ipad::pipeline::IpadOptions;
use ipad::seed::Rng as SeededRng;
use ipad::SeedSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, p: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn successes(seeds: u64, mut trial: impl FnMut(u64) -> bool) -> usize {
    (0..seeds).filter(|&s| trial(s)).count()
}

// ---- factor engine ----

#[test]
fn planted_factors_are_counted() {
    let mut rng = SeedSpec::new(100, 0).rng();
    let f = gaussian(200, 3, &mut rng);
    let l = gaussian(200, 3, &mut rng);
    let x = &f * l.transpose() + gaussian(200, 200, &mut rng) * 0.01;
    assert_eq!(factor::estimate_num_factors(&x, 8).unwrap(), 3);
}

#[test]
fn pure_noise_has_no_factors() {
    let x = gaussian(200, 200, &mut SeedSpec::new(101, 0).rng());
    let decomp = factor::PcDecomposition::new(&x).unwrap();
    // brute force: refit every rank from scratch
    let sigma_bar2 = factor::noise_variance(&factor::fit_pc(&x, 8).unwrap().e_hat);
    let penalty = factor::pc_p1_penalty(200, 200);
    let brute: Vec<f64> = (0..=8)
        .map(|k| factor::noise_variance(&factor::fit_pc(&x, k).unwrap().e_hat) + k as f64 * sigma_bar2 * penalty)
        .collect();
    let curve = factor::pc_p1_curve(&decomp, 200, 200, 8);
    for (a, b) in brute.iter().zip(&curve) {
        assert!((a - b).abs() < 1e-10 * a.abs());
    }
    let argmin = (0..=8).min_by(|&a, &b| brute[a].total_cmp(&brute[b])).unwrap();
    assert_eq!(argmin, 0);
    assert_eq!(factor::estimate_num_factors(&x, 8).unwrap(), 0);
}

#[test]
fn factor_count_is_scale_invariant() {
    for s in 0..5 {
        let mut rng = SeedSpec::new(102, s).rng();
        let f = gaussian(60, 2, &mut rng);
        let l = gaussian(40, 2, &mut rng);
        let x = &f * l.transpose() + gaussian(60, 40, &mut rng) * (0.5 + s as f64);
        let k = factor::estimate_num_factors(&x, 6).unwrap();
        assert_eq!(factor::estimate_num_factors(&(&x * 7.3), 6).unwrap(), k);
        assert_eq!(factor::estimate_num_factors(&(&x * 1e-3), 6).unwrap(), k);
    }
}

#[test]
fn small_truncation_matches_eigen_oracle() {
    let x = gaussian(6, 5, &mut SeedSpec::new(103, 0).rng());
    let est = factor::fit_pc(&x, 2).unwrap();
    let eig = (x.transpose() * &x).symmetric_eigen();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = DMatrix::from_fn(5, 2, |i, k| eig.eigenvectors[(i, order[k])]);
    assert!((&est.c_hat - &x * &v * v.transpose()).norm() < 1e-8);
}

/// Rank-r fit by alternating least squares, run until it stops moving.
fn als(x: &DMatrix<f64>, r: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let mut b = gaussian(x.ncols(), r, rng);
    let mut prev = f64::INFINITY;
    for _ in 0..20_000 {
        let a = x * &b * (b.transpose() * &b).try_inverse().unwrap();
        b = x.transpose() * &a * (a.transpose() * &a).try_inverse().unwrap();
        let err = (x - &a * b.transpose()).norm();
        if (prev - err).abs() < 1e-13 {
            return &a * b.transpose();
        }
        prev = err;
    }
    panic!("ALS did not settle");
}

#[test]
fn truncated_svd_beats_alternating_least_squares() {
    for s in 0..10 {
        let mut rng = SeedSpec::new(104, s).rng();
        let x = gaussian(9, 7, &mut rng);
        let r = 1 + (s % 3) as usize;
        let est = factor::fit_pc(&x, r).unwrap();
        let m = als(&x, r, &mut rng);
        assert!((&x - &est.c_hat).norm() <= (&x - m).norm() + 1e-6);
    }
}

// ---- knockoff factory ----

#[test]
fn knockoff_noise_moments() {
    let k = knockoff::generate(&DMatrix::zeros(1000, 1000), 1.0, SeedSpec::new(105, 0)).unwrap();
    let n = k.x_tilde.len() as f64;
    let mean = k.x_tilde.sum() / n;
    let var = k.x_tilde.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "var {var}");
}

// Cross and own Gram matrices of oracle knockoffs against their population
// values, entrywise within 3 standard errors over 2000 draws.
#[test]
fn oracle_knockoff_gram_identities() {
    let (n, p, draws) = (50, 4, 2000);
    let mut rng = SeedSpec::new(106, 0).rng();
    let lambda = gaussian(p, 3, &mut rng);
    let target_cross = &lambda * lambda.transpose();
    let target_own = &target_cross + DMatrix::identity(p, p);
    let mut sums = [DMatrix::zeros(p, p), DMatrix::zeros(p, p)];
    let mut squares = [DMatrix::zeros(p, p), DMatrix::zeros(p, p)];
    for d in 0..draws {
        let f = gaussian(n, 3, &mut rng);
        let c0 = &f * lambda.transpose();
        let x = &c0 + gaussian(n, p, &mut rng);
        let xt = knockoff::generate_oracle(&c0, 1.0, SeedSpec::new(1060, d)).unwrap().x_tilde;
        for (k, g) in [xt.transpose() * &x / n as f64, xt.transpose() * &xt / n as f64].into_iter().enumerate() {
            squares[k] += g.component_mul(&g);
            sums[k] += g;
        }
    }
    for (k, target) in [target_cross, target_own].iter().enumerate() {
        let mean = &sums[k] / draws as f64;
        for i in 0..p {
            for j in 0..p {
                let var = squares[k][(i, j)] / draws as f64 - mean[(i, j)].powi(2);
                let se = (var / draws as f64).sqrt();
                assert!(
                    (mean[(i, j)] - target[(i, j)]).abs() <= 3.0 * se,
                    "gram {k} entry ({i},{j}): {} vs {} (se {se})",
                    mean[(i, j)],
                    target[(i, j)]
                );
            }
        }
    }
}

// ---- sparse regression ----

fn objective2(a: &DMatrix<f64>, y: &DVector<f64>, b: [f64; 2], lambda: f64) -> f64 {
    lasso::objective(a, y, &b, lambda)
}

#[test]
fn orthogonal_pair_matches_lattice_search() {
    // columns orthogonal with unequal norms
    let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, -1.0]);
    let y = DVector::from_vec(vec![2.0, 1.5, 3.0, -0.5]);
    let lambda = 1.3;
    let fit = lasso::lasso_cd(&a, &y, lambda, 1e-12, 100_000).unwrap();

    // 400 x 400 lattice, re-centred and narrowed until the spacing is tiny
    let (mut center, mut half) = ([0.0, 0.0], 5.0);
    while half > 1e-6 {
        let step = 2.0 * half / 399.0;
        let mut best = (f64::INFINITY, center);
        for i in 0..400 {
            for j in 0..400 {
                let b = [center[0] - half + i as f64 * step, center[1] - half + j as f64 * step];
                let v = objective2(&a, &y, b, lambda);
                if v < best.0 {
                    best = (v, b);
                }
            }
        }
        center = best.1;
        half = 4.0 * step;
    }
    assert!((fit.beta[0] - center[0]).abs() < 1e-4 && (fit.beta[1] - center[1]).abs() < 1e-4);
    // coordinatewise soft thresholding on each column
    for j in 0..2 {
        let z = a.column(j).dot(&y);
        let expect = z.signum() * (z.abs() - lambda / 2.0).max(0.0) / a.column(j).norm_squared();
        assert!((fit.beta[j] - expect).abs() < 1e-10);
    }
}

#[test]
fn kkt_check_detects_perturbation() {
    let mut rng = SeedSpec::new(107, 0).rng();
    let a = gaussian(40, 6, &mut rng);
    let y = gaussian(40, 1, &mut rng).column(0).into_owned();
    let lambda = 0.3 * lasso::lambda_max(&a, &y);
    let fit = lasso::lasso_cd(&a, &y, lambda, lasso::DEFAULT_TOL, lasso::DEFAULT_MAX_SWEEPS).unwrap();
    let scale = lasso::max_correlation(&a, &y);
    assert!(lasso::kkt_check(&a, &y, &fit.beta, lambda) <= lasso::DEFAULT_TOL * scale);
    let mut bumped = fit.beta.clone();
    bumped[0] += 0.05;
    assert!(lasso::kkt_check(&a, &y, &bumped, lambda) > lasso::DEFAULT_TOL * scale);
    assert_eq!(lasso::kkt_check(&a, &y, &[0.0; 6], lasso::lambda_max(&a, &y)), 0.0);
}

#[test]
fn cv_keeps_noise_sparse_and_finds_a_strong_signal() {
    let cv = CvOptions::default();
    let solver = LassoOptions::default();
    let sparse_noise = successes(20, |s| {
        let mut rng = SeedSpec::new(108, s).rng();
        let a = gaussian(100, 20, &mut rng);
        let y = gaussian(100, 1, &mut rng).column(0).into_owned();
        let (_, fit) = lasso::lasso_cv_fit(&a, &y, &cv, &solver, SeedSpec::new(1080, s)).unwrap();
        fit.support().len() <= 2
    });
    assert!(sparse_noise >= 18, "{sparse_noise}/20");
    let found = successes(20, |s| {
        let mut rng = SeedSpec::new(109, s).rng();
        let a = gaussian(100, 20, &mut rng);
        let y = a.column(4) * 3.0 + gaussian(100, 1, &mut rng).column(0);
        let (_, fit) = lasso::lasso_cv_fit(&a, &y, &cv, &solver, SeedSpec::new(1090, s)).unwrap();
        fit.support().contains(&4)
    });
    assert!(found >= 18, "{found}/20");
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = SeedSpec::new(110, 0).rng();
    let a = gaussian(20, 5, &mut rng);
    let y = gaussian(20, 1, &mut rng).column(0).into_owned();
    let beta = lasso::ols(&a, &y).unwrap();
    let oracle = a.clone().qr().r().try_inverse().unwrap() * a.clone().qr().q().transpose() * &y;
    assert!((&beta - &oracle).amax() < 1e-10);
    let normal_residual = a.transpose() * (&y - &a * &beta);
    assert!(normal_residual.amax() < 1e-8 * (a.transpose() * &y).amax());
}

// ---- forest ----

#[test]
fn noise_columns_score_far_below_the_signal() {
    let ok = successes(20, |s| {
        let mut rng = SeedSpec::new(111, s).rng();
        let a = gaussian(200, 5, &mut rng);
        let y = a.column(0) * 2.0 + gaussian(200, 1, &mut rng).column(0) * 0.1;
        let cfg = ForestConfig {
            n_trees: 200,
            ..ForestConfig::with_defaults(5, SeedSpec::new(1110, s))
        };
        let model = forest::fit_forest(&a, &y, &cfg).unwrap();
        let imp = forest::mda(&model, &a, &y, SeedSpec::new(1111, s)).unwrap().importance;
        imp[1..].iter().all(|v| v.abs() <= 0.1 * imp[0])
    });
    assert!(ok >= 18, "{ok}/20");
}

// ---- forecaster ----

fn ar_series(len: usize, rng: &mut SeededRng) -> DVector<f64> {
    let mut y = DVector::zeros(len);
    for t in 1..len {
        y[t] = 0.5 * y[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    y
}

#[test]
fn far_ignores_unrelated_predictors() {
    let ok = successes(20, |s| {
        let mut rng = SeedSpec::new(112, s).rng();
        let y = ar_series(120, &mut rng);
        let w = Window { z: gaussian(120, 15, &mut rng), y: y.clone() };
        let gap = forecast::far_step(&w).unwrap() - forecast::ar1_step(y.as_slice()).unwrap();
        gap.abs() < 0.5
    });
    assert!(ok >= 18, "{ok}/20");
}

fn in_window_mse(y: &DVector<f64>, extra: &DMatrix<f64>) -> f64 {
    let w = y.len();
    let a = DMatrix::from_fn(w - 1, 2 + extra.ncols(), |i, j| match j {
        0 => 1.0,
        1 => y[i],
        _ => extra[(i, j - 2)],
    });
    let target = y.rows(1, w - 1).into_owned();
    let beta = lasso::ols(&a, &target).unwrap();
    (&target - &a * beta).norm_squared() / (w - 1) as f64
}

#[test]
fn dominant_factor_improves_the_in_window_fit() {
    let mut rng = SeedSpec::new(113, 0).rng();
    let w = 120;
    let f = gaussian(w, 1, &mut rng);
    let z = &f * gaussian(1, 20, &mut rng) + gaussian(w, 20, &mut rng) * 0.3;
    let mut y = DVector::zeros(w);
    for t in 1..w {
        y[t] = 0.2 * y[t - 1] + 2.0 * f[(t - 1, 0)] + 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let factors = forecast::window_factors(&z, None).unwrap();
    assert!(factors.ncols() >= 1);
    assert!(in_window_mse(&y, &factors) < in_window_mse(&y, &DMatrix::zeros(w, 0)));
}

#[test]
fn lasso_step_tracks_a_planted_predictor() {
    let ok = successes(20, |s| {
        let mut rng = SeedSpec::new(114, s).rng();
        let z = gaussian(100, 10, &mut rng);
        let y = DVector::from_fn(100, |t, _| {
            let lag = if t > 0 { z[(t - 1, 3)] } else { 0.0 };
            2.0 * lag + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let truth = 2.0 * z[(99, 3)];
        let w = Window { y, z };
        let f = forecast::lasso_step(&w, &CvOptions::default(), SeedSpec::new(1140, s)).unwrap();
        (f - truth).abs() < 0.3
    });
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn ipad_step_selects_little_under_the_null() {
    let mut rng = SeedSpec::new(115, 0).rng();
    let y = ar_series(80, &mut rng);
    let w = Window { y, z: gaussian(80, 20, &mut rng) };
    let out = forecast::ipad_step(&w, 50, &IpadOptions::default(), false, SeedSpec::new(1150, 0)).unwrap();
    let mean_size: f64 = out.selection_frequency.iter().sum();
    assert!(mean_size <= 1.0, "mean selected-set size {mean_size}");
    let again = forecast::ipad_step(&w, 50, &IpadOptions::default(), false, SeedSpec::new(1150, 0)).unwrap();
    assert_eq!(out, again);
}

#[test]
fn one_extra_row_gives_one_forecast() {
    let panel = forecast::synthetic_panel(121, 4, SeedSpec::new(116, 0)).unwrap();
    let opts = forecast::ForecastOptions {
        methods: vec![forecast::Method::Ar, forecast::Method::Far, forecast::Method::Lasso],
        ..forecast::ForecastOptions::default()
    };
    let report = forecast::roll(&panel, &opts).unwrap();
    assert!(report.methods.iter().all(|m| m.predictions.len() == 1));
    assert!(report.dm.is_empty());
    assert!(forecast::roll(&forecast::synthetic_panel(120, 4, SeedSpec::new(116, 0)).unwrap(), &opts).is_err());
}

// ---- data model ----

#[test]
fn macro_panel_shape_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("macro.csv");
    let mut body = String::from("date,RGDP");
    for j in 2..=110 {
        body.push_str(&format!(",v{j}"));
    }
    body.push('\n');
    for i in 0..195 {
        body.push_str(&format!("{}Q{}", 1959 + i / 4, i % 4 + 1));
        for j in 1..=110 {
            body.push_str(&format!(",{}", ((i * 31 + j * 17) % 97) as f64 / 9.7));
        }
        body.push('\n');
    }
    fs::write(&path, body).unwrap();
    let d = data::load_csv(&path, true, "RGDP").unwrap();
    assert_eq!((d.n(), d.p()), (195, 109));
    assert_eq!(d.column_names[0], "v2");
}

#[test]
fn standardize_round_trip_is_tight() {
    let mut rng = SeedSpec::new(117, 0).rng();
    let x = gaussian(50, 3, &mut rng) * 40.0 + DMatrix::from_element(50, 3, 7.0);
    let d = Dataset::from_matrix(x, gaussian(50, 1, &mut rng).column(0).into_owned()).unwrap();
    let centered = data::center_columns(&d);
    assert!(centered.x.column_iter().all(|c| c.mean().abs() <= 1e-12));
    assert!(centered.y.mean().abs() <= 1e-12);
    let (s, record) = data::standardize(&d).unwrap();
    let back = record.restore(&s).unwrap();
    assert!((&back.x - &d.x).norm() / d.x.norm() <= 1e-12);
}
