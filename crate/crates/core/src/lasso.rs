//! Lasso by cyclic coordinate descent, KKT verification, K-fold
//! cross-validation, and least squares.
//!
//! The objective is taken without any sample-size normalization:
//!
//! ```text
//! ||y - A b||_2^2 + lambda * ||b||_1
//! ```
//!
//! so stationarity reads `2 a_j'(y - A b) = lambda * sign(b_j)` on the active
//! set and `|2 a_j'(y - A b)| <= lambda` off it, and the all-zero solution is
//! optimal once `lambda >= 2 ||A'y||_inf`.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IpadError, Result};
use crate::seed::SeedSpec;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// KKT tolerance relative to `||A'y||_inf`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    #[serde(with = "sparse_beta")]
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Coordinate sweeps over the working set.
    pub n_iterations: usize,
    /// Largest KKT residual divided by `||A'y||_inf` (or 1 when that is 0).
    pub kkt_violation: f64,
    pub objective: f64,
    pub converged: bool,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// JSON encoding of beta as `{"len": m, "entries": [[index, value], ...]}`.
mod sparse_beta {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Sparse {
        len: usize,
        entries: Vec<(usize, f64)>,
    }

    pub fn serialize<S: Serializer>(beta: &[f64], s: S) -> Result<S::Ok, S::Error> {
        Sparse {
            len: beta.len(),
            entries: beta
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let sparse = Sparse::deserialize(d)?;
        let mut beta = vec![0.0; sparse.len];
        for (i, v) in sparse.entries {
            if i >= sparse.len {
                return Err(serde::de::Error::custom("sparse index out of range"));
            }
            beta[i] = v;
        }
        Ok(beta)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn column(a: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = a.nrows();
    &a.as_slice()[j * n..(j + 1) * n]
}

fn check_inputs(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(IpadError::DimensionMismatch {
            context: "lasso response",
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(IpadError::NonFinite("lasso input"));
    }
    Ok(())
}

/// `||A'y||_inf`.
pub fn max_correlation(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| dot(column(a, j), y.as_slice()).abs())
        .fold(0.0, f64::max)
}

/// Smallest lambda at which the zero vector is optimal.
pub fn lambda_max(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    2.0 * max_correlation(a, y)
}

fn kkt_from_residual(a: &DMatrix<f64>, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(j, &b)| violation(2.0 * dot(column(a, j), r), b, lambda))
        .fold(0.0, f64::max)
}

fn residual(a: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64]) -> Vec<f64> {
    let mut r = y.as_slice().to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            axpy(-b, column(a, j), &mut r);
        }
    }
    r
}

/// Maximum absolute KKT residual of `beta` for the unnormalized objective.
pub fn kkt_check(a: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    assert_eq!(a.ncols(), beta.len(), "beta length must match design width");
    assert_eq!(a.nrows(), y.len(), "response length must match design rows");
    kkt_from_residual(a, &residual(a, y, beta), beta, lambda)
}

/// `||y - A b||^2 + lambda ||b||_1`.
pub fn objective(a: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let r = residual(a, y, beta);
    dot(&r, &r) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

const ANDERSON_DEPTH: usize = 5;

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// Anderson mixing of the last iterates `x_0..x_K`: the affine combination of
/// `x_1..x_K` whose coefficients minimize the norm of the combined successive
/// differences.
fn anderson_extrapolate(history: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = history.len() - 1;
    let diffs: Vec<Vec<f64>> = history
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = DMatrix::from_fn(k, k, |i, j| dot(&diffs[i], &diffs[j]));
    let ridge = 1e-10 * gram.trace().max(f64::MIN_POSITIVE);
    for i in 0..k {
        gram[(i, i)] += ridge;
    }
    let z = gram.cholesky()?.solve(&DVector::from_element(k, 1.0));
    let total: f64 = z.iter().sum();
    if !total.is_finite() || total.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let mut out = vec![0.0; history[0].len()];
    for (i, x) in history[1..].iter().enumerate() {
        let c = z[i] / total;
        axpy(c, x, &mut out);
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Reusable coordinate-descent state for one design matrix.
///
/// Coordinates are swept over a working set (the current support plus any
/// KKT violators) using cached Gram columns, so an inner sweep costs the
/// working-set size squared rather than a pass over the rows. A full gradient
/// is formed only to test optimality and grow the working set.
pub struct CdSolver<'a> {
    a: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    gram: RefCell<Vec<Option<Vec<f64>>>>,
}

fn violation(g: f64, b: f64, lambda: f64) -> f64 {
    if b > 0.0 {
        (g - lambda).abs()
    } else if b < 0.0 {
        (g + lambda).abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

impl<'a> CdSolver<'a> {
    pub fn new(a: &'a DMatrix<f64>) -> Self {
        let col_sq: Vec<f64> = (0..a.ncols())
            .map(|j| {
                let c = column(a, j);
                dot(c, c)
            })
            .collect();
        Self {
            a,
            col_sq,
            gram: RefCell::new(vec![None; a.ncols()]),
        }
    }

    fn gradient(&self, r: &[f64]) -> Vec<f64> {
        (0..self.a.ncols()).map(|j| dot(column(self.a, j), r)).collect()
    }

    /// Gram block of the working set, column-major, `ws.len()` square.
    /// Entries are computed on first use and cached symmetrically.
    fn gram_block(&self, ws: &[usize]) -> Vec<f64> {
        let m = self.a.ncols();
        let mut cache = self.gram.borrow_mut();
        for &j in ws {
            if cache[j].is_none() {
                cache[j] = Some(vec![f64::NAN; m]);
            }
        }
        let k = ws.len();
        let mut out = Vec::with_capacity(k * k);
        for &j in ws {
            for &i in ws {
                let mut v = cache[j].as_ref().expect("allocated above")[i];
                if v.is_nan() {
                    v = dot(column(self.a, i), column(self.a, j));
                    cache[j].as_mut().expect("allocated above")[i] = v;
                    cache[i].as_mut().expect("allocated above")[j] = v;
                }
                out.push(v);
            }
        }
        out
    }

    /// Solves at `lambda`, starting from `warm` (or zero).
    pub fn solve(
        &self,
        y: &DVector<f64>,
        lambda: f64,
        warm: Option<&[f64]>,
        opts: &LassoOptions,
    ) -> Result<LassoFit> {
        check_inputs(self.a, y, lambda)?;
        let m = self.a.ncols();
        let aty = self.gradient(y.as_slice());
        let scale = {
            let s = aty.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };
        let target = opts.tol * scale;
        let half_lambda = 0.5 * lambda;
        let yy = dot(y.as_slice(), y.as_slice());

        let mut beta: Vec<f64> = match warm {
            Some(w) => {
                if w.len() != m {
                    return Err(IpadError::DimensionMismatch {
                        context: "warm start",
                        expected: m,
                        found: w.len(),
                    });
                }
                w.iter()
                    .zip(&self.col_sq)
                    .map(|(b, cs)| if *cs > 0.0 { *b } else { 0.0 })
                    .collect()
            }
            None => vec![0.0; m],
        };
        let mut r = residual(self.a, y, &beta);
        let mut grad = self.gradient(&r);

        let mut in_ws = vec![false; m];
        let mut ws: Vec<usize> = Vec::new();
        for j in 0..m {
            if beta[j] != 0.0 {
                in_ws[j] = true;
                ws.push(j);
            }
        }

        let mut sweeps = 0usize;
        let mut kkt;
        let mut converged = false;
        loop {
            let v: Vec<f64> = (0..m).map(|j| violation(2.0 * grad[j], beta[j], lambda)).collect();
            kkt = v.iter().cloned().fold(0.0, f64::max);
            if kkt <= target {
                converged = true;
                break;
            }
            if sweeps >= opts.max_sweeps {
                break;
            }
            for j in 0..m {
                if !in_ws[j] && self.col_sq[j] > 0.0 && v[j] > target {
                    in_ws[j] = true;
                    ws.push(j);
                }
            }
            ws.sort_unstable();

            let k = ws.len();
            let g = self.gram_block(&ws);
            let cs: Vec<f64> = ws.iter().map(|&j| self.col_sq[j]).collect();
            let aty_ws: Vec<f64> = ws.iter().map(|&j| aty[j]).collect();
            // c holds a_j'r over the working set
            let mut c: Vec<f64> = ws.iter().map(|&j| grad[j]).collect();
            let mut b: Vec<f64> = ws.iter().map(|&j| beta[j]).collect();
            // with every coordinate outside the working set at zero,
            // ||r||^2 = y'y - b'A'y - b'c
            let objective_of = |b: &[f64], c: &[f64]| {
                yy - dot(b, &aty_ws) - dot(b, c) + lambda * l1(b)
            };
            #[cfg(debug_assertions)]
            let mut last_obj = objective_of(&b, &c);

            let mut history: Vec<Vec<f64>> = vec![b.clone()];
            while sweeps < opts.max_sweeps {
                for t in 0..k {
                    let z = c[t] + cs[t] * b[t];
                    let new = soft_threshold(z, half_lambda) / cs[t];
                    let delta = new - b[t];
                    if delta != 0.0 {
                        axpy(-delta, &g[t * k..(t + 1) * k], &mut c);
                        b[t] = new;
                    }
                }
                sweeps += 1;
                #[cfg(debug_assertions)]
                {
                    let obj = objective_of(&b, &c);
                    debug_assert!(
                        obj <= last_obj + 1e-9 * yy.max(1.0),
                        "coordinate descent increased the objective: {last_obj} -> {obj}"
                    );
                    last_obj = obj;
                }
                let ws_kkt = (0..k)
                    .map(|t| violation(2.0 * c[t], b[t], lambda))
                    .fold(0.0, f64::max);
                if ws_kkt <= 0.5 * target {
                    break;
                }
                history.push(b.clone());
                if history.len() > ANDERSON_DEPTH {
                    if let Some(cand) = anderson_extrapolate(&history) {
                        let mut c_cand = aty_ws.clone();
                        for t in 0..k {
                            if cand[t] != 0.0 {
                                axpy(-cand[t], &g[t * k..(t + 1) * k], &mut c_cand);
                            }
                        }
                        let proposed = objective_of(&cand, &c_cand);
                        if proposed < objective_of(&b, &c) {
                            b = cand;
                            c = c_cand;
                            #[cfg(debug_assertions)]
                            {
                                last_obj = proposed;
                            }
                        }
                    }
                    history.clear();
                    history.push(b.clone());
                }
            }
            for (t, &j) in ws.iter().enumerate() {
                beta[j] = b[t];
            }
            // refresh from scratch so round-off in c never accumulates
            r = residual(self.a, y, &beta);
            grad = self.gradient(&r);
            ws.retain(|&j| beta[j] != 0.0);
            in_ws.iter_mut().for_each(|f| *f = false);
            for &j in &ws {
                in_ws[j] = true;
            }
        }
        let obj = dot(&r, &r) + lambda * l1(&beta);
        Ok(LassoFit {
            beta,
            lambda,
            n_iterations: sweeps,
            kkt_violation: kkt / scale,
            objective: obj,
            converged,
        })
    }
}

/// Solves the Lasso at a single `lambda` from a cold start.
pub fn lasso_cd(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoFit> {
    CdSolver::new(a).solve(y, lambda, None, &LassoOptions { tol, max_sweeps })
}

/// Solves along a lambda sequence with warm starts.
pub fn lasso_path(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<LassoFit>> {
    let solver = CdSolver::new(a);
    let mut out: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = out.last().map(|f| f.beta.as_slice());
        let fit = solver.solve(y, lambda, warm, opts)?;
        out.push(fit);
    }
    Ok(out)
}

/// Log-spaced decreasing grid from `lambda_max` to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, grid_size: usize, min_ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    let (hi, lo) = (top.ln(), (top * min_ratio).ln());
    (0..grid_size)
        .map(|g| (hi + (lo - hi) * g as f64 / (grid_size - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// The evaluated prefix of the log-spaced grid.
    pub lambda_grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
    pub lambda_star: f64,
    pub star_index: usize,
    pub fold_assignment_seed: SeedSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub n_folds: usize,
    pub grid_size: usize,
    pub min_ratio: f64,
    /// Solver settings for the per-fold paths.
    pub fold_solver: LassoOptions,
    /// Stop descending the grid once lambda falls below this fraction of the
    /// best lambda so far while the CV error is above its running minimum.
    /// `None` evaluates the whole grid.
    pub early_stop_ratio: Option<f64>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_folds: 10,
            grid_size: 100,
            min_ratio: 1e-3,
            // fold fits only feed an error estimate; the final fit uses the
            // strict default tolerance
            fold_solver: LassoOptions {
                tol: 1e-4,
                ..LassoOptions::default()
            },
            early_stop_ratio: Some(0.5),
        }
    }
}

/// Seeded balanced fold labels: a random permutation dealt round-robin.
pub fn fold_assignment(n: usize, n_folds: usize, seed: SeedSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % n_folds;
    }
    folds
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// K-fold cross-validation over a log-spaced grid.
///
/// Fold models are fit on `n_train` rows, so each grid value is scaled by
/// `n_train / n` there to keep the per-observation penalty the same as on the
/// full data.
pub fn lasso_cv(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    n_folds: usize,
    grid_size: usize,
    seed: SeedSpec,
) -> Result<CvResult> {
    lasso_cv_with(
        a,
        y,
        &CvOptions {
            n_folds,
            grid_size,
            ..CvOptions::default()
        },
        seed,
    )
}

pub fn lasso_cv_with(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &CvOptions,
    seed: SeedSpec,
) -> Result<CvResult> {
    check_inputs(a, y, 0.0)?;
    let n = a.nrows();
    if opts.n_folds < 2 || opts.n_folds > n {
        return Err(invalid(format!(
            "n_folds = {} must lie in [2, n = {n}]",
            opts.n_folds
        )));
    }
    if opts.grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    let mut grid = lambda_grid(lambda_max(a, y), opts.grid_size, opts.min_ratio);
    let folds = fold_assignment(n, opts.n_folds, seed);

    struct Fold {
        a_train: DMatrix<f64>,
        y_train: DVector<f64>,
        test: Vec<usize>,
        shrink: f64,
    }
    let fold_data: Vec<Fold> = (0..opts.n_folds)
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == k).collect();
            Fold {
                a_train: select_rows(a, &train),
                y_train: DVector::from_iterator(train.len(), train.iter().map(|&i| y[i])),
                shrink: train.len() as f64 / n as f64,
                test,
            }
        })
        .collect();
    let solvers: Vec<CdSolver<'_>> = fold_data.iter().map(|f| CdSolver::new(&f.a_train)).collect();
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; opts.n_folds];

    let mut cv_mse: Vec<f64> = Vec::with_capacity(grid.len());
    let mut star = 0;
    for (g, &lambda) in grid.iter().enumerate() {
        let mut sse = 0.0;
        for ((fold, solver), warm) in fold_data.iter().zip(&solvers).zip(warm.iter_mut()) {
            let fit = solver.solve(
                &fold.y_train,
                lambda * fold.shrink,
                warm.as_deref(),
                &opts.fold_solver,
            )?;
            for &i in &fold.test {
                let mut pred = 0.0;
                for (j, b) in fit.beta.iter().enumerate() {
                    if *b != 0.0 {
                        pred += a[(i, j)] * b;
                    }
                }
                sse += (y[i] - pred).powi(2);
            }
            *warm = Some(fit.beta);
        }
        cv_mse.push(sse / n as f64);
        if cv_mse[g] < cv_mse[star] {
            star = g;
        }
        if let Some(ratio) = opts.early_stop_ratio {
            if lambda < ratio * grid[star] && cv_mse[g] > cv_mse[star] {
                break;
            }
        }
    }
    grid.truncate(cv_mse.len());
    Ok(CvResult {
        lambda_star: grid[star],
        star_index: star,
        lambda_grid: grid,
        cv_mse,
        fold_assignment_seed: seed,
    })
}

/// Cross-validates, then fits the full data at `lambda_star`, warm-starting
/// down the grid.
pub fn lasso_cv_fit(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &CvOptions,
    final_solver: &LassoOptions,
    seed: SeedSpec,
) -> Result<(CvResult, LassoFit)> {
    let cv = lasso_cv_with(a, y, opts, seed)?;
    let path = lasso_path(a, y, &cv.lambda_grid[..=cv.star_index], final_solver)?;
    let fit = path.into_iter().last().expect("grid is nonempty");
    Ok((cv, fit))
}

/// Least squares by Householder QR.
///
/// A column whose remaining component after projecting out the previous ones
/// is below `1e-10` of its original norm is reported as rank deficient.
pub fn ols(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, m) = a.shape();
    if y.len() != n {
        return Err(IpadError::DimensionMismatch {
            context: "ols response",
            expected: n,
            found: y.len(),
        });
    }
    if m > n {
        return Err(invalid(format!("ols needs m <= n, got m = {m}, n = {n}")));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(IpadError::NonFinite("ols input"));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut r = a.clone();
    let mut qty = y.as_slice().to_vec();
    let mut v = vec![0.0; n];
    for k in 0..m {
        let alpha = {
            let tail = &column(&r, k)[k..];
            dot(tail, tail).sqrt()
        };
        if norms[k] == 0.0 || alpha <= 1e-10 * norms[k] {
            return Err(IpadError::RankDeficient { pivot: k });
        }
        let x0 = r[(k, k)];
        let alpha = if x0 > 0.0 { -alpha } else { alpha };
        let v = &mut v[..n - k];
        v.copy_from_slice(&column(&r, k)[k..]);
        v[0] -= alpha;
        let vnorm2 = dot(v, v);
        if vnorm2 > 0.0 {
            let data = r.as_mut_slice();
            for j in k..m {
                let col = &mut data[j * n + k..(j + 1) * n];
                let s = 2.0 * dot(v, col) / vnorm2;
                axpy(-s, v, col);
            }
            let tail = &mut qty[k..];
            let s = 2.0 * dot(v, tail) / vnorm2;
            axpy(-s, v, tail);
        }
    }
    let mut beta = DVector::zeros(m);
    for k in (0..m).rev() {
        let mut s = qty[k];
        for j in k + 1..m {
            s -= r[(k, j)] * beta[j];
        }
        beta[k] = s / r[(k, k)];
    }
    Ok(beta)
}

/// Least squares that drops columns from the highest index down, among those
/// listed in `droppable`, until the design has full column rank. Returns the
/// kept column indices and their coefficients.
pub fn ols_dropping(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    droppable: &[usize],
) -> Result<(Vec<usize>, DVector<f64>)> {
    let mut keep: Vec<usize> = (0..a.ncols()).collect();
    let mut candidates: Vec<usize> = droppable.to_vec();
    candidates.sort_unstable();
    loop {
        let sub = DMatrix::from_fn(a.nrows(), keep.len(), |i, k| a[(i, keep[k])]);
        let too_wide = keep.len() > a.nrows();
        match (too_wide, if too_wide { None } else { Some(ols(&sub, y)) }) {
            (false, Some(Ok(beta))) => return Ok((keep, beta)),
            (_, Some(Err(e))) if !matches!(e, IpadError::RankDeficient { .. }) => return Err(e),
            _ => {
                let Some(drop) = candidates.pop() else {
                    return Err(IpadError::RankDeficient { pivot: keep.len() });
                };
                keep.retain(|&c| c != drop);
            }
        }
    }
}
