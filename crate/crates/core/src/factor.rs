//! Principal-component estimation of the latent factor structure.
//!
//! The common component is the rank-r truncated SVD of `x`. Factors are
//! normalized so that `f'f / n = I_r` and loadings are `x'f / n`, so
//! `c_hat = f_hat * lambda_hat'`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{read_matrix_csv, write_matrix_csv};
use crate::error::{invalid, IpadError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorEstimate {
    pub r_hat: usize,
    pub f_hat: DMatrix<f64>,
    pub lambda_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
    pub e_hat: DMatrix<f64>,
    pub sigma2_hat: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FactorHeader {
    n: usize,
    p: usize,
    r_hat: usize,
    sigma2_hat: f64,
}

impl FactorEstimate {
    /// Writes `f_hat.csv`, `lambda_hat.csv`, `c_hat.csv`, `e_hat.csv` and
    /// `header.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| IpadError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_matrix_csv(&dir.join("f_hat.csv"), &self.f_hat)?;
        write_matrix_csv(&dir.join("lambda_hat.csv"), &self.lambda_hat)?;
        write_matrix_csv(&dir.join("c_hat.csv"), &self.c_hat)?;
        write_matrix_csv(&dir.join("e_hat.csv"), &self.e_hat)?;
        let header = FactorHeader {
            n: self.c_hat.nrows(),
            p: self.c_hat.ncols(),
            r_hat: self.r_hat,
            sigma2_hat: self.sigma2_hat,
        };
        let path = dir.join("header.json");
        fs::write(&path, serde_json::to_string_pretty(&header).expect("header serializes"))
            .map_err(|source| IpadError::Io { path, source })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("header.json");
        let text = fs::read_to_string(&path).map_err(|source| IpadError::Io {
            path: path.clone(),
            source,
        })?;
        let h: FactorHeader =
            serde_json::from_str(&text).map_err(|e| invalid(format!("bad factor header: {e}")))?;
        Ok(Self {
            r_hat: h.r_hat,
            f_hat: read_matrix_csv(&dir.join("f_hat.csv"), h.n, h.r_hat)?,
            lambda_hat: read_matrix_csv(&dir.join("lambda_hat.csv"), h.p, h.r_hat)?,
            c_hat: read_matrix_csv(&dir.join("c_hat.csv"), h.n, h.p)?,
            e_hat: read_matrix_csv(&dir.join("e_hat.csv"), h.n, h.p)?,
            sigma2_hat: h.sigma2_hat,
        })
    }
}

/// Thin SVD with singular values sorted in decreasing order and a fixed sign
/// convention: the largest-magnitude entry of every right singular vector is
/// positive.
#[derive(Debug, Clone)]
pub struct PcDecomposition {
    pub singular_values: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl PcDecomposition {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IpadError::NonFinite("factor input"));
        }
        let (n, p) = x.shape();
        let k = n.min(p);
        if k == 0 {
            return Ok(Self {
                singular_values: DVector::zeros(0),
                u: DMatrix::zeros(n, 0),
                v: DMatrix::zeros(p, 0),
            });
        }
        let svd = x.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(IpadError::SvdFailure),
        };
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

        let mut u_sorted = DMatrix::zeros(n, k);
        let mut v_sorted = DMatrix::zeros(p, k);
        let mut s_sorted = DVector::zeros(k);
        for (dst, &src) in order.iter().enumerate() {
            let v_col = v_t.row(src).transpose();
            let pivot = v_col
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, &val)| {
                    if val.abs() > best.1 {
                        (i, val.abs())
                    } else {
                        best
                    }
                })
                .0;
            let sign = if v_col[pivot] < 0.0 { -1.0 } else { 1.0 };
            v_sorted.set_column(dst, &(v_col * sign));
            u_sorted.set_column(dst, &(u.column(src) * sign));
            s_sorted[dst] = s[src];
        }
        Ok(Self {
            singular_values: s_sorted,
            u: u_sorted,
            v: v_sorted,
        })
    }

    /// `||x - C(k)||_F^2`, summed over the discarded singular values.
    pub fn residual_ss(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum()
    }

    /// Rank-r fit of the matrix this decomposition was computed from.
    pub fn estimate(&self, x: &DMatrix<f64>, r: usize) -> Result<FactorEstimate> {
        let (n, p) = x.shape();
        if r > n.min(p) || r > self.singular_values.len() {
            return Err(invalid(format!(
                "rank {r} exceeds min(n, p) = {}",
                n.min(p)
            )));
        }
        let sqrt_n = (n as f64).sqrt();
        let u_r = self.u.columns(0, r);
        let v_r = self.v.columns(0, r);
        let f_hat = u_r * sqrt_n;
        let mut lambda_hat = v_r.clone_owned();
        for (j, mut col) in lambda_hat.column_iter_mut().enumerate() {
            col *= self.singular_values[j] / sqrt_n;
        }
        let c_hat = &f_hat * lambda_hat.transpose();
        let e_hat = x - &c_hat;
        let sigma2_hat = noise_variance(&e_hat);
        Ok(FactorEstimate {
            r_hat: r,
            f_hat,
            lambda_hat,
            c_hat,
            e_hat,
            sigma2_hat,
        })
    }
}

/// Principal-component fit with `r` factors.
pub fn fit_pc(x: &DMatrix<f64>, r: usize) -> Result<FactorEstimate> {
    let (n, p) = x.shape();
    if r > n.min(p) {
        return Err(invalid(format!(
            "rank {r} exceeds min(n, p) = {}",
            n.min(p)
        )));
    }
    PcDecomposition::new(x)?.estimate(x, r)
}

/// Maximum-likelihood variance of i.i.d. Gaussian residuals: the mean of the
/// squared entries.
pub fn noise_variance(e_hat: &DMatrix<f64>) -> f64 {
    let count = e_hat.len();
    if count == 0 {
        return 0.0;
    }
    e_hat.iter().map(|v| v * v).sum::<f64>() / count as f64
}

/// PC_p1 penalty weight `((n+p)/(np)) ln(np/(n+p))`.
pub fn pc_p1_penalty(n: usize, p: usize) -> f64 {
    let (n, p) = (n as f64, p as f64);
    (n + p) / (n * p) * (n * p / (n + p)).ln()
}

/// PC_p1 criterion values for k = 0..=r_max.
pub fn pc_p1_curve(decomp: &PcDecomposition, n: usize, p: usize, r_max: usize) -> Vec<f64> {
    let np = (n * p) as f64;
    let sigma_bar2 = decomp.residual_ss(r_max) / np;
    let penalty = pc_p1_penalty(n, p);
    (0..=r_max)
        .map(|k| decomp.residual_ss(k) / np + k as f64 * sigma_bar2 * penalty)
        .collect()
}

fn check_r_max(n: usize, p: usize, r_max: usize) -> Result<()> {
    if r_max == 0 || r_max > n.min(p) / 2 {
        return Err(invalid(format!(
            "r_max = {r_max} must lie in [1, min(n, p)/2 = {}]",
            n.min(p) / 2
        )));
    }
    Ok(())
}

/// Number of factors by the PC_p1 criterion, searching k = 0..=r_max.
pub fn estimate_num_factors(x: &DMatrix<f64>, r_max: usize) -> Result<usize> {
    let (n, p) = x.shape();
    check_r_max(n, p, r_max)?;
    let decomp = PcDecomposition::new(x)?;
    Ok(argmin_first(&pc_p1_curve(&decomp, n, p, r_max)))
}

/// Selects the number of factors and fits them from one SVD.
pub fn fit_with_selected_rank(x: &DMatrix<f64>, r_max: usize) -> Result<FactorEstimate> {
    let (n, p) = x.shape();
    check_r_max(n, p, r_max)?;
    let decomp = PcDecomposition::new(x)?;
    let r = argmin_first(&pc_p1_curve(&decomp, n, p, r_max));
    decomp.estimate(x, r)
}

/// Index of the minimum; values within round-off of the running best count
/// as ties and resolve toward the smaller index.
fn argmin_first(values: &[f64]) -> usize {
    let slack = 1e-12 * values.first().map_or(0.0, |v| v.abs());
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] - slack {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rank_one() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let fit = fit_pc(&x, 1).unwrap();
        assert!((&fit.c_hat - &x).norm() < 1e-12);
        assert!(fit.e_hat.norm() < 1e-12);
        assert!(fit.sigma2_hat < 1e-24);
    }

    #[test]
    fn zero_factors() {
        let x = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.3));
        let fit = fit_pc(&x, 0).unwrap();
        assert_eq!(fit.c_hat, DMatrix::zeros(4, 3));
        assert_eq!(fit.e_hat, x);
        assert_eq!(fit.f_hat.ncols(), 0);
    }

    #[test]
    fn rank_too_large() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(fit_pc(&x, 3).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(matches!(fit_pc(&bad, 1), Err(IpadError::NonFinite(_))));
    }

    #[test]
    fn noise_variance_examples() {
        let pm = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(noise_variance(&pm), 1.0);
        assert_eq!(noise_variance(&DMatrix::zeros(3, 3)), 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(noise_variance(&m), 7.5);
    }

    #[test]
    fn identification_and_orthogonality() {
        let x = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin() + 0.1 * j as f64);
        let fit = fit_pc(&x, 2).unwrap();
        let n = x.nrows() as f64;
        let ftf = fit.f_hat.transpose() * &fit.f_hat / n;
        assert!((ftf - DMatrix::identity(2, 2)).norm() < 1e-10);
        assert!((&fit.lambda_hat - x.transpose() * &fit.f_hat / n).norm() < 1e-10);
        assert!((fit.c_hat.transpose() * &fit.e_hat).norm() < 1e-8);
        assert!((&fit.c_hat + &fit.e_hat - &x).norm() < 1e-12);
    }

    #[test]
    fn rank_one_matrix_selects_one() {
        let u = DVector::from_fn(10, |i, _| i as f64 + 1.0);
        let v = DVector::from_fn(8, |j, _| (j as f64 - 3.5).powi(2) + 0.5);
        let x = &u * v.transpose();
        assert_eq!(estimate_num_factors(&x, 4).unwrap(), 1);
    }

    #[test]
    fn r_max_range() {
        let x = DMatrix::from_fn(10, 8, |i, j| (i + j) as f64);
        assert!(estimate_num_factors(&x, 0).is_err());
        assert!(estimate_num_factors(&x, 5).is_err());
        assert!(estimate_num_factors(&x, 4).is_ok());
    }

    #[test]
    fn save_and_load() {
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 4 + j) as f64).cos());
        let fit = fit_pc(&x, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fit.save(dir.path()).unwrap();
        let back = FactorEstimate::load(dir.path()).unwrap();
        assert_eq!(back, fit);
    }
}
