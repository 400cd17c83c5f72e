//! Knockoff matrices built by resampling the idiosyncratic error of a factor
//! model: `x_tilde = c + Z` with `Z` i.i.d. `N(0, sigma2)`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{read_matrix_csv, write_matrix_csv};
use crate::error::{invalid, IpadError, Result};
use crate::seed::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnockoffSource {
    /// Built from the true common component and error variance.
    Oracle,
    /// Built from an estimated factor fit.
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffMatrix {
    pub x_tilde: DMatrix<f64>,
    pub source: KnockoffSource,
    pub seed: SeedSpec,
    pub sigma2_used: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct KnockoffHeader {
    n: usize,
    p: usize,
    source: KnockoffSource,
    seed: SeedSpec,
    sigma2_used: f64,
}

impl KnockoffMatrix {
    /// Writes `x_tilde.csv` and `header.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| IpadError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_matrix_csv(&dir.join("x_tilde.csv"), &self.x_tilde)?;
        let header = KnockoffHeader {
            n: self.x_tilde.nrows(),
            p: self.x_tilde.ncols(),
            source: self.source,
            seed: self.seed,
            sigma2_used: self.sigma2_used,
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
        let h: KnockoffHeader = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("bad knockoff header: {e}")))?;
        Ok(Self {
            x_tilde: read_matrix_csv(&dir.join("x_tilde.csv"), h.n, h.p)?,
            source: h.source,
            seed: h.seed,
            sigma2_used: h.sigma2_used,
        })
    }
}

fn draw(
    c: &DMatrix<f64>,
    sigma2: f64,
    seed: SeedSpec,
    source: KnockoffSource,
) -> Result<KnockoffMatrix> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(invalid(format!("noise variance must be finite and >= 0, got {sigma2}")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(IpadError::NonFinite("common component"));
    }
    let mut x_tilde = c.clone();
    if sigma2 > 0.0 {
        let sd = sigma2.sqrt();
        let mut rng = seed.rng();
        // column-major fill order is part of the reproducibility contract
        for v in x_tilde.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
    }
    Ok(KnockoffMatrix {
        x_tilde,
        source,
        seed,
        sigma2_used: sigma2,
    })
}

/// Empirical knockoffs from an estimated common component and variance.
pub fn generate(c: &DMatrix<f64>, sigma2: f64, seed: SeedSpec) -> Result<KnockoffMatrix> {
    draw(c, sigma2, seed, KnockoffSource::Empirical)
}

/// Oracle knockoffs from the true common component and variance.
pub fn generate_oracle(c0: &DMatrix<f64>, sigma2_0: f64, seed: SeedSpec) -> Result<KnockoffMatrix> {
    if sigma2_0 <= 0.0 {
        return Err(invalid("oracle noise variance must be positive"));
    }
    draw(c0, sigma2_0, seed, KnockoffSource::Oracle)
}

/// The augmented design `[x, x_tilde]`.
pub fn augment(x: &DMatrix<f64>, k: &KnockoffMatrix) -> Result<DMatrix<f64>> {
    augment_matrices(x, &k.x_tilde)
}

pub fn augment_matrices(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(invalid("cannot augment a design with no columns"));
    }
    if x_tilde.nrows() != n {
        return Err(IpadError::DimensionMismatch {
            context: "knockoff rows",
            expected: n,
            found: x_tilde.nrows(),
        });
    }
    if x_tilde.ncols() != p {
        return Err(IpadError::DimensionMismatch {
            context: "knockoff columns",
            expected: p,
            found: x_tilde.ncols(),
        });
    }
    let mut out = DMatrix::zeros(n, 2 * p);
    out.columns_mut(0, p).copy_from(x);
    out.columns_mut(p, p).copy_from(x_tilde);
    Ok(out)
}
