//! The end-to-end selection procedure: factor fit, empirical knockoffs,
//! knockoff statistic, thresholds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IpadError, Result};
use crate::factor::{self, FactorEstimate};
use crate::forest::{self, ForestConfig};
use crate::inference::{self, SelectionResult, StatisticKind, WStats};
use crate::knockoff;
use crate::lasso::{self, CvOptions, LassoOptions};
use crate::seed::SeedSpec;

/// Forest settings without a seed; the pipeline derives one per call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` means `max(m / 3, 1)` over the augmented width.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpadOptions {
    pub q: f64,
    pub r_max: usize,
    pub statistic: StatisticKind,
    pub cv: CvOptions,
    pub final_solver: LassoOptions,
    pub forest: ForestParams,
}

impl Default for IpadOptions {
    fn default() -> Self {
        Self {
            q: 0.2,
            r_max: 8,
            statistic: StatisticKind::Lcd,
            cv: CvOptions::default(),
            final_solver: LassoOptions::default(),
            forest: ForestParams::default(),
        }
    }
}

impl IpadOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if self.r_max == 0 {
            return Err(invalid("r_max must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one knockoff draw: the statistic and both selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffOutcome {
    pub w: WStats,
    pub knockoff: SelectionResult,
    pub knockoff_plus: SelectionResult,
    /// CV-chosen penalty, absent for the forest statistic.
    pub lambda_star: Option<f64>,
}

/// Statistic and thresholds for a given design and knockoff copy.
///
/// Seed use: substream 1 assigns CV folds, substream 2 seeds the forest and
/// substream 3 its permutations.
pub fn knockoff_filter(
    x: &DMatrix<f64>,
    x_tilde: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &IpadOptions,
    seed: SeedSpec,
) -> Result<KnockoffOutcome> {
    opts.validate()?;
    let aug = knockoff::augment_matrices(x, x_tilde)?;
    let (w, lambda_star) = match opts.statistic {
        StatisticKind::Lcd => {
            let (cv, fit) =
                lasso::lasso_cv_fit(&aug, y, &opts.cv, &opts.final_solver, seed.substream(1))?;
            if !fit.converged {
                return Err(IpadError::NotConverged {
                    sweeps: fit.n_iterations,
                    kkt_violation: fit.kkt_violation,
                });
            }
            (inference::lcd(&fit.beta)?, Some(cv.lambda_star))
        }
        StatisticKind::MdaDiff => {
            let m = aug.ncols();
            let cfg = ForestConfig {
                n_trees: opts.forest.n_trees,
                mtry: opts.forest.mtry.unwrap_or((m / 3).max(1)),
                min_leaf: opts.forest.min_leaf,
                seed: seed.substream(2),
            };
            let model = forest::fit_forest(&aug, y, &cfg)?;
            let report = forest::mda(&model, &aug, y, seed.substream(3))?;
            (inference::mda_diff(&report.importance)?, None)
        }
    };
    Ok(KnockoffOutcome {
        knockoff: inference::knockoff_select(&w, opts.q, false)?,
        knockoff_plus: inference::knockoff_select(&w, opts.q, true)?,
        w,
        lambda_star,
    })
}

/// Factor estimation shared by every knockoff draw on the same design.
pub fn estimate_factors(x: &DMatrix<f64>, r_max: usize) -> Result<FactorEstimate> {
    factor::fit_with_selected_rank(x, r_max)
}

/// One knockoff draw from a fitted factor model. Substream 0 of `seed` draws
/// the knockoff noise; the remaining substreams go to [`knockoff_filter`].
pub fn ipad_draw(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &FactorEstimate,
    opts: &IpadOptions,
    seed: SeedSpec,
) -> Result<KnockoffOutcome> {
    let k = knockoff::generate(&fit.c_hat, fit.sigma2_hat, seed.substream(0))?;
    knockoff_filter(x, &k.x_tilde, y, opts, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpadRun {
    pub r_hat: usize,
    pub sigma2_hat: f64,
    pub draws: Vec<KnockoffOutcome>,
}

impl IpadRun {
    /// Fraction of draws selecting each column, under knockoff or knockoff+.
    pub fn selection_frequency(&self, p: usize, plus: bool) -> Vec<f64> {
        let mut freq = vec![0.0; p];
        for d in &self.draws {
            let sel = if plus { &d.knockoff_plus } else { &d.knockoff };
            for &j in &sel.selected {
                freq[j] += 1.0;
            }
        }
        let total = self.draws.len().max(1) as f64;
        freq.iter_mut().for_each(|f| *f /= total);
        freq
    }
}

/// Full procedure with `draws` independent knockoff copies; draw `d` uses
/// `seed.substream(d)`.
pub fn ipad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &IpadOptions,
    draws: usize,
    seed: SeedSpec,
) -> Result<IpadRun> {
    opts.validate()?;
    if draws == 0 {
        return Err(invalid("draws must be positive"));
    }
    let fit = estimate_factors(x, opts.r_max)?;
    let draws = (0..draws)
        .map(|d| ipad_draw(x, y, &fit, opts, seed.substream(d as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IpadRun {
        r_hat: fit.r_hat,
        sigma2_hat: fit.sigma2_hat,
        draws,
    })
}
