//! Simulation designs and the Monte Carlo driver.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{invalid, IpadError, Result};
use crate::inference::{fdp, tdp, StatisticKind};
use crate::knockoff::{self, KnockoffMatrix, KnockoffSource};
use crate::pipeline::{self, ForestParams, IpadOptions, KnockoffOutcome};
use crate::seed::{Rng, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    D1,
    D2,
    D3,
    D4,
    RealX,
}

impl Design {
    pub fn label(self) -> &'static str {
        match self {
            Design::D1 => "d1",
            Design::D2 => "d2",
            Design::D3 => "d3",
            Design::D4 => "d4",
            Design::RealX => "real_x",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "d1" => Ok(Design::D1),
            "2" | "d2" => Ok(Design::D2),
            "3" | "d3" => Ok(Design::D3),
            "4" | "d4" => Ok(Design::D4),
            "real" | "real_x" | "realx" => Ok(Design::RealX),
            other => Err(invalid(format!("unknown design {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub amplitude: f64,
    pub c: f64,
    pub r: usize,
    pub theta: f64,
    pub rho: f64,
    pub nu_df: u32,
    pub q: f64,
    pub reps: usize,
    pub seed: SeedSpec,
    pub oracle_knockoffs: bool,
    pub r_max: usize,
    #[serde(default)]
    pub forest: ForestParams,
}

impl DesignSpec {
    /// Design-1 defaults at the given size: A = 4, c = 0.2, r = 3, theta = 1,
    /// q = 0.2, r_max = 8.
    pub fn new(design: Design, n: usize, p: usize, s: usize) -> Self {
        Self {
            design,
            n,
            p,
            s,
            amplitude: 4.0,
            c: 0.2,
            r: if design == Design::D3 { 0 } else { 3 },
            theta: 1.0,
            rho: 0.0,
            nu_df: 8,
            q: 0.2,
            reps: 100,
            seed: SeedSpec::new(0, 0),
            oracle_knockoffs: false,
            r_max: 8,
            forest: ForestParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(invalid(msg));
        if self.n < 10 {
            return fail(format!("n = {} is too small for 10-fold CV (need >= 10)", self.n));
        }
        if self.p == 0 || self.s == 0 {
            return fail("p and s must be positive".into());
        }
        if self.s > self.p {
            return fail(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        for (name, v) in [("A", self.amplitude), ("c", self.c), ("theta", self.theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return fail(format!("q must lie in (0, 1), got {}", self.q));
        }
        if self.reps == 0 {
            return fail("reps must be positive".into());
        }
        if self.r_max == 0 || self.r_max > self.n.min(self.p) / 2 {
            return fail(format!(
                "r_max = {} must lie in [1, min(n, p) / 2 = {}]",
                self.r_max,
                self.n.min(self.p) / 2
            ));
        }
        match self.design {
            Design::D3 => {
                if self.r != 0 {
                    return fail(format!("design 3 has no factors; r must be 0, got {}", self.r));
                }
                if !(0.0..1.0).contains(&self.rho) {
                    return fail(format!("rho must lie in [0, 1), got {}", self.rho));
                }
                if self.oracle_knockoffs {
                    return fail("oracle knockoffs need independent errors; not available for design 3".into());
                }
            }
            Design::RealX => {
                if self.oracle_knockoffs {
                    return fail("oracle knockoffs are unavailable for a supplied design".into());
                }
            }
            Design::D1 | Design::D2 | Design::D4 => {
                if self.r == 0 {
                    return fail("r must be positive for factor designs".into());
                }
                if self.design == Design::D2 && self.nu_df <= 4 {
                    return fail(format!("nu_df must exceed 4, got {}", self.nu_df));
                }
            }
        }
        Ok(())
    }

    pub fn statistic(&self) -> StatisticKind {
        if self.design == Design::D4 {
            StatisticKind::MdaDiff
        } else {
            StatisticKind::Lcd
        }
    }

    pub fn ipad_options(&self) -> IpadOptions {
        IpadOptions {
            q: self.q,
            r_max: self.r_max,
            statistic: self.statistic(),
            forest: self.forest,
            ..IpadOptions::default()
        }
    }

    fn error_scale(&self) -> f64 {
        if self.design == Design::D3 {
            1.0
        } else {
            (self.r as f64 * self.theta).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDesign {
    /// Unit-norm columns.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    /// Sorted 0-based indices of the nonzero coefficients.
    pub support: Vec<usize>,
    /// Noiseless response `f(x)`.
    pub signal: DVector<f64>,
    /// Common component before rescaling; `None` for a supplied design.
    pub c0: Option<DMatrix<f64>>,
    /// Variance of one idiosyncratic entry before rescaling.
    pub sigma2_0: Option<f64>,
    /// Norms that the raw columns were divided by.
    pub column_norms: Vec<f64>,
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Idiosyncratic error matrix for the factor designs, already scaled.
fn draw_errors(spec: &DesignSpec, rng: &mut Rng) -> DMatrix<f64> {
    let (n, p) = (spec.n, spec.p);
    let scale = spec.error_scale();
    match spec.design {
        Design::D2 => {
            let chi = ChiSquared::new(spec.nu_df as f64).expect("nu_df validated");
            let mut e = DMatrix::from_fn(n, p, |_, _| normal(rng));
            let nu2 = spec.nu_df as f64 - 2.0;
            for mut col in e.column_iter_mut() {
                let k = nu2 / chi.sample(rng);
                col *= scale * k;
            }
            e
        }
        Design::D3 => {
            // AR(1) across columns gives rows with covariance rho^|i-j|
            let rho = spec.rho;
            let innov = (1.0 - rho * rho).sqrt();
            let mut e = DMatrix::zeros(n, p);
            for i in 0..n {
                let mut prev = normal(rng);
                e[(i, 0)] = prev;
                for j in 1..p {
                    prev = rho * prev + innov * normal(rng);
                    e[(i, j)] = prev;
                }
            }
            e
        }
        _ => DMatrix::from_fn(n, p, |_, _| scale * normal(rng)),
    }
}

fn sigma2_0(spec: &DesignSpec) -> f64 {
    let base = spec.error_scale().powi(2);
    if spec.design == Design::D2 {
        let nu = spec.nu_df as f64;
        base * (nu - 2.0) / (nu - 4.0)
    } else {
        base
    }
}

fn link(spec: &DesignSpec, xb: &DVector<f64>) -> DVector<f64> {
    if spec.design == Design::D4 {
        xb.map(|v| v.sin() * v.exp())
    } else {
        xb.clone()
    }
}

/// Generates one replication. `real_x` is required for [`Design::RealX`] and
/// ignored otherwise; it is centered and rescaled before use.
pub fn gen_design(spec: &DesignSpec, rep_index: usize, real_x: Option<&DMatrix<f64>>) -> Result<GeneratedDesign> {
    let rep_seed = spec.seed.substream(rep_index as u64);
    let mut rng = rep_seed.substream(0).rng();
    let (x_raw, c0) = match spec.design {
        Design::RealX => {
            let x = real_x.ok_or_else(|| invalid("design real_x needs a design matrix"))?;
            if x.shape() != (spec.n, spec.p) {
                return Err(IpadError::DimensionMismatch {
                    context: "real_x design",
                    expected: spec.n * spec.p,
                    found: x.nrows() * x.ncols(),
                });
            }
            let mut x = x.clone();
            data::center_matrix(&mut x);
            (x, None)
        }
        Design::D3 => (draw_errors(spec, &mut rng), None),
        _ => {
            let f = DMatrix::from_fn(spec.n, spec.r, |_, _| normal(&mut rng));
            let lam = DMatrix::from_fn(spec.p, spec.r, |_, _| normal(&mut rng));
            let c0 = &f * lam.transpose();
            let x = &c0 + draw_errors(spec, &mut rng);
            (x, Some(c0))
        }
    };
    let mut x = x_raw;
    let column_norms = data::unit_norm_columns(&mut x)?;

    let mut support = index::sample(&mut rng, spec.p, spec.s).into_vec();
    support.sort_unstable();
    let mut beta = DVector::zeros(spec.p);
    for &j in &support {
        beta[j] = if rng.random::<bool>() {
            spec.amplitude
        } else {
            -spec.amplitude
        };
    }
    let signal = link(spec, &(&x * &beta));
    let noise_sd = spec.c.sqrt();
    let y = DVector::from_fn(spec.n, |i, _| signal[i] + noise_sd * normal(&mut rng));
    let sigma2 = (spec.design != Design::RealX).then(|| sigma2_0(spec));
    Ok(GeneratedDesign {
        x,
        y,
        beta,
        support,
        signal,
        c0,
        sigma2_0: sigma2,
        column_norms,
    })
}

/// Knockoffs from the true model: the common component plus a fresh error
/// matrix from the design's own error law, each column then scaled to unit
/// norm exactly as the originals were.
pub fn oracle_knockoffs(spec: &DesignSpec, g: &GeneratedDesign, seed: SeedSpec) -> Result<KnockoffMatrix> {
    let c0 = g
        .c0
        .as_ref()
        .ok_or_else(|| invalid("oracle knockoffs need a known common component"))?;
    let sigma2 = g.sigma2_0.unwrap_or(0.0);
    let mut k = match spec.design {
        Design::D2 => {
            let mut rng = seed.rng();
            KnockoffMatrix {
                x_tilde: c0 + draw_errors(spec, &mut rng),
                source: KnockoffSource::Oracle,
                seed,
                sigma2_used: sigma2,
            }
        }
        Design::D1 | Design::D4 => knockoff::generate_oracle(c0, sigma2, seed)?,
        _ => return Err(invalid("oracle knockoffs are only defined for designs 1, 2 and 4")),
    };
    data::unit_norm_columns(&mut k.x_tilde)?;
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep_index: usize,
    pub fdp: f64,
    pub tdp: f64,
    pub fdp_plus: f64,
    pub tdp_plus: f64,
    pub r2: f64,
    pub r_hat: Option<usize>,
    pub n_selected: usize,
    pub n_selected_plus: usize,
    /// Set when the pipeline failed; metric fields are then 0 and the rep is
    /// left out of the aggregates.
    pub error: Option<String>,
}

/// Squared sample correlation, 0 when either side is constant.
pub fn squared_correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab * sab / (saa * sbb)
    }
}

fn run_pipeline(spec: &DesignSpec, g: &GeneratedDesign, rep_seed: SeedSpec) -> Result<(KnockoffOutcome, Option<usize>)> {
    let opts = spec.ipad_options();
    if spec.oracle_knockoffs {
        let k = oracle_knockoffs(spec, g, rep_seed.substream(2))?;
        Ok((pipeline::knockoff_filter(&g.x, &k.x_tilde, &g.y, &opts, rep_seed.substream(1))?, None))
    } else {
        let fit = pipeline::estimate_factors(&g.x, opts.r_max)?;
        let out = pipeline::ipad_draw(&g.x, &g.y, &fit, &opts, rep_seed.substream(1))?;
        Ok((out, Some(fit.r_hat)))
    }
}

/// One replication of the full procedure. Failures are captured in the record.
pub fn run_rep(spec: &DesignSpec, rep_index: usize, real_x: Option<&DMatrix<f64>>) -> RepRecord {
    let attempt = || -> Result<RepRecord> {
        let g = gen_design(spec, rep_index, real_x)?;
        let rep_seed = spec.seed.substream(rep_index as u64);
        let (out, r_hat) = run_pipeline(spec, &g, rep_seed)?;
        let sel = &out.knockoff.selected;
        let sel_plus = &out.knockoff_plus.selected;
        Ok(RepRecord {
            rep_index,
            fdp: fdp(sel, &g.support),
            tdp: tdp(sel, &g.support)?,
            fdp_plus: fdp(sel_plus, &g.support),
            tdp_plus: tdp(sel_plus, &g.support)?,
            r2: squared_correlation(&g.signal, &g.y),
            r_hat,
            n_selected: sel.len(),
            n_selected_plus: sel_plus.len(),
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| RepRecord {
        rep_index,
        fdp: 0.0,
        tdp: 0.0,
        fdp_plus: 0.0,
        tdp_plus: 0.0,
        r2: 0.0,
        r_hat: None,
        n_selected: 0,
        n_selected_plus: 0,
        error: Some(e.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: DesignSpec,
    pub fdr: f64,
    pub power: f64,
    pub fdr_plus: f64,
    pub power_plus: f64,
    pub r2_mean: f64,
    pub reps_completed: usize,
    pub reps_failed: usize,
    pub per_rep: Vec<RepRecord>,
}

impl SimulationReport {
    /// Aggregates records given in any order; output is sorted by rep index.
    pub fn from_records(spec: DesignSpec, mut per_rep: Vec<RepRecord>) -> Self {
        per_rep.sort_by_key(|r| r.rep_index);
        let ok: Vec<&RepRecord> = per_rep.iter().filter(|r| r.error.is_none()).collect();
        let k = ok.len();
        let mean = |f: fn(&RepRecord) -> f64| {
            if k == 0 {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / k as f64
            }
        };
        Self {
            spec,
            fdr: mean(|r| r.fdp),
            power: mean(|r| r.tdp),
            fdr_plus: mean(|r| r.fdp_plus),
            power_plus: mean(|r| r.tdp_plus),
            r2_mean: mean(|r| r.r2),
            reps_completed: k,
            reps_failed: per_rep.len() - k,
            per_rep,
        }
    }

    pub const CSV_HEADER: &'static str = "design,n,p,s,A,c,r,theta,q,reps,fdr,power,fdr_plus,power_plus,r2";

    pub fn csv_row(&self) -> String {
        let s = &self.spec;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            s.design.label(),
            s.n,
            s.p,
            s.s,
            s.amplitude,
            s.c,
            s.r,
            s.theta,
            s.q,
            self.reps_completed,
            self.fdr,
            self.power,
            self.fdr_plus,
            self.power_plus,
            self.r2_mean
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| IpadError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let csv = format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row());
        let p = dir.join("report.csv");
        fs::write(&p, csv).map_err(io(&p))?;
        let p = dir.join("report.json");
        fs::write(&p, self.to_json() + "\n").map_err(io(&p))
    }
}

/// Runs `spec.reps` replications on the current rayon pool.
pub fn run_monte_carlo(spec: &DesignSpec, real_x: Option<&DMatrix<f64>>) -> Result<SimulationReport> {
    spec.validate()?;
    if spec.design == Design::RealX && real_x.is_none() {
        return Err(invalid("design real_x needs a design matrix"));
    }
    let records: Vec<RepRecord> = (0..spec.reps)
        .into_par_iter()
        .map(|i| run_rep(spec, i, real_x))
        .collect();
    Ok(SimulationReport::from_records(*spec, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(design: Design) -> DesignSpec {
        DesignSpec {
            reps: 2,
            r_max: 4,
            ..DesignSpec::new(design, 40, 20, 4)
        }
    }

    #[test]
    fn beta_has_s_entries_of_size_a() {
        let spec = DesignSpec::new(Design::D1, 60, 80, 50);
        let g = gen_design(&spec, 0, None).unwrap();
        assert_eq!(g.support.len(), 50);
        assert_eq!(g.beta.iter().filter(|b| **b != 0.0).count(), 50);
        assert!(g.support.iter().all(|&j| g.beta[j].abs() == 4.0));
        for j in 0..80 {
            assert!((g.x.column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut spec = small(Design::D3);
        spec.r = 1;
        assert!(spec.validate().is_err());
        let mut spec = small(Design::D1);
        spec.s = 21;
        assert!(spec.validate().is_err());
        let mut spec = small(Design::D1);
        spec.q = 1.0;
        assert!(spec.validate().is_err());
        assert!(small(Design::D1).validate().is_ok());
        assert!(gen_design(&small(Design::RealX), 0, None).is_err());
    }

    #[test]
    fn design3_rho_zero_is_uncorrelated() {
        let spec = DesignSpec {
            rho: 0.0,
            ..DesignSpec::new(Design::D3, 4000, 3, 1)
        };
        let g = gen_design(&spec, 0, None).unwrap();
        let cov = g.x.transpose() * &g.x;
        assert!(cov[(0, 1)].abs() < 0.05 && cov[(1, 2)].abs() < 0.05);
        let spec = DesignSpec { rho: 0.5, ..spec };
        let g = gen_design(&spec, 0, None).unwrap();
        let cov = g.x.transpose() * &g.x;
        assert!((cov[(0, 1)] - 0.5).abs() < 0.05 && (cov[(0, 2)] - 0.25).abs() < 0.05);
    }

    #[test]
    fn design2_errors_have_heavy_tails() {
        let spec = DesignSpec::new(Design::D2, 400, 300, 1);
        let mut rng = SeedSpec::new(5, 0).rng();
        let e = draw_errors(&spec, &mut rng);
        let n = e.len() as f64;
        let m2 = e.iter().map(|v| v * v).sum::<f64>() / n;
        let m4 = e.iter().map(|v| v.powi(4)).sum::<f64>() / n;
        assert!(m4 / (m2 * m2) - 3.0 > 0.5);
    }

    #[test]
    fn reps_are_deterministic_and_order_free() {
        let spec = small(Design::D1);
        let a = run_rep(&spec, 1, None);
        assert!(a.error.is_none(), "{:?}", a.error);
        assert_eq!(a, run_rep(&spec, 1, None));
        let r1 = SimulationReport::from_records(spec, vec![run_rep(&spec, 0, None), a.clone()]);
        let r2 = SimulationReport::from_records(spec, vec![a, run_rep(&spec, 0, None)]);
        assert_eq!(r1.to_json(), r2.to_json());
        assert!((r1.fdr - (r1.per_rep[0].fdp + r1.per_rep[1].fdp) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_knockoffs_are_unit_norm() {
        let spec = small(Design::D2);
        let g = gen_design(&spec, 0, None).unwrap();
        let k = oracle_knockoffs(&spec, &g, SeedSpec::new(1, 2)).unwrap();
        assert_eq!(k.source, KnockoffSource::Oracle);
        for j in 0..spec.p {
            assert!((k.x_tilde.column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_row_matches_header() {
        let spec = small(Design::D1);
        let rep = run_rep(&spec, 0, None);
        let report = SimulationReport::from_records(spec, vec![rep]);
        let cols = SimulationReport::CSV_HEADER.split(',').count();
        assert_eq!(report.csv_row().split(',').count(), cols);
        assert!(report.csv_row().starts_with("d1,40,20,4,4,0.2,3,1,0.2,1,"));
    }
}
