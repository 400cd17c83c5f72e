//! Rolling one-step-ahead forecasts (AR(1), FAR, Lasso, IPAD), RMSE and the
//! Diebold-Mariano comparison.
//!
//! A window is a block of consecutive rows ending at the forecast origin `T`.
//! Every regression pairs `y_s` with predictors dated `s - 1` inside the
//! window, and the forecast of `y_{T+1}` plugs in predictors dated `T`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, ResponseColumn};
use crate::error::{invalid, IpadError, Result};
use crate::factor;
use crate::lasso::{self, CvOptions, LassoOptions};
use crate::pipeline::{self, IpadOptions};
use crate::seed::SeedSpec;

/// Cap on the number of window factors.
pub const MAX_FACTORS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    pub dates: Vec<String>,
    pub target: DVector<f64>,
    /// `T x p`, one column per predictor series.
    pub predictors: DMatrix<f64>,
    pub target_name: String,
    pub predictor_names: Vec<String>,
}

fn dates_increasing(dates: &[String]) -> bool {
    let numeric: Option<Vec<f64>> = dates.iter().map(|d| d.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(v) => v.windows(2).all(|w| w[0] < w[1]),
        None => dates.windows(2).all(|w| w[0] < w[1]),
    }
}

impl SeriesPanel {
    pub fn new(
        dates: Vec<String>,
        target: DVector<f64>,
        predictors: DMatrix<f64>,
        target_name: String,
        predictor_names: Vec<String>,
    ) -> Result<Self> {
        let t = target.len();
        if dates.len() != t || predictors.nrows() != t {
            return Err(IpadError::DimensionMismatch {
                context: "panel rows",
                expected: t,
                found: if dates.len() != t { dates.len() } else { predictors.nrows() },
            });
        }
        if predictor_names.len() != predictors.ncols() {
            return Err(IpadError::DimensionMismatch {
                context: "predictor names",
                expected: predictors.ncols(),
                found: predictor_names.len(),
            });
        }
        if target.iter().chain(predictors.iter()).any(|v| !v.is_finite()) {
            return Err(IpadError::NonFinite("panel values"));
        }
        if !dates_increasing(&dates) {
            return Err(invalid("panel dates must be strictly increasing"));
        }
        Ok(Self {
            dates,
            target,
            predictors,
            target_name,
            predictor_names,
        })
    }

    /// Reads a panel CSV with a header. Without a date column the row
    /// numbers (from 1) serve as dates.
    pub fn load(path: &Path, target: impl Into<ResponseColumn>) -> Result<Self> {
        let table = data::read_numeric_table(path, true)?;
        let offset = usize::from(table.dates.is_some());
        let target = target.into();
        let k = match &target {
            ResponseColumn::Name(name) => table.names.iter().position(|c| c == name),
            ResponseColumn::Index(i) => i.checked_sub(offset).filter(|&k| k < table.ncols()),
        }
        .ok_or_else(|| {
            IpadError::MissingColumn(match &target {
                ResponseColumn::Name(name) => format!("'{name}'"),
                ResponseColumn::Index(i) => format!("#{i}"),
            })
        })?;
        let others: Vec<usize> = (0..table.ncols()).filter(|&j| j != k).collect();
        let dates = table
            .dates
            .clone()
            .unwrap_or_else(|| (1..=table.rows.len()).map(|i| i.to_string()).collect());
        Self::new(
            dates,
            table.column(k),
            table.matrix(&others),
            table.names[k].clone(),
            others.iter().map(|&j| table.names[j].clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn p(&self) -> usize {
        self.predictors.ncols()
    }

    /// Rows `end + 1 - size ..= end`.
    pub fn window(&self, end: usize, size: usize) -> Window {
        let start = end + 1 - size;
        Window {
            y: self.target.rows(start, size).into_owned(),
            z: self.predictors.rows(start, size).into_owned(),
        }
    }
}

/// Target history and predictors for one forecast origin (the last row).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.y.len() < 3 {
            return Err(invalid(format!("window needs at least 3 rows, got {}", self.y.len())));
        }
        if self.z.nrows() != self.y.len() {
            return Err(IpadError::DimensionMismatch {
                context: "window predictors",
                expected: self.y.len(),
                found: self.z.nrows(),
            });
        }
        Ok(())
    }

    /// `y_1..y_{w-1}`.
    fn response(&self) -> DVector<f64> {
        self.y.rows(1, self.y.len() - 1).into_owned()
    }
}

/// Design with an intercept, the lagged target and lagged `extra` columns.
/// Row `s - 1` holds predictors dated `s - 1`; the last row of `extra` (dated
/// `T`) is returned separately for the forecast.
fn lagged_design(y: &DVector<f64>, extra: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let w = y.len();
    let k = extra.ncols();
    let a = DMatrix::from_fn(w - 1, 2 + k, |i, j| match j {
        0 => 1.0,
        1 => y[i],
        _ => extra[(i, j - 2)],
    });
    let last = DVector::from_fn(2 + k, |j, _| match j {
        0 => 1.0,
        1 => y[w - 1],
        _ => extra[(w - 1, j - 2)],
    });
    (a, last)
}

/// OLS on `(1, y_{s-1}, extra_{s-1})`, dropping collinear columns from the
/// highest index down; returns the forecast of the next value.
fn ols_forecast(y: &DVector<f64>, extra: &DMatrix<f64>) -> Result<f64> {
    let (a, last) = lagged_design(y, extra);
    let droppable: Vec<usize> = (1..a.ncols()).collect();
    let target = y.rows(1, y.len() - 1).into_owned();
    let (kept, beta) = lasso::ols_dropping(&a, &target, &droppable)?;
    Ok(kept.iter().zip(beta.iter()).map(|(&j, b)| b * last[j]).sum())
}

/// `alpha + rho * y_T` from OLS of `y_s` on `(1, y_{s-1})`. A constant window
/// has a collinear lag column, which is dropped, so the forecast is the mean.
pub fn ar1_step(y: &[f64]) -> Result<f64> {
    if y.len() < 3 {
        return Err(invalid(format!("window needs at least 3 rows, got {}", y.len())));
    }
    ols_forecast(&DVector::from_column_slice(y), &DMatrix::zeros(y.len(), 0))
}

/// Centers each column and scales it to unit norm; constant columns become 0.
fn standardize_window(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    data::center_matrix(&mut out);
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 1e-12 * (1.0 + col.amax()) && norm > 0.0 {
            col /= norm;
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Principal-component factors of the standardized window predictors.
/// `m = None` selects the count by PC_p1 with `r_max = min(8, min(w, p) / 2)`.
pub fn window_factors(z: &DMatrix<f64>, m: Option<usize>) -> Result<DMatrix<f64>> {
    let (w, p) = z.shape();
    let r_max = MAX_FACTORS.min(w.min(p) / 2);
    let zs = standardize_window(z);
    let m = match m {
        Some(m) => m.min(w.min(p)),
        None if r_max == 0 => 0,
        None => factor::estimate_num_factors(&zs, r_max)?,
    };
    if m == 0 {
        return Ok(DMatrix::zeros(w, 0));
    }
    Ok(factor::fit_pc(&zs, m)?.f_hat)
}

/// Factor-augmented AR(1).
pub fn far_step(window: &Window) -> Result<f64> {
    far_step_with(window, None)
}

/// FAR with a fixed factor count; `Some(0)` reduces to [`ar1_step`].
pub fn far_step_with(window: &Window, m: Option<usize>) -> Result<f64> {
    window.check()?;
    let f = window_factors(&window.z, m)?;
    ols_forecast(&window.y, &f)
}

/// Lasso on `(y_{s-1}, f_{s-1}, z_{s-1})` with an unpenalized intercept and
/// 10-fold CV over the window rows. Predictors are centered and scaled to
/// unit norm over the regression rows.
pub fn lasso_step(window: &Window, cv: &CvOptions, seed: SeedSpec) -> Result<f64> {
    window.check()?;
    let f = window_factors(&window.z, None)?;
    let mut extra = DMatrix::zeros(window.len(), f.ncols() + window.z.ncols());
    extra.columns_mut(0, f.ncols()).copy_from(&f);
    extra.columns_mut(f.ncols(), window.z.ncols()).copy_from(&window.z);
    let (a, last) = lagged_design(&window.y, &extra);
    let x = a.columns(1, a.ncols() - 1).into_owned();
    let x_last = last.rows(1, last.len() - 1).into_owned();
    let target = window.response();

    let n = x.nrows();
    let mut xs = x.clone();
    let means = data::center_matrix(&mut xs);
    let mut norms = vec![0.0; xs.ncols()];
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 1e-12 * (1.0 + means[j].abs()) {
            col /= norm;
            norms[j] = norm;
        } else {
            col.fill(0.0);
        }
    }
    let y_mean = target.mean();
    let yc = target.add_scalar(-y_mean);
    let opts = CvOptions {
        n_folds: cv.n_folds.min(n),
        ..*cv
    };
    let (_, fit) = lasso::lasso_cv_fit(&xs, &yc, &opts, &LassoOptions::default(), seed)?;
    let mut pred = y_mean;
    for (j, b) in fit.beta.iter().enumerate() {
        if *b != 0.0 {
            pred += b * (x_last[j] - means[j]) / norms[j];
        }
    }
    Ok(pred)
}

/// Residuals of `v` after OLS on the columns of `basis`.
fn residualize(basis: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let droppable: Vec<usize> = (1..basis.ncols()).collect();
    let (kept, beta) = lasso::ols_dropping(basis, v, &droppable)?;
    let mut r = v.clone();
    for (&j, b) in kept.iter().zip(beta.iter()) {
        r.axpy(-b, &basis.column(j), 1.0);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpadForecast {
    pub forecast: f64,
    /// Fraction of draws selecting each predictor.
    pub selection_frequency: Vec<f64>,
}

/// Selection on lag-residualized data, OLS refit of `y_s` on
/// `(1, y_{s-1}, z_{s-1, S})`, averaged over `draws` knockoff copies. Draw `d`
/// uses `seed.substream(d)`; the factor fit is shared across draws.
pub fn ipad_step(window: &Window, draws: usize, opts: &IpadOptions, plus: bool, seed: SeedSpec) -> Result<IpadForecast> {
    window.check()?;
    if draws == 0 {
        return Err(invalid("draws must be positive"));
    }
    let w = window.len();
    let p = window.z.ncols();
    let base = DMatrix::from_fn(w - 1, 2, |i, j| if j == 0 { 1.0 } else { window.y[i] });
    let e_y = residualize(&base, &window.response())?;
    let mut e_z = DMatrix::zeros(w - 1, p);
    for j in 0..p {
        let col = window.z.column(j).rows(0, w - 1).into_owned();
        e_z.set_column(j, &residualize(&base, &col)?);
    }
    let x = standardize_window(&e_z);
    let r_max = opts.r_max.min((w - 1).min(p) / 2);
    let fit = if r_max == 0 {
        factor::fit_pc(&x, 0)?
    } else {
        pipeline::estimate_factors(&x, r_max)?
    };
    let e_y = e_y.add_scalar(-e_y.mean());

    let mut total = 0.0;
    let mut freq = vec![0.0; p];
    for d in 0..draws {
        let out = pipeline::ipad_draw(&x, &e_y, &fit, opts, seed.substream(d as u64))?;
        let selected = if plus {
            &out.knockoff_plus.selected
        } else {
            &out.knockoff.selected
        };
        for &j in selected {
            freq[j] += 1.0;
        }
        let chosen = DMatrix::from_fn(w, selected.len(), |i, k| window.z[(i, selected[k])]);
        total += ols_forecast(&window.y, &chosen)?;
    }
    freq.iter_mut().for_each(|f| *f /= draws as f64);
    Ok(IpadForecast {
        forecast: total / draws as f64,
        selection_frequency: freq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ar,
    Far,
    Lasso,
    Ipad,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ar => "ar",
            Method::Far => "far",
            Method::Lasso => "lasso",
            Method::Ipad => "ipad",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar" | "ar1" => Ok(Method::Ar),
            "far" => Ok(Method::Far),
            "lasso" => Ok(Method::Lasso),
            "ipad" => Ok(Method::Ipad),
            other => Err(invalid(format!("unknown forecasting method {other:?}"))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let methods: Vec<Self> = s.split(',').map(Self::parse).collect::<Result<_>>()?;
        if methods.is_empty() {
            return Err(invalid("no forecasting methods given"));
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return Err(invalid(format!("method {} listed twice", m.name())));
            }
        }
        Ok(methods)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOptions {
    pub window: usize,
    pub methods: Vec<Method>,
    pub draws: usize,
    pub q: f64,
    pub plus: bool,
    pub r_max: usize,
    pub seed: SeedSpec,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            window: 120,
            methods: vec![Method::Ar, Method::Far, Method::Lasso, Method::Ipad],
            draws: 100,
            q: 0.2,
            plus: false,
            r_max: MAX_FACTORS,
            seed: SeedSpec::new(0, 0),
        }
    }
}

impl ForecastOptions {
    fn ipad_options(&self) -> IpadOptions {
        IpadOptions {
            q: self.q,
            r_max: self.r_max,
            ..IpadOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(invalid(format!("window must be at least 3, got {}", self.window)));
        }
        if self.methods.is_empty() {
            return Err(invalid("no forecasting methods given"));
        }
        if self.draws == 0 {
            return Err(invalid("draws must be positive"));
        }
        self.ipad_options().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub stars: u8,
}

impl DmResult {
    /// `2.631**` style annotation.
    pub fn annotated(&self) -> String {
        format!("{:.3}{}", self.statistic, "*".repeat(self.stars as usize))
    }
}

fn stars_for(stat: f64) -> u8 {
    let a = stat.abs();
    if a > 3.291 {
        3
    } else if a > 2.576 {
        2
    } else if a > 1.96 {
        1
    } else {
        0
    }
}

/// `mean(d) / sqrt(var(d) / T)` with the `T - 1` variance; any length >= 2.
pub fn dm_statistic(d: &[f64]) -> Result<DmResult> {
    let t = d.len();
    if t < 2 {
        return Err(invalid("need at least two loss differentials"));
    }
    let tf = t as f64;
    let mean = d.iter().sum::<f64>() / tf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tf - 1.0);
    let statistic = if var == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        }
    } else {
        mean / (var / tf).sqrt()
    };
    Ok(DmResult {
        statistic,
        stars: stars_for(statistic),
    })
}

/// Diebold-Mariano test with squared-error loss, `d_t = e1_t^2 - e2_t^2`.
/// Positive statistics favour the second forecast.
pub fn dm_test(e1: &[f64], e2: &[f64]) -> Result<DmResult> {
    if e1.len() != e2.len() {
        return Err(IpadError::DimensionMismatch {
            context: "dm errors",
            expected: e1.len(),
            found: e2.len(),
        });
    }
    if e1.len() < 10 {
        return Err(invalid(format!("dm test needs at least 10 errors, got {}", e1.len())));
    }
    let d: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a * a - b * b).collect();
    dm_statistic(&d)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> f64 {
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    (sse / actual.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodForecasts {
    pub method: Method,
    pub predictions: Vec<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmEntry {
    pub first: Method,
    pub second: Method,
    /// `None` when the statistic is infinite.
    pub statistic: Option<f64>,
    pub stars: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub target: String,
    pub window: usize,
    pub dates: Vec<String>,
    pub actual: Vec<f64>,
    pub methods: Vec<MethodForecasts>,
    /// One entry per method pair, errors of `first` against `second`; empty
    /// with fewer than 10 forecasts.
    pub dm: Vec<DmEntry>,
    pub predictor_names: Vec<String>,
    /// IPAD selection frequency per forecast date and predictor.
    pub selection_frequency: Option<Vec<Vec<f64>>>,
}

fn forecast_origin(
    panel: &SeriesPanel,
    end: usize,
    opts: &ForecastOptions,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let window = panel.window(end, opts.window);
    let seed = opts.seed.substream(end as u64);
    let mut preds = Vec::with_capacity(opts.methods.len());
    let mut freq = None;
    for &m in &opts.methods {
        let v = match m {
            Method::Ar => ar1_step(window.y.as_slice())?,
            Method::Far => far_step(&window)?,
            Method::Lasso => lasso_step(&window, &CvOptions::default(), seed.substream(1))?,
            Method::Ipad => {
                let out = ipad_step(&window, opts.draws, &opts.ipad_options(), opts.plus, seed.substream(2))?;
                freq = Some(out.selection_frequency);
                out.forecast
            }
        };
        preds.push(v);
    }
    Ok((preds, freq))
}

/// Rolling forecasts: origin `T` runs from `window - 1` to `len - 2`, each
/// forecasting row `T + 1` from rows `T + 1 - window ..= T` only.
pub fn roll(panel: &SeriesPanel, opts: &ForecastOptions) -> Result<ForecastReport> {
    opts.validate()?;
    if panel.len() <= opts.window {
        return Err(invalid(format!(
            "panel has {} rows; need more than the window of {}",
            panel.len(),
            opts.window
        )));
    }
    let origins: Vec<usize> = (opts.window - 1..panel.len() - 1).collect();
    let results: Vec<(Vec<f64>, Option<Vec<f64>>)> = origins
        .par_iter()
        .map(|&end| forecast_origin(panel, end, opts))
        .collect::<Result<_>>()?;

    let actual: Vec<f64> = origins.iter().map(|&e| panel.target[e + 1]).collect();
    let dates: Vec<String> = origins.iter().map(|&e| panel.dates[e + 1].clone()).collect();
    let methods: Vec<MethodForecasts> = opts
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let predictions: Vec<f64> = results.iter().map(|r| r.0[k]).collect();
            MethodForecasts {
                method,
                rmse: rmse(&actual, &predictions),
                predictions,
            }
        })
        .collect();
    let errors: Vec<Vec<f64>> = methods
        .iter()
        .map(|m| actual.iter().zip(&m.predictions).map(|(a, p)| a - p).collect())
        .collect();
    let mut dm = Vec::new();
    if actual.len() >= 10 {
        for i in 0..methods.len() {
            for j in i + 1..methods.len() {
                let r = dm_test(&errors[i], &errors[j])?;
                dm.push(DmEntry {
                    first: methods[i].method,
                    second: methods[j].method,
                    statistic: r.statistic.is_finite().then_some(r.statistic),
                    stars: r.stars,
                });
            }
        }
    }
    let selection_frequency = opts
        .methods
        .contains(&Method::Ipad)
        .then(|| results.iter().map(|r| r.1.clone().unwrap_or_default()).collect());
    Ok(ForecastReport {
        target: panel.target_name.clone(),
        window: opts.window,
        dates,
        actual,
        methods,
        dm,
        predictor_names: panel.predictor_names.clone(),
        selection_frequency,
    })
}

impl ForecastReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `predictions.csv`, `rmse.csv`, `dm.csv`, `forecast.json` and,
    /// when IPAD ran, `selection_frequency.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| IpadError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;

        let mut s = String::from("date,actual");
        for m in &self.methods {
            s += ",";
            s += m.method.name();
        }
        s += "\n";
        for (i, date) in self.dates.iter().enumerate() {
            s += &format!("{date},{}", data::format_exact(self.actual[i]));
            for m in &self.methods {
                s += &format!(",{}", data::format_exact(m.predictions[i]));
            }
            s += "\n";
        }
        let p = dir.join("predictions.csv");
        fs::write(&p, s).map_err(io(&p))?;

        let mut s = String::from("target");
        for m in &self.methods {
            s += ",";
            s += m.method.name();
        }
        s += &format!("\n{}", self.target);
        for m in &self.methods {
            s += &format!(",{:.3}", m.rmse);
        }
        s += "\n";
        let p = dir.join("rmse.csv");
        fs::write(&p, s).map_err(io(&p))?;

        let mut s = String::from("target,comparison,statistic,stars,annotated\n");
        for e in &self.dm {
            let stat = e.statistic.unwrap_or(f64::INFINITY);
            let r = DmResult {
                statistic: stat,
                stars: e.stars,
            };
            s += &format!(
                "{},{} vs. {},{},{},{}\n",
                self.target,
                e.first.name(),
                e.second.name(),
                data::format_exact(stat),
                e.stars,
                r.annotated()
            );
        }
        let p = dir.join("dm.csv");
        fs::write(&p, s).map_err(io(&p))?;

        if let Some(freq) = &self.selection_frequency {
            let mut s = String::from("date");
            for name in &self.predictor_names {
                s += &format!(",{name}");
            }
            s += "\n";
            for (date, row) in self.dates.iter().zip(freq) {
                s += date;
                for v in row {
                    s += &format!(",{v}");
                }
                s += "\n";
            }
            let p = dir.join("selection_frequency.csv");
            fs::write(&p, s).map_err(io(&p))?;
        }
        let p = dir.join("forecast.json");
        fs::write(&p, self.to_json() + "\n").map_err(io(&p))
    }
}

/// Seeded factor-driven panel: two AR(1) factors load on every predictor and
/// the target follows `y_t = 0.3 y_{t-1} + z_{t-1,0} - 0.5 z_{t-1,1} + noise`.
pub fn synthetic_panel(len: usize, p: usize, seed: SeedSpec) -> Result<SeriesPanel> {
    if p < 2 || len < 3 {
        return Err(invalid("synthetic panel needs p >= 2 and at least 3 rows"));
    }
    let mut rng = seed.rng();
    let mut normal = || -> f64 { rand::Rng::sample(&mut rng, rand_distr::StandardNormal) };
    let lambda = DMatrix::from_fn(p, 2, |_, _| normal());
    let mut f = DMatrix::zeros(len, 2);
    let mut z = DMatrix::zeros(len, p);
    let mut y = DVector::zeros(len);
    for t in 0..len {
        for k in 0..2 {
            let prev = if t > 0 { f[(t - 1, k)] } else { 0.0 };
            f[(t, k)] = 0.5 * prev + normal();
        }
        for j in 0..p {
            z[(t, j)] = f[(t, 0)] * lambda[(j, 0)] + f[(t, 1)] * lambda[(j, 1)] + normal();
        }
        y[t] = if t > 0 {
            0.3 * y[t - 1] + z[(t - 1, 0)] - 0.5 * z[(t - 1, 1)] + 0.5 * normal()
        } else {
            normal()
        };
    }
    SeriesPanel::new(
        (1..=len).map(|t| format!("t{t:05}")).collect(),
        y,
        z,
        "y".into(),
        (0..p).map(|j| format!("z{}", j + 1)).collect(),
    )
}
