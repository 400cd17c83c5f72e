//! Knockoff statistics, the knockoff and knockoff+ thresholds, and the
//! selection metrics.
//!
//! Indices are 0-based in memory. [`SelectionResult`] writes them 1-based in
//! JSON so reports read like column numbers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, IpadError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Lcd,
    MdaDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WStats {
    pub w: Vec<f64>,
    pub statistic_kind: StatisticKind,
}

impl WStats {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

fn paired_abs_diff(v: &[f64], kind: StatisticKind) -> Result<WStats> {
    if v.len() % 2 != 0 {
        return Err(invalid(format!(
            "augmented vector must have even length, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(IpadError::NonFinite("augmented coefficients"));
    }
    let p = v.len() / 2;
    Ok(WStats {
        w: (0..p).map(|j| v[j].abs() - v[p + j].abs()).collect(),
        statistic_kind: kind,
    })
}

/// Lasso coefficient difference `|b_j| - |b_{p+j}|`.
pub fn lcd(beta_aug: &[f64]) -> Result<WStats> {
    paired_abs_diff(beta_aug, StatisticKind::Lcd)
}

/// `|MDA_j| - |MDA_{p+j}|` from forest importances over `[X, X~]`.
pub fn mda_diff(importance: &[f64]) -> Result<WStats> {
    paired_abs_diff(importance, StatisticKind::MdaDiff)
}

/// Smallest `t` among the nonzero magnitudes of `w` with
/// `(offset + #{w_j <= -t}) / max(1, #{w_j >= t}) <= q`, where `offset` is 1
/// for knockoff+ and 0 otherwise. `+inf` when no candidate qualifies.
pub fn knockoff_threshold(w: &WStats, q: f64, plus: bool) -> f64 {
    debug_assert!(w.w.iter().all(|x| x.is_finite()));
    let offset = if plus { 1.0 } else { 0.0 };
    let mut mags: Vec<f64> = w.w.iter().filter(|&&x| x != 0.0).map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    // sorted copies let each candidate be counted by binary search
    let mut pos: Vec<f64> = w.w.iter().copied().filter(|&x| x > 0.0).collect();
    let mut neg: Vec<f64> = w.w.iter().filter(|&&x| x < 0.0).map(|x| -x).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    for &t in &mags {
        let n_pos = pos.len() - pos.partition_point(|&x| x < t);
        let n_neg = neg.len() - neg.partition_point(|&x| x < t);
        if (offset + n_neg as f64) / (n_pos.max(1) as f64) <= q {
            return t;
        }
    }
    f64::INFINITY
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|i| i + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        v.into_iter()
            .map(|i| {
                i.checked_sub(1)
                    .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
            })
            .collect()
    }
}

mod threshold_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    // JSON has no infinity; `null` stands for "nothing selected"
    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if t.is_finite() {
            s.serialize_some(t)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    #[serde(with = "threshold_repr")]
    pub threshold: f64,
    #[serde(with = "one_based")]
    pub selected: Vec<usize>,
    pub q: f64,
    pub plus: bool,
    pub statistic_kind: StatisticKind,
}

/// `{j : w_j >= t}` in increasing order.
pub fn select(w: &WStats, t: f64, q: f64, plus: bool) -> SelectionResult {
    let selected = if t.is_finite() {
        (0..w.len()).filter(|&j| w.w[j] >= t).collect()
    } else {
        Vec::new()
    };
    SelectionResult {
        threshold: t,
        selected,
        q,
        plus,
        statistic_kind: w.statistic_kind,
    }
}

/// Threshold and select in one step.
pub fn knockoff_select(w: &WStats, q: f64, plus: bool) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    Ok(select(w, knockoff_threshold(w, q, plus), q, plus))
}

/// False discovery proportion; 0 for an empty selection.
pub fn fdp(selected: &[usize], true_support: &[usize]) -> f64 {
    let false_hits = selected.iter().filter(|j| !true_support.contains(j)).count();
    false_hits as f64 / selected.len().max(1) as f64
}

/// True discovery proportion.
pub fn tdp(selected: &[usize], true_support: &[usize]) -> Result<f64> {
    if true_support.is_empty() {
        return Err(invalid("power is undefined for an empty true support"));
    }
    let hits = true_support.iter().filter(|j| selected.contains(j)).count();
    Ok(hits as f64 / true_support.len() as f64)
}
