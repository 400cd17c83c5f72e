//! Regression random forest with out-of-bag permutation importance (MDA).

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IpadError, Result};
use crate::seed::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    /// Minimum number of bootstrap rows in each child of a split.
    pub min_leaf: usize,
    pub seed: SeedSpec,
}

impl ForestConfig {
    /// 500 trees, `mtry = max(m / 3, 1)`, `min_leaf = 5`.
    pub fn with_defaults(m: usize, seed: SeedSpec) -> Self {
        Self {
            n_trees: 500,
            mtry: (m / 3).max(1),
            min_leaf: 5,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    oob: Vec<usize>,
    split_on: Vec<bool>,
}

impl Tree {
    fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if value(feature) <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdaReport {
    pub importance: Vec<f64>,
    pub n_permutations: usize,
}

struct Grower<'a> {
    a: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    split_on: Vec<bool>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], rng: &mut crate::seed::Rng) -> usize {
        let id = self.nodes.len();
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        self.nodes.push(Node::Leaf(sum / n));
        if rows.len() < 2 * self.min_leaf {
            return id;
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == first) {
            return id;
        }

        let m = self.a.ncols();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for feature in index::sample(rng, m, self.mtry).into_iter() {
            order.clear();
            order.extend(rows.iter().map(|&i| (self.a[(i, feature)], self.y[i])));
            order.sort_by(|u, v| u.0.total_cmp(&v.0));
            let mut left_sum = 0.0;
            for k in 0..order.len() - 1 {
                left_sum += order[k].1;
                let n_left = k + 1;
                if n_left < self.min_leaf || order.len() - n_left < self.min_leaf {
                    continue;
                }
                if order[k].0 == order[k + 1].0 {
                    continue;
                }
                // maximizing this is the same as minimizing child SSE
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (order.len() - n_left) as f64;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (order[k].0 + order[k + 1].0)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        if gain <= sum * sum / n {
            return id;
        }

        let mut split = 0;
        for k in 0..rows.len() {
            if self.a[(rows[k], feature)] <= threshold {
                rows.swap(k, split);
                split += 1;
            }
        }
        self.split_on[feature] = true;
        let (lo, hi) = rows.split_at_mut(split);
        let left = self.grow(lo, rng);
        let right = self.grow(hi, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub fn fit_forest(a: &DMatrix<f64>, y: &DVector<f64>, config: &ForestConfig) -> Result<ForestModel> {
    let (n, m) = a.shape();
    if y.len() != n {
        return Err(IpadError::DimensionMismatch {
            context: "forest response",
            expected: n,
            found: y.len(),
        });
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(invalid("n_trees and min_leaf must be positive"));
    }
    if config.mtry == 0 || config.mtry > m {
        return Err(invalid(format!("mtry = {} must lie in [1, {m}]", config.mtry)));
    }
    if n < 2 * config.min_leaf {
        return Err(invalid(format!(
            "need at least {} rows for min_leaf = {}, got {n}",
            2 * config.min_leaf,
            config.min_leaf
        )));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(IpadError::NonFinite("forest inputs"));
    }

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = config.seed.substream(t as u64).rng();
            let mut in_bag = vec![false; n];
            let mut rows: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            let mut grower = Grower {
                a,
                y,
                mtry: config.mtry,
                min_leaf: config.min_leaf,
                nodes: Vec::new(),
                split_on: vec![false; m],
            };
            grower.grow(&mut rows, &mut rng);
            Tree {
                nodes: grower.nodes,
                oob: (0..n).filter(|&i| !in_bag[i]).collect(),
                split_on: grower.split_on,
            }
        })
        .collect();
    Ok(ForestModel { trees, n_features: m })
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn check_width(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.ncols() != self.n_features {
            return Err(IpadError::DimensionMismatch {
                context: "forest design columns",
                expected: self.n_features,
                found: a.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, a: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_width(a)?;
        Ok(DVector::from_fn(a.nrows(), |i, _| {
            let total: f64 = self.trees.iter().map(|t| t.predict_with(|j| a[(i, j)])).sum();
            total / self.trees.len() as f64
        }))
    }

    /// Average over the trees for which each row was out of bag; `None` for
    /// rows that were in every bootstrap sample.
    pub fn oob_predict(&self, a: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
        self.check_width(a)?;
        let mut sum = vec![0.0; a.nrows()];
        let mut count = vec![0usize; a.nrows()];
        for tree in &self.trees {
            for &i in &tree.oob {
                sum[i] += tree.predict_with(|j| a[(i, j)]);
                count[i] += 1;
            }
        }
        Ok(sum
            .into_iter()
            .zip(count)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect())
    }
}

/// Per-tree increase in out-of-bag MSE after permuting one column within the
/// out-of-bag rows, averaged over trees. Trees with no out-of-bag rows are
/// skipped; a column a tree never splits on contributes exactly 0.
pub fn mda(model: &ForestModel, a: &DMatrix<f64>, y: &DVector<f64>, seed: SeedSpec) -> Result<MdaReport> {
    model.check_width(a)?;
    if y.len() != a.nrows() {
        return Err(IpadError::DimensionMismatch {
            context: "mda response",
            expected: a.nrows(),
            found: y.len(),
        });
    }
    let m = model.n_features;
    let per_tree: Vec<Option<Vec<f64>>> = model
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            if tree.oob.is_empty() {
                return None;
            }
            let k = tree.oob.len() as f64;
            let base: f64 = tree
                .oob
                .iter()
                .map(|&i| (y[i] - tree.predict_with(|j| a[(i, j)])).powi(2))
                .sum::<f64>()
                / k;
            let mut rng = seed.substream(t as u64).rng();
            let mut out = vec![0.0; m];
            let mut perm = tree.oob.clone();
            for (feature, slot) in out.iter_mut().enumerate() {
                if !tree.split_on[feature] {
                    continue;
                }
                perm.copy_from_slice(&tree.oob);
                perm.shuffle(&mut rng);
                let mse: f64 = tree
                    .oob
                    .iter()
                    .zip(&perm)
                    .map(|(&i, &donor)| {
                        let pred = tree.predict_with(|j| {
                            if j == feature {
                                a[(donor, j)]
                            } else {
                                a[(i, j)]
                            }
                        });
                        (y[i] - pred).powi(2)
                    })
                    .sum::<f64>()
                    / k;
                *slot = mse - base;
            }
            Some(out)
        })
        .collect();

    // summed in tree order so the result does not depend on scheduling
    let mut importance = vec![0.0; m];
    let mut used = 0usize;
    for contrib in per_tree.into_iter().flatten() {
        used += 1;
        for (acc, v) in importance.iter_mut().zip(contrib) {
            *acc += v;
        }
    }
    if used > 0 {
        for v in &mut importance {
            *v /= used as f64;
        }
    }
    Ok(MdaReport {
        importance,
        n_permutations: 1,
    })
}
