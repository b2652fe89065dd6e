//! Least-squares gradient boosting over CART trees, and the shared boosting
//! loop the histogram booster plugs its own tree grower into.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree_on, Columns, GrowOptions, ThresholdRule, Tree};
use super::{LearnError, ModelParams};
use crate::matrix::Matrix;
use crate::seeding::{stream_rng, Rng};

/// Additive model `init + learning_rate × Σ trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostedTrees {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut f = self.init;
        for t in &self.trees {
            f += self.learning_rate * t.predict_row(row);
        }
        f
    }
}

/// A fitted booster plus its training MSE before round 1 and after each round.
#[derive(Debug, Clone)]
pub struct BoostingFit {
    pub model: BoostedTrees,
    pub train_mse: Vec<f64>,
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Runs the boosting loop; `fit_tree` grows one tree on (rows, residuals).
pub(crate) fn boost<F>(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
    mut fit_tree: F,
) -> Result<BoostingFit, LearnError>
where
    F: FnMut(Vec<usize>, &[f64], &mut Rng) -> Tree,
{
    let n = x.n_rows();
    let init = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![init; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut train_mse = vec![mse(y, &f)];
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);

    for round in 0..params.n_estimators {
        let mut rng = stream_rng(params.seed, round as u64);
        for i in 0..n {
            residual[i] = y[i] - f[i];
        }
        let rows = if n_sub < n {
            let mut rows = sample(&mut rng, n, n_sub).into_vec();
            rows.sort_unstable();
            rows
        } else {
            (0..n).collect()
        };
        let tree = fit_tree(rows, &residual, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.learning_rate * tree.predict_row(x.row(i));
        }
        train_mse.push(mse(y, &f));
        trees.push(tree);
    }
    Ok(BoostingFit {
        model: BoostedTrees {
            init,
            learning_rate: params.learning_rate,
            trees,
        },
        train_mse,
    })
}

/// Gradient boosting with exhaustive CART trees on the residuals.
pub fn train_gradient_boosting(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
) -> Result<BoostingFit, LearnError> {
    let opts = GrowOptions {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.feature_subset_size(x.n_cols()),
        rule: ThresholdRule::Exhaustive,
    };
    let cols = Columns::new(x, ThresholdRule::Exhaustive);
    boost(x, y, params, |rows, residual, rng| {
        grow_tree_on(&cols, residual, rows, opts, Some(rng))
    })
}
