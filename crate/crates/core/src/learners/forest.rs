use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow_tree_on, Columns, GrowOptions, ThresholdRule, Tree};
use super::{LearnError, ModelParams};
use crate::matrix::Matrix;
use crate::seeding::stream_rng;

/// Bagged CART trees with per-node feature subsampling.
pub fn train_random_forest(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
) -> Result<Vec<Tree>, LearnError> {
    train_ensemble(x, y, params, ThresholdRule::Exhaustive, params.bootstrap)
}

/// Extremely randomized trees: full rows, random thresholds.
pub fn train_extra_trees(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
) -> Result<Vec<Tree>, LearnError> {
    train_ensemble(x, y, params, ThresholdRule::Random, false)
}

fn train_ensemble(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
    rule: ThresholdRule,
    bootstrap: bool,
) -> Result<Vec<Tree>, LearnError> {
    if params.n_estimators == 0 {
        return Err(LearnError::InvalidParams(
            "ensembles need n_estimators >= 1".into(),
        ));
    }
    let n = x.n_rows();
    let opts = GrowOptions {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.feature_subset_size(x.n_cols()),
        rule,
    };
    let cols = Columns::new(x, rule);
    // tree i always draws from stream i, whichever thread grows it
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(params.seed, i as u64);
            let rows = if bootstrap {
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n).collect()
            };
            grow_tree_on(&cols, y, rows, opts, Some(&mut rng))
        })
        .collect();
    Ok(trees)
}

/// Mean of the tree predictions, summed in tree order.
pub fn predict_mean(trees: &[Tree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
}
