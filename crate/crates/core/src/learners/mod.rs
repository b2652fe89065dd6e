//! Regression models behind one fit / predict contract.
//!
//! Tree models: CART, random forest, extra trees, gradient boosting and a
//! histogram booster with leaf-wise growth. Plus a linear ε-insensitive SVR.
//! All randomness is keyed by [`ModelParams::seed`].

mod boosting;
mod forest;
mod hist;
mod svr;
mod tree;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boosting::{train_gradient_boosting, BoostedTrees, BoostingFit};
pub use forest::{predict_mean, train_extra_trees, train_random_forest};
pub use hist::{train_hist_gradient_boosting, BinMapper};
pub use svr::{objective as svr_objective, train_linear_svr, LinearSvr};
pub use tree::{best_split, Node, Split, Tree};

use crate::featureng::DesignMatrix;
use crate::matrix::Matrix;
use tree::{grow_tree, GrowOptions, ThresholdRule};

/// Serialization format version written by [`TrainedModel::save`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data is empty")]
    Empty,
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    SupportVector,
    RandomForest,
    ExtraTrees,
    HistGradientBoosting,
    GradientBoosting,
}

impl ModelKind {
    /// Report order.
    pub const ALL: [ModelKind; 6] = [
        ModelKind::DecisionTree,
        ModelKind::SupportVector,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::HistGradientBoosting,
        ModelKind::GradientBoosting,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::SupportVector => "support_vector",
            ModelKind::RandomForest => "random_forest",
            ModelKind::ExtraTrees => "extra_trees",
            ModelKind::HistGradientBoosting => "hist_gradient_boosting",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::SupportVector => "Support Vector",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::ExtraTrees => "Extra Trees",
            ModelKind::HistGradientBoosting => "Hist Gradient Boosting",
            ModelKind::GradientBoosting => "Gradient Boosting",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| format!("unknown model kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrParams {
    pub epsilon: f64,
    /// Weight of the ε-insensitive loss against the ½‖w‖² term.
    pub c: f64,
    pub iterations: usize,
    /// Initial subgradient step; step t is `step_size / √t`.
    pub step_size: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            epsilon: 0.1,
            c: 1.0,
            iterations: 5000,
            step_size: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    /// `None` grows until other limits stop it.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Row fraction per boosting round.
    pub subsample: f64,
    /// Fraction of features tried at each node, rounded up.
    pub max_features: f64,
    /// Bootstrap rows per tree (random forest only).
    pub bootstrap: bool,
    pub n_bins: usize,
    pub max_leaves: usize,
    pub svr: SvrParams,
    pub seed: u64,
}

impl ModelParams {
    /// Defaults for `kind`: trees depth 6 with 5-row leaves, 200-member
    /// ensembles, learning rate 0.1, forests try ⌈d/3⌉ features per node, the
    /// histogram booster uses 64 bins and 31 leaves.
    pub fn defaults(kind: ModelKind) -> Self {
        let base = ModelParams {
            kind,
            max_depth: Some(6),
            min_samples_leaf: 5,
            n_estimators: 200,
            learning_rate: 0.1,
            subsample: 1.0,
            max_features: 1.0,
            bootstrap: false,
            n_bins: 64,
            max_leaves: 31,
            svr: SvrParams::default(),
            seed: 0,
        };
        match kind {
            ModelKind::RandomForest => ModelParams {
                max_features: 1.0 / 3.0,
                bootstrap: true,
                ..base
            },
            ModelKind::ExtraTrees => ModelParams {
                max_features: 1.0 / 3.0,
                ..base
            },
            ModelKind::HistGradientBoosting => ModelParams {
                max_depth: None,
                ..base
            },
            _ => base,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of features examined per node for `n_features` columns.
    pub fn feature_subset_size(&self, n_features: usize) -> usize {
        let k = (self.max_features * n_features as f64 - 1e-9).ceil() as usize;
        k.clamp(1, n_features.max(1))
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: &str| Err(LearnError::InvalidParams(msg.to_string()));
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return bad("max_features must be in (0, 1]");
        }
        if self.n_bins < 2 {
            return bad("n_bins must be >= 2");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2");
        }
        if matches!(self.kind, ModelKind::RandomForest | ModelKind::ExtraTrees)
            && self.n_estimators < 1
        {
            return bad("n_estimators must be >= 1");
        }
        let s = &self.svr;
        if !(s.epsilon >= 0.0 && s.c > 0.0 && s.step_size > 0.0 && s.iterations >= 1) {
            return bad("svr needs epsilon >= 0, c > 0, step_size > 0, iterations >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelBody {
    Tree(Tree),
    Forest { trees: Vec<Tree> },
    Boosted(BoostedTrees),
    Linear(LinearSvr),
}

/// A fitted model and the column layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub column_names: Vec<String>,
    pub params: ModelParams,
    pub body: ModelBody,
}

#[derive(Serialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

pub fn train_decision_tree(x: &Matrix, y: &[f64], params: &ModelParams) -> Result<Tree, LearnError> {
    check_training_data(x, y)?;
    let opts = GrowOptions {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: x.n_cols(),
        rule: ThresholdRule::Exhaustive,
    };
    Ok(grow_tree(x, y, (0..x.n_rows()).collect(), opts, None))
}

fn check_training_data(x: &Matrix, y: &[f64]) -> Result<(), LearnError> {
    if x.n_rows() == 0 {
        return Err(LearnError::Empty);
    }
    if x.n_rows() != y.len() {
        return Err(LearnError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }
    Ok(())
}

impl TrainedModel {
    /// Fits `params.kind` on `x`/`y`; `column_names` label the columns of `x`.
    pub fn fit(
        params: &ModelParams,
        x: &Matrix,
        y: &[f64],
        column_names: Vec<String>,
    ) -> Result<Self, LearnError> {
        params.validate()?;
        check_training_data(x, y)?;
        if column_names.len() != x.n_cols() {
            return Err(LearnError::ColumnMismatch(format!(
                "{} names for {} columns",
                column_names.len(),
                x.n_cols()
            )));
        }
        let body = match params.kind {
            ModelKind::DecisionTree => ModelBody::Tree(train_decision_tree(x, y, params)?),
            ModelKind::RandomForest => ModelBody::Forest {
                trees: train_random_forest(x, y, params)?,
            },
            ModelKind::ExtraTrees => ModelBody::Forest {
                trees: train_extra_trees(x, y, params)?,
            },
            ModelKind::GradientBoosting => {
                ModelBody::Boosted(train_gradient_boosting(x, y, params)?.model)
            }
            ModelKind::HistGradientBoosting => {
                ModelBody::Boosted(train_hist_gradient_boosting(x, y, params)?.model)
            }
            ModelKind::SupportVector => ModelBody::Linear(train_linear_svr(x, y, &params.svr)?),
        };
        Ok(TrainedModel {
            kind: params.kind,
            column_names,
            params: params.clone(),
            body,
        })
    }

    pub fn fit_design(params: &ModelParams, data: &DesignMatrix) -> Result<Self, LearnError> {
        Self::fit(params, &data.x, &data.target, data.column_names.clone())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.body {
            ModelBody::Tree(t) => t.predict_row(row),
            ModelBody::Forest { trees } => predict_mean(trees, row),
            ModelBody::Boosted(b) => b.predict_row(row),
            ModelBody::Linear(l) => l.predict_row(row),
        }
    }

    /// Predicts rows of `x` without checking column names.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        if x.n_cols() != self.column_names.len() {
            return Err(LearnError::ColumnMismatch(format!(
                "model has {} columns, input has {}",
                self.column_names.len(),
                x.n_cols()
            )));
        }
        Ok(x.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Predicts every row of `data`; column names must match training.
    pub fn predict(&self, data: &DesignMatrix) -> Result<Vec<f64>, LearnError> {
        self.check_columns(&data.column_names)?;
        self.predict_matrix(&data.x)
    }

    fn check_columns(&self, names: &[String]) -> Result<(), LearnError> {
        if names == self.column_names.as_slice() {
            return Ok(());
        }
        let missing: Vec<&str> = self
            .column_names
            .iter()
            .filter(|c| !names.contains(c))
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = names
            .iter()
            .filter(|c| !self.column_names.contains(c))
            .map(String::as_str)
            .collect();
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing [{}]", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("unexpected [{}]", extra.join(", ")));
        }
        if parts.is_empty() {
            let i = names
                .iter()
                .zip(&self.column_names)
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            parts.push(format!(
                "order differs at position {i}: expected {}, found {}",
                self.column_names[i], names[i]
            ));
        }
        Err(LearnError::ColumnMismatch(parts.join("; ")))
    }

    /// Writes the versioned JSON model file.
    pub fn save<W: Write>(&self, out: W) -> Result<(), LearnError> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self, LearnError> {
        #[derive(Deserialize)]
        struct Envelope {
            format_version: u32,
            model: serde_json::Value,
        }
        let file: Envelope = serde_json::from_reader(input)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Version(file.format_version));
        }
        Ok(serde_json::from_value(file.model)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, ((i * 7) % 11) as f64]).collect();
        let y = rows.iter().map(|r| r[0] * 0.3 + (r[1] - 5.0).powi(2) * 0.1).collect();
        (Matrix::from_rows(&rows), y)
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let p = ModelParams::defaults(ModelKind::DecisionTree);
        let empty = Matrix::zeros(0, 2);
        assert!(matches!(TrainedModel::fit(&p, &empty, &[], names()), Err(LearnError::Empty)));
        let (x, y) = toy();
        assert!(matches!(
            TrainedModel::fit(&p, &x, &y[..3], names()),
            Err(LearnError::LengthMismatch { .. })
        ));
        let mut bad = x.clone();
        bad.set(0, 0, f64::NAN);
        assert!(matches!(TrainedModel::fit(&p, &bad, &y, names()), Err(LearnError::NonFinite)));
    }

    #[test]
    fn invalid_params_rejected() {
        let (x, y) = toy();
        let mut p = ModelParams::defaults(ModelKind::GradientBoosting);
        p.learning_rate = 0.0;
        assert!(matches!(TrainedModel::fit(&p, &x, &y, names()), Err(LearnError::InvalidParams(_))));
        let mut p = ModelParams::defaults(ModelKind::RandomForest);
        p.n_estimators = 0;
        assert!(matches!(TrainedModel::fit(&p, &x, &y, names()), Err(LearnError::InvalidParams(_))));
    }

    #[test]
    fn column_mismatch_names_columns() {
        let (x, y) = toy();
        let m = TrainedModel::fit(&ModelParams::defaults(ModelKind::DecisionTree), &x, &y, names()).unwrap();
        let data = DesignMatrix {
            column_names: vec!["a".into(), "c".into()],
            x: x.clone(),
            target: y.clone(),
            meta: vec![],
        };
        let msg = m.predict(&data).unwrap_err().to_string();
        assert!(msg.contains("missing [b]") && msg.contains("unexpected [c]"), "{msg}");

        let swapped = DesignMatrix {
            column_names: vec!["b".into(), "a".into()],
            ..data
        };
        let msg = m.predict(&swapped).unwrap_err().to_string();
        assert!(msg.contains("order differs at position 0"), "{msg}");
    }

    #[test]
    fn subset_size_rounds_up() {
        let p = ModelParams::defaults(ModelKind::RandomForest);
        assert_eq!(p.feature_subset_size(152), 51);
        assert_eq!(p.feature_subset_size(8), 3);
        assert_eq!(p.feature_subset_size(3), 1);
        assert_eq!(p.feature_subset_size(1), 1);
        assert_eq!(ModelParams::defaults(ModelKind::GradientBoosting).feature_subset_size(8), 8);
    }

    #[test]
    fn save_load_round_trip_every_kind() {
        let (x, y) = toy();
        for kind in ModelKind::ALL {
            let mut p = ModelParams::defaults(kind).with_seed(11);
            p.n_estimators = 5;
            p.svr.iterations = 50;
            let m = TrainedModel::fit(&p, &x, &y, names()).unwrap();
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            let back = TrainedModel::load(buf.as_slice()).unwrap();
            assert_eq!(back, m, "{kind}");
            assert_eq!(back.predict_matrix(&x).unwrap(), m.predict_matrix(&x).unwrap());
        }
    }

    #[test]
    fn load_rejects_other_versions() {
        let text = r#"{"format_version": 99, "model": null}"#;
        assert!(matches!(
            TrainedModel::load(text.as_bytes()),
            Err(LearnError::Version(99))
        ));
    }

    #[test]
    fn kind_ids_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.id().parse::<ModelKind>(), Ok(k));
        }
        assert!("lightgbm".parse::<ModelKind>().is_err());
    }
}
