//! Zone-level winter wheat yield modelling.
//!
//! The pipeline runs ingest (CSV validation and cleaning), weekly
//! agro-climatic feature engineering, tree-ensemble and linear learners, and
//! a temporal evaluation that compares soil-only against soil+weather
//! feature sets. A synthetic generator provides data with known structure.

pub mod domain;
pub mod evalstat;
pub mod featureng;
pub mod ingest;
pub mod learners;
pub mod matrix;
pub mod seeding;
pub mod synthgen;

pub use domain::{
    feature_names, CropRecord, FeatureMode, Instance, OrdinalField, OrdinalOrders, SoilRecord,
    ValidationConfig, WeatherDaily, WeeklyWeather, ZoneId,
};
pub use evalstat::{run_experiment, Alternative, ExperimentConfig, ModeSelection, Report};
pub use featureng::{assemble_instances, build_matrix, DesignMatrix, FeatureConfig};
pub use learners::{ModelKind, ModelParams, TrainedModel};
pub use matrix::Matrix;
pub use synthgen::{gen_dataset, GenConfig, SyntheticDataset};
