//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use yieldcast::learners::SvrParams;
use yieldcast::{
    Alternative, ExperimentConfig, FeatureConfig, GenConfig, ModeSelection, ModelKind, ModelParams,
    ValidationConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub test_year: i32,
    /// Inclusive `[first, last]`; every year before `test_year` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_years: Option<[i32; 2]>,
    /// Worker threads; 0 lets the runtime pick.
    pub threads: usize,
    pub mode: ModeSelection,
    pub alternative: Alternative,
    pub paths: Paths,
    pub validation: ValidationConfig,
    pub features: FeatureConfig,
    pub models: Vec<ModelEntry>,
    pub synth: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            test_year: 2018,
            train_years: None,
            threads: 0,
            mode: ModeSelection::Both,
            alternative: Alternative::BLessThanA,
            paths: Paths::default(),
            validation: ValidationConfig::default(),
            features: FeatureConfig::default(),
            models: ModelKind::ALL.into_iter().map(ModelEntry::new).collect(),
            synth: GenConfig::default(),
        }
    }
}

/// Input files default to the generator's output under `out/data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soil: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weather: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            soil: None,
            weather: None,
            crop: None,
        }
    }
}

impl Paths {
    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn clean_dir(&self) -> PathBuf {
        self.out.join("clean")
    }

    pub fn raw_soil(&self) -> PathBuf {
        self.soil.clone().unwrap_or_else(|| self.data_dir().join("soil.csv"))
    }

    pub fn raw_weather(&self) -> PathBuf {
        self.weather.clone().unwrap_or_else(|| self.data_dir().join("weather.csv"))
    }

    pub fn raw_crop(&self) -> PathBuf {
        self.crop.clone().unwrap_or_else(|| self.data_dir().join("crop.csv"))
    }
}

/// One model to train. Unset fields keep the per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub kind: ModelKind,
    /// -1 means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples_leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_estimators: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_leaves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svr: Option<SvrParams>,
}

impl ModelEntry {
    pub fn new(kind: ModelKind) -> Self {
        ModelEntry {
            kind,
            max_depth: None,
            min_samples_leaf: None,
            n_estimators: None,
            learning_rate: None,
            subsample: None,
            max_features: None,
            bootstrap: None,
            n_bins: None,
            max_leaves: None,
            svr: None,
        }
    }

    pub fn params(&self, seed: u64) -> anyhow::Result<ModelParams> {
        let mut p = ModelParams::defaults(self.kind).with_seed(seed);
        match self.max_depth {
            Some(-1) => p.max_depth = None,
            Some(d) if d >= 1 => p.max_depth = Some(d as usize),
            Some(d) => bail!("{}: max_depth {d} must be >= 1 or -1", self.kind.id()),
            None => {}
        }
        if let Some(v) = self.min_samples_leaf {
            p.min_samples_leaf = v;
        }
        if let Some(v) = self.n_estimators {
            p.n_estimators = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.subsample {
            p.subsample = v;
        }
        if let Some(v) = self.max_features {
            p.max_features = v;
        }
        if let Some(v) = self.bootstrap {
            p.bootstrap = v;
        }
        if let Some(v) = self.n_bins {
            p.n_bins = v;
        }
        if let Some(v) = self.max_leaves {
            p.max_leaves = v;
        }
        if let Some(v) = self.svr {
            p.svr = v;
        }
        p.validate()
            .with_context(|| format!("model {}", self.kind.id()))?;
        Ok(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        if self.models.is_empty() {
            bail!("no models configured");
        }
        let models = self
            .models
            .iter()
            .map(|m| m.params(self.seed))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(ExperimentConfig {
            models,
            test_year: self.test_year,
            train_years: self.train_years.map(|[a, b]| (a, b)),
            modes: self.mode,
            alternative: self.alternative,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_fatal() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[paths]\noutput = 'x'").is_err());
        assert!(RunConfig::parse("[[models]]\nkind = 'random_forest'\ntrees = 3").is_err());
        assert!(RunConfig::parse("[synth]\nzones = 3").is_err());
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn model_overrides() {
        let cfg = RunConfig::parse(
            "seed = 7\n[[models]]\nkind = 'gradient_boosting'\nmax_depth = -1\nn_estimators = 3\n",
        )
        .unwrap();
        let p = cfg.models[0].params(cfg.seed).unwrap();
        assert_eq!(p.max_depth, None);
        assert_eq!(p.n_estimators, 3);
        assert_eq!(p.seed, 7);
        assert_eq!(p.learning_rate, 0.1);
        let bad = ModelEntry {
            max_depth: Some(0),
            ..ModelEntry::new(ModelKind::DecisionTree)
        };
        assert!(bad.params(1).is_err());
    }

    #[test]
    fn serialized_config_round_trips() {
        let cfg = RunConfig {
            train_years: Some([2014, 2017]),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
