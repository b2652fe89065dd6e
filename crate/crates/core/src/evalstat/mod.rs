//! Temporal train/test protocol, per-model scoring and the soil-only versus
//! soil+weather comparison.

mod report;
mod stats;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use report::{
    read_errors_csv, render_svg, render_text, with_comparison, write_comparison_csv,
    write_errors_csv, ComparisonRow, ErrorRecord, ModelReport, Report, ReportMeta,
    COMPARISON_HEADER, COMPARISON_MARKER, ERRORS_HEADER, REPORT_HEADER,
};
pub use stats::{
    abs_errors, inc_beta, mae, normal_cdf, normal_sf, paired_t_one_tailed, student_t_cdf,
    student_t_sf, zscore_panel, Alternative, PairedT, PanelEntry, StatsError,
};

use crate::domain::{FeatureMode, Instance, ZoneId};
use crate::featureng::{build_matrix, FeatureError};
use crate::learners::{LearnError, ModelKind, ModelParams, TrainedModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no training instances before {test_year}")]
    EmptyTrain { test_year: i32 },
    #[error("no test instances for {0}")]
    EmptyTest(i32),
    #[error("no models configured")]
    NoModels,
    #[error("model {0} configured twice")]
    DuplicateModel(ModelKind),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{model} ({mode}): {source}")]
    Learn {
        model: ModelKind,
        mode: FeatureMode,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Splits by year: train on years before `test_year` (optionally limited to
/// `train_years`, inclusive), test on `test_year`. Input order is kept.
pub fn temporal_split(
    instances: &[Instance],
    test_year: i32,
    train_years: Option<(i32, i32)>,
) -> Result<(Vec<Instance>, Vec<Instance>), EvalError> {
    let in_train = |y: i32| {
        y < test_year && train_years.is_none_or(|(lo, hi)| (lo..=hi).contains(&y))
    };
    let train: Vec<Instance> = instances
        .iter()
        .filter(|i| in_train(i.year))
        .cloned()
        .collect();
    let test: Vec<Instance> = instances
        .iter()
        .filter(|i| i.year == test_year)
        .cloned()
        .collect();
    if test.is_empty() {
        return Err(EvalError::EmptyTest(test_year));
    }
    if train.is_empty() {
        return Err(EvalError::EmptyTrain { test_year });
    }
    Ok((train, test))
}

/// Which feature sets an experiment trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Soil,
    SoilWeather,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<FeatureMode> {
        match self {
            ModeSelection::Soil => vec![FeatureMode::SoilOnly],
            ModeSelection::SoilWeather => vec![FeatureMode::SoilWeather],
            ModeSelection::Both => vec![FeatureMode::SoilOnly, FeatureMode::SoilWeather],
        }
    }

    /// Mode the instances must be assembled in.
    pub fn assembly_mode(self) -> FeatureMode {
        match self {
            ModeSelection::Soil => FeatureMode::SoilOnly,
            _ => FeatureMode::SoilWeather,
        }
    }
}

impl std::str::FromStr for ModeSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "soil" => Ok(ModeSelection::Soil),
            "soil_weather" => Ok(ModeSelection::SoilWeather),
            "both" => Ok(ModeSelection::Both),
            _ => Err(format!("unknown mode '{s}' (soil | soil_weather | both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<ModelParams>,
    pub test_year: i32,
    pub train_years: Option<(i32, i32)>,
    pub modes: ModeSelection,
    pub alternative: Alternative,
    pub seed: u64,
}

impl ExperimentConfig {
    /// SHA-256 over the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Report plus the per-instance errors behind it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: Report,
    pub errors: Vec<ErrorRecord>,
}

struct Fitted {
    kind: ModelKind,
    mode: FeatureMode,
    predictions: Vec<f64>,
}

/// Trains every configured model on each selected feature set using the same
/// temporal split, then scores, standardizes and pair-tests the errors.
pub fn run_experiment(instances: &[Instance], cfg: &ExperimentConfig) -> Result<Experiment, EvalError> {
    if cfg.models.is_empty() {
        return Err(EvalError::NoModels);
    }
    let mut kinds = BTreeSet::new();
    for m in &cfg.models {
        if !kinds.insert(m.kind.id()) {
            return Err(EvalError::DuplicateModel(m.kind));
        }
    }
    let (train, test) = temporal_split(instances, cfg.test_year, cfg.train_years)?;
    let modes = cfg.modes.modes();

    let mut matrices = Vec::new();
    for &mode in &modes {
        matrices.push((mode, build_matrix(&train, mode)?, build_matrix(&test, mode)?));
    }

    let jobs: Vec<(usize, usize)> = (0..cfg.models.len())
        .flat_map(|m| (0..matrices.len()).map(move |k| (m, k)))
        .collect();
    let fitted: Vec<Fitted> = jobs
        .par_iter()
        .map(|&(m, k)| {
            let params = &cfg.models[m];
            let (mode, ref train_m, ref test_m) = matrices[k];
            let wrap = |source| EvalError::Learn {
                model: params.kind,
                mode,
                source,
            };
            let model = TrainedModel::fit_design(params, train_m).map_err(wrap)?;
            let predictions = model.predict(test_m).map_err(wrap)?;
            Ok(Fitted {
                kind: params.kind,
                mode,
                predictions,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let y_test: Vec<f64> = test.iter().map(|i| i.yield_t_ha).collect();
    let keys: Vec<(ZoneId, i32)> = test.iter().map(|i| (i.zone_id.clone(), i.year)).collect();

    let mut errors = Vec::with_capacity(fitted.len() * test.len());
    let mut rows: Vec<ModelReport> = cfg
        .models
        .iter()
        .map(|p| ModelReport::empty(p.kind.id()))
        .collect();
    for (idx, f) in fitted.iter().enumerate() {
        let row = &mut rows[idx / modes.len()];
        let err = abs_errors(&y_test, &f.predictions)?;
        let score = mae(&y_test, &f.predictions)?;
        match f.mode {
            FeatureMode::SoilOnly => row.mae_soil = Some(score),
            FeatureMode::SoilWeather => row.mae_sw = Some(score),
        }
        for (i, ((zone, year), e)) in keys.iter().zip(&err).enumerate() {
            errors.push(ErrorRecord {
                model: f.kind.id().to_string(),
                mode: f.mode,
                zone_id: zone.clone(),
                year: *year,
                y_true: y_test[i],
                y_pred: f.predictions[i],
                abs_error: *e,
            });
        }
    }

    for mode in &modes {
        let maes: Vec<(String, f64)> = rows
            .iter()
            .map(|r| (r.model.clone(), r.mae(*mode).expect("scored above")))
            .collect();
        if maes.len() < 2 {
            continue;
        }
        for (row, e) in rows.iter_mut().zip(zscore_panel(&maes)?) {
            match mode {
                FeatureMode::SoilOnly => {
                    row.z_soil = Some(e.z);
                    row.p_soil = Some(e.p);
                }
                FeatureMode::SoilWeather => {
                    row.z_sw = Some(e.z);
                    row.p_sw = Some(e.p);
                }
            }
        }
    }

    if modes.len() == 2 {
        for row in rows.iter_mut() {
            let a = errors_of(&errors, &row.model, FeatureMode::SoilOnly);
            let b = errors_of(&errors, &row.model, FeatureMode::SoilWeather);
            let r = paired_t_one_tailed(&a, &b, cfg.alternative)?;
            row.t_paired = Some(r.t);
            row.p_paired = Some(r.p);
        }
    }

    let train_years: Vec<i32> = train
        .iter()
        .map(|i| i.year)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = Report {
        rows,
        meta: ReportMeta {
            train_years,
            test_year: cfg.test_year,
            n_train: train.len(),
            n_test: test.len(),
            seed: cfg.seed,
            alternative: cfg.alternative,
            config_digest: cfg.digest(),
        },
    };
    Ok(Experiment { report, errors })
}

fn errors_of(errors: &[ErrorRecord], model: &str, mode: FeatureMode) -> Vec<f64> {
    errors
        .iter()
        .filter(|e| e.model == model && e.mode == mode)
        .map(|e| e.abs_error)
        .collect()
}

/// Paired soil vs soil+weather comparison recomputed from stored errors.
/// Rows follow first appearance of each model in `errors`.
pub fn compare_errors(
    errors: &[ErrorRecord],
    alternative: Alternative,
) -> Result<Vec<ComparisonRow>, EvalError> {
    let mut models: Vec<&str> = Vec::new();
    for e in errors {
        if !models.contains(&e.model.as_str()) {
            models.push(&e.model);
        }
    }
    let mut out = Vec::new();
    for model in models {
        let soil: Vec<&ErrorRecord> = errors
            .iter()
            .filter(|e| e.model == model && e.mode == FeatureMode::SoilOnly)
            .collect();
        let sw: Vec<&ErrorRecord> = errors
            .iter()
            .filter(|e| e.model == model && e.mode == FeatureMode::SoilWeather)
            .collect();
        if soil.is_empty() || sw.is_empty() {
            continue;
        }
        // pair by instance key, in soil-file order
        let mut a = Vec::with_capacity(soil.len());
        let mut b = Vec::with_capacity(soil.len());
        for s in &soil {
            if let Some(w) = sw.iter().find(|w| w.zone_id == s.zone_id && w.year == s.year) {
                a.push(s.abs_error);
                b.push(w.abs_error);
            }
        }
        let test = paired_t_one_tailed(&a, &b, alternative)?;
        let n = a.len() as f64;
        out.push(ComparisonRow {
            model: model.to_string(),
            mae_soil: a.iter().sum::<f64>() / n,
            mae_sw: b.iter().sum::<f64>() / n,
            t: test.t,
            p: test.p,
            n: a.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(zone: &str, year: i32) -> Instance {
        Instance {
            zone_id: zone.into(),
            year,
            soil_features: [0.0; 8],
            weather_features: None,
            yield_t_ha: 10.0,
        }
    }

    #[test]
    fn split_by_year() {
        let all: Vec<Instance> = (2013..=2018)
            .flat_map(|y| (0..3).map(move |z| inst(&format!("Z{z}"), y)))
            .collect();
        let (train, test) = temporal_split(&all, 2018, None).unwrap();
        let years: BTreeSet<i32> = train.iter().map(|i| i.year).collect();
        assert_eq!(years, (2013..=2017).collect());
        assert!(test.iter().all(|i| i.year == 2018));
        assert_eq!(train.len() + test.len(), all.len());

        let (train, _) = temporal_split(&all, 2018, Some((2015, 2016))).unwrap();
        assert_eq!(train.len(), 6);
        // later years never train
        let (train, _) = temporal_split(&all, 2016, None).unwrap();
        assert!(train.iter().all(|i| i.year < 2016));
    }

    #[test]
    fn split_errors() {
        let only_2018 = vec![inst("Z1", 2018)];
        assert!(matches!(
            temporal_split(&only_2018, 2018, None),
            Err(EvalError::EmptyTrain { .. })
        ));
        let no_2018 = vec![inst("Z1", 2017)];
        assert!(matches!(temporal_split(&no_2018, 2018, None), Err(EvalError::EmptyTest(2018))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("both".parse(), Ok(ModeSelection::Both));
        assert_eq!("soil".parse(), Ok(ModeSelection::Soil));
        assert!("weather".parse::<ModeSelection>().is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let cfg = ExperimentConfig {
            models: vec![ModelParams::defaults(ModelKind::DecisionTree)],
            test_year: 2018,
            train_years: None,
            modes: ModeSelection::Both,
            alternative: Alternative::BLessThanA,
            seed: 1,
        };
        assert_eq!(cfg.digest(), cfg.clone().digest());
        assert_eq!(cfg.digest().len(), 64);
        let other = ExperimentConfig { seed: 2, ..cfg.clone() };
        assert_ne!(cfg.digest(), other.digest());
    }
}
