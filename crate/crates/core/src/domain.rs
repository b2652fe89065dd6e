//! Record types shared by every pipeline stage, plus the validation rules
//! and ordinal encodings applied to soil categories.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque zone identifier as it appears in the input files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub String);

impl ZoneId {
    pub fn new(id: impl Into<String>) -> Self {
        ZoneId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ZoneId {
    fn from(s: &str) -> Self {
        ZoneId(s.to_string())
    }
}

impl From<String> for ZoneId {
    fn from(s: String) -> Self {
        ZoneId(s)
    }
}

/// One soil test for a zone. Ordinal fields keep their text label; they are
/// encoded against [`OrdinalOrders`] when features are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilRecord {
    pub zone_id: ZoneId,
    pub test_year: i32,
    /// Phosphorus, mg/l.
    pub p: f64,
    /// Potassium, mg/l.
    pub k: f64,
    /// Magnesium, mg/l.
    pub mg: f64,
    pub ph: f64,
    pub soil_type: String,
    pub stone_content: String,
    pub organic_matter: String,
    pub caco3: String,
}

/// One day of weather observations for a zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDaily {
    pub zone_id: ZoneId,
    pub date: NaiveDate,
    pub t_min: f64,
    pub t_max: f64,
    /// mm
    pub precip: f64,
    /// MJ/m²
    pub solar: f64,
    /// percent
    pub humidity: f64,
}

impl WeatherDaily {
    /// Daily mean temperature, taken as the midpoint of the extremes.
    pub fn t_mean(&self) -> f64 {
        (self.t_max + self.t_min) / 2.0
    }
}

/// One zone-year crop outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub zone_id: ZoneId,
    pub year: i32,
    pub sowing_date: NaiveDate,
    pub harvest_date: NaiveDate,
    pub yield_t_ha: f64,
}

/// The six weekly aggregates for one week of the season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyWeather {
    /// 1 = the week containing the sowing date.
    pub week_index: u32,
    pub t_avg: f64,
    pub dd_sum: f64,
    pub egd_total: u32,
    pub ap_sum: f64,
    pub sr_sum: f64,
    pub h_avg: f64,
}

impl WeeklyWeather {
    /// Aggregate suffixes in feature-column order.
    pub const AGGREGATES: [&'static str; 6] =
        ["t_avg", "dd_sum", "egd_total", "ap_sum", "sr_sum", "h_avg"];

    /// Values in the same order as [`WeeklyWeather::AGGREGATES`].
    pub fn values(&self) -> [f64; 6] {
        [
            self.t_avg,
            self.dd_sum,
            f64::from(self.egd_total),
            self.ap_sum,
            self.sr_sum,
            self.h_avg,
        ]
    }
}

/// Whether weather features take part in an instance / design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    SoilOnly,
    SoilWeather,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::SoilOnly => "soil",
            FeatureMode::SoilWeather => "soil_weather",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "soil" => Ok(FeatureMode::SoilOnly),
            "soil_weather" => Ok(FeatureMode::SoilWeather),
            _ => Err(format!("unknown feature mode '{s}'")),
        }
    }
}

/// First and last week (inclusive) of the growth window, counted from sowing.
pub const GROWTH_WEEKS: std::ops::RangeInclusive<u32> = 17..=40;

/// Number of soil feature columns.
pub const N_SOIL_FEATURES: usize = 8;

/// Number of weather feature columns (weeks in the growth window × aggregates).
pub const N_WEATHER_FEATURES: usize = 24 * 6;

/// Soil feature column names in design-matrix order.
pub const SOIL_FEATURE_NAMES: [&str; N_SOIL_FEATURES] = [
    "p",
    "k",
    "mg",
    "ph",
    "soil_type",
    "stone_content",
    "organic_matter",
    "caco3",
];

/// Weather feature column names: week-major, aggregate-minor.
pub fn weather_feature_names() -> Vec<String> {
    GROWTH_WEEKS
        .flat_map(|w| {
            WeeklyWeather::AGGREGATES
                .iter()
                .map(move |agg| format!("w{w}_{agg}"))
        })
        .collect()
}

/// Full column list for a feature mode.
pub fn feature_names(mode: FeatureMode) -> Vec<String> {
    let mut names: Vec<String> = SOIL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    if mode == FeatureMode::SoilWeather {
        names.extend(weather_feature_names());
    }
    names
}

/// One zone-year row: soil features, optional growth-window weather
/// features and the yield target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub zone_id: ZoneId,
    pub year: i32,
    pub soil_features: [f64; N_SOIL_FEATURES],
    /// `N_WEATHER_FEATURES` values when built in soil+weather mode.
    pub weather_features: Option<Vec<f64>>,
    pub yield_t_ha: f64,
}

impl Instance {
    pub fn mode(&self) -> FeatureMode {
        if self.weather_features.is_some() {
            FeatureMode::SoilWeather
        } else {
            FeatureMode::SoilOnly
        }
    }

    /// Feature values for `mode`; `None` if weather is requested but absent.
    pub fn features(&self, mode: FeatureMode) -> Option<Vec<f64>> {
        let mut out = self.soil_features.to_vec();
        if mode == FeatureMode::SoilWeather {
            out.extend_from_slice(self.weather_features.as_ref()?);
        }
        Some(out)
    }
}

/// Soil category fields that are ordinal-encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrdinalField {
    SoilType,
    StoneContent,
    OrganicMatter,
    Caco3,
}

impl OrdinalField {
    pub const ALL: [OrdinalField; 4] = [
        OrdinalField::SoilType,
        OrdinalField::StoneContent,
        OrdinalField::OrganicMatter,
        OrdinalField::Caco3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrdinalField::SoilType => "soil_type",
            OrdinalField::StoneContent => "stone_content",
            OrdinalField::OrganicMatter => "organic_matter",
            OrdinalField::Caco3 => "caco3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {field} category '{label}'")]
pub struct UnknownCategory {
    pub field: &'static str,
    pub label: String,
}

/// Category orders for the ordinal soil fields, lowest rank first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrdinalOrders {
    pub soil_type: Vec<String>,
    pub stone_content: Vec<String>,
    pub organic_matter: Vec<String>,
    pub caco3: Vec<String>,
}

impl Default for OrdinalOrders {
    fn default() -> Self {
        fn owned(xs: &[&str]) -> Vec<String> {
            xs.iter().map(|s| s.to_string()).collect()
        }
        OrdinalOrders {
            soil_type: owned(&["shallow", "medium", "deep clay", "deep fertile"]),
            stone_content: owned(&["stoneless", "low", "moderate", "high", "gravel"]),
            organic_matter: owned(&["low", "moderate", "very high"]),
            caco3: owned(&["potentially acidic", "slightly calc", "calc", "extremely calc"]),
        }
    }
}

/// Labels compare case-insensitively with `_` treated as a space.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase().replace('_', " ")
}

impl OrdinalOrders {
    pub fn categories(&self, field: OrdinalField) -> &[String] {
        match field {
            OrdinalField::SoilType => &self.soil_type,
            OrdinalField::StoneContent => &self.stone_content,
            OrdinalField::OrganicMatter => &self.organic_matter,
            OrdinalField::Caco3 => &self.caco3,
        }
    }

    /// 0-based rank of `label` within the field's declared order.
    pub fn encode(&self, field: OrdinalField, label: &str) -> Result<u32, UnknownCategory> {
        let wanted = normalize_label(label);
        self.categories(field)
            .iter()
            .position(|c| normalize_label(c) == wanted)
            .map(|i| i as u32)
            .ok_or_else(|| UnknownCategory {
                field: field.name(),
                label: label.to_string(),
            })
    }

    pub fn decode(&self, field: OrdinalField, code: u32) -> Option<&str> {
        self.categories(field).get(code as usize).map(String::as_str)
    }
}

/// Encode one soil category with the default orders.
pub fn encode_ordinal(field: OrdinalField, label: &str) -> Result<u32, UnknownCategory> {
    OrdinalOrders::default().encode(field, label)
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn check(&self, field: &'static str, value: f64) -> Result<(), Rejection> {
        if !value.is_finite() {
            return Err(Rejection::NotFinite { field });
        }
        if value < self.min {
            return Err(Rejection::OutOfRange {
                field,
                value,
                bound: Bound::Lower(self.min),
            });
        }
        if value > self.max {
            return Err(Rejection::OutOfRange {
                field,
                value,
                bound: Bound::Upper(self.max),
            });
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Range {
    fn from([min, max]: [f64; 2]) -> Self {
        Range { min, max }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

/// Plausibility ranges for every numeric input field, plus the category
/// orders used to validate ordinal soil fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub p_mg_l: Range,
    pub k_mg_l: Range,
    pub mg_mg_l: Range,
    pub ph: Range,
    pub t_c: Range,
    pub precip_mm: Range,
    pub solar_mj_m2: Range,
    pub humidity_pct: Range,
    pub yield_t_ha: Range,
    pub ordinals: OrdinalOrders,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            p_mg_l: Range::new(0.0, 500.0),
            k_mg_l: Range::new(0.0, 3000.0),
            mg_mg_l: Range::new(0.0, 2000.0),
            ph: Range::new(0.0, 14.0),
            t_c: Range::new(-40.0, 50.0),
            precip_mm: Range::new(0.0, 300.0),
            solar_mj_m2: Range::new(0.0, 45.0),
            humidity_pct: Range::new(0.0, 100.0),
            yield_t_ha: Range::new(1.0, 18.0),
            ordinals: OrdinalOrders::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Lower(f64),
    Upper(f64),
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Lower(v) => write!(f, "lower {v}"),
            Bound::Upper(v) => write!(f, "upper {v}"),
        }
    }
}

/// Why a record failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("{field} = {value} violates {bound}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        bound: Bound,
    },
    #[error("{field} is not finite")]
    NotFinite { field: &'static str },
    #[error(transparent)]
    UnknownCategory(#[from] UnknownCategory),
    #[error("{0}")]
    Inconsistent(String),
}

/// Types that can be checked against a [`ValidationConfig`].
pub trait Validate {
    fn validate(&self, cfg: &ValidationConfig) -> Result<(), Rejection>;
}

impl Validate for SoilRecord {
    fn validate(&self, cfg: &ValidationConfig) -> Result<(), Rejection> {
        // invariants hold whatever the configured ranges say
        Range::new(0.0, f64::INFINITY).check("p_mg_l", self.p)?;
        Range::new(0.0, f64::INFINITY).check("k_mg_l", self.k)?;
        Range::new(0.0, f64::INFINITY).check("mg_mg_l", self.mg)?;
        Range::new(0.0, 14.0).check("ph", self.ph)?;
        cfg.p_mg_l.check("p_mg_l", self.p)?;
        cfg.k_mg_l.check("k_mg_l", self.k)?;
        cfg.mg_mg_l.check("mg_mg_l", self.mg)?;
        cfg.ph.check("ph", self.ph)?;
        cfg.ordinals.encode(OrdinalField::SoilType, &self.soil_type)?;
        cfg.ordinals
            .encode(OrdinalField::StoneContent, &self.stone_content)?;
        cfg.ordinals
            .encode(OrdinalField::OrganicMatter, &self.organic_matter)?;
        cfg.ordinals.encode(OrdinalField::Caco3, &self.caco3)?;
        Ok(())
    }
}

impl Validate for WeatherDaily {
    fn validate(&self, cfg: &ValidationConfig) -> Result<(), Rejection> {
        cfg.t_c.check("t_min_c", self.t_min)?;
        cfg.t_c.check("t_max_c", self.t_max)?;
        if self.t_min > self.t_max {
            return Err(Rejection::Inconsistent(format!(
                "t_min_c {} exceeds t_max_c {}",
                self.t_min, self.t_max
            )));
        }
        Range::new(0.0, f64::INFINITY).check("precip_mm", self.precip)?;
        Range::new(0.0, f64::INFINITY).check("solar_mj_m2", self.solar)?;
        Range::new(0.0, 100.0).check("humidity_pct", self.humidity)?;
        cfg.precip_mm.check("precip_mm", self.precip)?;
        cfg.solar_mj_m2.check("solar_mj_m2", self.solar)?;
        cfg.humidity_pct.check("humidity_pct", self.humidity)?;
        Ok(())
    }
}

impl Validate for CropRecord {
    fn validate(&self, cfg: &ValidationConfig) -> Result<(), Rejection> {
        if self.sowing_date >= self.harvest_date {
            return Err(Rejection::Inconsistent(format!(
                "sowing_date {} is not before harvest_date {}",
                self.sowing_date, self.harvest_date
            )));
        }
        cfg.yield_t_ha.check("yield_t_ha", self.yield_t_ha)
    }
}
