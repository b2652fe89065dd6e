//! Synthetic zone-level dataset: soil tests, daily weather and winter wheat
//! yields whose per-year moments follow configured targets.
//!
//! Temperature follows an annual cosine with a winter trough, plus a zone
//! offset, a zone-season anomaly, a shared per-season anomaly and AR(1) daily
//! noise. Yield is a linear soil term plus a concave response to growth-window
//! degree-day and precipitation totals plus Gaussian noise. The shared season
//! anomaly is solved per year so the mean yield signal hits its target, and a
//! final affine map pins each year's sample mean and std.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    CropRecord, OrdinalField, OrdinalOrders, SoilRecord, WeatherDaily, WeeklyWeather, ZoneId,
    GROWTH_WEEKS, N_SOIL_FEATURES,
};
use crate::featureng::{soil_features, weekly_series};
use crate::ingest::{write_crop, write_soil, write_weather, IngestError, SoilIndex};
use crate::seeding::{derive_seed, stream_rng, Rng};

/// Days of weather generated per season: 40 whole weeks from sowing.
pub const SEASON_DAYS: i64 = 40 * 7;

const TAG_ZONE: u64 = 1;
const TAG_SEASON: u64 = 2;
const TAG_YEAR: u64 = 3;
const TAG_NOISE: u64 = 4;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] IngestError),
}

/// Zone count and yield moments for one harvest year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearTarget {
    pub year: i32,
    pub zones: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureParams {
    /// Annual mean of the daily mean temperature, °C.
    pub mean: f64,
    pub amplitude: f64,
    /// Day of year of the coldest point.
    pub trough_doy: f64,
    /// Stationary std of the daily AR(1) noise.
    pub daily_sd: f64,
    pub daily_ar: f64,
    /// Persistent per-zone offset std.
    pub zone_sd: f64,
    /// Per zone-season anomaly std.
    pub zone_season_sd: f64,
    /// Mean diurnal range, larger in summer by `range_amplitude`.
    pub range_mean: f64,
    pub range_amplitude: f64,
    pub range_sd: f64,
}

impl Default for TemperatureParams {
    fn default() -> Self {
        TemperatureParams {
            mean: 10.0,
            amplitude: 6.5,
            trough_doy: 15.0,
            daily_sd: 2.0,
            daily_ar: 0.6,
            zone_sd: 0.5,
            zone_season_sd: 0.6,
            range_mean: 7.0,
            range_amplitude: 2.0,
            range_sd: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecipParams {
    /// Chance of a wet day, higher in winter by `wet_prob_amplitude`.
    pub wet_prob: f64,
    pub wet_prob_amplitude: f64,
    /// Mean amount on a wet day, mm (exponential).
    pub wet_mean_mm: f64,
    /// Log-scale std of the multiplicative zone, zone-season and season factors.
    pub zone_sd: f64,
    pub zone_season_sd: f64,
    pub season_sd: f64,
}

impl Default for PrecipParams {
    fn default() -> Self {
        PrecipParams {
            wet_prob: 0.5,
            wet_prob_amplitude: 0.08,
            wet_mean_mm: 4.0,
            zone_sd: 0.15,
            zone_season_sd: 0.25,
            season_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarParams {
    /// Clear-sky radiation: `mean + amplitude·cos` peaking on `peak_doy`, MJ/m².
    pub mean: f64,
    pub amplitude: f64,
    pub peak_doy: f64,
    /// Fraction lost on a wet day.
    pub wet_loss: f64,
    /// Extra uniform cloud loss, up to this fraction.
    pub cloud_loss: f64,
}

impl Default for SolarParams {
    fn default() -> Self {
        SolarParams {
            mean: 11.0,
            amplitude: 9.0,
            peak_doy: 172.0,
            wet_loss: 0.45,
            cloud_loss: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumidityParams {
    /// Percent; `amplitude` higher at the temperature trough.
    pub mean: f64,
    pub amplitude: f64,
    pub wet_bonus: f64,
    pub sd: f64,
}

impl Default for HumidityParams {
    fn default() -> Self {
        HumidityParams {
            mean: 80.0,
            amplitude: 8.0,
            wet_bonus: 6.0,
            sd: 5.0,
        }
    }
}

/// Median and log-scale std of a lognormal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalParams {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoilParams {
    pub p: LogNormalParams,
    pub k: LogNormalParams,
    pub mg: LogNormalParams,
    pub ph_mean: f64,
    pub ph_sd: f64,
    /// Log-scale wobble of nutrients between successive tests of a zone.
    pub retest_sd: f64,
    /// Category weights, in the order of the ordinal categories.
    pub soil_type: Vec<f64>,
    pub stone_content: Vec<f64>,
    pub organic_matter: Vec<f64>,
    pub caco3: Vec<f64>,
    /// Range of the first test year, inclusive.
    pub first_test: (i32, i32),
    /// Years between tests, inclusive range.
    pub retest_interval: (i32, i32),
}

impl Default for SoilParams {
    fn default() -> Self {
        SoilParams {
            p: LogNormalParams {
                median: 25.0,
                sigma: 0.5,
            },
            k: LogNormalParams {
                median: 180.0,
                sigma: 0.4,
            },
            mg: LogNormalParams {
                median: 90.0,
                sigma: 0.5,
            },
            ph_mean: 6.9,
            ph_sd: 0.6,
            retest_sd: 0.1,
            soil_type: vec![0.2, 0.35, 0.25, 0.2],
            stone_content: vec![0.3, 0.3, 0.2, 0.15, 0.05],
            organic_matter: vec![0.3, 0.5, 0.2],
            caco3: vec![0.25, 0.35, 0.25, 0.15],
            first_test: (2010, 2013),
            retest_interval: (3, 4),
        }
    }
}

/// Ground-truth yield response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YieldModel {
    pub base: f64,
    /// Per standardized soil feature: p, k, mg, ph, then ordinal ranks
    /// (centred on the middle category).
    pub soil_weights: [f64; N_SOIL_FEATURES],
    /// Std of a persistent per-zone effect not visible in any feature.
    pub zone_sd: f64,
    /// Multiplies the whole weather term; 0 gives weather-independent yield.
    pub weather_weight: f64,
    pub dd_ref: f64,
    pub dd_scale: f64,
    pub ap_ref: f64,
    pub ap_scale: f64,
    pub dd_lin: f64,
    pub dd_quad: f64,
    pub ap_lin: f64,
    pub ap_quad: f64,
    pub interaction: f64,
    /// Lower bound on per-year noise std, as a fraction of the target std.
    pub noise_floor: f64,
    /// Largest shared season temperature anomaly tried, °C.
    pub max_anomaly: f64,
}

impl Default for YieldModel {
    fn default() -> Self {
        YieldModel {
            base: 10.0,
            soil_weights: [0.25, 0.2, 0.1, 0.2, 0.3, -0.15, 0.15, -0.1],
            zone_sd: 0.9,
            weather_weight: 1.0,
            dd_ref: 1500.0,
            dd_scale: 150.0,
            ap_ref: 340.0,
            ap_scale: 80.0,
            dd_lin: 1.0,
            dd_quad: -0.1,
            ap_lin: 0.6,
            ap_quad: -0.3,
            interaction: -0.25,
            noise_floor: 0.3,
            max_anomaly: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub years: Vec<YearTarget>,
    /// Size of the zone pool each year's zones are drawn from.
    pub n_zones: usize,
    /// Earliest sowing date as (month, day) of the year before harvest.
    pub sowing_start: (u32, u32),
    pub sowing_window_days: i64,
    /// Harvest falls this many days (inclusive range) after the weather ends.
    pub harvest_delay_days: (i64, i64),
    pub temperature: TemperatureParams,
    pub precip: PrecipParams,
    pub solar: SolarParams,
    pub humidity: HumidityParams,
    pub soil: SoilParams,
    pub yield_model: YieldModel,
}

/// Zone counts and yield mean/std per harvest year, 2013 to 2018.
pub fn table_targets() -> Vec<YearTarget> {
    [
        (2013, 359, 8.99, 1.86),
        (2014, 335, 10.78, 1.61),
        (2015, 362, 11.71, 1.36),
        (2016, 221, 9.94, 1.42),
        (2017, 331, 10.24, 1.79),
        (2018, 264, 9.36, 1.75),
    ]
    .into_iter()
    .map(|(year, zones, mean, std)| YearTarget {
        year,
        zones,
        mean,
        std,
    })
    .collect()
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            years: table_targets(),
            n_zones: 400,
            sowing_start: (9, 20),
            sowing_window_days: 35,
            harvest_delay_days: (14, 40),
            temperature: TemperatureParams::default(),
            precip: PrecipParams::default(),
            solar: SolarParams::default(),
            humidity: HumidityParams::default(),
            soil: SoilParams::default(),
            yield_model: YieldModel::default(),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), GenError> {
    if ok {
        Ok(())
    } else {
        Err(GenError::InvalidConfig(msg.to_string()))
    }
}

impl GenConfig {
    /// Same config with yield independent of weather.
    pub fn null(mut self) -> Self {
        self.yield_model.weather_weight = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), GenError> {
        check(!self.years.is_empty(), "years must not be empty")?;
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.years {
            check(seen.insert(t.year), &format!("year {} listed twice", t.year))?;
            check(t.zones > 0, &format!("year {}: zones must be > 0", t.year))?;
            check(
                t.std.is_finite() && t.std >= 0.0,
                &format!("year {}: std must be >= 0", t.year),
            )?;
            check(
                (1.0..=18.0).contains(&t.mean),
                &format!("year {}: mean must lie in [1, 18]", t.year),
            )?;
            check(
                t.zones <= self.n_zones,
                &format!("year {}: {} zones exceed pool of {}", t.year, t.zones, self.n_zones),
            )?;
        }
        check(
            NaiveDate::from_ymd_opt(2001, self.sowing_start.0, self.sowing_start.1).is_some(),
            "sowing_start is not a valid (month, day)",
        )?;
        check(self.sowing_window_days >= 1, "sowing_window_days must be >= 1")?;
        let (h0, h1) = self.harvest_delay_days;
        check(0 <= h0 && h0 <= h1, "harvest_delay_days must satisfy 0 <= lo <= hi")?;
        let t = &self.temperature;
        for (v, name) in [
            (t.daily_sd, "temperature.daily_sd"),
            (t.zone_sd, "temperature.zone_sd"),
            (t.zone_season_sd, "temperature.zone_season_sd"),
            (t.range_sd, "temperature.range_sd"),
            (self.precip.zone_sd, "precip.zone_sd"),
            (self.precip.zone_season_sd, "precip.zone_season_sd"),
            (self.precip.season_sd, "precip.season_sd"),
            (self.precip.wet_mean_mm, "precip.wet_mean_mm"),
            (self.humidity.sd, "humidity.sd"),
            (self.soil.ph_sd, "soil.ph_sd"),
            (self.soil.retest_sd, "soil.retest_sd"),
            (self.soil.p.sigma, "soil.p.sigma"),
            (self.soil.k.sigma, "soil.k.sigma"),
            (self.soil.mg.sigma, "soil.mg.sigma"),
            (self.yield_model.noise_floor, "yield_model.noise_floor"),
            (self.yield_model.zone_sd, "yield_model.zone_sd"),
        ] {
            check(v.is_finite() && v >= 0.0, &format!("{name} must be >= 0"))?;
        }
        check((0.0..1.0).contains(&t.daily_ar), "temperature.daily_ar must lie in [0, 1)")?;
        check(
            (0.0..=1.0).contains(&self.precip.wet_prob),
            "precip.wet_prob must lie in [0, 1]",
        )?;
        for (m, name) in [
            (self.soil.p.median, "soil.p.median"),
            (self.soil.k.median, "soil.k.median"),
            (self.soil.mg.median, "soil.mg.median"),
            (self.yield_model.dd_scale, "yield_model.dd_scale"),
            (self.yield_model.ap_scale, "yield_model.ap_scale"),
        ] {
            check(m > 0.0, &format!("{name} must be > 0"))?;
        }
        let orders = OrdinalOrders::default();
        for field in OrdinalField::ALL {
            let w = self.soil.weights(field);
            check(
                w.len() == orders.categories(field).len(),
                &format!(
                    "soil.{} needs {} weights",
                    field.name(),
                    orders.categories(field).len()
                ),
            )?;
            check(
                w.iter().all(|x| *x >= 0.0) && w.iter().sum::<f64>() > 0.0,
                &format!("soil.{} weights must be >= 0 and not all zero", field.name()),
            )?;
        }
        let (a, b) = self.soil.first_test;
        check(a <= b, "soil.first_test must satisfy lo <= hi")?;
        let (a, b) = self.soil.retest_interval;
        check(1 <= a && a <= b, "soil.retest_interval must satisfy 1 <= lo <= hi")?;
        check(self.yield_model.max_anomaly >= 0.0, "yield_model.max_anomaly must be >= 0")?;
        Ok(())
    }
}

impl SoilParams {
    fn weights(&self, field: OrdinalField) -> &[f64] {
        match field {
            OrdinalField::SoilType => &self.soil_type,
            OrdinalField::StoneContent => &self.stone_content,
            OrdinalField::OrganicMatter => &self.organic_matter,
            OrdinalField::Caco3 => &self.caco3,
        }
    }
}

pub fn zone_id(index: usize) -> ZoneId {
    ZoneId::new(format!("Z{:04}", index + 1))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn categorical(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn seasonal(doy: f64, phase: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (doy - phase) / 365.25).cos()
}

/// Long-run mean daily temperature on `date`, before any offsets.
pub fn climate_temperature(t: &TemperatureParams, date: NaiveDate) -> f64 {
    t.mean - t.amplitude * seasonal(f64::from(date.ordinal()), t.trough_doy)
}

/// Zone-level quantities that persist across seasons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneClimate {
    pub temp_offset: f64,
    pub precip_factor: f64,
    /// Standard normal draw behind the zone's yield effect.
    pub yield_z: f64,
}

pub fn zone_climate(zone: usize, cfg: &GenConfig, seed: u64) -> ZoneClimate {
    let mut rng = stream_rng(derive_seed(seed, TAG_ZONE), zone as u64);
    ZoneClimate {
        temp_offset: cfg.temperature.zone_sd * normal(&mut rng),
        precip_factor: (cfg.precip.zone_sd * normal(&mut rng)).exp(),
        yield_z: normal(&mut rng),
    }
}

/// `n_days` of weather from `start`. `temp_shift` (°C) and `precip_factor`
/// bundle every offset above the climatology.
pub fn gen_weather_span(
    zone: &ZoneId,
    start: NaiveDate,
    n_days: i64,
    temp_shift: f64,
    precip_factor: f64,
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Vec<WeatherDaily> {
    let t = &cfg.temperature;
    let pr = &cfg.precip;
    let so = &cfg.solar;
    let hu = &cfg.humidity;
    let innov = t.daily_sd * (1.0 - t.daily_ar * t.daily_ar).sqrt();
    let mut ar = t.daily_sd * normal(rng);
    let mut out = Vec::with_capacity(n_days.max(0) as usize);
    for d in 0..n_days {
        let date = start + Duration::days(d);
        let doy = f64::from(date.ordinal());
        let winter = -seasonal(doy, t.trough_doy + 182.6);
        if d > 0 {
            ar = t.daily_ar * ar + innov * normal(rng);
        }
        let mean = climate_temperature(t, date) + temp_shift + ar;
        let range = (t.range_mean - t.range_amplitude * winter + t.range_sd * normal(rng)).max(0.5);
        let t_min = round2(mean - range / 2.0).clamp(-40.0, 49.0);
        let t_max = round2(mean + range / 2.0).clamp(t_min + 0.5, 50.0);

        let p_wet = (pr.wet_prob + pr.wet_prob_amplitude * winter).clamp(0.0, 1.0);
        let wet = rng.random::<f64>() < p_wet;
        let exp1: f64 = rng.sample(rand_distr::Exp1);
        let precip = if wet {
            round2(exp1 * pr.wet_mean_mm * precip_factor).min(300.0)
        } else {
            0.0
        };

        let clear = so.mean + so.amplitude * seasonal(doy, so.peak_doy);
        let cloud = 1.0 - so.cloud_loss * rng.random::<f64>();
        let wet_loss = if wet { 1.0 - so.wet_loss } else { 1.0 };
        let solar = round2((clear * cloud * wet_loss).clamp(0.0, 45.0));

        let bonus = if wet { hu.wet_bonus } else { 0.0 };
        let humidity =
            round2((hu.mean + hu.amplitude * winter + bonus + hu.sd * normal(rng)).clamp(0.0, 100.0));

        out.push(WeatherDaily {
            zone_id: zone.clone(),
            date,
            t_min,
            t_max,
            precip,
            solar,
            humidity,
        });
    }
    out
}

/// Sowing and harvest dates for one zone-season.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonPlan {
    pub sowing: NaiveDate,
    pub harvest: NaiveDate,
}

fn season_rng(zone: usize, year: i32, seed: u64) -> Rng {
    stream_rng(derive_seed(derive_seed(seed, TAG_SEASON), zone as u64), year as u64)
}

fn plan_season(year: i32, cfg: &GenConfig, rng: &mut Rng) -> SeasonPlan {
    let (m, d) = cfg.sowing_start;
    let first = NaiveDate::from_ymd_opt(year - 1, m, d).expect("validated sowing start");
    let sowing = first + Duration::days(rng.random_range(0..cfg.sowing_window_days));
    let (h0, h1) = cfg.harvest_delay_days;
    let harvest = sowing + Duration::days(SEASON_DAYS + rng.random_range(h0..=h1));
    SeasonPlan { sowing, harvest }
}

/// Season dates and daily weather (sowing to sowing + 40 weeks) for zone
/// `zone` and harvest year `year`, without the shared season anomaly.
pub fn gen_weather(
    zone: usize,
    year: i32,
    cfg: &GenConfig,
    seed: u64,
) -> (SeasonPlan, Vec<WeatherDaily>) {
    let climate = zone_climate(zone, cfg, seed);
    let mut rng = season_rng(zone, year, seed);
    let plan = plan_season(year, cfg, &mut rng);
    let shift = climate.temp_offset + cfg.temperature.zone_season_sd * normal(&mut rng);
    let factor = climate.precip_factor * (cfg.precip.zone_season_sd * normal(&mut rng)).exp();
    let days = gen_weather_span(
        &zone_id(zone),
        plan.sowing,
        SEASON_DAYS,
        shift,
        factor,
        cfg,
        &mut rng,
    );
    (plan, days)
}

/// Years in which zone `zone` is soil tested, ascending, up to `last_year`.
pub fn soil_test_years(zone: usize, last_year: i32, cfg: &GenConfig, seed: u64) -> Vec<i32> {
    let mut rng = stream_rng(derive_seed(seed, TAG_ZONE), zone as u64);
    // skip the draws made by zone_climate
    let _ = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
    let (a, b) = cfg.soil.first_test;
    let (i0, i1) = cfg.soil.retest_interval;
    let mut year = rng.random_range(a..=b);
    let mut out = Vec::new();
    while year <= last_year {
        out.push(year);
        year += rng.random_range(i0..=i1);
    }
    out
}

/// Every soil test for zone `zone` up to `last_year`. Categories are fixed
/// per zone; nutrients and pH wobble between tests.
pub fn gen_soil(zone: usize, last_year: i32, cfg: &GenConfig, seed: u64) -> Vec<SoilRecord> {
    let s = &cfg.soil;
    let years = soil_test_years(zone, last_year, cfg, seed);
    let mut rng = stream_rng(derive_seed(seed, TAG_ZONE ^ 0x50_11), zone as u64);
    let orders = OrdinalOrders::default();
    let label = |rng: &mut Rng, field: OrdinalField| {
        let i = categorical(rng, s.weights(field));
        orders.categories(field)[i].clone()
    };
    let soil_type = label(&mut rng, OrdinalField::SoilType);
    let stone_content = label(&mut rng, OrdinalField::StoneContent);
    let organic_matter = label(&mut rng, OrdinalField::OrganicMatter);
    let caco3 = label(&mut rng, OrdinalField::Caco3);
    let base_p = s.p.sigma * normal(&mut rng);
    let base_k = s.k.sigma * normal(&mut rng);
    let base_mg = s.mg.sigma * normal(&mut rng);
    let base_ph = s.ph_mean + s.ph_sd * normal(&mut rng);
    let id = zone_id(zone);
    years
        .into_iter()
        .map(|test_year| {
            let mut nutrient = |p: &LogNormalParams, z: f64, hi: f64| {
                round2((p.median * (z + s.retest_sd * normal(&mut rng)).exp()).clamp(0.5, hi))
            };
            let p = nutrient(&s.p, base_p, 500.0);
            let k = nutrient(&s.k, base_k, 3000.0);
            let mg = nutrient(&s.mg, base_mg, 2000.0);
            let ph = round2((base_ph + 0.1 * normal(&mut rng)).clamp(4.0, 9.0));
            SoilRecord {
                zone_id: id.clone(),
                test_year,
                p,
                k,
                mg,
                ph,
                soil_type: soil_type.clone(),
                stone_content: stone_content.clone(),
                organic_matter: organic_matter.clone(),
                caco3: caco3.clone(),
            }
        })
        .collect()
}

/// Degree-day and precipitation totals over the growth window.
pub fn window_totals(weeks: &BTreeMap<u32, WeeklyWeather>) -> (f64, f64) {
    GROWTH_WEEKS
        .filter_map(|w| weeks.get(&w))
        .fold((0.0, 0.0), |(d, a), w| (d + w.dd_sum, a + w.ap_sum))
}

impl YieldModel {
    pub fn soil_term(&self, soil: &[f64; N_SOIL_FEATURES], params: &SoilParams) -> f64 {
        let orders = OrdinalOrders::default();
        let nutrient = |x: f64, p: &LogNormalParams| (x - p.median) / (p.median * p.sigma.max(1e-9));
        let centred = |x: f64, field: OrdinalField| {
            x - (orders.categories(field).len() as f64 - 1.0) / 2.0
        };
        let z = [
            nutrient(soil[0], &params.p),
            nutrient(soil[1], &params.k),
            nutrient(soil[2], &params.mg),
            (soil[3] - params.ph_mean) / params.ph_sd.max(1e-9),
            centred(soil[4], OrdinalField::SoilType),
            centred(soil[5], OrdinalField::StoneContent),
            centred(soil[6], OrdinalField::OrganicMatter),
            centred(soil[7], OrdinalField::Caco3),
        ];
        z.iter().zip(&self.soil_weights).map(|(a, b)| a * b).sum()
    }

    /// Concave response to growth-window degree days and precipitation.
    pub fn weather_term(&self, dd_total: f64, ap_total: f64) -> f64 {
        let d = (dd_total - self.dd_ref) / self.dd_scale;
        let a = (ap_total - self.ap_ref) / self.ap_scale;
        self.weather_weight
            * (self.dd_lin * d
                + self.dd_quad * d * d
                + self.ap_lin * a
                + self.ap_quad * a * a
                + self.interaction * d * a)
    }
}

/// Noise-free yield for encoded soil features and weekly weather.
pub fn yield_signal(
    soil: &[f64; N_SOIL_FEATURES],
    weeks: &BTreeMap<u32, WeeklyWeather>,
    cfg: &GenConfig,
) -> f64 {
    let (d, a) = window_totals(weeks);
    let m = &cfg.yield_model;
    m.base + m.soil_term(soil, &cfg.soil) + m.weather_term(d, a)
}

/// Signal plus Gaussian noise of std `noise_sd`, before per-year calibration.
pub fn gen_yield(
    soil: &[f64; N_SOIL_FEATURES],
    weeks: &BTreeMap<u32, WeeklyWeather>,
    cfg: &GenConfig,
    noise_sd: f64,
    rng: &mut Rng,
) -> f64 {
    yield_signal(soil, weeks, cfg) + noise_sd * normal(rng)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Maps `raw` affinely onto the target mean and sample std, then clips to
/// [1, 18] and rounds to 0.01 t/ha.
pub fn calibrate(raw: &[f64], target_mean: f64, target_std: f64) -> Vec<f64> {
    let (mean, std) = mean_std(raw);
    let k = if std > 0.0 { target_std / std } else { 0.0 };
    raw.iter()
        .map(|x| round2((target_mean + (x - mean) * k).clamp(1.0, 18.0)))
        .collect()
}

/// Shared season temperature anomaly that brings the mean of `signal` to
/// `target`. Brackets on a grid and bisects; if no root lies within
/// `±max`, returns the grid point closest to the target (smallest |θ| on ties).
pub fn solve_anomaly<F: Fn(f64) -> f64>(signal: F, target: f64, max: f64) -> f64 {
    let steps = (max / 0.25).ceil().max(1.0) as i64;
    let grid: Vec<f64> = (-steps..=steps).map(|i| i as f64 * max / steps as f64).collect();
    let f = |x: f64| signal(x) - target;
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();

    let mut bracket: Option<(f64, f64)> = None;
    for i in 0..grid.len() - 1 {
        let (a, b) = (values[i], values[i + 1]);
        if a == 0.0 || a.signum() != b.signum() {
            let better = bracket.is_none_or(|(lo, hi)| {
                grid[i].abs().min(grid[i + 1].abs()) < lo.abs().min(hi.abs())
            });
            if better {
                bracket = Some((grid[i], grid[i + 1]));
            }
        }
    }
    if let Some((mut lo, mut hi)) = bracket {
        let mut f_lo = f(lo);
        if f_lo == 0.0 {
            return lo;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let f_mid = f(mid);
            if f_mid == 0.0 {
                return mid;
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }
    let mut best = 0.0;
    let mut best_err = f64::INFINITY;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].abs().total_cmp(&grid[b].abs()).then(grid[a].total_cmp(&grid[b])));
    for i in order {
        if values[i].abs() < best_err {
            best_err = values[i].abs();
            best = grid[i];
        }
    }
    best
}

/// Generated records plus the per-year season anomaly that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub soils: Vec<SoilRecord>,
    pub weather: Vec<WeatherDaily>,
    pub crops: Vec<CropRecord>,
    pub season_anomaly: BTreeMap<i32, f64>,
}

impl SyntheticDataset {
    /// Writes soil.csv, weather.csv and crop.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), GenError> {
        std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_soil(&dir.join("soil.csv"), &self.soils)?;
        write_weather(&dir.join("weather.csv"), &self.weather)?;
        write_crop(&dir.join("crop.csv"), &self.crops)?;
        Ok(())
    }
}

struct Season {
    zone: usize,
    plan: SeasonPlan,
    days: Vec<WeatherDaily>,
    soil: [f64; N_SOIL_FEATURES],
    /// Daily means over the growth window, for the anomaly solve.
    window_means: Vec<f64>,
    ap_total: f64,
    noise: f64,
}

/// Builds the whole dataset in memory. Zone-seasons are generated in
/// parallel from per-zone streams, so the result does not depend on the
/// thread count.
pub fn gen_dataset(cfg: &GenConfig, seed: u64) -> Result<SyntheticDataset, GenError> {
    cfg.validate()?;
    let last_year = cfg.years.iter().map(|t| t.year).max().expect("validated");
    let orders = OrdinalOrders::default();

    let soils: Vec<SoilRecord> = (0..cfg.n_zones)
        .into_par_iter()
        .map(|z| gen_soil(z, last_year, cfg, seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let soil_index = SoilIndex::new(&soils);

    let mut weather = Vec::new();
    let mut crops = Vec::new();
    let mut season_anomaly = BTreeMap::new();
    let window_start = (*GROWTH_WEEKS.start() as usize - 1) * 7;
    let window_end = *GROWTH_WEEKS.end() as usize * 7;

    for target in &cfg.years {
        let mut year_rng = stream_rng(derive_seed(seed, TAG_YEAR), target.year as u64);
        let mut zones = sample(&mut year_rng, cfg.n_zones, target.zones).into_vec();
        zones.sort_unstable();
        let season_precip = (cfg.precip.season_sd * normal(&mut year_rng)).exp();

        let seasons: Vec<Season> = zones
            .par_iter()
            .map(|&zone| {
                let (plan, mut days) = gen_weather(zone, target.year, cfg, seed);
                if season_precip != 1.0 {
                    for d in &mut days {
                        d.precip = round2(d.precip * season_precip).min(300.0);
                    }
                }
                let id = zone_id(zone);
                // zones always have a test by the first crop year unless the
                // configured first test comes later; those seasons then fall
                // back to the zone's earliest test for the yield signal only
                let record = soil_index
                    .lookup(&id, target.year)
                    .or_else(|| soils.iter().find(|s| s.zone_id == id))
                    .expect("every zone has at least one soil test");
                let soil = soil_features(record, &orders).expect("generated categories are known");
                let window = &days[window_start..window_end];
                let window_means = window.iter().map(|d| d.t_mean()).collect();
                let ap_total = window.iter().map(|d| d.precip).sum();
                let mut noise_rng =
                    stream_rng(derive_seed(derive_seed(seed, TAG_NOISE), zone as u64), target.year as u64);
                Season {
                    zone,
                    plan,
                    days,
                    soil,
                    window_means,
                    ap_total,
                    noise: normal(&mut noise_rng),
                }
            })
            .collect();

        let model = &cfg.yield_model;
        let base: Vec<f64> = seasons
            .iter()
            .map(|s| {
                let zone = zone_climate(s.zone, cfg, seed);
                model.base + model.zone_sd * zone.yield_z + model.soil_term(&s.soil, &cfg.soil)
            })
            .collect();
        let mean_signal = |theta: f64| {
            let total: f64 = seasons
                .iter()
                .zip(&base)
                .map(|(s, b)| {
                    let dd: f64 = s.window_means.iter().map(|m| (m + theta).max(0.0)).sum();
                    b + model.weather_term(dd, s.ap_total)
                })
                .sum();
            total / seasons.len() as f64
        };
        let theta = if model.weather_weight == 0.0 {
            0.0
        } else {
            solve_anomaly(mean_signal, target.mean, model.max_anomaly)
        };
        season_anomaly.insert(target.year, theta);

        let mut signal = Vec::with_capacity(seasons.len());
        let mut finished = Vec::with_capacity(seasons.len());
        for (s, b) in seasons.into_iter().zip(&base) {
            let mut days = s.days;
            if theta != 0.0 {
                for d in &mut days {
                    d.t_min = round2(d.t_min + theta).clamp(-40.0, 49.0);
                    d.t_max = round2(d.t_max + theta).clamp(d.t_min + 0.5, 50.0);
                }
            }
            let weeks = weekly_series(&days, s.plan.sowing, 7);
            let (dd, ap) = window_totals(&weeks);
            signal.push(b + model.weather_term(dd, ap));
            finished.push((s.zone, s.plan, days, s.noise));
        }
        let (_, signal_sd) = mean_std(&signal);
        let noise_sd = (target.std.powi(2) - signal_sd.powi(2))
            .max((model.noise_floor * target.std).powi(2))
            .sqrt();
        let raw: Vec<f64> = signal
            .iter()
            .zip(&finished)
            .map(|(x, f)| x + noise_sd * f.3)
            .collect();
        let yields = calibrate(&raw, target.mean, target.std);
        for ((zone, plan, days, _), y) in finished.into_iter().zip(yields) {
            crops.push(CropRecord {
                zone_id: zone_id(zone),
                year: target.year,
                sowing_date: plan.sowing,
                harvest_date: plan.harvest,
                yield_t_ha: y,
            });
            weather.extend(days);
        }
    }
    weather.sort_by(|a, b| a.zone_id.cmp(&b.zone_id).then(a.date.cmp(&b.date)));
    crops.sort_by(|a, b| a.year.cmp(&b.year).then(a.zone_id.cmp(&b.zone_id)));
    Ok(SyntheticDataset {
        soils,
        weather,
        crops,
        season_anomaly,
    })
}
