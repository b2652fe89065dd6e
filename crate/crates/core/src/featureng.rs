//! Weekly agro-climatic aggregation and assembly of zone-year instances into
//! design matrices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    feature_names, CropRecord, FeatureMode, Instance, OrdinalField, OrdinalOrders, SoilRecord,
    UnknownCategory, WeatherDaily, WeeklyWeather, ZoneId, GROWTH_WEEKS, N_SOIL_FEATURES,
    N_WEATHER_FEATURES,
};
use crate::ingest::SoilIndex;
use crate::matrix::Matrix;

/// Daily mean temperature above which a day counts as an effective growing day.
pub const EGD_THRESHOLD_C: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Weeks in the growth window with fewer observed days count as missing.
    pub min_week_days: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { min_week_days: 7 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("week {0} has no days")]
    EmptyWeek(u32),
    #[error("duplicate instance for zone {zone_id} year {year}")]
    DuplicateInstance { zone_id: ZoneId, year: i32 },
    #[error("instance for zone {zone_id} year {year} has no weather features")]
    MissingWeather { zone_id: ZoneId, year: i32 },
}

/// Why a zone-year could not become an instance.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum InstanceRejection {
    #[error("missing growth-window weeks {0:?}")]
    MissingWeeks(Vec<u32>),
    #[error("no soil test on or before {0}")]
    NoSoilTest(i32),
    #[error(transparent)]
    UnknownCategory(#[from] UnknownCategory),
}

/// Buckets days into 7-day weeks anchored at the sowing date (week 1 starts
/// on the sowing day). Days before sowing are dropped.
pub fn assign_weeks(days: &[WeatherDaily], sowing: NaiveDate) -> BTreeMap<u32, Vec<&WeatherDaily>> {
    let mut weeks: BTreeMap<u32, Vec<&WeatherDaily>> = BTreeMap::new();
    for d in days {
        if let Some(w) = week_of(d.date, sowing) {
            weeks.entry(w).or_default().push(d);
        }
    }
    weeks
}

/// Week index of `date` relative to `sowing`, `None` before sowing.
pub fn week_of(date: NaiveDate, sowing: NaiveDate) -> Option<u32> {
    let offset = (date - sowing).num_days();
    (offset >= 0).then(|| (offset / 7) as u32 + 1)
}

/// The six weekly aggregates over one bucket of days.
///
/// Days are put into a canonical order before summing so the result does not
/// depend on input order, bit for bit.
pub fn weekly_aggregate<'a, I>(week_index: u32, days: I) -> Result<WeeklyWeather, FeatureError>
where
    I: IntoIterator<Item = &'a WeatherDaily>,
{
    let mut days: Vec<&WeatherDaily> = days.into_iter().collect();
    if days.is_empty() {
        return Err(FeatureError::EmptyWeek(week_index));
    }
    days.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then(a.t_max.total_cmp(&b.t_max))
            .then(a.t_min.total_cmp(&b.t_min))
            .then(a.precip.total_cmp(&b.precip))
            .then(a.solar.total_cmp(&b.solar))
            .then(a.humidity.total_cmp(&b.humidity))
    });

    let n = days.len() as f64;
    let mut t_sum = 0.0;
    let mut dd_sum = 0.0;
    let mut egd_total = 0;
    let mut ap_sum = 0.0;
    let mut sr_sum = 0.0;
    let mut h_sum = 0.0;
    for d in &days {
        let mean = d.t_mean();
        t_sum += mean;
        dd_sum += mean.max(0.0);
        if mean > EGD_THRESHOLD_C {
            egd_total += 1;
        }
        ap_sum += d.precip;
        sr_sum += d.solar;
        h_sum += d.humidity;
    }
    Ok(WeeklyWeather {
        week_index,
        t_avg: t_sum / n,
        dd_sum,
        egd_total,
        ap_sum,
        sr_sum,
        h_avg: h_sum / n,
    })
}

/// Weekly aggregates for every week that has at least `min_days` days.
pub fn weekly_series(
    days: &[WeatherDaily],
    sowing: NaiveDate,
    min_days: u32,
) -> BTreeMap<u32, WeeklyWeather> {
    assign_weeks(days, sowing)
        .into_iter()
        .filter(|(_, ds)| ds.len() >= min_days.max(1) as usize)
        .map(|(w, ds)| {
            let agg = weekly_aggregate(w, ds).expect("non-empty bucket");
            (w, agg)
        })
        .collect()
}

/// Numeric soil features: p, k, mg, ph, then the four encoded ordinals.
pub fn soil_features(
    soil: &SoilRecord,
    orders: &OrdinalOrders,
) -> Result<[f64; N_SOIL_FEATURES], UnknownCategory> {
    Ok([
        soil.p,
        soil.k,
        soil.mg,
        soil.ph,
        f64::from(orders.encode(OrdinalField::SoilType, &soil.soil_type)?),
        f64::from(orders.encode(OrdinalField::StoneContent, &soil.stone_content)?),
        f64::from(orders.encode(OrdinalField::OrganicMatter, &soil.organic_matter)?),
        f64::from(orders.encode(OrdinalField::Caco3, &soil.caco3)?),
    ])
}

/// Growth-window weather features (week-major, aggregate-minor).
pub fn window_features(
    weeks: &BTreeMap<u32, WeeklyWeather>,
) -> Result<Vec<f64>, InstanceRejection> {
    let missing: Vec<u32> = GROWTH_WEEKS.filter(|w| !weeks.contains_key(w)).collect();
    if !missing.is_empty() {
        return Err(InstanceRejection::MissingWeeks(missing));
    }
    let mut out = Vec::with_capacity(N_WEATHER_FEATURES);
    for w in GROWTH_WEEKS {
        out.extend_from_slice(&weeks[&w].values());
    }
    Ok(out)
}

pub fn build_instance(
    crop: &CropRecord,
    soil: &SoilRecord,
    weeks: &BTreeMap<u32, WeeklyWeather>,
    mode: FeatureMode,
    orders: &OrdinalOrders,
) -> Result<Instance, InstanceRejection> {
    let soil_features = soil_features(soil, orders)?;
    let weather_features = match mode {
        FeatureMode::SoilOnly => None,
        FeatureMode::SoilWeather => Some(window_features(weeks)?),
    };
    Ok(Instance {
        zone_id: crop.zone_id.clone(),
        year: crop.year,
        soil_features,
        weather_features,
        yield_t_ha: crop.yield_t_ha,
    })
}

/// A zone-year left out of the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub zone_id: ZoneId,
    pub year: i32,
    pub reason: InstanceRejection,
}

pub fn write_dropped_csv<W: Write>(dropped: &[Dropped], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["zone_id", "year", "reason"])?;
    for d in dropped {
        w.write_record([d.zone_id.0.clone(), d.year.to_string(), d.reason.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Builds one instance per crop record (in crop order), carrying soil tests
/// forward and aggregating each zone's weather from its sowing date.
pub fn assemble_instances(
    crops: &[CropRecord],
    soils: &[SoilRecord],
    weather: &[WeatherDaily],
    mode: FeatureMode,
    orders: &OrdinalOrders,
    cfg: &FeatureConfig,
) -> (Vec<Instance>, Vec<Dropped>) {
    let soil_index = SoilIndex::new(soils);
    let mut by_zone: HashMap<&ZoneId, Vec<WeatherDaily>> = HashMap::new();
    if mode == FeatureMode::SoilWeather {
        for d in weather {
            by_zone.entry(&d.zone_id).or_default().push(d.clone());
        }
        for days in by_zone.values_mut() {
            days.sort_by_key(|d| d.date);
        }
    }
    let empty: Vec<WeatherDaily> = Vec::new();

    let results: Vec<Result<Instance, Dropped>> = crops
        .par_iter()
        .map(|crop| {
            let drop = |reason| Dropped {
                zone_id: crop.zone_id.clone(),
                year: crop.year,
                reason,
            };
            let soil = soil_index
                .lookup(&crop.zone_id, crop.year)
                .ok_or_else(|| drop(InstanceRejection::NoSoilTest(crop.year)))?;
            let weeks = match mode {
                FeatureMode::SoilOnly => BTreeMap::new(),
                FeatureMode::SoilWeather => {
                    let days = by_zone.get(&crop.zone_id).unwrap_or(&empty);
                    // only days inside this season's growth window matter
                    let lo = days.partition_point(|d| d.date < crop.sowing_date);
                    let hi = days.partition_point(|d| {
                        week_of(d.date, crop.sowing_date).is_none_or(|w| w <= *GROWTH_WEEKS.end())
                    });
                    weekly_series(&days[lo..hi.max(lo)], crop.sowing_date, cfg.min_week_days)
                }
            };
            build_instance(crop, soil, &weeks, mode, orders).map_err(drop)
        })
        .collect();

    let mut instances = Vec::with_capacity(results.len());
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(i) => instances.push(i),
            Err(d) => dropped.push(d),
        }
    }
    (instances, dropped)
}

/// Column-named feature matrix plus yield target and per-row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub column_names: Vec<String>,
    pub x: Matrix,
    pub target: Vec<f64>,
    pub meta: Vec<(ZoneId, i32)>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.n_cols()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["zone_id".to_string(), "year".to_string()];
        header.extend(self.column_names.iter().cloned());
        header.push("yield_t_ha".to_string());
        w.write_record(&header)?;
        for (i, (zone, year)) in self.meta.iter().enumerate() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(zone.0.clone());
            rec.push(year.to_string());
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_matrix(instances: &[Instance], mode: FeatureMode) -> Result<DesignMatrix, FeatureError> {
    let column_names = feature_names(mode);
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(instances.len());
    for inst in instances {
        if !seen.insert((&inst.zone_id, inst.year)) {
            return Err(FeatureError::DuplicateInstance {
                zone_id: inst.zone_id.clone(),
                year: inst.year,
            });
        }
        let row = inst
            .features(mode)
            .ok_or_else(|| FeatureError::MissingWeather {
                zone_id: inst.zone_id.clone(),
                year: inst.year,
            })?;
        rows.push(row);
    }
    let x = Matrix::from_rows_with_cols(&rows, column_names.len());
    debug_assert!(x.all_finite());
    Ok(DesignMatrix {
        column_names,
        x,
        target: instances.iter().map(|i| i.yield_t_ha).collect(),
        meta: instances
            .iter()
            .map(|i| (i.zone_id.clone(), i.year))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn day(date: NaiveDate, t_max: f64, t_min: f64) -> WeatherDaily {
        WeatherDaily {
            zone_id: "Z1".into(),
            date,
            t_min,
            t_max,
            precip: 0.0,
            solar: 5.0,
            humidity: 80.0,
        }
    }

    fn soil() -> SoilRecord {
        SoilRecord {
            zone_id: "Z1".into(),
            test_year: 2016,
            p: 25.0,
            k: 180.0,
            mg: 60.0,
            ph: 6.8,
            soil_type: "medium".into(),
            stone_content: "low".into(),
            organic_matter: "moderate".into(),
            caco3: "calc".into(),
        }
    }

    fn crop(zone: &str, year: i32) -> CropRecord {
        CropRecord {
            zone_id: zone.into(),
            year,
            sowing_date: date(year - 1, 10, 1),
            harvest_date: date(year, 8, 15),
            yield_t_ha: 10.0,
        }
    }

    fn season(sowing: NaiveDate, n_days: i64) -> Vec<WeatherDaily> {
        (0..n_days)
            .map(|i| day(sowing + chrono::Duration::days(i), 10.0 + (i % 5) as f64, 1.0))
            .collect()
    }

    #[test]
    fn week_assignment() {
        let sowing = date(2017, 10, 1);
        let days = vec![
            day(date(2017, 9, 30), 10.0, 0.0),
            day(date(2017, 10, 1), 10.0, 0.0),
            day(date(2017, 10, 7), 10.0, 0.0),
            day(date(2017, 10, 8), 10.0, 0.0),
        ];
        let weeks = assign_weeks(&days, sowing);
        assert_eq!(weeks.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(weeks[&1].len(), 2);
        assert_eq!(weeks[&2][0].date, date(2017, 10, 8));
        assert_eq!(week_of(date(2017, 9, 30), sowing), None);
    }

    #[test]
    fn hand_evaluated_week() {
        let pairs = [(10., 2.), (12., 4.), (8., 0.), (6., -2.), (14., 6.), (10., 2.), (4., -6.)];
        let days: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(hi, lo))| day(date(2018, 3, 1 + i as u32), hi, lo))
            .collect();
        let w = weekly_aggregate(3, &days).unwrap();
        assert_eq!(w.dd_sum, 36.0);
        assert_eq!(w.egd_total, 4);
        assert_eq!(w.t_avg, 35.0 / 7.0);
        assert_eq!(w.ap_sum, 0.0);
        assert_eq!(w.sr_sum, 35.0);
        assert_eq!(w.h_avg, 80.0);
        assert_eq!(w.week_index, 3);
    }

    #[test]
    fn cold_week_has_no_growing_days() {
        let days: Vec<_> = (0..7).map(|i| day(date(2018, 1, 1 + i), 4.0, -3.0)).collect();
        let w = weekly_aggregate(1, &days).unwrap();
        assert_eq!(w.egd_total, 0);
        assert_eq!(w.dd_sum, 7.0 * 0.5);
    }

    #[test]
    fn egd_threshold_is_strict() {
        let days = [day(date(2018, 1, 1), 6.0, 4.0)];
        assert_eq!(weekly_aggregate(1, &days).unwrap().egd_total, 0);
    }

    #[test]
    fn empty_week_errors() {
        let none: Vec<WeatherDaily> = vec![];
        assert_eq!(weekly_aggregate(5, &none), Err(FeatureError::EmptyWeek(5)));
    }

    #[test]
    fn full_instance_has_152_features() {
        let c = crop("Z1", 2018);
        let days = season(c.sowing_date, 280);
        let weeks = weekly_series(&days, c.sowing_date, 7);
        assert_eq!(weeks.len(), 40);
        let inst = build_instance(&c, &soil(), &weeks, FeatureMode::SoilWeather, &OrdinalOrders::default())
            .unwrap();
        assert_eq!(inst.features(FeatureMode::SoilWeather).unwrap().len(), 152);
        assert_eq!(inst.soil_features, [25.0, 180.0, 60.0, 6.8, 1.0, 1.0, 1.0, 2.0]);

        let soil_only =
            build_instance(&c, &soil(), &BTreeMap::new(), FeatureMode::SoilOnly, &OrdinalOrders::default())
                .unwrap();
        assert_eq!(soil_only.features(FeatureMode::SoilOnly).unwrap().len(), 8);
        assert!(soil_only.features(FeatureMode::SoilWeather).is_none());
    }

    #[test]
    fn missing_last_week_rejected() {
        let c = crop("Z1", 2018);
        let days = season(c.sowing_date, 39 * 7);
        let weeks = weekly_series(&days, c.sowing_date, 7);
        let err = build_instance(&c, &soil(), &weeks, FeatureMode::SoilWeather, &OrdinalOrders::default())
            .unwrap_err();
        assert_eq!(err, InstanceRejection::MissingWeeks(vec![40]));
    }

    #[test]
    fn partial_week_counts_as_missing() {
        let c = crop("Z1", 2018);
        let days = season(c.sowing_date, 40 * 7 - 1);
        let weeks = weekly_series(&days, c.sowing_date, 7);
        assert!(!weeks.contains_key(&40));
        let relaxed = weekly_series(&days, c.sowing_date, 6);
        assert!(relaxed.contains_key(&40));
    }

    #[test]
    fn matrix_shapes_and_duplicates() {
        let empty = build_matrix(&[], FeatureMode::SoilWeather).unwrap();
        assert_eq!((empty.n_rows(), empty.n_cols()), (0, 152));
        assert_eq!(empty.column_names.len(), 152);

        let mk = |zone: &str, year| Instance {
            zone_id: zone.into(),
            year,
            soil_features: [1.0; 8],
            weather_features: Some(vec![year as f64; 144]),
            yield_t_ha: 9.0,
        };
        let insts: Vec<_> = (0..264).map(|i| mk(&format!("Z{i}"), 2018)).collect();
        let m = build_matrix(&insts, FeatureMode::SoilWeather).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (264, 152));
        let s = build_matrix(&insts, FeatureMode::SoilOnly).unwrap();
        assert_eq!((s.n_rows(), s.n_cols()), (264, 8));

        let dup = vec![mk("Z1", 2018), mk("Z1", 2018)];
        assert!(matches!(
            build_matrix(&dup, FeatureMode::SoilOnly),
            Err(FeatureError::DuplicateInstance { .. })
        ));

        let soil_only = Instance {
            weather_features: None,
            ..mk("Z1", 2018)
        };
        assert!(matches!(
            build_matrix(&[soil_only], FeatureMode::SoilWeather),
            Err(FeatureError::MissingWeather { .. })
        ));
    }

    #[test]
    fn shuffled_instances_permute_rows() {
        let mk = |i: usize| Instance {
            zone_id: format!("Z{i}").into(),
            year: 2017,
            soil_features: [i as f64; 8],
            weather_features: None,
            yield_t_ha: i as f64,
        };
        let a: Vec<_> = (0..5).map(mk).collect();
        let b: Vec<_> = [3, 0, 4, 1, 2].iter().map(|&i| mk(i)).collect();
        let ma = build_matrix(&a, FeatureMode::SoilOnly).unwrap();
        let mb = build_matrix(&b, FeatureMode::SoilOnly).unwrap();
        for (rb, key) in mb.meta.iter().enumerate() {
            let ra = ma.meta.iter().position(|k| k == key).unwrap();
            assert_eq!(ma.x.row(ra), mb.x.row(rb));
            assert_eq!(ma.target[ra], mb.target[rb]);
        }
    }

    #[test]
    fn assembly_drops_without_soil_or_weather() {
        let soils = vec![soil()];
        let c_ok = crop("Z1", 2018);
        let c_early = crop("Z1", 2015);
        let c_other = crop("Z2", 2018);
        let weather = season(c_ok.sowing_date, 280);
        let crops = vec![c_ok, c_early, c_other];
        let orders = OrdinalOrders::default();
        let (insts, dropped) = assemble_instances(
            &crops,
            &soils,
            &weather,
            FeatureMode::SoilWeather,
            &orders,
            &FeatureConfig::default(),
        );
        assert_eq!(insts.len(), 1);
        assert_eq!(insts[0].year, 2018);
        assert_eq!(dropped.len(), 2);
        assert_eq!(dropped[0].reason, InstanceRejection::NoSoilTest(2015));
        assert_eq!(dropped[1].reason, InstanceRejection::NoSoilTest(2018));

        let soils2 = vec![soil(), SoilRecord { zone_id: "Z2".into(), ..soil() }];
        let (_, dropped) = assemble_instances(
            &crops[2..],
            &soils2,
            &weather,
            FeatureMode::SoilWeather,
            &orders,
            &FeatureConfig::default(),
        );
        assert!(matches!(dropped[0].reason, InstanceRejection::MissingWeeks(ref w) if w.len() == 24));
    }

    #[test]
    fn features_csv_header() {
        let m = build_matrix(&[], FeatureMode::SoilOnly).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "zone_id,year,p,k,mg,ph,soil_type,stone_content,organic_matter,caco3,yield_t_ha\n"
        );
    }
}
