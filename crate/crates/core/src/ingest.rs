//! CSV readers and writers for the soil, weather and crop inputs.
//!
//! Readers never abort on a bad row: every data row either becomes a record
//! or lands in the [`RejectionLog`]. Only structural problems (missing file,
//! wrong header) are fatal.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::domain::{CropRecord, SoilRecord, Validate, ValidationConfig, WeatherDaily, ZoneId};

pub const SOIL_HEADER: [&str; 10] = [
    "zone_id",
    "test_year",
    "p_mg_l",
    "k_mg_l",
    "mg_mg_l",
    "ph",
    "soil_type",
    "stone_content",
    "organic_matter",
    "caco3",
];

pub const WEATHER_HEADER: [&str; 7] = [
    "zone_id",
    "date",
    "t_min_c",
    "t_max_c",
    "precip_mm",
    "solar_mj_m2",
    "humidity_pct",
];

pub const CROP_HEADER: [&str; 6] = [
    "zone_id",
    "year",
    "crop",
    "sowing_date",
    "harvest_date",
    "yield_t_ha",
];

pub const REJECTION_HEADER: [&str; 3] = ["source", "line", "reason"];

/// Crop label kept by [`parse_crop`].
pub const TARGET_CROP: &str = "winter_wheat";

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: bad header: {detail}")]
    Header { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    /// Malformed or failed validation.
    Rejected,
    /// Repeats a key already accepted earlier in the file.
    Duplicate,
    /// Well-formed but outside the study (e.g. another crop).
    Filtered,
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disposition::Rejected => "rejected",
            Disposition::Duplicate => "duplicate",
            Disposition::Filtered => "filtered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub source: String,
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub disposition: Disposition,
    pub detail: String,
}

impl LogEntry {
    pub fn reason(&self) -> String {
        format!("{}: {}", self.disposition, self.detail)
    }
}

/// Every input row that did not become a record, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionLog {
    pub entries: Vec<LogEntry>,
}

impl RejectionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, disposition: Disposition) -> usize {
        self.entries
            .iter()
            .filter(|e| e.disposition == disposition)
            .count()
    }

    pub fn extend(&mut self, other: RejectionLog) {
        self.entries.extend(other.entries);
    }

    fn push(&mut self, source: &str, line: u64, disposition: Disposition, detail: String) {
        self.entries.push(LogEntry {
            source: source.to_string(),
            line,
            disposition,
            detail,
        });
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REJECTION_HEADER)?;
        for e in &self.entries {
            w.write_record([e.source.clone(), e.line.to_string(), e.reason()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column positions resolved from a file header.
struct Columns {
    index: Vec<usize>,
}

impl Columns {
    fn resolve(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<Self, IngestError> {
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        let unknown: Vec<&str> = names
            .iter()
            .copied()
            .filter(|n| !expected.contains(n))
            .collect();
        let missing: Vec<&str> = expected
            .iter()
            .copied()
            .filter(|e| !names.contains(e))
            .collect();
        let mut seen = HashSet::new();
        let repeated: Vec<&str> = names.iter().copied().filter(|n| !seen.insert(*n)).collect();
        if !unknown.is_empty() || !missing.is_empty() || !repeated.is_empty() {
            let mut parts = Vec::new();
            if !missing.is_empty() {
                parts.push(format!("missing columns [{}]", missing.join(", ")));
            }
            if !unknown.is_empty() {
                parts.push(format!("unknown columns [{}]", unknown.join(", ")));
            }
            if !repeated.is_empty() {
                parts.push(format!("repeated columns [{}]", repeated.join(", ")));
            }
            return Err(IngestError::Header {
                path: path.to_path_buf(),
                detail: parts.join("; "),
            });
        }
        let index = expected
            .iter()
            .map(|e| names.iter().position(|n| n == e).unwrap())
            .collect();
        Ok(Columns { index })
    }
}

/// Typed field access on one data row; errors are row-level reasons.
struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a Columns,
    names: &'a [&'a str],
}

impl Row<'_> {
    fn raw(&self, i: usize) -> Result<&str, String> {
        let value = self
            .record
            .get(self.columns.index[i])
            .map(str::trim)
            .unwrap_or("");
        if value.is_empty() {
            Err(format!("missing value for {}", self.names[i]))
        } else {
            Ok(value)
        }
    }

    fn text(&self, i: usize) -> Result<String, String> {
        self.raw(i).map(str::to_string)
    }

    fn num(&self, i: usize) -> Result<f64, String> {
        let raw = self.raw(i)?;
        raw.parse::<f64>()
            .map_err(|_| format!("invalid number '{raw}' for {}", self.names[i]))
    }

    fn year(&self, i: usize) -> Result<i32, String> {
        let raw = self.raw(i)?;
        raw.parse::<i32>()
            .map_err(|_| format!("invalid year '{raw}' for {}", self.names[i]))
    }

    fn date(&self, i: usize) -> Result<NaiveDate, String> {
        let raw = self.raw(i)?;
        NaiveDate::parse_from_str(raw, DATE_FORMAT)
            .map_err(|_| format!("invalid date '{raw}' for {}", self.names[i]))
    }
}

enum RowOutcome<T> {
    Keep(T),
    Skip(Disposition, String),
}

fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_table<T, K, F, G>(
    path: &Path,
    reader: impl Read,
    header: &[&str],
    mut parse_row: F,
    key: G,
) -> Result<(Vec<T>, RejectionLog), IngestError>
where
    F: FnMut(&Row<'_>) -> RowOutcome<T>,
    G: Fn(&T) -> K,
    K: std::hash::Hash + Eq + fmt::Debug,
{
    let source = source_name(path);
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let head = rdr.headers().map_err(csv_err)?.clone();
    let columns = Columns::resolve(path, &head, header)?;

    let mut records = Vec::new();
    let mut log = RejectionLog::default();
    let mut seen: HashSet<K> = HashSet::new();
    let mut raw = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut raw) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                // Invalid UTF-8 and similar are row-level; I/O is fatal.
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(csv_err(e));
                }
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                log.push(&source, line, Disposition::Rejected, format!("unreadable row: {e}"));
                continue;
            }
        }
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        if raw.len() != head.len() {
            log.push(
                &source,
                line,
                Disposition::Rejected,
                format!("expected {} fields, found {}", head.len(), raw.len()),
            );
            continue;
        }
        let row = Row {
            record: &raw,
            columns: &columns,
            names: header,
        };
        match parse_row(&row) {
            RowOutcome::Keep(rec) => {
                let k = key(&rec);
                if seen.contains(&k) {
                    log.push(
                        &source,
                        line,
                        Disposition::Duplicate,
                        format!("key {k:?} already seen"),
                    );
                } else {
                    seen.insert(k);
                    records.push(rec);
                }
            }
            RowOutcome::Skip(d, why) => log.push(&source, line, d, why),
        }
    }
    Ok((records, log))
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn checked<T: Validate>(rec: Result<T, String>, cfg: &ValidationConfig) -> RowOutcome<T> {
    match rec {
        Err(why) => RowOutcome::Skip(Disposition::Rejected, why),
        Ok(r) => match r.validate(cfg) {
            Ok(()) => RowOutcome::Keep(r),
            Err(rej) => RowOutcome::Skip(Disposition::Rejected, rej.to_string()),
        },
    }
}

pub fn parse_soil(
    path: &Path,
    cfg: &ValidationConfig,
) -> Result<(Vec<SoilRecord>, RejectionLog), IngestError> {
    read_soil(path, open(path)?, cfg)
}

/// [`parse_soil`] over an arbitrary reader; `path` only labels log entries.
pub fn read_soil(
    path: &Path,
    reader: impl Read,
    cfg: &ValidationConfig,
) -> Result<(Vec<SoilRecord>, RejectionLog), IngestError> {
    read_table(
        path,
        reader,
        &SOIL_HEADER,
        |row| {
            let rec = (|| {
                Ok(SoilRecord {
                    zone_id: ZoneId(row.text(0)?),
                    test_year: row.year(1)?,
                    p: row.num(2)?,
                    k: row.num(3)?,
                    mg: row.num(4)?,
                    ph: row.num(5)?,
                    soil_type: row.text(6)?,
                    stone_content: row.text(7)?,
                    organic_matter: row.text(8)?,
                    caco3: row.text(9)?,
                })
            })();
            checked(rec, cfg)
        },
        |r: &SoilRecord| (r.zone_id.clone(), r.test_year),
    )
}

pub fn parse_weather(
    path: &Path,
    cfg: &ValidationConfig,
) -> Result<(Vec<WeatherDaily>, RejectionLog), IngestError> {
    read_weather(path, open(path)?, cfg)
}

pub fn read_weather(
    path: &Path,
    reader: impl Read,
    cfg: &ValidationConfig,
) -> Result<(Vec<WeatherDaily>, RejectionLog), IngestError> {
    read_table(
        path,
        reader,
        &WEATHER_HEADER,
        |row| {
            let rec = (|| {
                Ok(WeatherDaily {
                    zone_id: ZoneId(row.text(0)?),
                    date: row.date(1)?,
                    t_min: row.num(2)?,
                    t_max: row.num(3)?,
                    precip: row.num(4)?,
                    solar: row.num(5)?,
                    humidity: row.num(6)?,
                })
            })();
            checked(rec, cfg)
        },
        |r: &WeatherDaily| (r.zone_id.clone(), r.date),
    )
}

pub fn parse_crop(
    path: &Path,
    cfg: &ValidationConfig,
) -> Result<(Vec<CropRecord>, RejectionLog), IngestError> {
    read_crop(path, open(path)?, cfg)
}

pub fn read_crop(
    path: &Path,
    reader: impl Read,
    cfg: &ValidationConfig,
) -> Result<(Vec<CropRecord>, RejectionLog), IngestError> {
    read_table(
        path,
        reader,
        &CROP_HEADER,
        |row| {
            match row.text(2) {
                Ok(crop) if crop.eq_ignore_ascii_case(TARGET_CROP) => {}
                Ok(crop) => {
                    return RowOutcome::Skip(Disposition::Filtered, format!("crop '{crop}'"))
                }
                Err(why) => return RowOutcome::Skip(Disposition::Rejected, why),
            }
            let rec = (|| {
                Ok(CropRecord {
                    zone_id: ZoneId(row.text(0)?),
                    year: row.year(1)?,
                    sowing_date: row.date(3)?,
                    harvest_date: row.date(4)?,
                    yield_t_ha: row.num(5)?,
                })
            })();
            checked(rec, cfg)
        },
        |r: &CropRecord| (r.zone_id.clone(), r.year),
    )
}

fn writer_err(path: &Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<File, IngestError> {
    File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_soil(path: &Path, records: &[SoilRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(path)?));
    let e = writer_err(path);
    w.write_record(SOIL_HEADER).map_err(&e)?;
    for r in records {
        w.write_record([
            r.zone_id.0.clone(),
            r.test_year.to_string(),
            r.p.to_string(),
            r.k.to_string(),
            r.mg.to_string(),
            r.ph.to_string(),
            r.soil_type.clone(),
            r.stone_content.clone(),
            r.organic_matter.clone(),
            r.caco3.clone(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_weather(path: &Path, records: &[WeatherDaily]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(path)?));
    let e = writer_err(path);
    w.write_record(WEATHER_HEADER).map_err(&e)?;
    for r in records {
        w.write_record([
            r.zone_id.0.clone(),
            r.date.format(DATE_FORMAT).to_string(),
            r.t_min.to_string(),
            r.t_max.to_string(),
            r.precip.to_string(),
            r.solar.to_string(),
            r.humidity.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_crop(path: &Path, records: &[CropRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(path)?));
    let e = writer_err(path);
    w.write_record(CROP_HEADER).map_err(&e)?;
    for r in records {
        w.write_record([
            r.zone_id.0.clone(),
            r.year.to_string(),
            TARGET_CROP.to_string(),
            r.sowing_date.format(DATE_FORMAT).to_string(),
            r.harvest_date.format(DATE_FORMAT).to_string(),
            r.yield_t_ha.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Most recent soil test for `zone_id` taken no later than `year`.
pub fn carry_forward_soil<'a>(
    records: &'a [SoilRecord],
    zone_id: &ZoneId,
    year: i32,
) -> Option<&'a SoilRecord> {
    records
        .iter()
        .filter(|r| &r.zone_id == zone_id && r.test_year <= year)
        .max_by_key(|r| r.test_year)
}

/// Per-zone soil tests sorted by year, for repeated carry-forward lookups.
#[derive(Debug, Default)]
pub struct SoilIndex<'a> {
    by_zone: HashMap<&'a ZoneId, Vec<&'a SoilRecord>>,
}

impl<'a> SoilIndex<'a> {
    pub fn new(records: &'a [SoilRecord]) -> Self {
        let mut by_zone: HashMap<&ZoneId, Vec<&SoilRecord>> = HashMap::new();
        for r in records {
            by_zone.entry(&r.zone_id).or_default().push(r);
        }
        for tests in by_zone.values_mut() {
            tests.sort_by_key(|r| r.test_year);
        }
        SoilIndex { by_zone }
    }

    pub fn lookup(&self, zone_id: &ZoneId, year: i32) -> Option<&'a SoilRecord> {
        let tests = self.by_zone.get(zone_id)?;
        let n = tests.partition_point(|r| r.test_year <= year);
        n.checked_sub(1).map(|i| tests[i])
    }
}
