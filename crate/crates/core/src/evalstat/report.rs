use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::stats::Alternative;
use crate::domain::{FeatureMode, ZoneId};

pub const REPORT_HEADER: [&str; 9] = [
    "model", "mae_soil", "mae_sw", "z_soil", "p_soil", "z_sw", "p_sw", "t_paired", "p_paired",
];

pub const ERRORS_HEADER: [&str; 7] =
    ["model", "mode", "zone_id", "year", "y_true", "y_pred", "abs_error"];

pub const COMPARISON_HEADER: [&str; 6] = ["model", "mae_soil", "mae_sw", "t", "p", "n"];

/// Heading that opens the paired-comparison section of the text report.
pub const COMPARISON_MARKER: &str = "== Paired comparison";

/// One row of the report. Fields are empty when the matching mode was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub mae_soil: Option<f64>,
    pub mae_sw: Option<f64>,
    pub z_soil: Option<f64>,
    pub p_soil: Option<f64>,
    pub z_sw: Option<f64>,
    pub p_sw: Option<f64>,
    pub t_paired: Option<f64>,
    pub p_paired: Option<f64>,
}

impl ModelReport {
    pub fn empty(model: &str) -> Self {
        ModelReport {
            model: model.to_string(),
            mae_soil: None,
            mae_sw: None,
            z_soil: None,
            p_soil: None,
            z_sw: None,
            p_sw: None,
            t_paired: None,
            p_paired: None,
        }
    }

    pub fn mae(&self, mode: FeatureMode) -> Option<f64> {
        match mode {
            FeatureMode::SoilOnly => self.mae_soil,
            FeatureMode::SoilWeather => self.mae_sw,
        }
    }

    fn values(&self) -> [Option<f64>; 8] {
        [
            self.mae_soil,
            self.mae_sw,
            self.z_soil,
            self.p_soil,
            self.z_sw,
            self.p_sw,
            self.t_paired,
            self.p_paired,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub train_years: Vec<i32>,
    pub test_year: i32,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub alternative: Alternative,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ModelReport>,
    pub meta: ReportMeta,
}

fn num(v: Option<f64>) -> String {
    // shortest representation that parses back to the same f64
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl Report {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            let mut rec = vec![r.model.clone()];
            rec.extend(r.values().iter().map(|v| num(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a report.csv back into rows.
    pub fn read_csv_rows<R: Read>(input: R) -> Result<Vec<ModelReport>, String> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().ne(REPORT_HEADER) {
            return Err(format!("unexpected report header: {:?}", header));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let mut vals = [None; 8];
            for (i, v) in vals.iter_mut().enumerate() {
                let s = &rec[i + 1];
                if !s.is_empty() {
                    *v = Some(s.parse::<f64>().map_err(|e| format!("{s}: {e}"))?);
                }
            }
            rows.push(ModelReport {
                model: rec[0].to_string(),
                mae_soil: vals[0],
                mae_sw: vals[1],
                z_soil: vals[2],
                p_soil: vals[3],
                z_sw: vals[4],
                p_sw: vals[5],
                t_paired: vals[6],
                p_paired: vals[7],
            });
        }
        Ok(rows)
    }
}

fn fixed(v: Option<f64>, p_value: bool) -> String {
    match v {
        None => "-".to_string(),
        Some(x) if p_value && x != 0.0 && x.abs() < 1e-4 => format!("{x:.2e}"),
        Some(x) => format!("{x:.4}"),
    }
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let mut parts = Vec::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                parts.push(format!("{c:<w$}", w = widths[i]));
            } else {
                parts.push(format!("{c:>w$}", w = widths[i]));
            }
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    line(&head, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule, &mut out);
    for r in rows {
        line(r, &mut out);
    }
    out
}

/// Aligned plain-text rendering of the report with run metadata on top.
pub fn render_text(report: &Report) -> String {
    let m = &report.meta;
    let years = match (m.train_years.first(), m.train_years.last()) {
        (Some(a), Some(b)) => format!("{a}-{b}"),
        _ => "-".to_string(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "train years: {years} (n = {})", m.n_train);
    let _ = writeln!(out, "test year:   {} (n = {})", m.test_year, m.n_test);
    let _ = writeln!(out, "seed:        {}", m.seed);
    let _ = writeln!(out, "paired test: {}", m.alternative.as_str());
    let _ = writeln!(out, "config:      {}", m.config_digest);
    out.push('\n');
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.model.clone()];
            for (i, v) in r.values().iter().enumerate() {
                // p columns are at odd positions 3, 5, 7
                cells.push(fixed(*v, i % 2 == 1 && i >= 3));
            }
            cells
        })
        .collect();
    out.push_str(&table(&REPORT_HEADER, &rows));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub mae_soil: f64,
    pub mae_sw: f64,
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            num(Some(r.mae_soil)),
            num(Some(r.mae_sw)),
            num(Some(r.t)),
            num(Some(r.p)),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces any existing comparison section of `text` with a fresh one, so
/// repeated runs leave the same text.
pub fn with_comparison(text: &str, rows: &[ComparisonRow], alternative: Alternative) -> String {
    let base = match text.find(COMPARISON_MARKER) {
        Some(i) => &text[..i],
        None => text,
    };
    let mut out = base.trim_end().to_string();
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    let _ = writeln!(out, "{COMPARISON_MARKER} ({}) ==", alternative.as_str());
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                fixed(Some(r.mae_soil), false),
                fixed(Some(r.mae_sw), false),
                fixed(Some(r.t), false),
                fixed(Some(r.p), true),
                r.n.to_string(),
            ]
        })
        .collect();
    out.push_str(&table(&COMPARISON_HEADER, &cells));
    out
}

/// Grouped bar chart of MAE per model, one bar per feature set.
pub fn render_svg(report: &Report) -> String {
    const W_GROUP: f64 = 90.0;
    const BAR: f64 = 30.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 30.0;
    const PLOT_H: f64 = 240.0;
    const BOTTOM: f64 = 60.0;
    let series: [(FeatureMode, &str); 2] = [
        (FeatureMode::SoilOnly, "#8c6d31"),
        (FeatureMode::SoilWeather, "#3d7ab8"),
    ];
    let max = report
        .rows
        .iter()
        .flat_map(|r| [r.mae_soil, r.mae_sw])
        .flatten()
        .fold(0.0_f64, f64::max);
    let y_max = if max > 0.0 { nice_ceiling(max) } else { 1.0 };
    let width = LEFT + W_GROUP * report.rows.len().max(1) as f64 + 20.0;
    let height = TOP + PLOT_H + BOTTOM;
    let base_y = TOP + PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="18" font-size="13">MAE by model (test year {})</text>"#, report.meta.test_year);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = base_y - PLOT_H * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            width - 20.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (g, row) in report.rows.iter().enumerate() {
        let x0 = LEFT + W_GROUP * g as f64 + (W_GROUP - 2.0 * BAR) / 2.0;
        for (k, (mode, colour)) in series.iter().enumerate() {
            if let Some(v) = row.mae(*mode) {
                let h = PLOT_H * v / y_max;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{BAR}" height="{h:.2}" fill="{colour}"><title>{} {}: {v:.4}</title></rect>"#,
                    x0 + BAR * k as f64,
                    base_y - h,
                    row.model,
                    mode.as_str()
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + BAR,
            base_y + 16.0,
            row.model
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{base_y}" x2="{:.2}" y2="{base_y}" stroke="black"/>"#,
        width - 20.0
    );
    for (k, (mode, colour)) in series.iter().enumerate() {
        let x = LEFT + 130.0 * k as f64;
        let y = height - 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{colour}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
            y - 9.0,
            x + 14.0,
            mode.as_str()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn nice_ceiling(v: f64) -> f64 {
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

/// Absolute error of one model on one test instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub model: String,
    pub mode: FeatureMode,
    pub zone_id: ZoneId,
    pub year: i32,
    pub y_true: f64,
    pub y_pred: f64,
    pub abs_error: f64,
}

pub fn write_errors_csv<W: Write>(errors: &[ErrorRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERRORS_HEADER)?;
    for e in errors {
        w.write_record([
            e.model.clone(),
            e.mode.as_str().to_string(),
            e.zone_id.to_string(),
            e.year.to_string(),
            num(Some(e.y_true)),
            num(Some(e.y_pred)),
            num(Some(e.abs_error)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_errors_csv<R: Read>(input: R) -> Result<Vec<ErrorRecord>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(ERRORS_HEADER) {
        return Err(format!("unexpected errors header: {:?}", header));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let f = |k: usize| -> Result<f64, String> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| format!("line {line}: {}: {e}", ERRORS_HEADER[k]))
        };
        out.push(ErrorRecord {
            model: rec[0].to_string(),
            mode: rec[1].parse().map_err(|e| format!("line {line}: {e}"))?,
            zone_id: ZoneId::new(&rec[2]),
            year: rec[3]
                .parse()
                .map_err(|e| format!("line {line}: year: {e}"))?,
            y_true: f(4)?,
            y_pred: f(5)?,
            abs_error: f(6)?,
        });
    }
    Ok(out)
}
