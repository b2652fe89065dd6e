//! One function per pipeline stage. Every command reads its inputs, writes
//! under `paths.out` and leaves its inputs untouched.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use yieldcast::evalstat::{
    compare_errors, read_errors_csv, render_svg, render_text, with_comparison,
    write_comparison_csv, write_errors_csv,
};
use yieldcast::featureng::write_dropped_csv;
use yieldcast::ingest::{
    parse_crop, parse_soil, parse_weather, write_crop, write_soil, write_weather, RejectionLog,
};
use yieldcast::{
    assemble_instances, build_matrix, gen_dataset, run_experiment, CropRecord, FeatureMode,
    Instance, Report, SoilRecord, WeatherDaily,
};

use crate::config::RunConfig;

pub const SOIL_CSV: &str = "soil.csv";
pub const WEATHER_CSV: &str = "weather.csv";
pub const CROP_CSV: &str = "crop.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing input {} ({hint})", path.display());
    }
    Ok(())
}

/// Generates a synthetic dataset into `out/data`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.paths.data_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ds = gen_dataset(&cfg.synth, cfg.seed)?;
    ds.write(&dir)?;
    info!(
        "synth: {} soil tests, {} weather days, {} crop records -> {}",
        ds.soils.len(),
        ds.weather.len(),
        ds.crops.len(),
        dir.display()
    );
    Ok(dir)
}

/// Validates the raw files and writes the accepted records to `out/clean`
/// plus every rejected line to `out/rejections.csv`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<RejectionLog> {
    let p = &cfg.paths;
    let hint = "set [paths] or run `yieldcast synth`";
    for path in [p.raw_soil(), p.raw_weather(), p.raw_crop()] {
        require(&path, hint)?;
    }
    let v = &cfg.validation;
    let (soils, mut log) = parse_soil(&p.raw_soil(), v)?;
    let (weather, log_w) = parse_weather(&p.raw_weather(), v)?;
    let (crops, log_c) = parse_crop(&p.raw_crop(), v)?;
    log.extend(log_w);
    log.extend(log_c);

    let clean = p.clean_dir();
    fs::create_dir_all(&clean).with_context(|| format!("creating {}", clean.display()))?;
    write_soil(&clean.join(SOIL_CSV), &soils)?;
    write_weather(&clean.join(WEATHER_CSV), &weather)?;
    write_crop(&clean.join(CROP_CSV), &crops)?;
    log.write_csv(create(&p.out.join("rejections.csv"))?)?;
    info!(
        "ingest: kept {} soil, {} weather, {} crop records; {} lines logged",
        soils.len(),
        weather.len(),
        crops.len(),
        log.len()
    );
    Ok(log)
}

struct Clean {
    soils: Vec<SoilRecord>,
    weather: Vec<WeatherDaily>,
    crops: Vec<CropRecord>,
}

fn read_clean(cfg: &RunConfig) -> Result<Clean> {
    let dir = cfg.paths.clean_dir();
    let v = &cfg.validation;
    let path = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        require(&p, "run `yieldcast ingest` first")?;
        Ok(p)
    };
    let (soils, _) = parse_soil(&path(SOIL_CSV)?, v)?;
    let (weather, _) = parse_weather(&path(WEATHER_CSV)?, v)?;
    let (crops, _) = parse_crop(&path(CROP_CSV)?, v)?;
    Ok(Clean { soils, weather, crops })
}

/// Instances shared by every selected mode, plus the drop list.
fn instances(cfg: &RunConfig, data: &Clean) -> (Vec<Instance>, Vec<yieldcast::featureng::Dropped>) {
    assemble_instances(
        &data.crops,
        &data.soils,
        &data.weather,
        cfg.mode.assembly_mode(),
        &cfg.validation.ordinals,
        &cfg.features,
    )
}

fn features_file(mode: FeatureMode) -> String {
    format!("features_{}.csv", mode.as_str())
}

/// Writes one design matrix per selected mode and `dropped.csv`.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = read_clean(cfg)?;
    let (inst, dropped) = instances(cfg, &data);
    let out = &cfg.paths.out;
    let mut written = Vec::new();
    for mode in cfg.mode.modes() {
        let m = build_matrix(&inst, mode)?;
        let path = out.join(features_file(mode));
        m.write_csv(create(&path)?)?;
        info!("features: {} rows x {} columns -> {}", m.n_rows(), m.n_cols(), path.display());
        written.push(path);
    }
    write_dropped_csv(&dropped, create(&out.join("dropped.csv"))?)?;
    info!("features: {} zone-years dropped", dropped.len());
    Ok(written)
}

/// Trains and scores every configured model; writes report.csv, report.txt,
/// mae_chart.svg and errors.csv.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Report> {
    let exp_cfg = cfg.experiment()?;
    let data = read_clean(cfg)?;
    let (inst, dropped) = instances(cfg, &data);
    if !dropped.is_empty() {
        info!("evaluate: {} zone-years dropped during assembly", dropped.len());
    }
    info!(
        "evaluate: {} models on {} instances, test year {}",
        exp_cfg.models.len(),
        inst.len(),
        exp_cfg.test_year
    );
    let ex = run_experiment(&inst, &exp_cfg)?;
    let out = &cfg.paths.out;
    ex.report.write_csv(create(&out.join("report.csv"))?)?;
    fs::write(out.join("report.txt"), render_text(&ex.report))?;
    fs::write(out.join("mae_chart.svg"), render_svg(&ex.report))?;
    write_errors_csv(&ex.errors, create(&out.join("errors.csv"))?)?;
    info!("evaluate: reports written to {}", out.display());
    Ok(ex.report)
}

/// Paired soil vs soil+weather comparison from `errors.csv`; writes
/// comparison.csv and appends the section to report.txt, replacing any
/// earlier one.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<yieldcast::evalstat::ComparisonRow>> {
    let out = &cfg.paths.out;
    let errors_path = out.join("errors.csv");
    let report_path = out.join("report.txt");
    require(&errors_path, "run `yieldcast evaluate` first")?;
    require(&report_path, "run `yieldcast evaluate` first")?;
    let errors = read_errors_csv(File::open(&errors_path)?)
        .map_err(|e| anyhow::anyhow!("{}: {e}", errors_path.display()))?;
    let rows = compare_errors(&errors, cfg.alternative)?;
    if rows.is_empty() {
        bail!("errors.csv holds no model with both feature modes");
    }
    write_comparison_csv(&rows, create(&out.join("comparison.csv"))?)?;
    let text = fs::read_to_string(&report_path)?;
    fs::write(&report_path, with_comparison(&text, &rows, cfg.alternative))?;
    info!("compare: {} models compared", rows.len());
    Ok(rows)
}
