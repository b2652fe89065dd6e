use std::fs;
use std::path::Path;
use std::process::Command;

use yieldcast::synthgen::YearTarget;
use yieldcast::{ModeSelection, ModelKind};
use yieldcast_cli::{cmd_compare, cmd_evaluate, cmd_features, cmd_ingest, cmd_synth, ModelEntry, RunConfig};

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.out = out.to_path_buf();
    cfg.synth.years = (2015..=2018)
        .map(|year| YearTarget {
            year,
            zones: 25,
            mean: 9.0 + (year - 2015) as f64 * 0.4,
            std: 1.5,
        })
        .collect();
    cfg.synth.n_zones = 40;
    cfg.models = ModelKind::ALL
        .into_iter()
        .map(|k| ModelEntry {
            n_estimators: Some(20),
            ..ModelEntry::new(k)
        })
        .collect();
    cfg
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_yieldcast"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
}

#[test]
fn full_chain_on_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    cmd_synth(&cfg).unwrap();
    let raw = fs::read(dir.path().join("data/weather.csv")).unwrap();

    let log = cmd_ingest(&cfg).unwrap();
    assert!(log.is_empty());
    let rejections = fs::read_to_string(dir.path().join("rejections.csv")).unwrap();
    assert_eq!(rejections.lines().count(), 1);

    let files = cmd_features(&cfg).unwrap();
    assert_eq!(files.len(), 2);
    let sw = fs::read_to_string(dir.path().join("features_soil_weather.csv")).unwrap();
    let header: Vec<&str> = sw.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"w17_t_avg") && header.contains(&"w40_h_avg"));
    assert_eq!(sw.lines().count(), 1 + 100);
    assert!(dir.path().join("dropped.csv").is_file());

    let report = cmd_evaluate(&cfg).unwrap();
    assert_eq!(report.rows.len(), 6);
    for name in ["report.csv", "report.txt", "mae_chart.svg", "errors.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "model,mae_soil,mae_sw,z_soil,p_soil,z_sw,p_sw,t_paired,p_paired"
    );
    assert!(fs::read_to_string(dir.path().join("mae_chart.svg")).unwrap().starts_with("<svg"));

    let rows = cmd_compare(&cfg).unwrap();
    assert_eq!(rows.len(), 6);
    let once = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    cmd_compare(&cfg).unwrap();
    let twice = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(once, twice);

    // inputs untouched
    assert_eq!(fs::read(dir.path().join("data/weather.csv")).unwrap(), raw);
}

#[test]
fn evaluate_is_byte_identical_across_runs_and_widths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    cmd_synth(&cfg).unwrap();
    cmd_ingest(&cfg).unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 4, 1] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cmd_evaluate(&cfg).unwrap());
        outputs.push((
            fs::read(dir.path().join("report.csv")).unwrap(),
            fs::read(dir.path().join("errors.csv")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1] && outputs[1] == outputs[2]);
}

#[test]
fn single_mode_skips_paired_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.mode = ModeSelection::Soil;
    cfg.models.truncate(2);
    cmd_synth(&cfg).unwrap();
    cmd_ingest(&cfg).unwrap();
    let report = cmd_evaluate(&cfg).unwrap();
    assert!(report.rows.iter().all(|r| r.mae_sw.is_none() && r.t_paired.is_none()));
    assert!(cmd_compare(&cfg).is_err());
}

#[test]
fn missing_inputs_fail_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let err = cmd_ingest(&cfg).unwrap_err().to_string();
    assert!(err.contains("soil.csv"), "{err}");
    assert!(cmd_evaluate(&cfg).is_err());
}

#[test]
fn binary_help_lists_global_flags() {
    for sub in ["synth", "ingest", "features", "evaluate", "compare"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in ["--config", "--seed", "--out", "--mode", "--test-year", "--threads"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn binary_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\ntest_yaer = 2018\n").unwrap();
    let out = bin()
        .args(["--config", path.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("test_yaer"));
}

#[test]
fn binary_runs_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out_dir = dir.path().join("elsewhere");
    for sub in ["synth", "ingest", "features", "evaluate", "compare"] {
        let status = bin()
            .args(["--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .args(["--seed", "3", "--threads", "2", sub])
            .status()
            .unwrap();
        assert!(status.success(), "{sub}");
    }
    let text = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(text.contains("== Paired comparison"));
    assert!(text.contains("seed"));
    assert!(!dir.path().join("report.csv").exists());
}
