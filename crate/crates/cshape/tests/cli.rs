use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cshape::formats::{self, RecordRow};
use cshape_core::calibration::{
    lorentzian_model, modulation_depth, pm_ratio_model, FrequencyConvention, LorentzianPeak, MultiLorentzFit,
    PmCalibration, PsdTrace,
};
use serde_json::Value;
use tempfile::TempDir;

fn cshape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cshape"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cshape(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A coarse sweep that runs in a few seconds.
const SMALL: &str = r#"{
  "sweep": {
    "theta_count": 2,
    "k_count": 3,
    "cutoff": { "ellipse": { "nx": 2, "ny": 12 } },
    "resolution": [16, 64],
    "n_bands": 8
  }
}"#;

#[test]
fn taper_ends_at_configured_maxima() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["taper"]);
    let text = fs::read_to_string(dir.path().join("taper.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,lArm_nm,wArm_nm,lPad_nm,wPad_nm");
    assert_eq!(lines.len(), 16);
    assert_eq!(lines[1], "-7,207.5,106.0,110.5,192.0");
    assert_eq!(lines[15], "7,207.5,106.0,110.5,192.0");
    assert!(dir.path().join("taper_effective_config.json").exists());
    assert_eq!(json(&dir.path().join("taper_run_meta.json"))["verb"], "taper");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "geometry": { "lArm_nm": 200 } }"#).unwrap();
    let out = cshape(dir.path(), &["--config", cfg.to_str().unwrap(), "taper"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn missing_input_file_is_reported() {
    let dir = TempDir::new().unwrap();
    let out = cshape(dir.path(), &["fit-psd", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn material_rotate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["material", "rotate", "--theta", "0.3", "--count", "91"]);
    let first = fs::read(dir.path().join("stiffness_vs_theta.csv")).unwrap();
    let tensor = fs::read(dir.path().join("rotated_stiffness.json")).unwrap();
    ok(dir.path(), &["material", "rotate", "--theta", "0.3", "--count", "91"]);
    assert_eq!(first, fs::read(dir.path().join("stiffness_vs_theta.csv")).unwrap());
    assert_eq!(tensor, fs::read(dir.path().join("rotated_stiffness.json")).unwrap());

    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), "theta_rad,C11,C12,C66,C16");
    assert_eq!(text.lines().count(), 92);
    let c16: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(c16[0].abs() < 1e-3 && c16[45].abs() < 1e-3 && c16[90].abs() < 1e-3);
    assert!(c16[22].abs() > 1e9);
}

#[test]
fn effective_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("in.json");
    fs::write(&cfg, r#"{ "seed": 5, "geometry": { "lArm_max": 210.0 } }"#).unwrap();
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "taper"]);
    let first = dir.path().join("taper_effective_config.json");
    let again = TempDir::new().unwrap();
    ok(again.path(), &["--config", first.to_str().unwrap(), "taper"]);
    assert_eq!(fs::read(&first).unwrap(), fs::read(again.path().join("taper_effective_config.json")).unwrap());
    assert_eq!(json(&first)["geometry"]["lArm_max_nm"], 210.0);
}

#[test]
fn raster_writes_greymap_and_sidecar() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["geometry", "raster", "--nx", "32", "--ny", "200"]);
    let pgm = fs::read(dir.path().join("geometry.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 200\n255\n"));
    assert_eq!(pgm.len(), b"P5\n32 200\n255\n".len() + 32 * 200);
    let side = json(&dir.path().join("geometry.json"));
    assert_eq!(side["nx"], 32);
    let solid = side["solid_fraction"].as_f64().unwrap();
    assert!(solid > 0.2 && solid < 0.9);
}

#[test]
fn sweep_classify_gaps_pipeline() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", c, "bands", "sweep"]);
    let bands = dir.path().join("bands.csv");
    let rows = formats::read_bands(&bands).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 8);
    assert!(rows.iter().all(|r| r.frac_cshape.is_some()));
    let swept = fs::read(&bands).unwrap();

    ok(dir.path(), &["--config", c, "classify", "--bands", bands.to_str().unwrap()]);
    assert_eq!(swept, fs::read(&bands).unwrap());

    ok(dir.path(), &["--config", c, "gaps", "--bands", bands.to_str().unwrap()]);
    let gaps = json(&dir.path().join("gaps.json"));
    assert_eq!(gaps["n_bands"], 8);
    assert!(gaps["gaps"].is_array());

    // The sweep is deterministic.
    ok(dir.path(), &["--config", c, "bands", "sweep", "--out", dir.path().join("again.csv").to_str().unwrap()]);
    assert_eq!(swept, fs::read(dir.path().join("again.csv")).unwrap());
}

#[test]
fn fit_psd_recovers_a_single_peak() {
    let dir = TempDir::new().unwrap();
    let truth = LorentzianPeak { omega: 2.0 * PI * 5.3e9, gamma: 2.0 * PI * 3e6, peak_psd: 2e-12 };
    let model = MultiLorentzFit {
        peaks: vec![truth],
        psd0: 1e-14,
        residual: 0.0,
        missing_peaks: 0,
        convention: FrequencyConvention::Angular,
    };
    let freq: Vec<f64> = (0..2001).map(|i| 5.27e9 + i as f64 * 3e4).collect();
    let psd = freq.iter().map(|&f| lorentzian_model(f, &model)).collect();
    let trace = dir.path().join("trace.csv");
    formats::write_trace(&trace, &PsdTrace::new(freq, psd, 1e3).unwrap()).unwrap();
    ok(dir.path(), &["fit-psd", "--trace", trace.to_str().unwrap()]);
    let fit = json(&dir.path().join("psd_fit.json"));
    let f = fit["peaks_Hz"][0]["frequency_Hz"].as_f64().unwrap();
    let lw = fit["peaks_Hz"][0]["linewidth_Hz"].as_f64().unwrap();
    assert!((f / 5.3e9 - 1.0).abs() < 1e-8);
    assert!((lw / 3e6 - 1.0).abs() < 1e-6);
    assert!(dir.path().join("psd_fit_model.csv").exists());
}

#[test]
fn pm_calibration_and_g0() {
    let dir = TempDir::new().unwrap();
    let cal = PmCalibration::new(3.0, 1e-3, 50.0).unwrap();
    let points: Vec<(f64, f64)> =
        (1..=12).map(|i| 4e-3 * i as f64).map(|p| (p, pm_ratio_model(modulation_depth(&cal, p), 1e-3).unwrap())).collect();
    let path = dir.path().join("pm.csv");
    formats::write_pm_points(&path, &points).unwrap();
    ok(dir.path(), &["calibrate-pm", "--points", path.to_str().unwrap()]);
    let v_pi = json(&dir.path().join("pm_calibration.json"))["fit"]["calibration"]["v_pi"].as_f64().unwrap();
    assert!((v_pi / 3.0 - 1.0).abs() < 1e-6);

    let out = cshape(dir.path(), &["g0", "--ratio", "10", "--gamma", "1e7", "--omega", "3.3e10", "--b", "0.01"]);
    assert_eq!(out.status.code(), Some(2), "missing T and enbw");
    ok(
        dir.path(),
        &["g0", "--ratio", "10", "--gamma", "1e7", "--omega", "3.3e10", "--b", "0.01", "--T", "295", "--enbw", "1000"],
    );
    let g0 = json(&dir.path().join("g0.json"));
    assert!(g0["g0_Hz"].as_f64().unwrap() > 0.0);
}

#[test]
fn thermometry_reports_each_group() {
    let dir = TempDir::new().unwrap();
    let row = |group: &str, blue: u64, red: u64| RecordRow {
        group: group.into(),
        pulses: 1_000_000,
        clicks_blue: blue,
        clicks_red: red,
        dark_per_pulse: 0.0,
        leak_blue_per_pulse: 0.0,
        leak_red_per_pulse: 0.0,
    };
    let path = dir.path().join("records.csv");
    formats::write_records(&path, &[row("high", 12000, 2000), row("low", 6000, 1000), row("odd", 100, 300)]).unwrap();
    ok(dir.path(), &["thermometry", "--records", path.to_str().unwrap()]);
    let report = json(&dir.path().join("thermometry.json"));
    let groups = report["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 3);
    let low = groups.iter().find(|g| g["group"] == "low").unwrap();
    assert!((low["n"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    let odd = groups.iter().find(|g| g["group"] == "odd").unwrap();
    assert!(odd["n"].is_null() && odd["error"].is_string());
}
