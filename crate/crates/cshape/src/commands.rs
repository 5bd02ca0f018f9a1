//! Verb implementations. Each reads its inputs, folds command-line overrides
//! into the run config and writes its artifacts.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use cshape_core::bloch::{sweep_grid, BandStructure};
use cshape_core::calibration::{fit_psd as core_fit_psd, fit_vpi, g0_extract, lorentzian_model, modulation_depth, FrequencyConvention, G0Inputs, MultiLorentzFit, PmFit, PsdFitOptions};
use cshape_core::geometry::{rasterize, taper_parameter_with, MaterialGrid, FILLER, SOLID};
use cshape_core::lsq::LmOptions;
use cshape_core::materials::{rotate_stiffness, ElasticMaterial, VoigtStiffness};
use cshape_core::modes::{classify as core_classify, crossing_pairs, detect_anticrossing, find_gaps_in, AntiCrossing, ClassifiedMode, CrossingPair, GapInterval, ModeFilter};
use cshape_core::thermometry::{occupancy_sweep, ProbabilityAxis};
use cshape_core::NM;
use serde::Serialize;

use crate::cli::{AnticrossArgs, Axis, CalibratePmArgs, ClassifyArgs, Context, Convention, FitPsdArgs, G0Args, GapsArgs, RasterArgs, RotateArgs, SweepArgs, TaperArgs, ThermometryArgs};
use crate::config::{RunConfig, TAPERED};
use crate::error::CliError;
use crate::formats::{self, BandRow, RecordRow, StoredBands};

/// Files written and a short human-readable report.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn wrote(&mut self, path: PathBuf) {
        self.summary.push(format!("wrote {}", path.display()));
        self.outputs.push(path);
    }
}

// ---------------------------------------------------------------------------
// material rotate

#[derive(Serialize)]
#[allow(non_snake_case)]
struct StiffnessRow {
    theta_rad: f64,
    C11: f64,
    C12: f64,
    C66: f64,
    C16: f64,
}

impl StiffnessRow {
    fn new(theta: f64, c: &VoigtStiffness) -> Self {
        Self { theta_rad: theta, C11: c.c11(), C12: c.c12(), C66: c.c66(), C16: c.c16() }
    }
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct RotatedTensor {
    theta_rad: f64,
    voigt_Pa: [[f64; 6]; 6],
}

pub fn material_rotate(cfg: &mut RunConfig, args: &RotateArgs, ctx: &Context) -> Result<Outcome, CliError> {
    if args.count < 2 {
        return Err(CliError::config("--count must be at least 2"));
    }
    let solid = cfg.material.solid()?;
    let mut out = Outcome::default();
    let rows: Vec<StiffnessRow> = (0..args.count)
        .map(|i| {
            let theta = FRAC_PI_2 * i as f64 / (args.count - 1) as f64;
            StiffnessRow::new(theta, &rotate_stiffness(&solid.stiffness, theta))
        })
        .collect();
    let csv = ctx.path(&args.out, "stiffness_vs_theta.csv");
    formats::write_csv(&csv, &rows)?;
    out.wrote(csv.clone());
    if !args.theta.is_empty() {
        let tensors: Vec<RotatedTensor> = args
            .theta
            .iter()
            .map(|&t| RotatedTensor { theta_rad: t, voigt_Pa: rotate_stiffness(&solid.stiffness, t).into() })
            .collect();
        let json = csv.with_file_name("rotated_stiffness.json");
        formats::write_json(&json, &tensors)?;
        out.wrote(json);
    }
    let peak = rows.iter().map(|r| r.C16.abs()).fold(0.0, f64::max);
    out.summary.insert(0, format!("{}: max |C16| over a quarter turn = {:.4} GPa", solid.name, peak * 1e-9));
    Ok(out)
}

// ---------------------------------------------------------------------------
// taper

#[derive(Serialize)]
#[allow(non_snake_case)]
struct TaperRow {
    n: i32,
    lArm_nm: f64,
    wArm_nm: f64,
    lPad_nm: f64,
    wPad_nm: f64,
}

pub fn taper(cfg: &mut RunConfig, args: &TaperArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let g = &cfg.geometry;
    let profiles = g.profiles_nm();
    let nd = g.n_d as i32;
    let mut rows = Vec::new();
    for n in -nd..=nd {
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&profiles) {
            *slot = taper_parameter_with(n, p, g.taper_exponent).map_err(CliError::domain)?;
        }
        rows.push(TaperRow { n, lArm_nm: v[0], wArm_nm: v[1], lPad_nm: v[2], wPad_nm: v[3] });
    }
    let path = ctx.path(&args.out, "taper.csv");
    formats::write_csv(&path, &rows)?;
    let mut out = Outcome::default();
    out.summary.push(format!("taper over n = -{nd}..{nd} for {}", TAPERED.join(", ")));
    out.wrote(path);
    Ok(out)
}

// ---------------------------------------------------------------------------
// geometry raster

fn materials(cfg: &RunConfig) -> Result<(ElasticMaterial, ElasticMaterial), CliError> {
    let solid = cfg.material.solid()?;
    let r = cfg.material.filler();
    let filler = ElasticMaterial::filler_for(&solid, r.density_ratio, r.stiffness_ratio).map_err(CliError::domain)?;
    Ok((solid, filler))
}

fn build_grid(cfg: &RunConfig) -> Result<MaterialGrid, CliError> {
    let geometry = cfg.geometry.unit_cell(&cfg.analysis)?;
    let (solid, filler) = materials(cfg)?;
    let [nx, ny] = cfg.sweep.resolution;
    rasterize(&geometry, nx, ny, &solid, &filler).map_err(CliError::domain)
}

#[derive(Serialize)]
struct RasterSidecar {
    nx: usize,
    ny: usize,
    cell_nm: [f64; 2],
    pitch_nm: [f64; 2],
    /// `|y|` limits of the C-shape and interface regions; `null` is unbounded.
    cshape_outer_nm: Option<f64>,
    interface_outer_nm: Option<f64>,
    region_pixels: RegionPixels,
    solid_fraction: f64,
    filler_fraction: f64,
    fingerprint: String,
    greymap: GreymapLegend,
}

#[derive(Serialize)]
struct RegionPixels {
    cshape: usize,
    interface: usize,
    snowflake: usize,
}

#[derive(Serialize)]
struct GreymapLegend {
    solid: u8,
    filler: u8,
    first_row: &'static str,
}

fn finite_nm(v: f64) -> Option<f64> {
    v.is_finite().then_some(v / NM)
}

pub fn geometry_raster(cfg: &mut RunConfig, args: &RasterArgs, ctx: &Context) -> Result<Outcome, CliError> {
    if let Some(nx) = args.nx {
        cfg.sweep.resolution[0] = nx;
    }
    if let Some(ny) = args.ny {
        cfg.sweep.resolution[1] = ny;
    }
    let grid = build_grid(cfg)?;
    let pgm = ctx.path(&args.out, "geometry.pgm");
    formats::write_pgm(&pgm, &grid)?;
    let [c, i, s] = grid.region_counts();
    let sidecar = RasterSidecar {
        nx: grid.nx,
        ny: grid.ny,
        cell_nm: grid.cell.map(|v| v / NM),
        pitch_nm: grid.pitch.map(|v| v / NM),
        cshape_outer_nm: finite_nm(grid.boundaries.cshape_outer),
        interface_outer_nm: finite_nm(grid.boundaries.interface_outer),
        region_pixels: RegionPixels { cshape: c, interface: i, snowflake: s },
        solid_fraction: grid.fill_fraction(SOLID),
        filler_fraction: grid.fill_fraction(FILLER),
        fingerprint: format!("{:016x}", grid.fingerprint()),
        greymap: GreymapLegend { solid: 255, filler: 0, first_row: "top of the cell (largest y)" },
    };
    let json = pgm.with_extension("json");
    formats::write_json(&json, &sidecar)?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "{}x{} raster of a {:.1} x {:.1} nm cell, solid fraction {:.3}",
        grid.nx, grid.ny, sidecar.cell_nm[0], sidecar.cell_nm[1], sidecar.solid_fraction
    ));
    out.wrote(pgm);
    out.wrote(json);
    Ok(out)
}

// ---------------------------------------------------------------------------
// bands sweep and classify

fn band_rows(bands: &BandStructure, classes: &[ClassifiedMode]) -> Vec<BandRow> {
    bands.modes.iter().zip(classes).map(|(m, c)| BandRow::new(m, Some(c))).collect()
}

fn check_tau(tau: f64) -> Result<f64, CliError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(CliError::config(format!("parity threshold {tau} outside (0, 1)")))
    }
}

pub fn bands_sweep(cfg: &mut RunConfig, args: &SweepArgs, ctx: &Context) -> Result<Outcome, CliError> {
    if args.force_c16_zero {
        cfg.sweep.force_c16_zero = true;
    }
    cfg.sweep = cfg.sweep.resolved();
    let tau = check_tau(cfg.analysis.parity_tau)?;
    let grid = build_grid(cfg)?;
    let thetas = cfg.sweep.thetas();
    let kpath = cfg.sweep.kpath(grid.cell);
    let options = cfg.sweep.options(cfg.material.filler());
    let mut bands = sweep_grid(&grid, &thetas, &kpath, &options, cfg.sweep.force_c16_zero).map_err(CliError::domain)?;
    bands.meta.filler = Some(options.filler);
    let classes = core_classify(&bands, &grid, tau).map_err(CliError::domain)?;

    let csv = ctx.path(&args.out, "bands.csv");
    formats::write_bands(&csv, &band_rows(&bands, &classes))?;
    let modes = formats::modes_path(&csv);
    formats::write_modes(&modes, cfg, &bands)?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "{} orientations x {} k-points x {} bands, {} plane waves{}",
        thetas.len(),
        kpath.len(),
        bands.n_bands,
        bands.meta.basis_size,
        if cfg.sweep.force_c16_zero { ", C16 forced to zero" } else { "" }
    ));
    out.wrote(csv);
    out.wrote(modes);
    Ok(out)
}

fn bands_path(explicit: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    explicit
        .clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::config(format!("no {what} given (flag or config)")))
}

fn load_stored(path: &Path, cfg: &RunConfig) -> Result<StoredBands, CliError> {
    let modes = formats::modes_path(path);
    if !modes.exists() {
        return Err(CliError::input(format!("{}: mode sidecar missing; rerun `bands sweep`", modes.display())));
    }
    formats::read_modes(&modes, Some(&cfg.analysis))
}

pub fn classify(cfg: &mut RunConfig, args: &ClassifyArgs, _ctx: &Context) -> Result<Outcome, CliError> {
    let path = bands_path(&args.bands, &cfg.analysis.bands_csv, "band table")?;
    cfg.analysis.bands_csv = Some(path.clone());
    if let Some(t) = args.tau {
        cfg.analysis.parity_tau = t;
    }
    let tau = check_tau(cfg.analysis.parity_tau)?;
    let stored = load_stored(&path, cfg)?;
    let classes = core_classify(&stored.bands, &stored.grid, tau).map_err(CliError::domain)?;
    formats::write_bands(&path, &band_rows(&stored.bands, &classes))?;
    let mut out = Outcome::default();
    let mixed = classes
        .iter()
        .flat_map(|c| c.parities.iter().flatten())
        .filter(|p| p.label == cshape_core::modes::ParityLabel::Mixed)
        .count();
    out.summary.push(format!("classified {} modes at tau = {tau}; {mixed} mixed parity labels", classes.len()));
    out.wrote(path);
    Ok(out)
}

// ---------------------------------------------------------------------------
// gaps

#[derive(Serialize)]
struct GapReport {
    filter: Option<String>,
    parity_tau: f64,
    n_points: usize,
    n_bands: usize,
    gaps: Vec<GapInterval>,
}

pub fn gaps(cfg: &mut RunConfig, args: &GapsArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let path = bands_path(&args.bands, &cfg.analysis.bands_csv, "band table")?;
    cfg.analysis.bands_csv = Some(path.clone());
    if let Some(t) = args.tau {
        cfg.analysis.parity_tau = t;
    }
    if let Some(f) = &args.filter {
        cfg.analysis.gap_filter = Some(f.clone());
    }
    let tau = check_tau(cfg.analysis.parity_tau)?;
    let filter = match &cfg.analysis.gap_filter {
        Some(spec) => Some(ModeFilter::parse(spec).ok_or_else(|| CliError::config(format!("bad filter '{spec}'")))?),
        None => None,
    };
    let rows = formats::read_bands(&path)?;
    let n_bands = formats::bands_per_point(&rows)?;
    let selected: Vec<bool> = match &filter {
        None => vec![true; rows.len()],
        Some(f) => rows
            .iter()
            .map(|r| {
                r.classified(tau)
                    .map(|c| f.accepts(&c))
                    .ok_or_else(|| CliError::input(format!("{}: rows lack classification; run `classify`", path.display())))
            })
            .collect::<Result<_, _>>()?,
    };
    let freqs: Vec<f64> = rows.iter().map(|r| r.freq_Hz).collect();
    let gaps = find_gaps_in(&freqs, n_bands, &selected, filter.as_ref());
    let report = GapReport {
        filter: cfg.analysis.gap_filter.clone(),
        parity_tau: tau,
        n_points: rows.len() / n_bands,
        n_bands,
        gaps,
    };
    let json = ctx.path(&args.out, "gaps.json");
    formats::write_json(&json, &report)?;
    let mut out = Outcome::default();
    for g in &report.gaps {
        out.summary.push(format!("{:?} gap {:.6} - {:.6} GHz", g.kind, g.lo * 1e-9, g.hi * 1e-9));
    }
    if report.gaps.is_empty() {
        out.summary.push("no gaps".into());
    }
    out.wrote(json);
    Ok(out)
}

// ---------------------------------------------------------------------------
// anticross

#[derive(Debug, Clone, Serialize)]
pub struct AnticrossReport {
    pub band_a: usize,
    pub band_b: usize,
    pub k_index: usize,
    /// With the true rotated stiffness.
    pub true_c16: AntiCrossing,
    /// With C16 forced to zero, when that sweep was given.
    pub forced_c16_zero: Option<AntiCrossing>,
    /// Largest frequency error bound of the two bands over both sweeps, Hz.
    pub freq_error_bound_hz: f64,
    /// `true_c16.gap_min − forced_c16_zero.gap_min`, Hz.
    pub gap_excess_hz: Option<f64>,
    /// Automatically found C-shape/interface pairs of the forced sweep, best first.
    pub candidates: Vec<CrossingPair>,
}

fn parse_pair(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::config(format!("--pair expects 'a,b', got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

fn error_bound(bands: &BandStructure, k: usize, ordinals: [usize; 2]) -> Result<f64, CliError> {
    let tracks = cshape_core::modes::track_bands_theta(bands, k).map_err(CliError::domain)?;
    let mut bound = 0.0f64;
    for b in ordinals {
        for (t, &o) in tracks.track(b).iter().enumerate() {
            bound = bound.max(bands.mode(t, k, o).freq_error_bound);
        }
    }
    Ok(bound)
}

/// Closest approach of a band pair in a true sweep and, optionally, in the
/// matching sweep with C16 forced to zero.
pub fn anticross_analysis(
    truth: &BandStructure,
    forced: Option<(&BandStructure, &MaterialGrid)>,
    pair: Option<[usize; 2]>,
    k_index: usize,
    tau: f64,
) -> Result<AnticrossReport, CliError> {
    let mut candidates = Vec::new();
    if let Some((f, grid)) = forced {
        if f.thetas != truth.thetas || f.kpoints != truth.kpoints || f.n_bands != truth.n_bands {
            return Err(CliError::input("true and forced sweeps cover different (theta, k, band) grids"));
        }
        let classes = core_classify(f, grid, tau).map_err(CliError::domain)?;
        candidates = crossing_pairs(f, &classes, k_index).map_err(CliError::domain)?;
    }
    let [a, b] = match (pair, candidates.first()) {
        (Some(p), _) => p,
        (None, Some(c)) => [c.band_cshape, c.band_interface],
        (None, None) => {
            return Err(CliError::domain(
                "no crossing C-shape/interface pair found; give --pair or a forced sweep that resolves one",
            ))
        }
    };
    let true_c16 = detect_anticrossing(truth, a, b, k_index).map_err(CliError::domain)?;
    let mut bound = error_bound(truth, k_index, [a, b])?;
    let forced_c16_zero = match forced {
        Some((f, _)) => {
            bound = bound.max(error_bound(f, k_index, [a, b])?);
            Some(detect_anticrossing(f, a, b, k_index).map_err(CliError::domain)?)
        }
        None => None,
    };
    Ok(AnticrossReport {
        band_a: a,
        band_b: b,
        k_index,
        true_c16,
        forced_c16_zero,
        freq_error_bound_hz: bound,
        gap_excess_hz: forced_c16_zero.map(|f| true_c16.gap_min - f.gap_min),
        candidates,
    })
}

pub fn anticross(cfg: &mut RunConfig, args: &AnticrossArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let path = bands_path(&args.bands, &cfg.analysis.bands_csv, "band table")?;
    cfg.analysis.bands_csv = Some(path.clone());
    if let Some(f) = &args.forced {
        cfg.analysis.forced_bands_csv = Some(f.clone());
    }
    if let Some(p) = &args.pair {
        cfg.analysis.anticross_pair = Some(parse_pair(p)?);
    }
    if let Some(k) = args.k_index {
        cfg.analysis.k_index = k;
    }
    if let Some(t) = args.tau {
        cfg.analysis.parity_tau = t;
    }
    let tau = check_tau(cfg.analysis.parity_tau)?;
    let truth = load_stored(&path, cfg)?;
    let forced = match &cfg.analysis.forced_bands_csv {
        Some(p) => Some(load_stored(p, cfg)?),
        None => None,
    };
    let report = anticross_analysis(
        &truth.bands,
        forced.as_ref().map(|s| (&s.bands, &s.grid)),
        cfg.analysis.anticross_pair,
        cfg.analysis.k_index,
        tau,
    )?;
    let json = ctx.path(&args.out, "anticross.json");
    formats::write_json(&json, &report)?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "bands {} and {}: closest approach {:.4} MHz at theta = {:.4} rad",
        report.band_a,
        report.band_b,
        report.true_c16.gap_min * 1e-6,
        report.true_c16.theta_min
    ));
    if let Some(f) = report.forced_c16_zero {
        out.summary.push(format!(
            "with C16 = 0: {:.4} MHz at theta = {:.4} rad{}",
            f.gap_min * 1e-6,
            f.theta_min,
            if f.crosses { " (crossing)" } else { "" }
        ));
    }
    out.wrote(json);
    Ok(out)
}

// ---------------------------------------------------------------------------
// fit-psd

#[derive(Serialize)]
#[allow(non_snake_case)]
struct PeakHz {
    frequency_Hz: f64,
    linewidth_Hz: f64,
    peak_psd: f64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct PsdFitReport {
    fit: MultiLorentzFit,
    /// Peaks converted to Hz (angular convention only).
    peaks_Hz: Option<Vec<PeakHz>>,
    enbw_Hz: f64,
    options: PsdFitOptions,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ModelRow {
    freq_Hz: f64,
    psd_linear: f64,
    model: f64,
}

pub fn fit_psd(cfg: &mut RunConfig, args: &FitPsdArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let c = &mut cfg.calibration;
    if let Some(p) = &args.trace {
        c.trace_csv = Some(p.clone());
    }
    if let Some(n) = args.peaks {
        c.n_peaks = n;
    }
    if let Some(r) = args.restarts {
        c.restarts = r;
    }
    if let Some(conv) = args.convention {
        c.frequency_convention = match conv {
            Convention::Angular => FrequencyConvention::Angular,
            Convention::Literal => FrequencyConvention::Literal,
        };
    }
    let path = c.trace_csv.clone().ok_or_else(|| CliError::config("no trace given (--trace or calibration.trace_csv)"))?;
    let trace = formats::read_trace(&path)?;
    let options = PsdFitOptions {
        convention: c.frequency_convention,
        mad_k: c.mad_k,
        restarts: c.restarts,
        seed: cfg.seed,
        lm: LmOptions::default(),
    };
    let fit = core_fit_psd(&trace, c.n_peaks, None, &options).map_err(CliError::domain)?;
    let peaks_hz = (fit.convention == FrequencyConvention::Angular).then(|| {
        fit.peaks
            .iter()
            .map(|p| PeakHz { frequency_Hz: p.omega / (2.0 * PI), linewidth_Hz: p.gamma / (2.0 * PI), peak_psd: p.peak_psd })
            .collect()
    });
    let model: Vec<ModelRow> = trace
        .freq
        .iter()
        .zip(&trace.psd)
        .map(|(&f, &p)| ModelRow { freq_Hz: f, psd_linear: p, model: lorentzian_model(f, &fit) })
        .collect();
    let mut out = Outcome::default();
    out.summary.push(format!("{} of {} peaks fitted, RMS residual {:.3e}", fit.peaks.len(), c.n_peaks, fit.residual));
    if fit.is_partial() {
        out.summary.push(format!("warning: {} requested peaks not found above the noise floor", fit.missing_peaks));
    }
    let report = PsdFitReport { fit, peaks_Hz: peaks_hz, enbw_Hz: trace.enbw, options };
    let json = ctx.path(&args.out, "psd_fit.json");
    formats::write_json(&json, &report)?;
    let curve = json.with_file_name("psd_fit_model.csv");
    formats::write_csv(&curve, &model)?;
    out.wrote(json);
    out.wrote(curve);
    Ok(out)
}

// ---------------------------------------------------------------------------
// calibrate-pm

#[derive(Serialize)]
#[allow(non_snake_case)]
struct PmPoint {
    power_W: f64,
    ratio: f64,
    b_rad: f64,
}

#[derive(Serialize)]
struct PmReport {
    fit: PmFit,
    points: Vec<PmPoint>,
}

pub fn calibrate_pm(cfg: &mut RunConfig, args: &CalibratePmArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let c = &mut cfg.calibration;
    if let Some(p) = &args.points {
        c.pm_points_csv = Some(p.clone());
    }
    if let Some(r) = args.r {
        c.pm_r_ohm = r;
    }
    let path = c
        .pm_points_csv
        .clone()
        .ok_or_else(|| CliError::config("no points given (--points or calibration.pm_points_csv)"))?;
    let points = formats::read_pm_points(&path)?;
    let fit = fit_vpi(&points, c.pm_r_ohm, &LmOptions::default()).map_err(CliError::domain)?;
    let report = PmReport {
        points: points
            .iter()
            .map(|&(p, r)| PmPoint { power_W: p, ratio: r, b_rad: modulation_depth(&fit.calibration, p) })
            .collect(),
        fit,
    };
    let json = ctx.path(&args.out, "pm_calibration.json");
    formats::write_json(&json, &report)?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "V_pi = {:.4} V, floor B = {:.3e}, RMS log residual {:.3e}",
        fit.calibration.v_pi, fit.calibration.b_noise, fit.rms_log_residual
    ));
    out.wrote(json);
    Ok(out)
}

// ---------------------------------------------------------------------------
// g0

#[derive(Serialize)]
#[allow(non_snake_case)]
struct G0Report {
    g0_rad_s: f64,
    g0_Hz: f64,
    inputs: G0Inputs,
}

pub fn g0(cfg: &mut RunConfig, args: &G0Args, ctx: &Context) -> Result<Outcome, CliError> {
    let g = &mut cfg.g0;
    let set = |slot: &mut Option<f64>, v: Option<f64>| {
        if v.is_some() {
            *slot = v;
        }
    };
    set(&mut g.psd_ratio, args.ratio);
    set(&mut g.gamma_rad_s, args.gamma);
    set(&mut g.omega_rad_s, args.omega);
    set(&mut g.b_rad, args.b);
    set(&mut g.temperature_K, args.temperature);
    set(&mut g.enbw_Hz, args.enbw);
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::config(format!("missing --{flag}")));
    let inputs = G0Inputs {
        psd_ratio: need(g.psd_ratio, "ratio")?,
        gamma: need(g.gamma_rad_s, "gamma")?,
        omega: need(g.omega_rad_s, "omega")?,
        b: need(g.b_rad, "b")?,
        temperature: need(g.temperature_K, "T")?,
        enbw: need(g.enbw_Hz, "enbw")?,
    };
    let res = g0_extract(&inputs).map_err(CliError::domain)?;
    let report = G0Report { g0_rad_s: res.g0, g0_Hz: res.g0_hz(), inputs };
    let json = ctx.path(&args.out, "g0.json");
    formats::write_json(&json, &report)?;
    let mut out = Outcome::default();
    out.summary.push(format!("g0/2pi = {:.2} kHz", report.g0_Hz * 1e-3));
    out.wrote(json);
    Ok(out)
}

// ---------------------------------------------------------------------------
// thermometry

#[derive(Serialize)]
struct GroupReport {
    group: String,
    pulses: u64,
    clicks_blue: u64,
    clicks_red: u64,
    scattering_probability: f64,
    p_blue: Option<f64>,
    p_red: Option<f64>,
    n: Option<f64>,
    n_raw: Option<f64>,
    sigma_n: Option<f64>,
    clamped: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ThermometryReport {
    probability_axis: ProbabilityAxis,
    efficiency_ratio: f64,
    background_pulses: Option<u64>,
    pulse_width_s: Option<f64>,
    pulse_period_s: Option<f64>,
    groups: Vec<GroupReport>,
}

pub fn thermometry(cfg: &mut RunConfig, args: &ThermometryArgs, ctx: &Context) -> Result<Outcome, CliError> {
    let t = &mut cfg.thermometry;
    if let Some(p) = &args.records {
        t.records_csv = Some(p.clone());
    }
    if let Some(e) = args.efficiency_ratio {
        t.efficiency_ratio = e;
    }
    if let Some(b) = args.background_pulses {
        t.background_pulses = Some(b);
    }
    if let Some(a) = args.axis {
        t.probability_axis = match a {
            Axis::Blue => ProbabilityAxis::Blue,
            Axis::Red => ProbabilityAxis::Red,
        };
    }
    let path = t.records_csv.clone().ok_or_else(|| CliError::config("no records given (--records or thermometry.records_csv)"))?;
    let rows: Vec<RecordRow> = formats::read_records(&path)?;
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no records", path.display())));
    }
    let records: Vec<(String, _)> = rows.iter().map(|r| (r.group.clone(), r.counts())).collect();
    let points = occupancy_sweep(&records, &t.options(), t.probability_axis);
    let groups: Vec<GroupReport> = points
        .into_iter()
        .map(|p| {
            let (est, error) = match p.estimate {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            GroupReport {
                group: p.group,
                pulses: p.counts.pulses,
                clicks_blue: p.counts.clicks_blue,
                clicks_red: p.counts.clicks_red,
                scattering_probability: p.scattering_probability,
                p_blue: est.map(|e| e.rates.p_blue),
                p_red: est.map(|e| e.rates.p_red),
                n: est.map(|e| e.n),
                n_raw: est.map(|e| e.n_raw),
                sigma_n: est.map(|e| e.sigma_n),
                clamped: est.map(|e| e.rates.clamped()),
                error,
            }
        })
        .collect();
    let mut out = Outcome::default();
    for g in &groups {
        out.summary.push(match (g.n, g.sigma_n, &g.error) {
            (Some(n), Some(s), _) => format!("{}: p = {:.4e}, n = {n:.4} +/- {s:.4}", g.group, g.scattering_probability),
            (_, _, Some(e)) => format!("{}: {e}", g.group),
            _ => format!("{}: no estimate", g.group),
        });
    }
    let report = ThermometryReport {
        probability_axis: t.probability_axis,
        efficiency_ratio: t.efficiency_ratio,
        background_pulses: t.background_pulses,
        pulse_width_s: t.pulse_width_s,
        pulse_period_s: t.pulse_period_s,
        groups,
    };
    let json = ctx.path(&args.out, "thermometry.json");
    formats::write_json(&json, &report)?;
    out.wrote(json);
    Ok(out)
}
