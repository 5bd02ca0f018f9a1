//! Run configuration: one JSON document with a section per module.
//!
//! Unknown keys are rejected everywhere. Lengths carry a `_nm` suffix, other
//! physical quantities their SI unit. Geometry keys follow the device
//! parameter table (`lWav`, `wCell`, `lArm_max`, ...); the bare names are
//! accepted as aliases of the suffixed ones.

use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

use cshape_core::bloch::{kx_path, linspace, BlochWavevector, Cutoff, FillerRatios, SolveOptions, SweepOptions, SymmetryMode};
use cshape_core::calibration::FrequencyConvention;
use cshape_core::geometry::{
    build_waveguide_cell, CShapeParams, CShapeTaper, RegionBoundaries, SnowflakeParams, TaperExponent, TaperProfile,
    UnitCellGeometry, WaveguideLayout,
};
use cshape_core::materials::{ElasticMaterial, PlaneReduction, VoigtStiffness};
use cshape_core::modes::DEFAULT_PARITY_THRESHOLD;
use cshape_core::thermometry::{BackgroundModel, OccupancyOptions, ProbabilityAxis};
use cshape_core::NM;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every stochastic step (fit restarts).
    pub seed: u64,
    pub material: MaterialConfig,
    pub geometry: GeometryConfig,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub calibration: CalibrationConfig,
    pub g0: G0Config,
    pub thermometry: ThermometryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            material: MaterialConfig::default(),
            geometry: GeometryConfig::default(),
            sweep: SweepConfig::default(),
            analysis: AnalysisConfig::default(),
            calibration: CalibrationConfig::default(),
            g0: G0Config::default(),
            thermometry: ThermometryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    /// Config file if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

// ---------------------------------------------------------------------------
// Material

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub name: String,
    #[serde(rename = "density_kg_m3", alias = "density")]
    pub density: f64,
    /// 6×6 Voigt stiffness in crystal axes.
    #[serde(rename = "voigt_Pa", alias = "voigt")]
    pub voigt: [[f64; 6]; 6],
    /// Filler density over solid density.
    pub filler_density_ratio: f64,
    /// Filler stiffness over solid stiffness.
    pub filler_stiffness_ratio: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let si = ElasticMaterial::silicon();
        let f = FillerRatios::default();
        Self {
            name: si.name,
            density: si.density,
            voigt: si.stiffness.into(),
            filler_density_ratio: f.density_ratio,
            filler_stiffness_ratio: f.stiffness_ratio,
        }
    }
}

impl MaterialConfig {
    pub fn solid(&self) -> Result<ElasticMaterial, CliError> {
        let c = VoigtStiffness::new(self.voigt).map_err(CliError::domain)?;
        ElasticMaterial::new(self.name.clone(), self.density, c).map_err(CliError::domain)
    }

    pub fn filler(&self) -> FillerRatios {
        FillerRatios {
            density_ratio: self.filler_density_ratio,
            stiffness_ratio: self.filler_stiffness_ratio,
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct GeometryConfig {
    #[serde(alias = "lWav")]
    pub lWav_nm: f64,
    #[serde(alias = "wCell")]
    pub wCell_nm: f64,
    pub n_d: u32,
    #[serde(alias = "lArm_max")]
    pub lArm_max_nm: f64,
    #[serde(alias = "lArm_min")]
    pub lArm_min_nm: f64,
    #[serde(alias = "wArm_max")]
    pub wArm_max_nm: f64,
    #[serde(alias = "wArm_min")]
    pub wArm_min_nm: f64,
    #[serde(alias = "lPad_max")]
    pub lPad_max_nm: f64,
    #[serde(alias = "lPad_min")]
    pub lPad_min_nm: f64,
    #[serde(alias = "wPad_max")]
    pub wPad_max_nm: f64,
    #[serde(alias = "wPad_min")]
    pub wPad_min_nm: f64,
    #[serde(alias = "aSnow")]
    pub aSnow_nm: f64,
    #[serde(alias = "lSnow")]
    pub lSnow_nm: f64,
    #[serde(alias = "wSnow")]
    pub wSnow_nm: f64,
    pub taper_exponent: TaperExponent,
    /// Taper index of the simulated cell; `None` is the mirror cell.
    pub cell_index: Option<i32>,
    /// Snowflake rows on each side of the waveguide.
    pub snowflake_rows: usize,
    /// C-hole edge to first snowflake row; `None` is half of `aSnow`.
    pub first_row_offset_nm: Option<f64>,
    /// Filler padding at the top and bottom of the supercell.
    pub pad_nm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let layout = WaveguideLayout::default();
        Self {
            lWav_nm: 175.0,
            wCell_nm: 512.5,
            n_d: 7,
            lArm_max_nm: 207.5,
            lArm_min_nm: 195.5,
            wArm_max_nm: 106.0,
            wArm_min_nm: 83.5,
            lPad_max_nm: 110.5,
            lPad_min_nm: 114.5,
            wPad_max_nm: 192.0,
            wPad_min_nm: 182.0,
            aSnow_nm: 500.0,
            lSnow_nm: 205.0,
            wSnow_nm: 82.0,
            taper_exponent: TaperExponent::Corrected,
            cell_index: None,
            snowflake_rows: layout.rows,
            first_row_offset_nm: None,
            pad_nm: layout.pad,
        }
    }
}

/// Names of the tapered parameters.
pub const TAPERED: [&str; 4] = ["lArm", "wArm", "lPad", "wPad"];

impl GeometryConfig {
    /// Taper profiles in nanometres, in [`TAPERED`] order.
    pub fn profiles_nm(&self) -> [TaperProfile; 4] {
        let p = |par_min, par_max| TaperProfile { par_min, par_max, n_d: self.n_d };
        [
            p(self.lArm_min_nm, self.lArm_max_nm),
            p(self.wArm_min_nm, self.wArm_max_nm),
            p(self.lPad_min_nm, self.lPad_max_nm),
            p(self.wPad_min_nm, self.wPad_max_nm),
        ]
    }

    pub fn taper(&self) -> CShapeTaper {
        let m = |p: TaperProfile| TaperProfile {
            par_min: p.par_min * NM,
            par_max: p.par_max * NM,
            n_d: p.n_d,
        };
        let [l_arm, w_arm, l_pad, w_pad] = self.profiles_nm().map(m);
        CShapeTaper {
            l_wav: self.lWav_nm * NM,
            w_cell: self.wCell_nm * NM,
            l_arm,
            w_arm,
            l_pad,
            w_pad,
            exponent: self.taper_exponent,
        }
    }

    pub fn cell_params(&self) -> Result<CShapeParams, CliError> {
        let n = self.cell_index.unwrap_or(self.n_d as i32);
        self.taper().cell_params(n).map_err(CliError::domain)
    }

    pub fn snowflake(&self) -> SnowflakeParams {
        SnowflakeParams {
            a_snow: self.aSnow_nm * NM,
            l_snow: self.lSnow_nm * NM,
            w_snow: self.wSnow_nm * NM,
        }
    }

    pub fn layout(&self) -> WaveguideLayout {
        WaveguideLayout {
            rows: self.snowflake_rows,
            first_row_offset: self.first_row_offset_nm.map(|v| v * NM),
            pad: self.pad_nm * NM,
        }
    }

    /// Waveguide supercell, with region boundaries overridden by `analysis`.
    pub fn unit_cell(&self, analysis: &AnalysisConfig) -> Result<UnitCellGeometry, CliError> {
        let mut g = build_waveguide_cell(&self.cell_params()?, &self.snowflake(), &self.layout()).map_err(CliError::domain)?;
        g.boundaries = analysis.boundaries(g.boundaries);
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Explicit orientations; overrides the range keys when set.
    pub theta_rad: Option<Vec<f64>>,
    pub theta_start_rad: f64,
    pub theta_stop_rad: f64,
    pub theta_count: usize,
    /// Explicit `k_x a/π` values; overrides `k_count` when set.
    pub kx_zone_fraction: Option<Vec<f64>>,
    /// Evenly spaced points from `k_x = 0` to `π/a`.
    pub k_count: usize,
    pub cutoff: Cutoff,
    /// Raster `[nx, ny]`.
    pub resolution: [usize; 2],
    pub n_bands: usize,
    pub reduction: PlaneReduction,
    pub symmetry: SymmetryMode,
    pub force_c16_zero: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let o = SweepOptions::default();
        Self {
            theta_rad: None,
            theta_start_rad: 0.0,
            theta_stop_rad: FRAC_PI_4,
            theta_count: 1,
            kx_zone_fraction: None,
            k_count: 11,
            cutoff: o.cutoff,
            resolution: o.resolution,
            n_bands: o.solve.n_bands,
            reduction: o.reduction,
            symmetry: o.solve.symmetry,
            force_c16_zero: false,
        }
    }
}

impl SweepConfig {
    pub fn thetas(&self) -> Vec<f64> {
        self.theta_rad
            .clone()
            .unwrap_or_else(|| linspace(self.theta_start_rad, self.theta_stop_rad, self.theta_count))
    }

    pub fn zone_fractions(&self) -> Vec<f64> {
        self.kx_zone_fraction.clone().unwrap_or_else(|| linspace(0.0, 1.0, self.k_count))
    }

    pub fn kpath(&self, cell: [f64; 2]) -> Vec<BlochWavevector> {
        match &self.kx_zone_fraction {
            Some(f) => f.iter().map(|&f| BlochWavevector::from_zone_fraction(f, 0.0, cell)).collect(),
            None => kx_path(cell, self.k_count),
        }
    }

    pub fn options(&self, filler: FillerRatios) -> SweepOptions {
        SweepOptions {
            resolution: self.resolution,
            cutoff: self.cutoff,
            solve: SolveOptions {
                n_bands: self.n_bands,
                symmetry: self.symmetry,
                ..SolveOptions::default()
            },
            reduction: self.reduction,
            filler,
        }
    }

    /// Replaces the range keys by the explicit lists they expand to.
    pub fn resolved(&self) -> Self {
        Self {
            theta_rad: Some(self.thetas()),
            kx_zone_fraction: Some(self.zone_fractions()),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Band table read by `classify`, `gaps` and `anticross`.
    pub bands_csv: Option<PathBuf>,
    /// Band table of the sweep with C₁₆ forced to zero, for `anticross`.
    pub forced_bands_csv: Option<PathBuf>,
    /// Parity label threshold τ.
    pub parity_tau: f64,
    /// `|y|` limit of the C-shape region; `None` is the outer C-hole edge.
    pub cshape_outer_nm: Option<f64>,
    /// `|y|` limit of the interface region; `None` is halfway past the
    /// first snowflake row.
    pub interface_outer_nm: Option<f64>,
    /// Mode filter for `gaps`, e.g. `sy=+1,region=cshape`.
    pub gap_filter: Option<String>,
    /// Band ordinals at the first θ for `anticross`; chosen automatically
    /// from the forced sweep when absent.
    pub anticross_pair: Option<[usize; 2]>,
    /// k-point of the θ-sweep used by `anticross`.
    pub k_index: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bands_csv: None,
            forced_bands_csv: None,
            parity_tau: DEFAULT_PARITY_THRESHOLD,
            cshape_outer_nm: None,
            interface_outer_nm: None,
            gap_filter: None,
            anticross_pair: None,
            k_index: 0,
        }
    }
}

impl AnalysisConfig {
    pub fn boundaries(&self, derived: RegionBoundaries) -> RegionBoundaries {
        RegionBoundaries {
            cshape_outer: self.cshape_outer_nm.map_or(derived.cshape_outer, |v| v * NM),
            interface_outer: self.interface_outer_nm.map_or(derived.interface_outer, |v| v * NM),
        }
    }
}

// ---------------------------------------------------------------------------
// Measurement analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub trace_csv: Option<PathBuf>,
    pub n_peaks: usize,
    pub frequency_convention: FrequencyConvention,
    /// Peak detection threshold in MADs above the median.
    pub mad_k: f64,
    pub restarts: usize,
    pub pm_points_csv: Option<PathBuf>,
    /// Modulator input impedance.
    pub pm_r_ohm: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            trace_csv: None,
            n_peaks: 1,
            frequency_convention: FrequencyConvention::Angular,
            mad_k: 5.0,
            restarts: 0,
            pm_points_csv: None,
            pm_r_ohm: cshape_core::calibration::PM_IMPEDANCE_OHM,
        }
    }
}

/// Inputs of a single `g0` extraction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct G0Config {
    /// Peak mechanical PSD over phase-tone PSD.
    pub psd_ratio: Option<f64>,
    pub gamma_rad_s: Option<f64>,
    pub omega_rad_s: Option<f64>,
    /// Modulation depth, rad.
    pub b_rad: Option<f64>,
    pub temperature_K: Option<f64>,
    pub enbw_Hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermometryConfig {
    pub records_csv: Option<PathBuf>,
    /// Blue-to-red detection efficiency ratio.
    pub efficiency_ratio: f64,
    /// Calibration pulses behind the background estimates; `None` treats the
    /// backgrounds as exact.
    pub background_pulses: Option<u64>,
    pub probability_axis: ProbabilityAxis,
    /// Annotations carried into the output.
    pub pulse_width_s: Option<f64>,
    pub pulse_period_s: Option<f64>,
}

impl Default for ThermometryConfig {
    fn default() -> Self {
        Self {
            records_csv: None,
            efficiency_ratio: 1.0,
            background_pulses: None,
            probability_axis: ProbabilityAxis::Blue,
            pulse_width_s: None,
            pulse_period_s: None,
        }
    }
}

impl ThermometryConfig {
    pub fn options(&self) -> OccupancyOptions {
        OccupancyOptions {
            efficiency_ratio: self.efficiency_ratio,
            background: match self.background_pulses {
                Some(pulses) => BackgroundModel::Poisson { pulses },
                None => BackgroundModel::Known,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"geometry": {"lArm_max_nm": 200, "typo": 1}}"#).is_err());
    }

    #[test]
    fn table_names_are_aliases() {
        let c = RunConfig::from_json(r#"{"geometry": {"lArm_max": 210.0, "wCell": 500.0}}"#).unwrap();
        assert_eq!(c.geometry.lArm_max_nm, 210.0);
        assert_eq!(c.geometry.wCell_nm, 500.0);
    }

    #[test]
    fn reference_geometry_matches_core() {
        let g = GeometryConfig::default();
        assert_eq!(g.snowflake(), SnowflakeParams::reference());
        let (a, b) = (g.taper(), CShapeTaper::reference());
        assert_eq!(a.l_arm.n_d, b.l_arm.n_d);
        assert!((a.l_pad.par_min - b.l_pad.par_min).abs() < 1e-20);
    }
}
