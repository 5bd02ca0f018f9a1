//! On-disk formats: band CSV, the binary mode sidecar, measurement CSVs and
//! the greymap raster.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cshape_core::bloch::{Assembler, BandMeta, BandStructure, BlochMode, BlochWavevector, MaterialField, PlaneWaveBasis};
use cshape_core::calibration::PsdTrace;
use cshape_core::geometry::{rasterize, MaterialGrid, SOLID};
use cshape_core::modes::{ClassifiedMode, ParityLabel, ParityScore, RegionFractions};
use cshape_core::symmetry::SymmetryOp;
use cshape_core::thermometry::SidebandCounts;
use cshape_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))? + "\n";
    write_text(path, &text)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    create_parent(path)?;
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    write_rows(path, rows)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Band CSV

/// One mode per row. Parity columns are empty where the operation does not
/// map the wavevector onto itself, or before classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BandRow {
    pub theta_rad: f64,
    /// rad/m.
    pub kx: f64,
    pub band_index: usize,
    pub freq_Hz: f64,
    pub parity_sx: Option<f64>,
    pub parity_sy: Option<f64>,
    pub parity_rz: Option<f64>,
    pub frac_cshape: Option<f64>,
    pub frac_interface: Option<f64>,
    pub frac_snowflake: Option<f64>,
}

impl BandRow {
    pub fn new(mode: &BlochMode, class: Option<&ClassifiedMode>) -> Self {
        let score = |op: SymmetryOp| class.and_then(|c| c.parity(op)).map(|p| p.score);
        let frac = |f: fn(&RegionFractions) -> f64| class.map(|c| f(&c.fractions));
        Self {
            theta_rad: mode.theta,
            kx: mode.k.kx,
            band_index: mode.band_index,
            freq_Hz: mode.frequency_hz(),
            parity_sx: score(SymmetryOp::SigmaX),
            parity_sy: score(SymmetryOp::SigmaY),
            parity_rz: score(SymmetryOp::RzPi),
            frac_cshape: frac(|f| f.cshape),
            frac_interface: frac(|f| f.interface),
            frac_snowflake: frac(|f| f.snowflake),
        }
    }

    /// Classification carried by the row, with labels at threshold `tau`.
    pub fn classified(&self, tau: f64) -> Option<ClassifiedMode> {
        let fractions = RegionFractions {
            cshape: self.frac_cshape?,
            interface: self.frac_interface?,
            snowflake: self.frac_snowflake?,
        };
        let mut parities = [None; 3];
        for (op, score) in [
            (SymmetryOp::SigmaX, self.parity_sx),
            (SymmetryOp::SigmaY, self.parity_sy),
            (SymmetryOp::RzPi, self.parity_rz),
        ] {
            parities[op as usize] = score.map(|score| ParityScore {
                op,
                score,
                label: ParityLabel::from_score(score, tau),
            });
        }
        Some(ClassifiedMode {
            band_index: self.band_index,
            frequency_hz: self.freq_Hz,
            parities,
            fractions,
        })
    }
}

pub fn write_bands(path: &Path, rows: &[BandRow]) -> Result<(), CliError> {
    write_rows(path, rows)
}

pub fn read_bands(path: &Path) -> Result<Vec<BandRow>, CliError> {
    read_rows(path)
}

/// Number of bands per `(θ, k)` point of a band table; rows must form a
/// complete point-major grid with band indices `0..n`.
pub fn bands_per_point(rows: &[BandRow]) -> Result<usize, CliError> {
    let n = rows.iter().skip(1).position(|r| r.band_index == 0).map_or(rows.len(), |p| p + 1);
    if n == 0 || rows.len() % n != 0 {
        return Err(CliError::input("band table is not a complete (theta, k, band) grid"));
    }
    for (i, r) in rows.iter().enumerate() {
        let head = &rows[i - i % n];
        if r.band_index != i % n || r.theta_rad != head.theta_rad || r.kx != head.kx {
            return Err(CliError::input(format!("band table row {} breaks the (theta, k, band) grid", i + 2)));
        }
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Mode sidecar

const MODES_MAGIC: &[u8; 16] = b"cshape-modes-v1\n";

/// Sidecar written next to a band CSV (same stem, `.modes`).
pub fn modes_path(bands_csv: &Path) -> PathBuf {
    bands_csv.with_extension("modes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModesHeader {
    config: RunConfig,
    n_thetas: usize,
    n_k: usize,
    n_bands: usize,
    basis_len: usize,
    meta: BandMeta,
}

/// Stores every mode of `bands` with the config that produced it.
///
/// Layout: magic, `u64` header length, JSON header, then per mode `omega`,
/// `kx`, `ky`, `theta`, `residual`, `freq_error_bound` as `f64`, the band
/// index as `u64` and the coefficients as `(re, im)` pairs, all little endian.
pub fn write_modes(path: &Path, config: &RunConfig, bands: &BandStructure) -> Result<(), CliError> {
    create_parent(path)?;
    let header = ModesHeader {
        config: config.clone(),
        n_thetas: bands.thetas.len(),
        n_k: bands.kpoints.len(),
        n_bands: bands.n_bands,
        basis_len: bands.basis().len(),
        meta: bands.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CliError::io(path, e))?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    w.write_all(MODES_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for m in &bands.modes {
        for v in [m.omega, m.k.kx, m.k.ky, m.theta, m.residual, m.freq_error_bound] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&(m.band_index as u64).to_le_bytes()).map_err(io)?;
        for c in &m.coefficients {
            w.write_all(&c.re.to_le_bytes()).map_err(io)?;
            w.write_all(&c.im.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// A band structure restored from its sidecar, with the raster it was
/// solved on.
pub struct StoredBands {
    pub config: RunConfig,
    pub bands: BandStructure,
    pub grid: MaterialGrid,
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a sidecar. The raster is rebuilt from the stored config; region
/// boundaries come from `analysis` when given, so modes can be
/// re-classified under different boundaries.
pub fn read_modes(path: &Path, analysis: Option<&crate::config::AnalysisConfig>) -> Result<StoredBands, CliError> {
    let bad = |msg: String| CliError::input(format!("{}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
    if &magic != MODES_MAGIC {
        return Err(bad("not a mode sidecar".into()));
    }
    let len = read_u64(&mut r).map_err(|e| bad(e.to_string()))? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| bad(e.to_string()))?;
    let header: ModesHeader = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;

    let n_modes = header.n_thetas * header.n_k * header.n_bands;
    let mut modes = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        let mut f = [0.0; 6];
        for v in &mut f {
            *v = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
        }
        let band_index = read_u64(&mut r).map_err(|e| bad(e.to_string()))? as usize;
        let mut coefficients = Vec::with_capacity(2 * header.basis_len);
        for _ in 0..2 * header.basis_len {
            let re = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
            let im = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
            coefficients.push(Complex64::new(re, im));
        }
        modes.push(BlochMode {
            omega: f[0],
            k: BlochWavevector::new(f[1], f[2]),
            theta: f[3],
            band_index,
            coefficients,
            residual: f[4],
            freq_error_bound: f[5],
        });
    }

    let mut config = header.config;
    if let Some(a) = analysis {
        config.analysis = a.clone();
    }
    let geometry = config.geometry.unit_cell(&config.analysis)?;
    let solid = config.material.solid()?;
    let ratios = config.material.filler();
    let filler = cshape_core::materials::ElasticMaterial::filler_for(&solid, ratios.density_ratio, ratios.stiffness_ratio)
        .map_err(CliError::domain)?;
    let grid = rasterize(&geometry, header.meta.resolution[0], header.meta.resolution[1], &solid, &filler)
        .map_err(CliError::domain)?;
    let basis = PlaneWaveBasis::new(grid.cell, header.meta.cutoff).map_err(CliError::domain)?;
    if basis.len() != header.basis_len {
        return Err(bad(format!("basis has {} vectors, sidecar {}", basis.len(), header.basis_len)));
    }
    let thetas: Vec<f64> = (0..header.n_thetas).map(|t| modes[t * header.n_k * header.n_bands].theta).collect();
    let kpoints: Vec<BlochWavevector> = (0..header.n_k).map(|k| modes[k * header.n_bands].k).collect();
    let field = MaterialField::new(&grid.materials, thetas[0], header.meta.reduction, header.meta.c16_forced_zero)
        .map_err(CliError::domain)?;
    let mass = Assembler::new(&grid, &basis).map_err(CliError::domain)?.mass_operator(&field);
    Ok(StoredBands {
        config,
        bands: BandStructure {
            thetas,
            kpoints,
            n_bands: header.n_bands,
            modes,
            meta: header.meta,
            mass,
        },
        grid,
    })
}

// ---------------------------------------------------------------------------
// Measurement CSVs

/// Reads a PSD trace: an `enbw_Hz` comment line (`# enbw_Hz=1000`), then
/// `freq_Hz,psd_linear` columns.
pub fn read_trace(path: &Path) -> Result<PsdTrace, CliError> {
    let text = read_text(path)?;
    let bad = |msg: String| CliError::input(format!("{}: {msg}", path.display()));
    let mut enbw = None;
    for line in text.lines().filter_map(|l| l.trim().strip_prefix('#')) {
        if let Some((key, value)) = line.split_once(['=', ':']) {
            if key.trim() == "enbw_Hz" {
                enbw = Some(value.trim().parse::<f64>().map_err(|e| bad(format!("enbw_Hz: {e}")))?);
            }
        }
    }
    let enbw = enbw.ok_or_else(|| bad("missing '# enbw_Hz=<value>' header line".into()))?;

    #[derive(Deserialize)]
    #[allow(non_snake_case)]
    struct Row {
        freq_Hz: f64,
        psd_linear: f64,
    }
    let rows: Vec<Row> = read_rows(path)?;
    PsdTrace::new(rows.iter().map(|r| r.freq_Hz).collect(), rows.iter().map(|r| r.psd_linear).collect(), enbw)
        .map_err(|e| bad(e.to_string()))
}

pub fn write_trace(path: &Path, trace: &PsdTrace) -> Result<(), CliError> {
    let mut text = format!("# enbw_Hz={}\nfreq_Hz,psd_linear\n", trace.enbw);
    for (f, p) in trace.freq.iter().zip(&trace.psd) {
        text.push_str(&format!("{f},{p}\n"));
    }
    write_text(path, &text)
}

/// Reads phase-modulator calibration points as `(P_PM [W], C/S1)`. Power is
/// given in a `power_W` or `power_dBm` column, the ratio in `ratio`.
pub fn read_pm_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let bad = |msg: String| CliError::input(format!("{}: {msg}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ratio = col("ratio").ok_or_else(|| bad("missing 'ratio' column".into()))?;
    let (power, dbm) = match (col("power_W"), col("power_dBm")) {
        (Some(c), None) => (c, false),
        (None, Some(c)) => (c, true),
        _ => return Err(bad("need exactly one of 'power_W' or 'power_dBm'".into())),
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |c: usize| -> Result<f64, CliError> {
            rec.get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", i + 2)))
        };
        let p = num(power)?;
        let p = if dbm { cshape_core::calibration::dbm_to_watts(p) } else { p };
        out.push((p, num(ratio)?));
    }
    Ok(out)
}

pub fn write_pm_points(path: &Path, points: &[(f64, f64)]) -> Result<(), CliError> {
    let mut text = String::from("power_W,ratio\n");
    for (p, r) in points {
        text.push_str(&format!("{p},{r}\n"));
    }
    write_text(path, &text)
}

/// One row of a thermometry record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub group: String,
    pub pulses: u64,
    pub clicks_blue: u64,
    pub clicks_red: u64,
    pub dark_per_pulse: f64,
    pub leak_blue_per_pulse: f64,
    pub leak_red_per_pulse: f64,
}

impl RecordRow {
    pub fn counts(&self) -> SidebandCounts {
        SidebandCounts {
            pulses: self.pulses,
            clicks_blue: self.clicks_blue,
            clicks_red: self.clicks_red,
            dark_per_pulse: self.dark_per_pulse,
            leak_blue_per_pulse: self.leak_blue_per_pulse,
            leak_red_per_pulse: self.leak_red_per_pulse,
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RecordRow>, CliError> {
    read_rows(path)
}

pub fn write_records(path: &Path, rows: &[RecordRow]) -> Result<(), CliError> {
    write_rows(path, rows)
}

// ---------------------------------------------------------------------------
// Raster

/// Binary greymap of the material grid: solid 255, filler 0. The first image
/// row is the top of the cell (largest y).
pub fn write_pgm(path: &Path, grid: &MaterialGrid) -> Result<(), CliError> {
    create_parent(path)?;
    let mut bytes = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            bytes.push(if grid.material_index[grid.index(i, j)] == SOLID { 255 } else { 0 });
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
