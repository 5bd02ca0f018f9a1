//! Post-processing of solver output: symmetry parities, region energy
//! fractions, band gaps and anti-crossings.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::bloch::{BandStructure, BlochMode, MassOperator, PlaneWaveBasis};
use crate::geometry::{MaterialGrid, Region};
use crate::symmetry::SymmetryOp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModeError {
    #[error("{op} parity needs k on a symmetric point, got k·a/2π = ({kx}, {ky})")]
    InteriorWavevector { op: &'static str, kx: f64, ky: f64 },
    #[error("mode has {coefficients} coefficients, basis expects {expected}")]
    BasisMismatch { coefficients: usize, expected: usize },
    #[error("grid cell {grid:?} differs from basis cell {basis:?}")]
    CellMismatch { grid: [f64; 2], basis: [f64; 2] },
    #[error("parity threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("band {band} out of range ({n_bands} bands)")]
    BandOutOfRange { band: usize, n_bands: usize },
    #[error("k index {index} out of range ({len} points)")]
    KOutOfRange { index: usize, len: usize },
    #[error("classification has {got} entries, band structure has {expected} modes")]
    ClassCountMismatch { got: usize, expected: usize },
}

/// Default `τ` for parity labels.
pub const DEFAULT_PARITY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ParityLabel {
    Even,
    Odd,
    Mixed,
}

impl ParityLabel {
    pub fn from_score(score: f64, tau: f64) -> Self {
        if score > tau {
            ParityLabel::Even
        } else if score < -tau {
            ParityLabel::Odd
        } else {
            ParityLabel::Mixed
        }
    }

    /// `+1`, `-1` or `mixed`.
    pub fn as_str(self) -> &'static str {
        match self {
            ParityLabel::Even => "+1",
            ParityLabel::Odd => "-1",
            ParityLabel::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+1" | "+" | "1" | "even" => Some(ParityLabel::Even),
            "-1" | "-" | "odd" => Some(ParityLabel::Odd),
            "mixed" | "0" => Some(ParityLabel::Mixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParityScore {
    pub op: SymmetryOp,
    pub score: f64,
    pub label: ParityLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionFractions {
    pub cshape: f64,
    pub interface: f64,
    pub snowflake: f64,
}

impl RegionFractions {
    pub fn get(&self, r: Region) -> f64 {
        match r {
            Region::CShape => self.cshape,
            Region::Interface => self.interface,
            Region::Snowflake => self.snowflake,
        }
    }

    /// Region holding the largest share; ties go to the first in
    /// [`Region::ALL`] order.
    pub fn dominant(&self) -> Region {
        let mut best = Region::CShape;
        for r in Region::ALL {
            if self.get(r) > self.get(best) {
                best = r;
            }
        }
        best
    }
}

/// Displacement sampled at pixel centres, stored like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub nx: usize,
    pub ny: usize,
    pub ux: Vec<Complex64>,
    pub uy: Vec<Complex64>,
}

fn check_compat(mode: &BlochMode, grid: &MaterialGrid, basis: &PlaneWaveBasis) -> Result<(), ModeError> {
    if mode.coefficients.len() != 2 * basis.len() {
        return Err(ModeError::BasisMismatch {
            coefficients: mode.coefficients.len(),
            expected: 2 * basis.len(),
        });
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !(close(grid.cell[0], basis.cell[0]) && close(grid.cell[1], basis.cell[1])) {
        return Err(ModeError::CellMismatch {
            grid: grid.cell,
            basis: basis.cell,
        });
    }
    Ok(())
}

/// Evaluates the full Bloch field `Σ_G u_G e^{i(k+G)·x}` at every pixel centre.
pub fn reconstruct_field(mode: &BlochMode, grid: &MaterialGrid, basis: &PlaneWaveBasis) -> Result<ModeField, ModeError> {
    check_compat(mode, grid, basis)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let [ex, ey] = basis.cutoff.extent();
    let (ex, ey) = (ex as i32, ey as i32);
    let wx = (2 * ex + 1) as usize;
    let wy = (2 * ey + 1) as usize;
    let table = |n: usize, w: usize, e: i32, k: f64, a: f64, pos: &dyn Fn(usize) -> f64| {
        let mut t = vec![Complex64::new(0.0, 0.0); w * n];
        for m in -e..=e {
            let q = k + 2.0 * PI * m as f64 / a;
            for i in 0..n {
                let (s, c) = libm::sincos(q * pos(i));
                t[(m + e) as usize * n + i] = Complex64::new(c, s);
            }
        }
        t
    };
    let tx = table(nx, wx, ex, mode.k.kx, grid.cell[0], &|i| grid.x(i));
    let ty = table(ny, wy, ey, mode.k.ky, grid.cell[1], &|j| grid.y(j));

    // Partial sums over m_x for each m_y row.
    let zero = Complex64::new(0.0, 0.0);
    let mut ax = vec![zero; wy * nx];
    let mut ay = vec![zero; wy * nx];
    for (a, m) in basis.indices.iter().enumerate() {
        let (cx, cy) = (mode.coefficients[2 * a], mode.coefficients[2 * a + 1]);
        let row = (m[1] + ey) as usize * nx;
        let ph = &tx[(m[0] + ex) as usize * nx..][..nx];
        for i in 0..nx {
            ax[row + i] += cx * ph[i];
            ay[row + i] += cy * ph[i];
        }
    }
    let mut ux = vec![zero; nx * ny];
    let mut uy = vec![zero; nx * ny];
    for my in 0..wy {
        let (rx, ry) = (&ax[my * nx..][..nx], &ay[my * nx..][..nx]);
        if rx.iter().chain(ry).all(|z| *z == zero) {
            continue;
        }
        for j in 0..ny {
            let p = ty[my * ny + j];
            let (ox, oy) = (&mut ux[j * nx..][..nx], &mut uy[j * nx..][..nx]);
            for i in 0..nx {
                ox[i] += rx[i] * p;
                oy[i] += ry[i] * p;
            }
        }
    }
    Ok(ModeField { nx, ny, ux, uy })
}

/// `Re⟨u, D (u∘S⁻¹)⟩ / ⟨u, u⟩` over pixel centres. The pixel map is exact, so
/// no interpolation enters.
pub fn field_parity(field: &ModeField, op: SymmetryOp) -> f64 {
    let d = op.vector_rep();
    let (nx, ny) = (field.nx, field.ny);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let p = j * nx + i;
            let (si, sj) = op.pixel_map(i, j, nx, ny);
            let q = sj * nx + si;
            num += (field.ux[p].conj() * field.ux[q]).re * d[0] + (field.uy[p].conj() * field.uy[q]).re * d[1];
            den += field.ux[p].norm_sqr() + field.uy[p].norm_sqr();
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn check_wavevector(mode: &BlochMode, basis: &PlaneWaveBasis, op: SymmetryOp) -> Result<(), ModeError> {
    let f = mode.k.lattice_fraction(basis.cell);
    // Mirrors need the flipped component at 0 or the zone edge; σ_x accepts
    // only the x-axis check, the others need k_y handled too.
    let on_symmetric = |v: f64| {
        let t = 2.0 * v;
        (t - libm::round(t)).abs() <= 1e-9 * t.abs().max(1.0)
    };
    let ok = match op {
        SymmetryOp::SigmaX => on_symmetric(f[0]),
        SymmetryOp::SigmaY => on_symmetric(f[1]),
        SymmetryOp::RzPi => on_symmetric(f[0]) && on_symmetric(f[1]),
    };
    if ok {
        Ok(())
    } else {
        Err(ModeError::InteriorWavevector {
            op: op.name(),
            kx: f[0],
            ky: f[1],
        })
    }
}

/// Parity of a mode under `op`, evaluated on the reconstructed real-space field.
pub fn parity_score(
    mode: &BlochMode,
    grid: &MaterialGrid,
    basis: &PlaneWaveBasis,
    op: SymmetryOp,
    tau: f64,
) -> Result<ParityScore, ModeError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(ModeError::BadThreshold(tau));
    }
    check_wavevector(mode, basis, op)?;
    let field = reconstruct_field(mode, grid, basis)?;
    let score = field_parity(&field, op);
    Ok(ParityScore {
        op,
        score,
        label: ParityLabel::from_score(score, tau),
    })
}

/// `Σ_r ρ|u|² / Σ ρ|u|²` over the pixels of each region.
pub fn field_region_fractions(field: &ModeField, grid: &MaterialGrid) -> RegionFractions {
    let mut acc = [0.0; 3];
    for p in 0..grid.len() {
        let e = grid.density(p) * (field.ux[p].norm_sqr() + field.uy[p].norm_sqr());
        acc[grid.region[p].index()] += e;
    }
    let total: f64 = acc.iter().sum();
    if total == 0.0 {
        return RegionFractions {
            cshape: 0.0,
            interface: 0.0,
            snowflake: 0.0,
        };
    }
    RegionFractions {
        cshape: acc[0] / total,
        interface: acc[1] / total,
        snowflake: acc[2] / total,
    }
}

pub fn region_fractions(mode: &BlochMode, grid: &MaterialGrid, basis: &PlaneWaveBasis) -> Result<RegionFractions, ModeError> {
    Ok(field_region_fractions(&reconstruct_field(mode, grid, basis)?, grid))
}

/// Parities (where the wavevector allows them) and region fractions of one mode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifiedMode {
    pub band_index: usize,
    pub frequency_hz: f64,
    /// Indexed like [`SymmetryOp::ALL`]; `None` where the operation does not
    /// map the wavevector onto itself.
    pub parities: [Option<ParityScore>; 3],
    pub fractions: RegionFractions,
}

impl ClassifiedMode {
    pub fn parity(&self, op: SymmetryOp) -> Option<&ParityScore> {
        self.parities[op as usize].as_ref()
    }
}

pub fn classify_mode(mode: &BlochMode, grid: &MaterialGrid, basis: &PlaneWaveBasis, tau: f64) -> Result<ClassifiedMode, ModeError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(ModeError::BadThreshold(tau));
    }
    let field = reconstruct_field(mode, grid, basis)?;
    let mut parities = [None; 3];
    for op in SymmetryOp::ALL {
        if check_wavevector(mode, basis, op).is_ok() {
            let score = field_parity(&field, op);
            parities[op as usize] = Some(ParityScore {
                op,
                score,
                label: ParityLabel::from_score(score, tau),
            });
        }
    }
    Ok(ClassifiedMode {
        band_index: mode.band_index,
        frequency_hz: mode.frequency_hz(),
        parities,
        fractions: field_region_fractions(&field, grid),
    })
}

/// Classifies every mode of a band structure, in storage order.
pub fn classify(bands: &BandStructure, grid: &MaterialGrid, tau: f64) -> Result<Vec<ClassifiedMode>, ModeError> {
    let basis = bands.basis();
    let one = |m: &BlochMode| classify_mode(m, grid, basis, tau);
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        bands.modes.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        bands.modes.iter().map(one).collect()
    }
}

// ---------------------------------------------------------------------------
// Gaps

/// Which modes count as bands when looking for gaps.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeFilter {
    /// Every listed parity must carry the given label.
    pub parity: Vec<(SymmetryOp, ParityLabel)>,
    /// The listed region must hold the largest energy share.
    pub dominant_region: Option<Region>,
    /// Additional lower bound on that region's share.
    pub min_fraction: f64,
}

impl ModeFilter {
    pub fn parity(op: SymmetryOp, label: ParityLabel) -> Self {
        Self {
            parity: vec![(op, label)],
            ..Default::default()
        }
    }

    pub fn accepts(&self, m: &ClassifiedMode) -> bool {
        let parity_ok = self
            .parity
            .iter()
            .all(|&(op, label)| m.parity(op).is_some_and(|p| p.label == label));
        let region_ok = self
            .dominant_region
            .map_or(true, |r| m.fractions.dominant() == r && m.fractions.get(r) >= self.min_fraction);
        parity_ok && region_ok
    }

    /// Parses `sy=+1,sx=-1,region=cshape`.
    pub fn parse(spec: &str) -> Option<Self> {
        let mut f = ModeFilter::default();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part.split_once('=')?;
            let (key, value) = (key.trim(), value.trim());
            if key == "region" {
                f.dominant_region = Some(match value {
                    "cshape" => Region::CShape,
                    "interface" => Region::Interface,
                    "snowflake" => Region::Snowflake,
                    _ => return None,
                });
            } else if key == "min_fraction" {
                f.min_fraction = value.parse().ok()?;
            } else {
                f.parity.push((SymmetryOp::parse(key)?, ParityLabel::parse(value)?));
            }
        }
        Some(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum GapKind {
    /// No band of any class enters the interval.
    Full,
    /// Only bands rejected by the filter enter the interval.
    Apparent,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapInterval {
    /// Hz.
    pub lo: f64,
    /// Hz.
    pub hi: f64,
    pub parity_filter: Option<ModeFilter>,
    pub kind: GapKind,
}

impl GapInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Gaps between envelopes of the selected bands.
///
/// `freqs` holds `n_bands` ascending frequencies per sample point, point
/// major; `selected` marks the modes that count as bands. At each point the
/// selected modes are ranked, and each rank's frequency range over all
/// points forms an envelope. Gaps are the open intervals between envelopes,
/// limited to frequencies below the lowest top band so that truncation does
/// not fake a gap. A gap is apparent when an unselected mode falls inside.
pub fn find_gaps_in(freqs: &[f64], n_bands: usize, selected: &[bool], filter: Option<&ModeFilter>) -> Vec<GapInterval> {
    if n_bands == 0 || freqs.is_empty() {
        return Vec::new();
    }
    let n_points = freqs.len() / n_bands;
    let ceiling = (0..n_points)
        .map(|p| freqs[p * n_bands + n_bands - 1])
        .fold(f64::INFINITY, f64::min);

    let mut envelopes: Vec<(f64, f64)> = Vec::new();
    for p in 0..n_points {
        let mut rank = 0;
        for b in 0..n_bands {
            let i = p * n_bands + b;
            if !selected[i] {
                continue;
            }
            let f = freqs[i];
            if rank == envelopes.len() {
                envelopes.push((f, f));
            } else {
                let e = &mut envelopes[rank];
                e.0 = e.0.min(f);
                e.1 = e.1.max(f);
            }
            rank += 1;
        }
    }
    // Merge envelopes into occupied intervals.
    envelopes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut occupied: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in envelopes {
        match occupied.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => occupied.push((lo, hi)),
        }
    }
    let mut gaps = Vec::new();
    for w in occupied.windows(2) {
        let (lo, hi) = (w[0].1, w[1].0);
        if !(hi > lo) || hi > ceiling {
            continue;
        }
        let crossed = freqs
            .iter()
            .zip(selected)
            .any(|(&f, &s)| !s && f > lo && f < hi);
        gaps.push(GapInterval {
            lo,
            hi,
            parity_filter: filter.cloned(),
            kind: if crossed { GapKind::Apparent } else { GapKind::Full },
        });
    }
    gaps
}

/// Gaps of a classified band structure; `None` selects every mode.
pub fn find_gaps(bands: &BandStructure, classes: &[ClassifiedMode], filter: Option<&ModeFilter>) -> Result<Vec<GapInterval>, ModeError> {
    if classes.len() != bands.modes.len() {
        return Err(ModeError::ClassCountMismatch {
            got: classes.len(),
            expected: bands.modes.len(),
        });
    }
    let freqs: Vec<f64> = bands.modes.iter().map(BlochMode::frequency_hz).collect();
    let selected: Vec<bool> = classes.iter().map(|c| filter.map_or(true, |f| f.accepts(c))).collect();
    Ok(find_gaps_in(&freqs, bands.n_bands, &selected, filter))
}

// ---------------------------------------------------------------------------
// Tracking and anti-crossings

/// Band assignment along a sweep: `ordinal[s][b]` is the frequency ordinal at
/// step `s` of the band that starts as ordinal `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandTracks {
    pub ordinal: Vec<Vec<usize>>,
}

impl BandTracks {
    pub fn track(&self, band: usize) -> Vec<usize> {
        self.ordinal.iter().map(|o| o[band]).collect()
    }
}

/// One-to-one matching of `overlap[i][j]` (row `i` at the current step,
/// column `j` at the next) by repeatedly taking the largest remaining entry.
/// Ties are broken by the smallest `(i, j)`.
pub fn greedy_match(overlap: &[Vec<f64>]) -> Vec<usize> {
    let n = overlap.len();
    let mut entries: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    entries.sort_by(|&(a, b), &(c, d)| overlap[c][d].total_cmp(&overlap[a][b]).then((a, b).cmp(&(c, d))));
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; n];
    let mut out = vec![usize::MAX; n];
    for (i, j) in entries {
        if !row_done[i] && !col_done[j] {
            out[i] = j;
            row_done[i] = true;
            col_done[j] = true;
        }
    }
    out
}

/// Tracks bands by modal overlap. `steps[s]` holds the normalized vectors at
/// step `s`; `inner(u, v)` is the overlap inner product.
pub fn track_vectors(steps: &[Vec<Vec<Complex64>>], inner: impl Fn(&[Complex64], &[Complex64]) -> Complex64) -> BandTracks {
    let Some(first) = steps.first() else {
        return BandTracks { ordinal: Vec::new() };
    };
    let n = first.len();
    let mut current: Vec<usize> = (0..n).collect();
    let mut ordinal = vec![current.clone()];
    for w in steps.windows(2) {
        let overlap: Vec<Vec<f64>> = w[0]
            .iter()
            .map(|u| w[1].iter().map(|v| inner(u, v).norm()).collect())
            .collect();
        let step = greedy_match(&overlap);
        current = current.iter().map(|&o| step[o]).collect();
        ordinal.push(current.clone());
    }
    BandTracks { ordinal }
}

/// Tracks the bands of a θ-sweep at one k-point using `|⟨u_i(θ), M u_j(θ')⟩|`.
pub fn track_bands_theta(bands: &BandStructure, k_index: usize) -> Result<BandTracks, ModeError> {
    if k_index >= bands.kpoints.len() {
        return Err(ModeError::KOutOfRange {
            index: k_index,
            len: bands.kpoints.len(),
        });
    }
    Ok(track_with_mass(&bands.mass, (0..bands.thetas.len()).map(|t| bands.modes_at(t, k_index))))
}

/// Tracks the bands of a k-sweep at one θ.
pub fn track_bands_k(bands: &BandStructure, theta_index: usize) -> BandTracks {
    track_with_mass(&bands.mass, (0..bands.kpoints.len()).map(|k| bands.modes_at(theta_index, k)))
}

fn track_with_mass<'a>(mass: &MassOperator, steps: impl Iterator<Item = &'a [BlochMode]>) -> BandTracks {
    // M is shared by all steps, so apply it once per mode.
    let steps: Vec<&[BlochMode]> = steps.collect();
    let applied: Vec<Vec<Vec<Complex64>>> = steps
        .iter()
        .map(|modes| modes.iter().map(|m| mass.apply(&m.coefficients)).collect())
        .collect();
    let n = steps.first().map_or(0, |s| s.len());
    let mut current: Vec<usize> = (0..n).collect();
    let mut ordinal = vec![current.clone()];
    for s in 1..steps.len() {
        let overlap: Vec<Vec<f64>> = applied[s - 1]
            .iter()
            .map(|mu| {
                steps[s]
                    .iter()
                    .map(|v| crate::bloch::dot(mu, &v.coefficients).norm())
                    .collect()
            })
            .collect();
        let step = greedy_match(&overlap);
        current = current.iter().map(|&o| step[o]).collect();
        ordinal.push(current.clone());
    }
    BandTracks { ordinal }
}

/// Closest approach of two tracked bands along a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AntiCrossing {
    /// Axis value at the minimum (θ in rad for θ-sweeps).
    pub theta_min: f64,
    /// Minimum separation, Hz; zero when the bands cross between samples.
    pub gap_min: f64,
    /// Whether the separation changes sign (a true crossing).
    pub crosses: bool,
}

/// Minimum of `|f_b − f_a|` over samples. A sign change between neighbouring
/// samples is a crossing: the gap is zero at the linearly interpolated axis
/// position.
pub fn closest_approach(axis: &[f64], fa: &[f64], fb: &[f64]) -> AntiCrossing {
    let d: Vec<f64> = fa.iter().zip(fb).map(|(a, b)| b - a).collect();
    for i in 1..d.len() {
        if d[i - 1] == 0.0 {
            return AntiCrossing {
                theta_min: axis[i - 1],
                gap_min: 0.0,
                crosses: true,
            };
        }
        if d[i - 1].signum() != d[i].signum() && d[i] != 0.0 {
            let t = d[i - 1] / (d[i - 1] - d[i]);
            return AntiCrossing {
                theta_min: axis[i - 1] + t * (axis[i] - axis[i - 1]),
                gap_min: 0.0,
                crosses: true,
            };
        }
    }
    let (i, g) = d
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    AntiCrossing {
        theta_min: axis.get(i).copied().unwrap_or(0.0),
        gap_min: g,
        crosses: false,
    }
}

/// Anti-crossing of bands `band_a` and `band_b` (ordinals at the first θ)
/// along the θ axis of `bands` at k-point `k_index`, following each band by
/// modal overlap.
pub fn detect_anticrossing(bands: &BandStructure, band_a: usize, band_b: usize, k_index: usize) -> Result<AntiCrossing, ModeError> {
    for b in [band_a, band_b] {
        if b >= bands.n_bands {
            return Err(ModeError::BandOutOfRange {
                band: b,
                n_bands: bands.n_bands,
            });
        }
    }
    let tracks = track_bands_theta(bands, k_index)?;
    let series = |band: usize| -> Vec<f64> {
        tracks
            .track(band)
            .iter()
            .enumerate()
            .map(|(t, &o)| bands.frequency(t, k_index, o))
            .collect()
    };
    Ok(closest_approach(&bands.thetas, &series(band_a), &series(band_b)))
}

/// Two R_z-even bands of opposite σ_y parity whose tracks cross, one held
/// mainly in the C-shape strip and the other in the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossingPair {
    /// Ordinal at the first θ of the band that is C-shape dominant at the crossing.
    pub band_cshape: usize,
    /// Ordinal at the first θ of the interface-dominant band.
    pub band_interface: usize,
    pub crossing: AntiCrossing,
    /// Smaller of the two dominant shares at the sample nearest the crossing.
    pub dominance: f64,
}

/// Candidate C-shape/interface pairs in a θ-sweep at `k_index`, best first.
///
/// Meant for a sweep with C₁₆ forced to zero, where σ_y stays a good
/// quantum number and the two bands cross instead of repelling. A band
/// qualifies when it keeps R_z = +1 and one σ_y label along its whole track.
/// Pairs are ranked by [`CrossingPair::dominance`], then by ordinals.
pub fn crossing_pairs(bands: &BandStructure, classes: &[ClassifiedMode], k_index: usize) -> Result<Vec<CrossingPair>, ModeError> {
    if classes.len() != bands.modes.len() {
        return Err(ModeError::ClassCountMismatch {
            got: classes.len(),
            expected: bands.modes.len(),
        });
    }
    let tracks = track_bands_theta(bands, k_index)?;
    let nk = bands.kpoints.len();
    let class_at = |t: usize, o: usize| &classes[(t * nk + k_index) * bands.n_bands + o];
    let label = |t: usize, o: usize, op: SymmetryOp| class_at(t, o).parity(op).map(|p| p.label);

    let mut eligible: Vec<(usize, ParityLabel)> = Vec::new();
    for b in 0..bands.n_bands {
        let track = tracks.track(b);
        let sy = label(0, track[0], SymmetryOp::SigmaY);
        let keeps = track.iter().enumerate().all(|(t, &o)| {
            label(t, o, SymmetryOp::RzPi) == Some(ParityLabel::Even) && label(t, o, SymmetryOp::SigmaY) == sy
        });
        if let Some(sy @ (ParityLabel::Even | ParityLabel::Odd)) = sy {
            if keeps {
                eligible.push((b, sy));
            }
        }
    }

    let series = |b: usize| -> Vec<f64> {
        tracks
            .track(b)
            .iter()
            .enumerate()
            .map(|(t, &o)| bands.frequency(t, k_index, o))
            .collect()
    };
    let mut out = Vec::new();
    for (i, &(a, sa)) in eligible.iter().enumerate() {
        for &(b, sb) in &eligible[i + 1..] {
            if sa == sb {
                continue;
            }
            let crossing = closest_approach(&bands.thetas, &series(a), &series(b));
            if !crossing.crosses {
                continue;
            }
            let t = nearest(&bands.thetas, crossing.theta_min);
            let fa = class_at(t, tracks.ordinal[t][a]).fractions;
            let fb = class_at(t, tracks.ordinal[t][b]).fractions;
            let (c, f, fc, fi) = match (fa.dominant(), fb.dominant()) {
                (Region::CShape, Region::Interface) => (a, b, fa, fb),
                (Region::Interface, Region::CShape) => (b, a, fb, fa),
                _ => continue,
            };
            out.push(CrossingPair {
                band_cshape: c,
                band_interface: f,
                crossing,
                dominance: fc.cshape.min(fi.interface),
            });
        }
    }
    out.sort_by(|x, y| {
        y.dominance
            .total_cmp(&x.dominance)
            .then((x.band_cshape, x.band_interface).cmp(&(y.band_cshape, y.band_interface)))
    });
    Ok(out)
}

fn nearest(axis: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, &a) in axis.iter().enumerate() {
        if (a - v).abs() < (axis[best] - v).abs() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_threshold() {
        assert_eq!(ParityLabel::from_score(0.95, 0.9), ParityLabel::Even);
        assert_eq!(ParityLabel::from_score(-0.95, 0.9), ParityLabel::Odd);
        assert_eq!(ParityLabel::from_score(0.5, 0.9), ParityLabel::Mixed);
    }

    #[test]
    fn two_flat_bands_one_full_gap() {
        let freqs = [1e9, 2e9, 3e9, 1e9, 2e9, 3e9];
        let gaps = find_gaps_in(&freqs, 3, &[true; 6], None);
        assert_eq!(gaps.len(), 2);
        assert_eq!((gaps[0].lo, gaps[0].hi, gaps[0].kind), (1e9, 2e9, GapKind::Full));
    }

    #[test]
    fn ceiling_suppresses_truncated_gap() {
        // The second point only computed up to 1.2, so (1, 3) is not known to be empty there.
        let freqs = [1.0, 3.0, 1.0, 1.2];
        assert!(find_gaps_in(&freqs, 2, &[true, true, true, false], None).is_empty());
    }

    #[test]
    fn greedy_matching_is_one_to_one() {
        let o = vec![vec![0.9, 0.8, 0.0], vec![0.95, 0.1, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(greedy_match(&o), vec![1, 0, 2]);
    }

    #[test]
    fn crossing_detected_by_sign_change() {
        let axis = [0.0, 1.0, 2.0];
        let a = closest_approach(&axis, &[0.0, 1.0, 2.0], &[2.0, 1.5, 0.0]);
        assert!(a.crosses);
        assert_eq!(a.gap_min, 0.0);
        assert!(a.theta_min > 1.0 && a.theta_min < 2.0);
    }

    #[test]
    fn filter_parsing() {
        let f = ModeFilter::parse("sy=+1,region=cshape").unwrap();
        assert_eq!(f.parity, vec![(SymmetryOp::SigmaY, ParityLabel::Even)]);
        assert_eq!(f.dominant_region, Some(Region::CShape));
        assert!(ModeFilter::parse("bogus=+1").is_none());
    }
}
