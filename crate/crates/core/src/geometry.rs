//! Unit-cell geometry: C-shape and snowflake holes, the defect taper, and
//! rasterization onto a periodic material grid.
//!
//! Lengths are metres. Cell coordinates are centred: the cell spans
//! `[-a_x/2, a_x/2] × [-a_y/2, a_y/2]`, the waveguide axis is `y = 0` and the
//! C-shape holes sit at `x = 0`. Pixel centres are placed symmetrically about
//! the origin so that the mirror maps `x → -x` and `y → -y` send pixel centres
//! onto pixel centres bit-exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::materials::ElasticMaterial;
use crate::NM;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("`{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("taper half-count n_d must be at least 1")]
    ZeroDefectCount,
    #[error("C-shape pad length {l_pad:e} m leaves no airgap in arm length {l_arm:e} m")]
    NoAirgap { l_arm: f64, l_pad: f64 },
    #[error("C-shape hole width {width:e} m does not fit in cell width {w_cell:e} m")]
    HoleWiderThanCell { width: f64, w_cell: f64 },
    #[error("snowflake arm width {w_snow:e} m must be smaller than its length {l_snow:e} m")]
    SnowflakeArmTooWide { l_snow: f64, w_snow: f64 },
    #[error("snowflake length {l_snow:e} m exceeds the lattice constant {a_snow:e} m")]
    SnowflakeTooLong { l_snow: f64, a_snow: f64 },
    #[error("raster resolution {nx}x{ny} below the 8x8 minimum")]
    ResolutionTooLow { nx: usize, ny: usize },
    #[error("unit cell has zero area")]
    DegenerateCell,
}

fn positive(name: &'static str, value: f64) -> Result<f64, GeometryError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(GeometryError::NonPositive { name, value })
    }
}

// ---------------------------------------------------------------------------
// Parameters

/// C-shape cell dimensions (metres).
///
/// Each C hole is a `(w_pad + 2 w_arm) × l_arm` rectangle with a `w_pad × l_pad`
/// solid pad re-inserted from the waveguide side, so the opening of the C faces
/// the central beam of thickness `l_wav`. The airgap is `l_arm - l_pad`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CShapeParams {
    pub l_wav: f64,
    pub w_cell: f64,
    pub l_arm: f64,
    pub w_arm: f64,
    pub l_pad: f64,
    pub w_pad: f64,
}

impl CShapeParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        positive("lWav", self.l_wav)?;
        positive("wCell", self.w_cell)?;
        positive("lArm", self.l_arm)?;
        positive("wArm", self.w_arm)?;
        positive("lPad", self.l_pad)?;
        positive("wPad", self.w_pad)?;
        if self.l_pad >= self.l_arm {
            return Err(GeometryError::NoAirgap {
                l_arm: self.l_arm,
                l_pad: self.l_pad,
            });
        }
        let width = self.hole_width();
        if width >= self.w_cell {
            return Err(GeometryError::HoleWiderThanCell { width, w_cell: self.w_cell });
        }
        Ok(())
    }

    /// Outer width of one C hole.
    pub fn hole_width(&self) -> f64 {
        self.w_pad + 2.0 * self.w_arm
    }

    /// Distance from the waveguide axis to the outer edge of the C holes.
    pub fn strip_half_height(&self) -> f64 {
        0.5 * self.l_wav + self.l_arm
    }
}

/// Snowflake hole dimensions (metres): lattice constant, arm length and width.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnowflakeParams {
    pub a_snow: f64,
    pub l_snow: f64,
    pub w_snow: f64,
}

impl SnowflakeParams {
    /// Snowflakes of the fabricated reference device.
    pub fn reference() -> Self {
        Self {
            a_snow: 500.0 * NM,
            l_snow: 205.0 * NM,
            w_snow: 82.0 * NM,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        positive("aSnow", self.a_snow)?;
        positive("lSnow", self.l_snow)?;
        positive("wSnow", self.w_snow)?;
        if self.w_snow >= self.l_snow {
            return Err(GeometryError::SnowflakeArmTooWide {
                l_snow: self.l_snow,
                w_snow: self.w_snow,
            });
        }
        if self.l_snow >= self.a_snow {
            return Err(GeometryError::SnowflakeTooLong {
                l_snow: self.l_snow,
                a_snow: self.a_snow,
            });
        }
        Ok(())
    }

    /// Vertical distance between snowflake rows of the triangular lattice.
    pub fn row_pitch(&self) -> f64 {
        0.5 * libm::sqrt(3.0) * self.a_snow
    }
}

// ---------------------------------------------------------------------------
// Taper

/// One tapered parameter: its value at the central defect (`par_min`), at the
/// mirror cells (`par_max`), and the half-count of defect cells.
///
/// `par_min > par_max` is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaperProfile {
    pub par_min: f64,
    pub par_max: f64,
    pub n_d: u32,
}

/// Sign of the Gaussian exponent in the taper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum TaperExponent {
    /// `exp(-9 (|n| - n_d)² / (2 n_d²))`: reaches `par_max` at the mirror and
    /// approaches `par_min` at the centre.
    #[default]
    Corrected,
    /// Positive exponent; does not reach `par_max` at the mirror.
    AsPrinted,
}

/// Parameter value of defect cell `n` with the corrected exponent.
pub fn taper_parameter(n: i32, profile: &TaperProfile) -> Result<f64, GeometryError> {
    taper_parameter_with(n, profile, TaperExponent::Corrected)
}

/// Parameter value of cell `n`. Cells with `|n| > n_d` belong to the mirror and
/// get `par_max`.
pub fn taper_parameter_with(n: i32, profile: &TaperProfile, exponent: TaperExponent) -> Result<f64, GeometryError> {
    if profile.n_d == 0 {
        return Err(GeometryError::ZeroDefectCount);
    }
    let nd = profile.n_d as f64;
    let abs_n = n.unsigned_abs() as f64;
    if abs_n > nd {
        return Ok(profile.par_max);
    }
    let d = abs_n - nd;
    let e = 9.0 * d * d / (2.0 * nd * nd);
    let w = match exponent {
        TaperExponent::Corrected => libm::exp(-e),
        TaperExponent::AsPrinted => libm::exp(e),
    };
    // Written relative to par_max so that w == 1 returns par_max exactly.
    Ok(profile.par_max + (profile.par_min - profile.par_max) * (1.0 - w))
}

/// The C-shape parameter set along the defect: fixed `l_wav` and `w_cell`,
/// tapered arm and pad dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CShapeTaper {
    pub l_wav: f64,
    pub w_cell: f64,
    pub l_arm: TaperProfile,
    pub w_arm: TaperProfile,
    pub l_pad: TaperProfile,
    pub w_pad: TaperProfile,
    #[cfg_attr(feature = "serde", serde(default))]
    pub exponent: TaperExponent,
}

impl CShapeTaper {
    /// The fabricated reference device (lengths in metres, `n_d = 7`).
    pub fn reference() -> Self {
        let p = |min: f64, max: f64| TaperProfile {
            par_min: min * NM,
            par_max: max * NM,
            n_d: 7,
        };
        Self {
            l_wav: 175.0 * NM,
            w_cell: 512.5 * NM,
            l_arm: p(195.5, 207.5),
            w_arm: p(83.5, 106.0),
            l_pad: p(114.5, 110.5),
            w_pad: p(182.0, 192.0),
            exponent: TaperExponent::Corrected,
        }
    }

    /// Dimensions of cell `n` (0 is the central defect cell).
    pub fn cell_params(&self, n: i32) -> Result<CShapeParams, GeometryError> {
        let at = |p: &TaperProfile| taper_parameter_with(n, p, self.exponent);
        let params = CShapeParams {
            l_wav: self.l_wav,
            w_cell: self.w_cell,
            l_arm: at(&self.l_arm)?,
            w_arm: at(&self.w_arm)?,
            l_pad: at(&self.l_pad)?,
            w_pad: at(&self.w_pad)?,
        };
        params.validate()?;
        Ok(params)
    }

    /// Mirror-cell dimensions.
    pub fn mirror_params(&self) -> Result<CShapeParams, GeometryError> {
        self.cell_params(self.l_arm.n_d as i32)
    }
}

// ---------------------------------------------------------------------------
// Primitives

/// Which part of the waveguide cell a shape or pixel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
#[repr(u8)]
pub enum Region {
    CShape = 0,
    Interface = 1,
    Snowflake = 2,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::CShape, Region::Interface, Region::Snowflake];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::CShape => "cshape",
            Region::Interface => "interface",
            Region::Snowflake => "snowflake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Role {
    /// Painted with the filler (inclusion) material.
    Hole,
    /// Painted with the solid.
    Solid,
}

/// Closed convex or simple shapes used to build holes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Primitive {
    /// Axis-aligned rectangle.
    Rect { center: [f64; 2], half: [f64; 2] },
    /// Rectangle of length `2 half_len` along the unit vector `axis`.
    Bar {
        center: [f64; 2],
        axis: [f64; 2],
        half_len: f64,
        half_wid: f64,
    },
    /// Simple polygon, even-odd rule.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Primitive {
    /// Closed point-membership test. Rectangles and bars test symmetric
    /// absolute distances so mirrored shapes give mirrored answers exactly.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Primitive::Rect { center, half } => {
                (p[0] - center[0]).abs() <= half[0] && (p[1] - center[1]).abs() <= half[1]
            }
            Primitive::Bar {
                center,
                axis,
                half_len,
                half_wid,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let along = dx * axis[0] + dy * axis[1];
                let across = dy * axis[0] - dx * axis[1];
                along.abs() <= *half_len && across.abs() <= *half_wid
            }
            Primitive::Polygon { vertices } => {
                let n = vertices.len();
                let mut inside = false;
                let mut j = n.wrapping_sub(1);
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[j]);
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
                        if p[0] < x {
                            inside = !inside;
                        }
                    }
                    j = i;
                }
                inside
            }
        }
    }

    pub fn translated(&self, d: [f64; 2]) -> Self {
        match self {
            Primitive::Rect { center, half } => Primitive::Rect {
                center: [center[0] + d[0], center[1] + d[1]],
                half: *half,
            },
            Primitive::Bar {
                center,
                axis,
                half_len,
                half_wid,
            } => Primitive::Bar {
                center: [center[0] + d[0], center[1] + d[1]],
                axis: *axis,
                half_len: *half_len,
                half_wid: *half_wid,
            },
            Primitive::Polygon { vertices } => Primitive::Polygon {
                vertices: vertices.iter().map(|v| [v[0] + d[0], v[1] + d[1]]).collect(),
            },
        }
    }

    /// Image under `(x, y) → (sx·x, sy·y)` with `sx, sy ∈ {1, -1}`.
    pub fn reflected(&self, sx: f64, sy: f64) -> Self {
        match self {
            Primitive::Rect { center, half } => Primitive::Rect {
                center: [sx * center[0], sy * center[1]],
                half: *half,
            },
            Primitive::Bar {
                center,
                axis,
                half_len,
                half_wid,
            } => Primitive::Bar {
                center: [sx * center[0], sy * center[1]],
                axis: [sx * axis[0], sy * axis[1]],
                half_len: *half_len,
                half_wid: *half_wid,
            },
            Primitive::Polygon { vertices } => Primitive::Polygon {
                vertices: vertices.iter().map(|v| [sx * v[0], sy * v[1]]).collect(),
            },
        }
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Primitive::Rect { center, half } => (
                [center[0] - half[0], center[1] - half[1]],
                [center[0] + half[0], center[1] + half[1]],
            ),
            Primitive::Bar {
                center,
                axis,
                half_len,
                half_wid,
            } => {
                let ex = (axis[0] * half_len).abs() + (axis[1] * half_wid).abs();
                let ey = (axis[1] * half_len).abs() + (axis[0] * half_wid).abs();
                ([center[0] - ex, center[1] - ey], [center[0] + ex, center[1] + ey])
            }
            Primitive::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for a in 0..2 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Analytic area (shoelace for polygons).
    pub fn area(&self) -> f64 {
        match self {
            Primitive::Rect { half, .. } => 4.0 * half[0] * half[1],
            Primitive::Bar { half_len, half_wid, .. } => 4.0 * half_len * half_wid,
            Primitive::Polygon { vertices } => {
                let n = vertices.len();
                let s: f64 = (0..n)
                    .map(|i| {
                        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum();
                0.5 * s.abs()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Primitive::Rect { half, .. } => 4.0 * (half[0] + half[1]),
            Primitive::Bar { half_len, half_wid, .. } => 4.0 * (half_len + half_wid),
            Primitive::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| {
                        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                        libm::hypot(b[0] - a[0], b[1] - a[1])
                    })
                    .sum()
            }
        }
    }
}

/// A union of primitives painted with one role and tagged with a region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    pub role: Role,
    pub region: Region,
    pub parts: Vec<Primitive>,
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.parts.iter().any(|part| part.contains(p))
    }

    pub fn reflected(&self, sx: f64, sy: f64) -> Self {
        Self {
            role: self.role,
            region: self.region,
            parts: self.parts.iter().map(|p| p.reflected(sx, sy)).collect(),
        }
    }
}

/// Horizontal strip boundaries (distances from the waveguide axis) that split
/// the cell into regions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionBoundaries {
    /// `|y|` below this is the C-shape strip.
    pub cshape_outer: f64,
    /// `|y|` below this (and above `cshape_outer`) is the interface.
    pub interface_outer: f64,
}

impl RegionBoundaries {
    /// Everything in the C-shape strip.
    pub fn all_cshape() -> Self {
        Self {
            cshape_outer: f64::INFINITY,
            interface_outer: f64::INFINITY,
        }
    }

    pub fn region_at(&self, y: f64) -> Region {
        let d = y.abs();
        if d < self.cshape_outer {
            Region::CShape
        } else if d < self.interface_outer {
            Region::Interface
        } else {
            Region::Snowflake
        }
    }
}

/// A rectangular, periodic unit cell described by painted shapes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitCellGeometry {
    /// `(a_x, a_y)` in metres.
    pub cell: [f64; 2],
    /// Painted in order; later shapes overwrite earlier ones.
    pub shapes: Vec<Shape>,
    pub boundaries: RegionBoundaries,
}

impl UnitCellGeometry {
    pub fn new(cell: [f64; 2], shapes: Vec<Shape>, boundaries: RegionBoundaries) -> Result<Self, GeometryError> {
        if !(cell[0] > 0.0 && cell[1] > 0.0 && cell[0].is_finite() && cell[1].is_finite()) {
            return Err(GeometryError::DegenerateCell);
        }
        Ok(Self { cell, shapes, boundaries })
    }

    pub fn hole_count(&self) -> usize {
        self.shapes.iter().filter(|s| s.role == Role::Hole).count()
    }

    /// Image of the geometry under a mirror (`sx`, `sy` ∈ {1, -1}).
    pub fn reflected(&self, sx: f64, sy: f64) -> Self {
        Self {
            cell: self.cell,
            shapes: self.shapes.iter().map(|s| s.reflected(sx, sy)).collect(),
            boundaries: self.boundaries,
        }
    }
}

/// Snowflake rows and padding around the C-shape strip.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaveguideLayout {
    /// Snowflake rows on each side of the waveguide.
    pub rows: usize,
    /// Distance from the outer C-hole edge to the centre of the first
    /// snowflake row. `None` means half a snowflake lattice constant.
    pub first_row_offset: Option<f64>,
    /// Filler padding at the top and bottom of the cell. Zero lets the
    /// snowflake lattice continue periodically across the cell boundary.
    pub pad: f64,
}

impl Default for WaveguideLayout {
    fn default() -> Self {
        Self {
            rows: 3,
            first_row_offset: None,
            pad: 0.0,
        }
    }
}

fn snowflake_at(center: [f64; 2], s: &SnowflakeParams, region: Region) -> Shape {
    let h = 0.5 * libm::sqrt(3.0);
    // Arms at 0°, 60° and 120°; components written out so mirrored arms are exact negations.
    let axes = [[1.0, 0.0], [0.5, h], [-0.5, h]];
    Shape {
        role: Role::Hole,
        region,
        parts: axes
            .iter()
            .map(|&axis| Primitive::Bar {
                center,
                axis,
                half_len: 0.5 * s.l_snow,
                half_wid: 0.5 * s.w_snow,
            })
            .collect(),
    }
}

/// Waveguide supercell: two facing C holes around the central beam, flanked
/// by `layout.rows` snowflake rows on each side.
///
/// Snowflakes repeat with the C-shape period `wCell` along x (one snowflake per
/// row per cell) and alternate between the cell edge and the cell centre from
/// row to row; rows are spaced by the triangular-lattice row pitch
/// `aSnow·√3/2`. The first snowflake row and the web between it and the C
/// holes form the interface region.
pub fn build_waveguide_cell(
    c: &CShapeParams,
    s: &SnowflakeParams,
    layout: &WaveguideLayout,
) -> Result<UnitCellGeometry, GeometryError> {
    c.validate()?;
    s.validate()?;
    if !(layout.pad >= 0.0 && layout.pad.is_finite()) {
        return Err(GeometryError::NonPositive {
            name: "pad",
            value: layout.pad,
        });
    }
    let a_x = c.w_cell;
    let strip = c.strip_half_height();
    let offset = match layout.first_row_offset {
        Some(o) => positive("first_row_offset", o)?,
        None => 0.5 * s.a_snow,
    };
    let pitch = s.row_pitch();
    let first_row = strip + offset;

    let mut shapes = Vec::new();
    for side in [1.0, -1.0] {
        let inner = 0.5 * c.l_wav;
        let hole = Primitive::Rect {
            center: [0.0, side * (inner + 0.5 * c.l_arm)],
            half: [0.5 * c.hole_width(), 0.5 * c.l_arm],
        };
        let pad = Primitive::Rect {
            center: [0.0, side * (inner + 0.5 * c.l_pad)],
            half: [0.5 * c.w_pad, 0.5 * c.l_pad],
        };
        shapes.push(Shape {
            role: Role::Hole,
            region: Region::CShape,
            parts: vec![hole],
        });
        shapes.push(Shape {
            role: Role::Solid,
            region: Region::CShape,
            parts: vec![pad],
        });
    }

    for row in 0..layout.rows {
        let y = first_row + row as f64 * pitch;
        let x = if row % 2 == 0 { 0.5 * a_x } else { 0.0 };
        let region = if row == 0 { Region::Interface } else { Region::Snowflake };
        for side in [1.0, -1.0] {
            shapes.push(snowflake_at([x, side * y], s, region));
        }
    }

    let (half_height, interface_outer) = if layout.rows == 0 {
        let hh = first_row + layout.pad;
        (hh, f64::INFINITY)
    } else {
        let last = first_row + (layout.rows - 1) as f64 * pitch;
        (last + 0.5 * pitch + layout.pad, first_row + 0.5 * pitch)
    };
    let a_y = 2.0 * half_height;

    if layout.pad > 0.0 {
        let region = if layout.rows == 0 { Region::Interface } else { Region::Snowflake };
        // The two padding slabs meet across the periodic boundary.
        shapes.push(Shape {
            role: Role::Hole,
            region,
            parts: vec![
                Primitive::Rect {
                    center: [0.0, half_height - 0.5 * layout.pad],
                    half: [0.5 * a_x, 0.5 * layout.pad],
                },
                Primitive::Rect {
                    center: [0.0, -(half_height - 0.5 * layout.pad)],
                    half: [0.5 * a_x, 0.5 * layout.pad],
                },
            ],
        });
    }

    UnitCellGeometry::new(
        [a_x, a_y],
        shapes,
        RegionBoundaries {
            cshape_outer: strip,
            interface_outer,
        },
    )
}

// ---------------------------------------------------------------------------
// Raster

/// Index of the solid in [`MaterialGrid::materials`].
pub const SOLID: u8 = 0;
/// Index of the filler (hole) material in [`MaterialGrid::materials`].
pub const FILLER: u8 = 1;

/// Pixelized unit cell. Pixel `(i, j)` is stored at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaterialGrid {
    pub nx: usize,
    pub ny: usize,
    pub cell: [f64; 2],
    pub pitch: [f64; 2],
    pub material_index: Vec<u8>,
    pub region: Vec<Region>,
    /// `[solid, filler]`, unrotated.
    pub materials: Vec<ElasticMaterial>,
    pub boundaries: RegionBoundaries,
}

impl MaterialGrid {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Pixel centre x; exact negation of `x(nx - 1 - i)`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (2.0 * i as f64 + 1.0 - self.nx as f64) * (0.5 * self.pitch[0])
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (2.0 * j as f64 + 1.0 - self.ny as f64) * (0.5 * self.pitch[1])
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fraction of pixels carrying material `m`.
    pub fn fill_fraction(&self, m: u8) -> f64 {
        self.material_index.iter().filter(|&&v| v == m).count() as f64 / self.len() as f64
    }

    pub fn region_counts(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for r in &self.region {
            out[r.index()] += 1;
        }
        out
    }

    /// Density per pixel, kg/m³.
    pub fn density(&self, pixel: usize) -> f64 {
        self.materials[self.material_index[pixel] as usize].density
    }

    /// Stable 64-bit FNV-1a fingerprint of the raster and its materials.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(&(self.nx as u64).to_le_bytes());
        h.write(&(self.ny as u64).to_le_bytes());
        for v in self.cell {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.write(&self.material_index);
        for r in &self.region {
            h.write(&[*r as u8]);
        }
        for m in &self.materials {
            h.write(&m.density.to_bits().to_le_bytes());
            for v in m.stiffness.matrix().iter().flatten() {
                h.write(&v.to_bits().to_le_bytes());
            }
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// Samples the geometry at pixel centres with periodic wrapping. Holes get
/// the filler, re-inserted solids the solid; regions follow the strip
/// boundaries.
pub fn rasterize(
    g: &UnitCellGeometry,
    nx: usize,
    ny: usize,
    solid: &ElasticMaterial,
    filler: &ElasticMaterial,
) -> Result<MaterialGrid, GeometryError> {
    if nx < 8 || ny < 8 {
        return Err(GeometryError::ResolutionTooLow { nx, ny });
    }
    if !(g.cell[0] > 0.0 && g.cell[1] > 0.0) {
        return Err(GeometryError::DegenerateCell);
    }
    let pitch = [g.cell[0] / nx as f64, g.cell[1] / ny as f64];
    let mut grid = MaterialGrid {
        nx,
        ny,
        cell: g.cell,
        pitch,
        material_index: vec![SOLID; nx * ny],
        region: vec![Region::CShape; nx * ny],
        materials: vec![solid.clone(), filler.clone()],
        boundaries: g.boundaries,
    };
    for j in 0..ny {
        let r = g.boundaries.region_at(grid.y(j));
        for i in 0..nx {
            grid.region[j * nx + i] = r;
        }
    }

    let half = [0.5 * g.cell[0], 0.5 * g.cell[1]];
    let pixel_range = |lo: f64, hi: f64, axis: usize, n: usize| -> Option<(usize, usize)> {
        let to_idx = |v: f64| (v + half[axis]) / pitch[axis] - 0.5;
        let a = libm::floor(to_idx(lo)).max(0.0);
        let b = libm::ceil(to_idx(hi)).min(n as f64 - 1.0);
        (a <= b).then_some((a as usize, b as usize))
    };

    let mut hit = vec![false; nx * ny];
    for shape in &g.shapes {
        hit.iter_mut().for_each(|h| *h = false);
        for part in &shape.parts {
            for sx in -1i32..=1 {
                for sy in -1i32..=1 {
                    let shift = [sx as f64 * g.cell[0], sy as f64 * g.cell[1]];
                    let image = if sx == 0 && sy == 0 {
                        part.clone()
                    } else {
                        part.translated(shift)
                    };
                    let (lo, hi) = image.bounding_box();
                    let (Some((i0, i1)), Some((j0, j1))) = (pixel_range(lo[0], hi[0], 0, nx), pixel_range(lo[1], hi[1], 1, ny))
                    else {
                        continue;
                    };
                    for j in j0..=j1 {
                        let y = grid.y(j);
                        for i in i0..=i1 {
                            if image.contains([grid.x(i), y]) {
                                hit[j * nx + i] = true;
                            }
                        }
                    }
                }
            }
        }
        let value = match shape.role {
            Role::Hole => FILLER,
            Role::Solid => SOLID,
        };
        for (m, &h) in grid.material_index.iter_mut().zip(&hit) {
            if h {
                *m = value;
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mats() -> (ElasticMaterial, ElasticMaterial) {
        let si = ElasticMaterial::silicon();
        let f = ElasticMaterial::filler_for(&si, 1e-4, 1e-6).unwrap();
        (si, f)
    }

    #[test]
    fn taper_endpoints_and_centre() {
        let p = TaperProfile {
            par_min: 195.5,
            par_max: 207.5,
            n_d: 7,
        };
        assert_eq!(taper_parameter(7, &p).unwrap(), 207.5);
        assert_eq!(taper_parameter(-7, &p).unwrap(), 207.5);
        let centre = taper_parameter(0, &p).unwrap();
        let expected = 195.5 + 12.0 * libm::exp(-4.5);
        assert!((centre - expected).abs() <= 1e-12 * expected);
        assert!((centre - 195.633).abs() < 1e-3);
        assert_eq!(taper_parameter(9, &p).unwrap(), 207.5);
    }

    #[test]
    fn printed_exponent_overshoots() {
        let p = TaperProfile {
            par_min: 195.5,
            par_max: 207.5,
            n_d: 7,
        };
        let v = taper_parameter_with(0, &p, TaperExponent::AsPrinted).unwrap();
        assert!((v - (195.5 + 12.0 * libm::exp(4.5))).abs() < 1e-9);
        assert_eq!(taper_parameter_with(7, &p, TaperExponent::AsPrinted).unwrap(), 207.5);
    }

    #[test]
    fn taper_requires_defect_cells() {
        let p = TaperProfile {
            par_min: 1.0,
            par_max: 2.0,
            n_d: 0,
        };
        assert_eq!(taper_parameter(0, &p), Err(GeometryError::ZeroDefectCount));
    }

    #[test]
    fn reference_mirror_cell_uses_maxima() {
        let t = CShapeTaper::reference();
        let m = t.mirror_params().unwrap();
        assert_eq!(m.l_arm, 207.5 * NM);
        assert_eq!(m.l_pad, 110.5 * NM);
        let d = t.cell_params(0).unwrap();
        assert!(d.l_arm < m.l_arm && d.w_arm < m.w_arm && d.w_pad < m.w_pad);
        // lPad grows towards the centre in the reference taper.
        assert!(d.l_pad > m.l_pad);
    }

    #[test]
    fn impossible_cshape_rejected() {
        let mut c = CShapeTaper::reference().mirror_params().unwrap();
        c.l_pad = c.l_arm;
        assert!(matches!(c.validate(), Err(GeometryError::NoAirgap { .. })));
        let mut c = CShapeTaper::reference().mirror_params().unwrap();
        c.w_pad = 400.0 * NM;
        assert!(matches!(c.validate(), Err(GeometryError::HoleWiderThanCell { .. })));
        let mut c = CShapeTaper::reference().mirror_params().unwrap();
        c.w_arm = -1.0;
        assert!(matches!(c.validate(), Err(GeometryError::NonPositive { name: "wArm", .. })));
    }

    #[test]
    fn rows_zero_has_two_holes_and_two_regions() {
        let c = CShapeTaper::reference().mirror_params().unwrap();
        let layout = WaveguideLayout {
            rows: 0,
            ..Default::default()
        };
        let g = build_waveguide_cell(&c, &SnowflakeParams::reference(), &layout).unwrap();
        assert_eq!(g.hole_count(), 2);
        let (si, f) = mats();
        let grid = rasterize(&g, 32, 48, &si, &f).unwrap();
        let counts = grid.region_counts();
        assert_eq!(counts[Region::Snowflake.index()], 0);
        assert_eq!(counts.iter().sum::<usize>(), 32 * 48);
        assert!(counts[0] > 0 && counts[1] > 0);
    }

    #[test]
    fn three_rows_hole_count_and_mirror_symmetry() {
        let c = CShapeTaper::reference().mirror_params().unwrap();
        let g = build_waveguide_cell(&c, &SnowflakeParams::reference(), &WaveguideLayout::default()).unwrap();
        assert_eq!(g.hole_count(), 2 + 2 * 3);
        // Membership is invariant under both mirrors (periodic in x).
        let inside = |g: &UnitCellGeometry, p: [f64; 2]| {
            g.shapes.iter().any(|s| {
                s.role == Role::Hole
                    && [-1.0, 0.0, 1.0].iter().any(|&k| s.contains([p[0] + k * g.cell[0], p[1]]))
            })
        };
        for (sx, sy) in [(1.0, -1.0), (-1.0, 1.0)] {
            let m = g.reflected(sx, sy);
            for a in 0..37 {
                for b in 0..211 {
                    let p = [
                        (a as f64 / 37.0 - 0.5) * g.cell[0] + 1.3e-10,
                        (b as f64 / 211.0 - 0.5) * g.cell[1] + 0.7e-10,
                    ];
                    assert_eq!(inside(&g, [sx * p[0], sy * p[1]]), inside(&m, p));
                    assert_eq!(inside(&g, p), inside(&m, p), "point {p:?}");
                }
            }
        }
    }

    #[test]
    fn raster_is_pixel_exact_under_both_mirrors() {
        let c = CShapeTaper::reference().mirror_params().unwrap();
        let g = build_waveguide_cell(&c, &SnowflakeParams::reference(), &WaveguideLayout::default()).unwrap();
        let (si, f) = mats();
        let grid = rasterize(&g, 48, 300, &si, &f).unwrap();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = grid.material_index[grid.index(i, j)];
                assert_eq!(v, grid.material_index[grid.index(i, grid.ny - 1 - j)]);
                assert_eq!(v, grid.material_index[grid.index(grid.nx - 1 - i, j)]);
            }
        }
        assert!(grid.fill_fraction(FILLER) > 0.1 && grid.fill_fraction(FILLER) < 0.5);
    }

    #[test]
    fn empty_geometry_is_uniform() {
        let g = UnitCellGeometry::new([1.0, 1.0], vec![], RegionBoundaries::all_cshape()).unwrap();
        let (si, f) = mats();
        let grid = rasterize(&g, 16, 16, &si, &f).unwrap();
        assert!(grid.material_index.iter().all(|&m| m == SOLID));
    }

    #[test]
    fn quarter_area_rectangle() {
        let hole = Shape {
            role: Role::Hole,
            region: Region::CShape,
            parts: vec![Primitive::Rect {
                center: [0.0, 0.0],
                half: [0.25, 0.25],
            }],
        };
        let g = UnitCellGeometry::new([1.0, 1.0], vec![hole], RegionBoundaries::all_cshape()).unwrap();
        let (si, f) = mats();
        let grid = rasterize(&g, 256, 256, &si, &f).unwrap();
        assert!((grid.fill_fraction(FILLER) - 0.25).abs() <= 0.01);
    }

    #[test]
    fn wrapped_shape_is_painted_on_both_edges() {
        let hole = Shape {
            role: Role::Hole,
            region: Region::CShape,
            parts: vec![Primitive::Rect {
                center: [0.5, 0.0],
                half: [0.1, 0.1],
            }],
        };
        let g = UnitCellGeometry::new([1.0, 1.0], vec![hole], RegionBoundaries::all_cshape()).unwrap();
        let (si, f) = mats();
        let grid = rasterize(&g, 20, 20, &si, &f).unwrap();
        assert_eq!(grid.material_index[grid.index(0, 10)], FILLER);
        assert_eq!(grid.material_index[grid.index(19, 10)], FILLER);
        assert!((grid.fill_fraction(FILLER) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn raster_rejects_tiny_or_degenerate_cells() {
        let (si, f) = mats();
        let g = UnitCellGeometry::new([1.0, 1.0], vec![], RegionBoundaries::all_cshape()).unwrap();
        assert!(matches!(rasterize(&g, 4, 16, &si, &f), Err(GeometryError::ResolutionTooLow { .. })));
        assert_eq!(
            UnitCellGeometry::new([0.0, 1.0], vec![], RegionBoundaries::all_cshape()),
            Err(GeometryError::DegenerateCell)
        );
    }

    #[test]
    fn polygon_membership() {
        let tri = Primitive::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(tri.contains([0.2, 0.2]));
        assert!(!tri.contains([0.8, 0.8]));
        assert!((tri.area() - 0.5).abs() < 1e-15);
    }
}
