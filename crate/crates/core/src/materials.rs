//! Anisotropic elastic constants.
//!
//! Stiffness is stored as a 6x6 Voigt matrix with the fixed ordering
//! `(11, 22, 33, 23, 13, 12)`, so `c[0][5]` is C16 and `c[5][5]` is C66.
//! Rotations are about the z axis (the wafer normal, `[001]`), by the angle
//! between the device x axis and the `[100]` crystal direction, measured
//! counter-clockwise.

use alloc::string::String;
use core::f64::consts::FRAC_PI_2;

use crate::linalg::{inv3, sym2_eigenvalues, sym_eigenvalues};

/// Tensor index pairs for each Voigt index, in the `(11, 22, 33, 23, 13, 12)` ordering.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Voigt index of the tensor pair `(i, j)`.
#[inline]
pub const fn voigt_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) | (2, 1) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaterialError {
    #[error("stiffness is not symmetric: C[{i}][{j}] = {upper} but C[{j}][{i}] = {lower}")]
    NotSymmetric { i: usize, j: usize, upper: f64, lower: f64 },
    #[error("stiffness entries must be finite")]
    NonFinite,
    #[error("density must be positive and finite, got {0}")]
    BadDensity(f64),
    #[error("stiffness of `{name}` is not positive definite (smallest eigenvalue {min_eigenvalue:e} Pa)")]
    NotPositiveDefinite { name: String, min_eigenvalue: f64 },
    #[error("propagation direction must be a unit vector, |n| = {0}")]
    NotUnitDirection(f64),
    #[error("out-of-plane stiffness block is singular; plane-stress reduction impossible")]
    SingularOutOfPlane,
}

/// 6x6 Voigt stiffness matrix in Pa. Always exactly symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "[[f64; 6]; 6]", into = "[[f64; 6]; 6]")
)]
pub struct VoigtStiffness {
    c: [[f64; 6]; 6],
}

impl TryFrom<[[f64; 6]; 6]> for VoigtStiffness {
    type Error = MaterialError;

    fn try_from(c: [[f64; 6]; 6]) -> Result<Self, Self::Error> {
        Self::new(c)
    }
}

impl From<VoigtStiffness> for [[f64; 6]; 6] {
    fn from(v: VoigtStiffness) -> Self {
        v.c
    }
}

impl VoigtStiffness {
    /// Rejects matrices that are not exactly symmetric or contain non-finite values.
    pub fn new(c: [[f64; 6]; 6]) -> Result<Self, MaterialError> {
        for i in 0..6 {
            for j in 0..6 {
                if !c[i][j].is_finite() {
                    return Err(MaterialError::NonFinite);
                }
                if c[i][j] != c[j][i] {
                    return Err(MaterialError::NotSymmetric {
                        i,
                        j,
                        upper: c[i][j],
                        lower: c[j][i],
                    });
                }
            }
        }
        Ok(Self { c })
    }

    /// Cubic crystal in its own axes.
    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        let mut c = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = if i == j { c11 } else { c12 };
            }
            c[i + 3][i + 3] = c44;
        }
        Self { c }
    }

    /// Isotropic solid from C11 and C44; C12 = C11 - 2 C44.
    pub fn isotropic(c11: f64, c44: f64) -> Self {
        Self::cubic(c11, c11 - 2.0 * c44, c44)
    }

    pub fn matrix(&self) -> &[[f64; 6]; 6] {
        &self.c
    }

    /// Zero-based Voigt entry.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i][j]
    }

    pub fn c11(&self) -> f64 {
        self.c[0][0]
    }
    pub fn c12(&self) -> f64 {
        self.c[0][1]
    }
    pub fn c44(&self) -> f64 {
        self.c[3][3]
    }
    pub fn c16(&self) -> f64 {
        self.c[0][5]
    }
    pub fn c66(&self) -> f64 {
        self.c[5][5]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().flatten().for_each(|v| *v *= factor);
        Self { c }
    }

    /// Copy with the 16 and 26 couplings removed.
    pub fn with_c16_zeroed(&self) -> Self {
        let mut c = self.c;
        c[0][5] = 0.0;
        c[5][0] = 0.0;
        c[1][5] = 0.0;
        c[5][1] = 0.0;
        Self { c }
    }

    /// Eigenvalues of the Voigt matrix, ascending.
    pub fn eigenvalues(&self) -> [f64; 6] {
        sym_eigenvalues(&self.c)
    }

    /// Entry of the rank-4 tensor `c_ijkl`.
    #[inline]
    pub fn tensor(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[voigt_index(i, j)][voigt_index(k, l)]
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Bond matrix `M` such that `C' = M C Mᵀ` for the axis transformation `a`,
/// where `c'_ijkl = a_ip a_jq a_kr a_ls c_pqrs`.
pub fn bond_matrix(a: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
    let mut m = [[0.0; 6]; 6];
    for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            m[row][col] = if k == l {
                a[i][k] * a[j][k]
            } else {
                a[i][k] * a[j][l] + a[i][l] * a[j][k]
            };
        }
    }
    m
}

/// Axis transformation from crystal axes to device axes for a device x axis
/// rotated counter-clockwise by `theta` from `[100]`, about `[001]`.
pub fn z_rotation(theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = libm::sincos(theta);
    [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Stiffness expressed in device axes for orientation `theta` (radians).
pub fn rotate_stiffness(c: &VoigtStiffness, theta: f64) -> VoigtStiffness {
    let m = bond_matrix(&z_rotation(theta));
    let mut mc = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            mc[i][j] = (0..6).map(|k| m[i][k] * c.c[k][j]).sum();
        }
    }
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] = (0..6).map(|k| mc[i][k] * m[j][k]).sum();
        }
    }
    for i in 0..6 {
        for j in (i + 1)..6 {
            let v = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    VoigtStiffness { c: out }
}

/// Zener-type anisotropy `H = C11 - C12 - 2 C44`; zero for isotropic solids.
pub fn anisotropy_factor(c: &VoigtStiffness) -> f64 {
    c.c11() - c.c12() - 2.0 * c.c44()
}

/// Device orientation: angle from `[100]` to the device x axis, radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct Orientation(pub f64);

impl Orientation {
    pub fn from_degrees(deg: f64) -> Self {
        Self(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Angle folded into `[0, π/2)`, the fundamental domain of a cubic crystal.
    pub fn reported(self) -> f64 {
        let r = libm::fmod(self.0, FRAC_PI_2);
        let r = if r < 0.0 { r + FRAC_PI_2 } else { r };
        if r >= FRAC_PI_2 { 0.0 } else { r }
    }
}

/// How the 3D stiffness is reduced to in-plane (xx, yy, xy) motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PlaneReduction {
    /// Thin plate: out-of-plane stresses vanish.
    #[default]
    PlaneStress,
    /// Out-of-plane strains vanish; the in-plane entries are used unchanged.
    PlaneStrain,
}

/// In-plane stiffness in the 2D Voigt ordering `(xx, yy, xy)`, Pa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InPlaneStiffness {
    pub q: [[f64; 3]; 3],
}

const IN_PLANE: [usize; 3] = [0, 1, 5];
const OUT_OF_PLANE: [usize; 3] = [2, 3, 4];

impl InPlaneStiffness {
    pub fn reduce(c: &VoigtStiffness, reduction: PlaneReduction) -> Result<Self, MaterialError> {
        let mut q = [[0.0; 3]; 3];
        for (a, &i) in IN_PLANE.iter().enumerate() {
            for (b, &j) in IN_PLANE.iter().enumerate() {
                q[a][b] = c.c[i][j];
            }
        }
        if reduction == PlaneReduction::PlaneStress {
            let mut oo = [[0.0; 3]; 3];
            for (a, &i) in OUT_OF_PLANE.iter().enumerate() {
                for (b, &j) in OUT_OF_PLANE.iter().enumerate() {
                    oo[a][b] = c.c[i][j];
                }
            }
            let oo_inv = inv3(&oo).ok_or(MaterialError::SingularOutOfPlane)?;
            // Schur complement Q - C_io C_oo⁻¹ C_oi
            for (a, &i) in IN_PLANE.iter().enumerate() {
                for (b, &j) in IN_PLANE.iter().enumerate() {
                    let mut corr = 0.0;
                    for (r, &o1) in OUT_OF_PLANE.iter().enumerate() {
                        for (s, &o2) in OUT_OF_PLANE.iter().enumerate() {
                            corr += c.c[i][o1] * oo_inv[r][s] * c.c[o2][j];
                        }
                    }
                    q[a][b] -= corr;
                }
            }
            for a in 0..3 {
                for b in (a + 1)..3 {
                    let v = 0.5 * (q[a][b] + q[b][a]);
                    q[a][b] = v;
                    q[b][a] = v;
                }
            }
        }
        Ok(Self { q })
    }

    /// `Bᵀ Q B` for the strain operator `B(n)` of a plane wave along `n`
    /// (not necessarily unit). This is the 2x2 acoustic tensor times `|n|²`.
    pub fn acoustic_tensor(&self, n: [f64; 2]) -> [[f64; 2]; 2] {
        let b = strain_operator(n);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for r in 0..3 {
                    for t in 0..3 {
                        s += b[r][i] * self.q[r][t] * b[t][j];
                    }
                }
                *v = s;
            }
        }
        out
    }
}

/// Engineering-strain operator of a plane wave: rows (xx, yy, xy), columns (ux, uy).
#[inline]
pub(crate) fn strain_operator(q: [f64; 2]) -> [[f64; 2]; 3] {
    [[q[0], 0.0], [0.0, q[1]], [q[1], q[0]]]
}

/// A solid (or the vacuum filler) with its density and stiffness.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElasticMaterial {
    pub name: String,
    /// kg/m³
    pub density: f64,
    pub stiffness: VoigtStiffness,
    /// Set for the low-density pseudo-material standing in for vacuum.
    #[cfg_attr(feature = "serde", serde(default))]
    pub filler: bool,
}

impl ElasticMaterial {
    /// Physical solid; requires positive density and positive-definite stiffness.
    pub fn new(name: impl Into<String>, density: f64, stiffness: VoigtStiffness) -> Result<Self, MaterialError> {
        let m = Self {
            name: name.into(),
            density,
            stiffness,
            filler: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// Pseudo-material for holes, scaled down from `solid`.
    pub fn filler_for(solid: &ElasticMaterial, density_ratio: f64, stiffness_ratio: f64) -> Result<Self, MaterialError> {
        let density = solid.density * density_ratio;
        if !(density > 0.0 && density.is_finite()) {
            return Err(MaterialError::BadDensity(density));
        }
        Ok(Self {
            name: "vacuum-filler".into(),
            density,
            stiffness: solid.stiffness.scaled(stiffness_ratio),
            filler: true,
        })
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(MaterialError::BadDensity(self.density));
        }
        if !self.filler {
            let min = self.stiffness.eigenvalues()[0];
            if min <= 0.0 {
                return Err(MaterialError::NotPositiveDefinite {
                    name: self.name.clone(),
                    min_eigenvalue: min,
                });
            }
        }
        Ok(())
    }

    /// Same material with its stiffness expressed in device axes.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            stiffness: rotate_stiffness(&self.stiffness, theta),
            ..self.clone()
        }
    }

    /// Single-crystal silicon: C11 = 165.7 GPa, C12 = 63.9 GPa, C44 = 79.6 GPa,
    /// 2329 kg/m³ (room-temperature literature values).
    pub fn silicon() -> Self {
        Self {
            name: "silicon".into(),
            density: 2329.0,
            stiffness: VoigtStiffness::cubic(165.7e9, 63.9e9, 79.6e9),
            filler: false,
        }
    }
}

/// Phase velocities (m/s, ascending) of in-plane bulk waves along `direction`,
/// from the 2x2 Christoffel matrix of the reduced stiffness.
pub fn christoffel_velocities(
    m: &ElasticMaterial,
    direction: [f64; 2],
    reduction: PlaneReduction,
) -> Result<[f64; 2], MaterialError> {
    if !(m.density > 0.0 && m.density.is_finite()) {
        return Err(MaterialError::BadDensity(m.density));
    }
    let norm = libm::hypot(direction[0], direction[1]);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(MaterialError::NotUnitDirection(norm));
    }
    let q = InPlaneStiffness::reduce(&m.stiffness, reduction)?;
    let g = q.acoustic_tensor(direction);
    let lam = sym2_eigenvalues(g[0][0] / m.density, g[0][1] / m.density, g[1][1] / m.density);
    Ok([libm::sqrt(lam[0].max(0.0)), libm::sqrt(lam[1].max(0.0))])
}
