//! Plane-wave expansion of the in-plane Floquet-Bloch problem
//! `∇·(C:∇u) + ρω²u = 0` on a rasterized periodic cell.
//!
//! Displacements are expanded as `u(x) = Σ_G u_G e^{i(k+G)·x}` over a fixed,
//! symmetric set of reciprocal lattice vectors. The stiffness and density
//! fields enter through their discrete Fourier transforms on the pixel grid;
//! the orientation θ enters only through the rotated stiffness of each
//! material. The resulting Hermitian pencil `K u = ω² M u` is reduced with a
//! Cholesky factor of `M` and solved densely.
//!
//! Internally lengths are scaled by `a_x`, stiffness by the largest in-plane
//! modulus and density by the largest density, so matrix entries are O(1).

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use faer::complex_native::c64;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Parallelism, Side};
use num_complex::Complex64;

use crate::geometry::{rasterize, GeometryError, MaterialGrid, UnitCellGeometry};
use crate::linalg::{from_faer, to_faer};
use crate::materials::{strain_operator, ElasticMaterial, InPlaneStiffness, MaterialError, PlaneReduction};
use crate::symmetry::{FourierAction, SymmetryOp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlochError {
    #[error("basis index {max_index} along {axis} aliases on {pixels} pixels (need more than {needed})")]
    Aliasing {
        axis: char,
        pixels: usize,
        max_index: u32,
        needed: usize,
    },
    #[error("plane-wave basis is empty")]
    EmptyBasis,
    #[error("requested {requested} bands but the problem has {available} degrees of freedom")]
    TooManyBands { requested: usize, available: usize },
    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,
    #[error("eigenvalue {value:e} of mode {mode} is below the negative tolerance {tol:e}")]
    NegativeEigenvalue { mode: usize, value: f64, tol: f64 },
    #[error("eigensolver did not converge for mode {mode}: relative residual {residual:e} exceeds {bound:e}")]
    NonConvergence { mode: usize, residual: f64, bound: f64 },
    #[error("{op} is not a symmetry of the basis at this wavevector")]
    SymmetryUnavailable { op: &'static str },
    #[error("empty sweep")]
    EmptySweep,
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A solve failure tagged with its position in the sweep.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("at theta index {theta_index}, k index {k_index}: {source}")]
pub struct SweepError {
    pub theta_index: usize,
    pub k_index: usize,
    #[source]
    pub source: BlochError,
}

// ---------------------------------------------------------------------------
// Basis and wavevectors

/// Truncation of the reciprocal lattice, in integer indices `(m_x, m_y)` with
/// `G = 2π (m_x / a_x, m_y / a_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Cutoff {
    /// `|m_x| ≤ nx`, `|m_y| ≤ ny`.
    Box { nx: u32, ny: u32 },
    /// `(m_x/nx)² + (m_y/ny)² ≤ 1`; axes with zero extent only admit `m = 0`.
    Ellipse { nx: u32, ny: u32 },
}

impl Cutoff {
    pub fn extent(&self) -> [u32; 2] {
        match *self {
            Cutoff::Box { nx, ny } | Cutoff::Ellipse { nx, ny } => [nx, ny],
        }
    }

    fn admits(&self, mx: i32, my: i32) -> bool {
        match *self {
            Cutoff::Box { nx, ny } => mx.unsigned_abs() <= nx && my.unsigned_abs() <= ny,
            Cutoff::Ellipse { nx, ny } => {
                let term = |m: i32, n: u32| {
                    if n == 0 {
                        if m == 0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        let r = m as f64 / n as f64;
                        r * r
                    }
                };
                term(mx, nx) + term(my, ny) <= 1.0 + 1e-12
            }
        }
    }
}

/// Reciprocal lattice vectors kept in the expansion. Contains `G = 0` and is
/// closed under negation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlaneWaveBasis {
    pub cell: [f64; 2],
    pub cutoff: Cutoff,
    /// Sorted by `(m_y, m_x)`.
    pub indices: Vec<[i32; 2]>,
    #[cfg_attr(feature = "serde", serde(skip))]
    lookup: Vec<u32>,
}

const NO_INDEX: u32 = u32::MAX;

impl PlaneWaveBasis {
    pub fn new(cell: [f64; 2], cutoff: Cutoff) -> Result<Self, BlochError> {
        if !(cell[0] > 0.0 && cell[1] > 0.0) {
            return Err(BlochError::Geometry(GeometryError::DegenerateCell));
        }
        let [nx, ny] = cutoff.extent();
        let (nx, ny) = (nx as i32, ny as i32);
        let width = (2 * nx + 1) as usize;
        let mut indices = Vec::new();
        let mut lookup = vec![NO_INDEX; width * (2 * ny + 1) as usize];
        for my in -ny..=ny {
            for mx in -nx..=nx {
                if cutoff.admits(mx, my) {
                    lookup[(my + ny) as usize * width + (mx + nx) as usize] = indices.len() as u32;
                    indices.push([mx, my]);
                }
            }
        }
        if indices.is_empty() {
            return Err(BlochError::EmptyBasis);
        }
        Ok(Self {
            cell,
            cutoff,
            indices,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Position of index pair `m` in the basis.
    pub fn position(&self, m: [i32; 2]) -> Option<usize> {
        let [nx, ny] = self.cutoff.extent();
        let (nx, ny) = (nx as i32, ny as i32);
        if m[0].abs() > nx || m[1].abs() > ny {
            return None;
        }
        let v = self.lookup[(m[1] + ny) as usize * (2 * nx + 1) as usize + (m[0] + nx) as usize];
        (v != NO_INDEX).then_some(v as usize)
    }

    pub fn g_vector(&self, a: usize) -> [f64; 2] {
        let m = self.indices[a];
        [2.0 * PI * m[0] as f64 / self.cell[0], 2.0 * PI * m[1] as f64 / self.cell[1]]
    }

    pub fn g_vectors(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|a| self.g_vector(a)).collect()
    }

    /// Checks that an `nx × ny` raster resolves every index difference.
    pub fn check_resolution(&self, nx: usize, ny: usize) -> Result<(), BlochError> {
        let [mx, my] = self.cutoff.extent();
        for (axis, pixels, m) in [('x', nx, mx), ('y', ny, my)] {
            let needed = 4 * m as usize;
            if pixels <= needed {
                return Err(BlochError::Aliasing {
                    axis,
                    pixels,
                    max_index: m,
                    needed,
                });
            }
        }
        Ok(())
    }
}

/// Bloch wavevector in rad/m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlochWavevector {
    pub kx: f64,
    pub ky: f64,
}

impl BlochWavevector {
    pub fn new(kx: f64, ky: f64) -> Self {
        Self { kx, ky }
    }

    /// `k = (fx·π/a_x, fy·π/a_y)`; `fx = 1` is the zone edge.
    pub fn from_zone_fraction(fx: f64, fy: f64, cell: [f64; 2]) -> Self {
        Self {
            kx: fx * PI / cell[0],
            ky: fy * PI / cell[1],
        }
    }

    /// Components in reciprocal-lattice units, `k_x a_x / 2π`.
    pub fn lattice_fraction(&self, cell: [f64; 2]) -> [f64; 2] {
        [self.kx * cell[0] / (2.0 * PI), self.ky * cell[1] / (2.0 * PI)]
    }

    /// Equivalent wavevector in `(-π/a, π/a]` per axis.
    pub fn reduced(&self, cell: [f64; 2]) -> Self {
        let fold = |k: f64, a: f64| {
            let b = 2.0 * PI / a;
            let mut r = k - b * libm::round(k / b);
            if r <= -0.5 * b {
                r += b;
            }
            r
        };
        Self {
            kx: fold(self.kx, cell[0]),
            ky: fold(self.ky, cell[1]),
        }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.kx, self.ky)
    }
}

// ---------------------------------------------------------------------------
// Material field and structure factors

/// Per-material in-plane stiffness (rotated by θ) and density, indexed like
/// [`MaterialGrid::materials`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub theta: f64,
    pub stiffness: Vec<InPlaneStiffness>,
    pub density: Vec<f64>,
    pub c16_forced_zero: bool,
}

impl MaterialField {
    pub fn new(
        materials: &[ElasticMaterial],
        theta: f64,
        reduction: PlaneReduction,
        force_c16_zero: bool,
    ) -> Result<Self, BlochError> {
        let mut stiffness = Vec::with_capacity(materials.len());
        for m in materials {
            let mut c = m.rotated(theta).stiffness;
            if force_c16_zero {
                c = c.with_c16_zeroed();
            }
            stiffness.push(InPlaneStiffness::reduce(&c, reduction)?);
        }
        Ok(Self {
            theta,
            stiffness,
            density: materials.iter().map(|m| m.density).collect(),
            c16_forced_zero: force_c16_zero,
        })
    }

    fn stiffness_scale(&self) -> f64 {
        self.stiffness
            .iter()
            .flat_map(|q| q.q.iter().flatten())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn density_scale(&self) -> f64 {
        self.density.iter().fold(0.0f64, |a, &v| a.max(v))
    }
}

/// Fourier transforms of the material indicator functions at all index
/// differences a basis can produce.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFactors {
    span: [i32; 2],
    /// `chi[m][(dy + 2Ny) * wx + dx + 2Nx]`
    chi: Vec<Vec<Complex64>>,
}

impl StructureFactors {
    pub fn new(grid: &MaterialGrid, basis: &PlaneWaveBasis) -> Result<Self, BlochError> {
        basis.check_resolution(grid.nx, grid.ny)?;
        let [ex, ey] = basis.cutoff.extent();
        let span = [2 * ex as i32, 2 * ey as i32];
        let wx = (2 * span[0] + 1) as usize;
        let wy = (2 * span[1] + 1) as usize;
        let (nx, ny) = (grid.nx, grid.ny);
        let n_mat = grid.materials.len();

        // Phase tables e^{-i 2π d x_i / a} on centred pixel coordinates.
        let phases = |n: usize, s: i32, x: &dyn Fn(usize) -> f64, a: f64| -> Vec<Complex64> {
            let w = (2 * s + 1) as usize;
            let mut t = vec![Complex64::new(0.0, 0.0); w * n];
            for d in -s..=s {
                for i in 0..n {
                    let arg = -2.0 * PI * d as f64 * x(i) / a;
                    let (sn, cs) = libm::sincos(arg);
                    t[(d + s) as usize * n + i] = Complex64::new(cs, sn);
                }
            }
            t
        };
        let px = phases(nx, span[0], &|i| grid.x(i), grid.cell[0]);
        let py = phases(ny, span[1], &|j| grid.y(j), grid.cell[1]);

        let norm = 1.0 / (nx * ny) as f64;
        let mut chi = vec![vec![Complex64::new(0.0, 0.0); wx * wy]; n_mat];
        let mut row = vec![Complex64::new(0.0, 0.0); wx];
        for (m, table) in chi.iter_mut().enumerate() {
            for j in 0..ny {
                // Row transform over x for this material.
                for (dx, r) in row.iter_mut().enumerate() {
                    let ph = &px[dx * nx..(dx + 1) * nx];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..nx {
                        if grid.material_index[j * nx + i] as usize == m {
                            acc += ph[i];
                        }
                    }
                    *r = acc;
                }
                for dy in 0..wy {
                    let p = py[dy * ny + j] * norm;
                    let out = &mut table[dy * wx..(dy + 1) * wx];
                    for (o, r) in out.iter_mut().zip(&row) {
                        *o += p * r;
                    }
                }
            }
        }
        Ok(Self { span, chi })
    }

    #[inline]
    fn slot(&self, d: [i32; 2]) -> usize {
        let wx = (2 * self.span[0] + 1) as usize;
        (d[1] + self.span[1]) as usize * wx + (d[0] + self.span[0]) as usize
    }

    /// Indicator transform of material `m` at index difference `d`.
    pub fn chi(&self, m: usize, d: [i32; 2]) -> Complex64 {
        self.chi[m][self.slot(d)]
    }

    fn combine<const N: usize>(&self, weights: &[[f64; N]]) -> Vec<[Complex64; N]> {
        let len = self.chi.first().map_or(0, Vec::len);
        let mut out = vec![[Complex64::new(0.0, 0.0); N]; len];
        for (table, w) in self.chi.iter().zip(weights) {
            for (o, c) in out.iter_mut().zip(table) {
                for n in 0..N {
                    o[n] += c * w[n];
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// The generalized eigenproblem

/// `K u = λ M u` in scaled units; degrees of freedom are interleaved
/// `(u_x, u_y)` per basis vector.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenProblem {
    k: Mat<c64>,
    m: Mat<c64>,
    basis: PlaneWaveBasis,
    wavevector: BlochWavevector,
    theta: f64,
    /// `ω = sqrt(λ) · omega_scale`.
    omega_scale: f64,
    /// Smallest density over the largest; lower bound on the spectrum of M.
    mass_floor: f64,
}

impl GeneralizedEigenProblem {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn stiffness(&self, i: usize, j: usize) -> Complex64 {
        from_faer(self.k.read(i, j))
    }

    pub fn mass(&self, i: usize, j: usize) -> Complex64 {
        from_faer(self.m.read(i, j))
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn wavevector(&self) -> BlochWavevector {
        self.wavevector
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn omega_scale(&self) -> f64 {
        self.omega_scale
    }

    pub fn stiffness_norm(&self) -> f64 {
        frobenius(&self.k)
    }

    pub fn mass_norm(&self) -> f64 {
        frobenius(&self.m)
    }

    /// `(‖K − K†‖/‖K‖, ‖M − M†‖/‖M‖)`.
    pub fn hermiticity_residual(&self) -> (f64, f64) {
        let rel = |a: &Mat<c64>| {
            let n = a.nrows();
            let mut s = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let d = from_faer(a.read(i, j)) - from_faer(a.read(j, i)).conj();
                    s += d.norm_sqr();
                }
            }
            libm::sqrt(s) / frobenius(a)
        };
        (rel(&self.k), rel(&self.m))
    }
}

fn frobenius(a: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += from_faer(a.read(i, j)).norm_sqr();
        }
    }
    libm::sqrt(s)
}

/// Builds the pencil for one `(θ, k)` point. Convenience wrapper that
/// recomputes the structure factors; sweeps should use [`Assembler`].
pub fn assemble(
    grid: &MaterialGrid,
    field: &MaterialField,
    k: BlochWavevector,
    basis: &PlaneWaveBasis,
) -> Result<GeneralizedEigenProblem, BlochError> {
    Assembler::new(grid, basis)?.assemble(field, k)
}

/// Caches the geometry-dependent structure factors of a grid for repeated
/// assembly at different θ and k.
#[derive(Debug, Clone)]
pub struct Assembler {
    basis: PlaneWaveBasis,
    factors: StructureFactors,
    a_x: f64,
}

impl Assembler {
    pub fn new(grid: &MaterialGrid, basis: &PlaneWaveBasis) -> Result<Self, BlochError> {
        if basis.is_empty() {
            return Err(BlochError::EmptyBasis);
        }
        Ok(Self {
            basis: basis.clone(),
            factors: StructureFactors::new(grid, basis)?,
            a_x: grid.cell[0],
        })
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn factors(&self) -> &StructureFactors {
        &self.factors
    }

    /// Scaled density transform; the M of every point assembled here.
    pub fn mass_operator(&self, field: &MaterialField) -> MassOperator {
        let rho_s = field.density_scale();
        let w: Vec<[f64; 1]> = field.density.iter().map(|&r| [r / rho_s]).collect();
        MassOperator {
            basis: self.basis.clone(),
            span: self.factors.span,
            rho_hat: self.factors.combine(&w).into_iter().map(|v| v[0]).collect(),
        }
    }

    pub fn assemble(&self, field: &MaterialField, k: BlochWavevector) -> Result<GeneralizedEigenProblem, BlochError> {
        let q_s = field.stiffness_scale();
        let rho_s = field.density_scale();
        if !(q_s > 0.0 && rho_s > 0.0) {
            return Err(BlochError::MassNotPositiveDefinite);
        }
        // Q entries (00, 11, 22, 01, 02, 12) and density, scaled.
        let weights: Vec<[f64; 7]> = field
            .stiffness
            .iter()
            .zip(&field.density)
            .map(|(s, &r)| {
                let q = &s.q;
                [q[0][0], q[1][1], q[2][2], q[0][1], q[0][2], q[1][2], r * q_s / rho_s].map(|v| v / q_s)
            })
            .collect();
        let table = self.factors.combine(&weights);

        let n = self.basis.len();
        let a = self.a_x;
        let qv: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let g = self.basis.g_vector(i);
                [a * (k.kx + g[0]), a * (k.ky + g[1])]
            })
            .collect();
        let ops: Vec<[[f64; 2]; 3]> = qv.iter().map(|&q| strain_operator(q)).collect();

        let mut km = Mat::<c64>::zeros(2 * n, 2 * n);
        let mut mm = Mat::<c64>::zeros(2 * n, 2 * n);
        for ia in 0..n {
            let ma = self.basis.indices[ia];
            let ba = &ops[ia];
            for ib in 0..n {
                let mb = self.basis.indices[ib];
                let t = &table[self.factors.slot([ma[0] - mb[0], ma[1] - mb[1]])];
                let q = [[t[0], t[3], t[4]], [t[3], t[1], t[5]], [t[4], t[5], t[2]]];
                let bb = &ops[ib];
                // Q B_b (3x2), then B_aᵀ (Q B_b).
                let mut qb = [[Complex64::new(0.0, 0.0); 2]; 3];
                for r in 0..3 {
                    for c in 0..2 {
                        qb[r][c] = q[r][0] * bb[0][c] + q[r][1] * bb[1][c] + q[r][2] * bb[2][c];
                    }
                }
                for r in 0..2 {
                    for c in 0..2 {
                        let v = qb[0][c] * ba[0][r] + qb[1][c] * ba[1][r] + qb[2][c] * ba[2][r];
                        km.write(2 * ia + r, 2 * ib + c, to_faer(v));
                    }
                }
                let rho = to_faer(t[6]);
                mm.write(2 * ia, 2 * ib, rho);
                mm.write(2 * ia + 1, 2 * ib + 1, rho);
            }
        }
        let rho_min = field.density.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        Ok(GeneralizedEigenProblem {
            k: km,
            m: mm,
            basis: self.basis.clone(),
            wavevector: k,
            theta: field.theta,
            omega_scale: libm::sqrt(q_s / rho_s) / a,
            mass_floor: rho_min / rho_s,
        })
    }
}

/// `M` restricted to one polarization: `(M u)_a = Σ_b ρ̂(G_a − G_b) u_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassOperator {
    basis: PlaneWaveBasis,
    span: [i32; 2],
    rho_hat: Vec<Complex64>,
}

impl MassOperator {
    fn slot(&self, d: [i32; 2]) -> usize {
        let wx = (2 * self.span[0] + 1) as usize;
        (d[1] + self.span[1]) as usize * wx + (d[0] + self.span[0]) as usize
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.basis.len();
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * n];
        for a in 0..n {
            let ma = self.basis.indices[a];
            let (mut sx, mut sy) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for b in 0..n {
                let mb = self.basis.indices[b];
                let r = self.rho_hat[self.slot([ma[0] - mb[0], ma[1] - mb[1]])];
                sx += r * u[2 * b];
                sy += r * u[2 * b + 1];
            }
            out[2 * a] = sx;
            out[2 * a + 1] = sy;
        }
        out
    }

    /// `⟨u, M v⟩`.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        dot(u, &self.apply(v))
    }
}

/// `Σ conj(u_i) v_i`.
pub fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

// ---------------------------------------------------------------------------
// Solve

/// How degenerate eigenvectors are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SymmetryMode {
    /// Split the pencil into the sectors of every cell symmetry that
    /// commutes with it; modes come out symmetry-adapted.
    #[default]
    Auto,
    /// Solve the full pencil; degenerate modes get only the deterministic
    /// tie-break.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveOptions {
    pub n_bands: usize,
    pub symmetry: SymmetryMode,
    /// Relative eigenvalue separation below which modes form a cluster.
    pub degeneracy_tol: f64,
}

impl SolveOptions {
    pub fn bands(n_bands: usize) -> Self {
        Self {
            n_bands,
            ..Default::default()
        }
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            n_bands: 20,
            symmetry: SymmetryMode::Auto,
            degeneracy_tol: 1e-8,
        }
    }
}

/// Relative residual bound enforced on every returned mode.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Eigenvalues within this fraction of `‖K‖/‖M‖` of zero are reported as 0.
pub const ZERO_CLAMP: f64 = 1e-10;

/// One eigenpair at a `(θ, k)` point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlochMode {
    /// Angular frequency, rad/s.
    pub omega: f64,
    pub k: BlochWavevector,
    pub theta: f64,
    pub band_index: usize,
    /// Interleaved `(u_x, u_y)` per basis vector, unit M-norm.
    pub coefficients: Vec<Complex64>,
    /// `‖K u − λ M u‖ / ‖K‖`.
    pub residual: f64,
    /// Upper bound on the frequency error implied by `residual`, Hz.
    pub freq_error_bound: f64,
}

impl BlochMode {
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

fn commutes(p: &GeneralizedEigenProblem, a: &FourierAction) -> bool {
    let n = p.basis.len();
    let tol_k = 1e-10 * max_abs(&p.k);
    let tol_m = 1e-10 * max_abs(&p.m);
    for ib in 0..n {
        let pb = a.perm[ib];
        for c in 0..2 {
            let (k_col, k_src) = (p.k.col_as_slice(2 * ib + c), p.k.col_as_slice(2 * pb + c));
            let (m_col, m_src) = (p.m.col_as_slice(2 * ib + c), p.m.col_as_slice(2 * pb + c));
            for ia in 0..n {
                let pa = a.perm[ia];
                for r in 0..2 {
                    let s = a.sign[r] * a.sign[c];
                    let (i, si) = (2 * ia + r, 2 * pa + r);
                    let dk = from_faer(k_src[si]) * s - from_faer(k_col[i]);
                    let dm = from_faer(m_src[si]) * s - from_faer(m_col[i]);
                    if dk.norm() > tol_k || dm.norm() > tol_m {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn max_abs(a: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for &z in a.col_as_slice(j) {
            m = m.max(from_faer(z).norm());
        }
    }
    m
}

/// Symmetry operations of the pencil at its wavevector: those whose Fourier
/// action exists on the basis and commutes with both K and M.
pub fn pencil_symmetries(p: &GeneralizedEigenProblem) -> Vec<FourierAction> {
    let frac = p.wavevector.lattice_fraction(p.basis.cell);
    let mut out = Vec::new();
    for op in SymmetryOp::ALL {
        let Some(shift) = op.k_shift(frac, 1e-9) else { continue };
        let Some(action) = FourierAction::new(op, &p.basis.indices, shift, |m| p.basis.position(m)) else {
            continue;
        };
        if commutes(p, &action) {
            out.push(action);
        }
    }
    out
}

/// Independent generators of the symmetry group: both mirrors when present
/// (their product is the π rotation), otherwise whichever single operation
/// commutes.
fn generators(mut syms: Vec<FourierAction>) -> Vec<FourierAction> {
    let has = |ops: &[FourierAction], op| ops.iter().any(|a| a.op == op);
    if has(&syms, SymmetryOp::SigmaX) && has(&syms, SymmetryOp::SigmaY) {
        syms.retain(|a| a.op != SymmetryOp::RzPi);
    }
    syms.truncate(2);
    syms
}

/// One symmetry sector: orthonormal columns with at most `|G|` real
/// nonzeros each, and the generator eigenvalues that define it.
struct Sector {
    columns: Vec<Vec<(usize, f64)>>,
}

fn sectors(dim: usize, gens: &[FourierAction]) -> Vec<Sector> {
    let r = gens.len();
    let n_chars = 1usize << r;
    // Group elements as products of generator subsets; element `e` uses
    // generator `g` when bit `g` is set.
    let image = |e: usize, dof: usize| -> (usize, f64) {
        let (mut d, mut s) = (dof, 1.0);
        for (g, a) in gens.iter().enumerate() {
            if e >> g & 1 == 1 {
                let (b, c) = (d / 2, d % 2);
                d = 2 * a.perm[b] + c;
                s *= a.sign[c];
            }
        }
        (d, s)
    };
    let mut sectors: Vec<Sector> = (0..n_chars).map(|_| Sector { columns: Vec::new() }).collect();
    let mut seen = vec![false; dim];
    for j in 0..dim {
        if seen[j] {
            continue;
        }
        let images: Vec<(usize, f64)> = (0..n_chars).map(|e| image(e, j)).collect();
        for &(d, _) in &images {
            seen[d] = true;
        }
        for (ch, sector) in sectors.iter_mut().enumerate() {
            // Character value of element e: product of generator signs.
            let mut col: Vec<(usize, f64)> = Vec::new();
            for (e, &(d, s)) in images.iter().enumerate() {
                let chi = if (ch & e).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                match col.iter_mut().find(|(i, _)| *i == d) {
                    Some(entry) => entry.1 += chi * s,
                    None => col.push((d, chi * s)),
                }
            }
            col.retain(|&(_, v)| v.abs() > 0.5);
            if col.is_empty() {
                continue;
            }
            col.sort_by_key(|&(i, _)| i);
            let norm = libm::sqrt(col.iter().map(|&(_, v)| v * v).sum::<f64>());
            col.iter_mut().for_each(|e| e.1 /= norm);
            sector.columns.push(col);
        }
    }
    sectors.retain(|s| !s.columns.is_empty());
    sectors
}

fn project(a: &Mat<c64>, cols: &[Vec<(usize, f64)>]) -> Mat<c64> {
    let n = cols.len();
    Mat::<c64>::from_fn(n, n, |r, s| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(i, vi) in &cols[r] {
            for &(j, vj) in &cols[s] {
                acc += from_faer(a.read(i, j)) * (vi * vj);
            }
        }
        to_faer(acc)
    })
}

/// Lowest `count` eigenpairs of a dense Hermitian pencil, ascending;
/// eigenvectors are M-orthonormal.
fn dense_lowest(k: &Mat<c64>, m: &Mat<c64>, count: usize) -> Result<(Vec<f64>, Mat<c64>), BlochError> {
    let dim = k.nrows();
    let chol = m.cholesky(Side::Lower).map_err(|_| BlochError::MassNotPositiveDefinite)?;
    let l = chol.compute_l();
    // A = L⁻¹ K L⁻ᴴ
    let mut y = k.clone();
    solve_lower_triangular_in_place(l.as_ref(), y.as_mut(), Parallelism::None);
    let mut a = y.adjoint().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), a.as_mut(), Parallelism::None);
    for j in 0..dim {
        for i in j..dim {
            let v = (from_faer(a.read(i, j)) + from_faer(a.read(j, i)).conj()) * 0.5;
            a.write(i, j, to_faer(v));
            a.write(j, i, to_faer(v.conj()));
        }
    }
    let eig = a.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| s.read(i).re.total_cmp(&s.read(j).re));
    let count = count.min(dim);
    let lambda: Vec<f64> = order[..count].iter().map(|&i| s.read(i).re).collect();
    let mut x = Mat::<c64>::from_fn(dim, count, |r, c| eig.u().read(r, order[c]));
    solve_upper_triangular_in_place(l.adjoint(), x.as_mut(), Parallelism::None);
    Ok((lambda, x))
}

fn phase_fix(u: &mut [Complex64]) {
    let max = u.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = u.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let z = u[pivot];
    let rot = z.conj() / z.norm();
    for c in u.iter_mut() {
        *c *= rot;
    }
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

struct Candidate {
    lambda: f64,
    sector: usize,
    u: Vec<Complex64>,
}

/// The `n_bands` smallest eigenpairs of the pencil, ascending in frequency.
///
/// With [`SymmetryMode::Auto`] the pencil is first split into the sectors of
/// its symmetry group; each sector is solved densely and the spectra merged.
/// Within a degenerate cluster modes are ordered by sector, then by their
/// phase-fixed coefficients.
pub fn solve(p: &GeneralizedEigenProblem, opts: &SolveOptions) -> Result<Vec<BlochMode>, BlochError> {
    let dim = p.dim();
    if opts.n_bands > dim {
        return Err(BlochError::TooManyBands {
            requested: opts.n_bands,
            available: dim,
        });
    }
    if opts.n_bands == 0 {
        return Ok(Vec::new());
    }
    let k_norm = frobenius(&p.k);
    let m_norm = frobenius(&p.m);
    let zero_tol = ZERO_CLAMP * k_norm / m_norm;
    let cluster_tol = |l: f64| opts.degeneracy_tol * l.abs().max(1.0);

    let gens = match opts.symmetry {
        SymmetryMode::Auto => generators(pencil_symmetries(p)),
        SymmetryMode::Off => Vec::new(),
    };
    let secs = sectors(dim, &gens);

    let mut candidates: Vec<Candidate> = Vec::new();
    for (si, sec) in secs.iter().enumerate() {
        let (kb, mb) = if gens.is_empty() {
            (p.k.clone(), p.m.clone())
        } else {
            (project(&p.k, &sec.columns), project(&p.m, &sec.columns))
        };
        let nb = kb.nrows();
        let want = opts.n_bands.min(nb);
        // Take a few extra so clusters straddling the cut stay whole.
        let (lambda, x) = dense_lowest(&kb, &mb, (want + 4).min(nb))?;
        let mut take = want;
        while take < lambda.len() && lambda[take] - lambda[take - 1] <= cluster_tol(lambda[take - 1]) {
            take += 1;
        }
        for c in 0..take {
            let u: Vec<Complex64> = if gens.is_empty() {
                x.col_as_slice(c).iter().map(|&z| from_faer(z)).collect()
            } else {
                let mut u = vec![Complex64::new(0.0, 0.0); dim];
                for (r, col) in sec.columns.iter().enumerate() {
                    let y = from_faer(x.read(r, c));
                    for &(i, v) in col {
                        u[i] += y * v;
                    }
                }
                u
            };
            candidates.push(Candidate {
                lambda: lambda[c],
                sector: si,
                u,
            });
        }
    }

    for (i, c) in candidates.iter_mut().enumerate() {
        if c.lambda < -zero_tol {
            return Err(BlochError::NegativeEigenvalue {
                mode: i,
                value: c.lambda,
                tol: zero_tol,
            });
        }
        if c.lambda.abs() < zero_tol {
            c.lambda = 0.0;
        }
        phase_fix(&mut c.u);
    }
    candidates.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));

    // Deterministic order inside degenerate clusters.
    let mut start = 0;
    while start < candidates.len() {
        let mut end = start + 1;
        while end < candidates.len() && candidates[end].lambda - candidates[end - 1].lambda <= cluster_tol(candidates[end - 1].lambda) {
            end += 1;
        }
        candidates[start..end].sort_by(|a, b| a.sector.cmp(&b.sector).then_with(|| lex_cmp(&a.u, &b.u)));
        start = end;
    }
    candidates.truncate(opts.n_bands);

    let vecs: Vec<Vec<Complex64>> = candidates.iter().map(|c| c.u.clone()).collect();
    let kv = mat_times(&p.k, &vecs);
    let mv = mat_times(&p.m, &vecs);
    let mut modes = Vec::with_capacity(opts.n_bands);
    for (band, (c, u)) in candidates.iter().zip(vecs).enumerate() {
        let l = c.lambda;
        let r2: f64 = kv[band].iter().zip(&mv[band]).map(|(k, m)| (k - m * l).norm_sqr()).sum();
        let residual = libm::sqrt(r2) / k_norm;
        if !(residual <= RESIDUAL_BOUND) {
            return Err(BlochError::NonConvergence {
                mode: band,
                residual,
                bound: RESIDUAL_BOUND,
            });
        }
        modes.push(BlochMode {
            omega: libm::sqrt(l.max(0.0)) * p.omega_scale,
            k: p.wavevector,
            theta: p.theta,
            band_index: band,
            coefficients: u,
            residual,
            freq_error_bound: frequency_error_bound(l, residual * k_norm, p.mass_floor, p.omega_scale),
        });
    }
    Ok(modes)
}

fn mat_times(a: &Mat<c64>, vs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let x = Mat::<c64>::from_fn(a.ncols(), vs.len(), |i, j| to_faer(vs[j][i]));
    let y = a * &x;
    (0..vs.len())
        .map(|j| y.col_as_slice(j).iter().map(|&z| from_faer(z)).collect())
        .collect()
}

/// Frequency error (Hz) implied by a residual norm `r` for an M-normalized
/// eigenvector: `|δλ| ≤ r / sqrt(μ_min(M))`, propagated through `ω = s·sqrt(λ)`.
fn frequency_error_bound(lambda: f64, r: f64, mass_floor: f64, omega_scale: f64) -> f64 {
    let dl = r / libm::sqrt(mass_floor);
    let hi = libm::sqrt(lambda + dl);
    let lo = libm::sqrt((lambda - dl).max(0.0));
    omega_scale * (hi - libm::sqrt(lambda)).max(libm::sqrt(lambda) - lo) / (2.0 * PI)
}

// ---------------------------------------------------------------------------
// Sweeps

/// Filler material relative to the solid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FillerRatios {
    pub density_ratio: f64,
    pub stiffness_ratio: f64,
}

impl Default for FillerRatios {
    fn default() -> Self {
        Self {
            density_ratio: 1e-4,
            stiffness_ratio: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepOptions {
    /// Raster resolution `(nx, ny)`.
    pub resolution: [usize; 2],
    pub cutoff: Cutoff,
    pub solve: SolveOptions,
    pub reduction: PlaneReduction,
    pub filler: FillerRatios,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            resolution: [64, 400],
            cutoff: Cutoff::Ellipse { nx: 8, ny: 48 },
            solve: SolveOptions::default(),
            reduction: PlaneReduction::PlaneStress,
            filler: FillerRatios::default(),
        }
    }
}

/// Provenance of a band structure.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandMeta {
    pub geometry_hash: u64,
    pub cutoff: Cutoff,
    pub basis_size: usize,
    pub resolution: [usize; 2],
    pub reduction: PlaneReduction,
    pub filler: Option<FillerRatios>,
    pub c16_forced_zero: bool,
}

/// Modes on the full `(θ, k, band)` grid. Frequencies ascend in `band` at
/// every `(θ, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub thetas: Vec<f64>,
    pub kpoints: Vec<BlochWavevector>,
    pub n_bands: usize,
    /// Flattened `(θ, k, band)`, band fastest.
    pub modes: Vec<BlochMode>,
    pub meta: BandMeta,
    pub mass: MassOperator,
}

impl BandStructure {
    pub fn mode(&self, t: usize, k: usize, band: usize) -> &BlochMode {
        &self.modes[(t * self.kpoints.len() + k) * self.n_bands + band]
    }

    pub fn modes_at(&self, t: usize, k: usize) -> &[BlochMode] {
        let start = (t * self.kpoints.len() + k) * self.n_bands;
        &self.modes[start..start + self.n_bands]
    }

    /// Frequency in Hz.
    pub fn frequency(&self, t: usize, k: usize, band: usize) -> f64 {
        self.mode(t, k, band).frequency_hz()
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.mass.basis
    }

    /// Number of `(θ, k)` points.
    pub fn n_points(&self) -> usize {
        self.thetas.len() * self.kpoints.len()
    }
}

/// Band sweep of a waveguide geometry: rasterizes with the solid and a
/// filler derived from it, then solves at every `(θ, k)`.
pub fn band_sweep(
    geometry: &UnitCellGeometry,
    thetas: &[f64],
    kpath: &[BlochWavevector],
    solid: &ElasticMaterial,
    options: &SweepOptions,
) -> Result<BandStructure, SweepError> {
    sweep_geometry(geometry, thetas, kpath, solid, options, false)
}

/// Same as [`band_sweep`] with the rotated C₁₆ and C₂₆ set to zero before
/// the in-plane reduction.
pub fn force_c16_zero_sweep(
    geometry: &UnitCellGeometry,
    thetas: &[f64],
    kpath: &[BlochWavevector],
    solid: &ElasticMaterial,
    options: &SweepOptions,
) -> Result<BandStructure, SweepError> {
    sweep_geometry(geometry, thetas, kpath, solid, options, true)
}

fn untagged(source: BlochError) -> SweepError {
    SweepError {
        theta_index: 0,
        k_index: 0,
        source,
    }
}

fn sweep_geometry(
    geometry: &UnitCellGeometry,
    thetas: &[f64],
    kpath: &[BlochWavevector],
    solid: &ElasticMaterial,
    options: &SweepOptions,
    force_c16_zero: bool,
) -> Result<BandStructure, SweepError> {
    let filler = ElasticMaterial::filler_for(solid, options.filler.density_ratio, options.filler.stiffness_ratio)
        .map_err(|e| untagged(e.into()))?;
    let [nx, ny] = options.resolution;
    let grid = rasterize(geometry, nx, ny, solid, &filler).map_err(|e| untagged(e.into()))?;
    let mut bands = sweep_grid(&grid, thetas, kpath, options, force_c16_zero)?;
    bands.meta.filler = Some(options.filler);
    Ok(bands)
}

/// Sweep on an existing grid; every material of the grid is rotated by θ.
pub fn sweep_grid(
    grid: &MaterialGrid,
    thetas: &[f64],
    kpath: &[BlochWavevector],
    options: &SweepOptions,
    force_c16_zero: bool,
) -> Result<BandStructure, SweepError> {
    if thetas.is_empty() || kpath.is_empty() {
        return Err(untagged(BlochError::EmptySweep));
    }
    let basis = PlaneWaveBasis::new(grid.cell, options.cutoff).map_err(untagged)?;
    let assembler = Assembler::new(grid, &basis).map_err(untagged)?;
    let nk = kpath.len();
    let points: Vec<(usize, usize)> = (0..thetas.len()).flat_map(|t| (0..nk).map(move |k| (t, k))).collect();

    let fields: Vec<MaterialField> = thetas
        .iter()
        .enumerate()
        .map(|(t, &theta)| {
            MaterialField::new(&grid.materials, theta, options.reduction, force_c16_zero).map_err(|source| SweepError {
                theta_index: t,
                k_index: 0,
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let run = |&(t, k): &(usize, usize)| -> Result<Vec<BlochMode>, SweepError> {
        let tag = |source| SweepError {
            theta_index: t,
            k_index: k,
            source,
        };
        let p = assembler.assemble(&fields[t], kpath[k]).map_err(tag)?;
        solve(&p, &options.solve).map_err(tag)
    };

    #[cfg(feature = "std")]
    let results: Vec<Result<Vec<BlochMode>, SweepError>> = {
        use rayon::prelude::*;
        points.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "std"))]
    let results: Vec<Result<Vec<BlochMode>, SweepError>> = points.iter().map(run).collect();

    let mut modes = Vec::with_capacity(points.len() * options.solve.n_bands);
    for r in results {
        modes.extend(r?);
    }
    Ok(BandStructure {
        thetas: thetas.to_vec(),
        kpoints: kpath.to_vec(),
        n_bands: options.solve.n_bands,
        modes,
        meta: BandMeta {
            geometry_hash: grid.fingerprint(),
            cutoff: options.cutoff,
            basis_size: basis.len(),
            resolution: [grid.nx, grid.ny],
            reduction: options.reduction,
            filler: None,
            c16_forced_zero: force_c16_zero,
        },
        mass: assembler.mass_operator(&fields[0]),
    })
}

/// `n` evenly spaced points from `k = 0` to the zone edge `π/a_x` along x.
pub fn kx_path(cell: [f64; 2], n: usize) -> Vec<BlochWavevector> {
    match n {
        0 => Vec::new(),
        1 => vec![BlochWavevector::default()],
        _ => (0..n)
            .map(|i| BlochWavevector::from_zone_fraction(i as f64 / (n - 1) as f64, 0.0, cell))
            .collect(),
    }
}

/// `n` evenly spaced angles on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RegionBoundaries, UnitCellGeometry};
    use crate::materials::{christoffel_velocities, VoigtStiffness};

    fn uniform_grid(m: &ElasticMaterial, cell: [f64; 2], n: [usize; 2]) -> MaterialGrid {
        let g = UnitCellGeometry::new(cell, vec![], RegionBoundaries::all_cshape()).unwrap();
        rasterize(&g, n[0], n[1], m, m).unwrap()
    }

    #[test]
    fn basis_closed_under_negation_and_contains_zero() {
        for cutoff in [Cutoff::Box { nx: 3, ny: 5 }, Cutoff::Ellipse { nx: 4, ny: 7 }, Cutoff::Box { nx: 6, ny: 0 }] {
            let b = PlaneWaveBasis::new([1.0, 2.0], cutoff).unwrap();
            assert!(b.position([0, 0]).is_some());
            for m in &b.indices {
                assert!(b.position([-m[0], -m[1]]).is_some());
                assert_eq!(b.indices[b.position(*m).unwrap()], *m);
            }
        }
        assert_eq!(PlaneWaveBasis::new([1.0, 1.0], Cutoff::Box { nx: 2, ny: 3 }).unwrap().len(), 35);
    }

    #[test]
    fn aliasing_is_rejected() {
        let si = ElasticMaterial::silicon();
        let grid = uniform_grid(&si, [1.0, 1.0], [16, 16]);
        let b = PlaneWaveBasis::new([1.0, 1.0], Cutoff::Box { nx: 4, ny: 2 }).unwrap();
        assert!(matches!(Assembler::new(&grid, &b), Err(BlochError::Aliasing { axis: 'x', .. })));
    }

    #[test]
    fn homogeneous_rigid_modes_at_gamma() {
        let si = ElasticMaterial::silicon();
        let cell = [500e-9, 500e-9];
        let grid = uniform_grid(&si, cell, [16, 16]);
        let basis = PlaneWaveBasis::new(cell, Cutoff::Box { nx: 2, ny: 2 }).unwrap();
        let field = MaterialField::new(&grid.materials, 0.0, PlaneReduction::PlaneStress, false).unwrap();
        let p = assemble(&grid, &field, BlochWavevector::default(), &basis).unwrap();
        let modes = solve(&p, &SolveOptions::bands(4)).unwrap();
        assert_eq!(modes[0].omega, 0.0);
        assert_eq!(modes[1].omega, 0.0);
        assert!(modes[2].omega > 0.0);
    }

    #[test]
    fn homogeneous_matches_christoffel() {
        let si = ElasticMaterial::silicon();
        let cell = [500e-9, 500e-9];
        let grid = uniform_grid(&si, cell, [16, 16]);
        let basis = PlaneWaveBasis::new(cell, Cutoff::Box { nx: 1, ny: 1 }).unwrap();
        for theta in [0.0, 0.3] {
            let field = MaterialField::new(&grid.materials, theta, PlaneReduction::PlaneStress, false).unwrap();
            let k = BlochWavevector::from_zone_fraction(0.3, 0.1, cell);
            let p = assemble(&grid, &field, k, &basis).unwrap();
            let modes = solve(&p, &SolveOptions::bands(2)).unwrap();
            let n = [k.kx / k.norm(), k.ky / k.norm()];
            let v = christoffel_velocities(&si.rotated(theta), n, PlaneReduction::PlaneStress).unwrap();
            for b in 0..2 {
                let rel = (modes[b].omega / k.norm() - v[b]).abs() / v[b];
                assert!(rel < 1e-10, "theta {theta} band {b}: {rel:e}");
            }
        }
    }

    #[test]
    fn pencil_is_hermitian_and_modes_m_orthonormal() {
        let si = ElasticMaterial::silicon();
        let f = ElasticMaterial::filler_for(&si, 1e-4, 1e-6).unwrap();
        let hole = crate::geometry::Shape {
            role: crate::geometry::Role::Hole,
            region: crate::geometry::Region::CShape,
            parts: vec![crate::geometry::Primitive::Rect {
                center: [0.1e-7, 0.0],
                half: [1.5e-7, 1.0e-7],
            }],
        };
        let cell = [5e-7, 6e-7];
        let g = UnitCellGeometry::new(cell, vec![hole], RegionBoundaries::all_cshape()).unwrap();
        let grid = rasterize(&g, 32, 32, &si, &f).unwrap();
        let basis = PlaneWaveBasis::new(cell, Cutoff::Box { nx: 3, ny: 3 }).unwrap();
        let field = MaterialField::new(&grid.materials, 0.4, PlaneReduction::PlaneStress, false).unwrap();
        let k = BlochWavevector::from_zone_fraction(0.37, 0.2, cell);
        let p = assemble(&grid, &field, k, &basis).unwrap();
        let (hk, hm) = p.hermiticity_residual();
        assert!(hk < 1e-10 && hm < 1e-10);
        let modes = solve(&p, &SolveOptions::bands(8)).unwrap();
        let bs_mass = Assembler::new(&grid, &basis).unwrap().mass_operator(&field);
        for i in 0..8 {
            for j in 0..8 {
                let g = bs_mass.inner(&modes[i].coefficients, &modes[j].coefficients);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).norm() < 1e-8, "({i},{j}) {g}");
            }
            if i > 0 {
                assert!(modes[i].omega >= modes[i - 1].omega);
            }
        }
    }

    #[test]
    fn too_many_bands() {
        let si = ElasticMaterial::silicon();
        let grid = uniform_grid(&si, [1e-6, 1e-6], [8, 8]);
        let basis = PlaneWaveBasis::new([1e-6, 1e-6], Cutoff::Box { nx: 1, ny: 1 }).unwrap();
        let field = MaterialField::new(&grid.materials, 0.0, PlaneReduction::PlaneStress, false).unwrap();
        let p = assemble(&grid, &field, BlochWavevector::default(), &basis).unwrap();
        assert!(matches!(solve(&p, &SolveOptions::bands(19)), Err(BlochError::TooManyBands { .. })));
    }

    #[test]
    fn reduced_wavevector() {
        let cell = [1.0, 1.0];
        let k = BlochWavevector::new(3.0 * PI, -0.5).reduced(cell);
        assert!((k.kx - PI).abs() < 1e-12);
        assert_eq!(k.ky, -0.5);
    }

    #[test]
    fn isotropic_is_theta_independent() {
        let iso = ElasticMaterial::new("iso", 2000.0, VoigtStiffness::isotropic(100e9, 30e9)).unwrap();
        let a = MaterialField::new(&[iso.clone()], 0.0, PlaneReduction::PlaneStress, false).unwrap();
        let b = MaterialField::new(&[iso], 0.7, PlaneReduction::PlaneStress, false).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.stiffness[0].q[i][j] - b.stiffness[0].q[i][j]).abs() < 1e-3);
            }
        }
    }
}
