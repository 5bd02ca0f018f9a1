//! The point operations used to classify modes: mirrors about the y and x
//! axes and the in-plane π rotation, all about the cell centre.

use alloc::vec::Vec;

use num_complex::Complex64;

/// A spatial symmetry of the unit cell.
///
/// `SigmaY` maps `(x, y) → (x, -y)` and flips `u_y`; `SigmaX` maps
/// `(x, y) → (-x, y)` and flips `u_x`; `RzPi` maps `(x, y) → (-x, -y)` and
/// flips both components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SymmetryOp {
    SigmaX,
    SigmaY,
    RzPi,
}

impl SymmetryOp {
    pub const ALL: [SymmetryOp; 3] = [SymmetryOp::SigmaX, SymmetryOp::SigmaY, SymmetryOp::RzPi];

    /// Coordinate signs `(sx, sy)` of the spatial map.
    pub fn signs(self) -> [f64; 2] {
        match self {
            SymmetryOp::SigmaX => [-1.0, 1.0],
            SymmetryOp::SigmaY => [1.0, -1.0],
            SymmetryOp::RzPi => [-1.0, -1.0],
        }
    }

    /// Diagonal of the vector representation acting on `(u_x, u_y)`. For these
    /// operations it equals the coordinate signs.
    pub fn vector_rep(self) -> [f64; 2] {
        self.signs()
    }

    pub fn name(self) -> &'static str {
        match self {
            SymmetryOp::SigmaX => "sigma_x",
            SymmetryOp::SigmaY => "sigma_y",
            SymmetryOp::RzPi => "rz_pi",
        }
    }

    /// Short form used in CLI filters (`sx`, `sy`, `rz`).
    pub fn short_name(self) -> &'static str {
        match self {
            SymmetryOp::SigmaX => "sx",
            SymmetryOp::SigmaY => "sy",
            SymmetryOp::RzPi => "rz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sx" | "sigma_x" => Some(SymmetryOp::SigmaX),
            "sy" | "sigma_y" => Some(SymmetryOp::SigmaY),
            "rz" | "rz_pi" => Some(SymmetryOp::RzPi),
            _ => None,
        }
    }

    /// Whether the operation maps the Bloch wavevector `k` (in units of the
    /// reciprocal lattice vectors, i.e. `k_x a_x / 2π`) onto itself modulo a
    /// reciprocal lattice vector. Returns the lattice shift `2k'` needed, where
    /// `S k = k - shift`.
    pub fn k_shift(self, k_frac: [f64; 2], tol: f64) -> Option<[i32; 2]> {
        let s = self.signs();
        let mut shift = [0i32; 2];
        for a in 0..2 {
            if s[a] < 0.0 {
                let twice = 2.0 * k_frac[a];
                let r = libm::round(twice);
                if (twice - r).abs() > tol {
                    return None;
                }
                shift[a] = r as i32;
            }
        }
        Some(shift)
    }

    /// Pixel index of the image of pixel `(i, j)` on an `nx × ny` grid with
    /// centred pixel coordinates. Exact for all resolutions; involutive.
    #[inline]
    pub fn pixel_map(self, i: usize, j: usize, nx: usize, ny: usize) -> (usize, usize) {
        match self {
            SymmetryOp::SigmaX => (nx - 1 - i, j),
            SymmetryOp::SigmaY => (i, ny - 1 - j),
            SymmetryOp::RzPi => (nx - 1 - i, ny - 1 - j),
        }
    }
}

/// Action of a symmetry operation on interleaved `(u_x, u_y)` Fourier
/// coefficients: `(S u)[2a + c] = sign[c] · u[2 perm[a] + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierAction {
    pub op: SymmetryOp,
    pub perm: Vec<usize>,
    pub sign: [f64; 2],
}

impl FourierAction {
    /// Builds the action on a basis given as integer index pairs. `shift` is
    /// the result of [`SymmetryOp::k_shift`]. Returns `None` if the basis is
    /// not closed under the map.
    pub fn new(op: SymmetryOp, indices: &[[i32; 2]], shift: [i32; 2], lookup: impl Fn([i32; 2]) -> Option<usize>) -> Option<Self> {
        let s = op.signs();
        let mut perm = Vec::with_capacity(indices.len());
        for m in indices {
            // Coefficient of e^{i(k+G')x} in u(Sx) comes from G with S(k+G) = k+G'.
            let mut src = *m;
            for a in 0..2 {
                if s[a] < 0.0 {
                    src[a] = -m[a] - shift[a];
                }
            }
            perm.push(lookup(src)?);
        }
        Some(Self { op, perm, sign: op.vector_rep() })
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(u.len());
        for &p in &self.perm {
            out.push(u[2 * p] * self.sign[0]);
            out.push(u[2 * p + 1] * self.sign[1]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_maps_are_involutions() {
        for op in SymmetryOp::ALL {
            for (nx, ny) in [(8, 10), (9, 11)] {
                for j in 0..ny {
                    for i in 0..nx {
                        let (a, b) = op.pixel_map(i, j, nx, ny);
                        assert_eq!(op.pixel_map(a, b, nx, ny), (i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn k_shift_only_at_symmetric_points() {
        assert_eq!(SymmetryOp::SigmaX.k_shift([0.0, 0.3], 1e-9), Some([0, 0]));
        assert_eq!(SymmetryOp::SigmaX.k_shift([0.5, 0.3], 1e-9), Some([1, 0]));
        assert_eq!(SymmetryOp::SigmaX.k_shift([0.25, 0.0], 1e-9), None);
        assert_eq!(SymmetryOp::SigmaY.k_shift([0.25, 0.0], 1e-9), Some([0, 0]));
        assert_eq!(SymmetryOp::RzPi.k_shift([0.25, 0.0], 1e-9), None);
    }

    #[test]
    fn names_round_trip() {
        for op in SymmetryOp::ALL {
            assert_eq!(SymmetryOp::parse(op.name()), Some(op));
            assert_eq!(SymmetryOp::parse(op.short_name()), Some(op));
        }
    }

    #[test]
    fn action_is_involutive() {
        let idx: Vec<[i32; 2]> = (-2..=2).flat_map(|y| (-2..=2).map(move |x| [x, y])).collect();
        let lookup = |m: [i32; 2]| {
            (m[0].abs() <= 2 && m[1].abs() <= 2).then(|| ((m[1] + 2) * 5 + m[0] + 2) as usize)
        };
        let u: Vec<Complex64> = (0..2 * idx.len()).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        for op in SymmetryOp::ALL {
            let a = FourierAction::new(op, &idx, [0, 0], lookup).unwrap();
            assert_eq!(a.apply(&a.apply(&u)), u);
        }
        // Zone-edge σ_x needs indices outside a symmetric box.
        assert!(FourierAction::new(SymmetryOp::SigmaX, &idx, [1, 0], lookup).is_none());
    }
}
