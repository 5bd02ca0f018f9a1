//! Small dense helpers shared by the physics modules.

use faer::complex_native::c64;
use faer::{Mat, Side};
use num_complex::Complex64;

#[inline]
pub(crate) fn to_faer(z: Complex64) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
pub(crate) fn from_faer(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Eigenvalues of a small real symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues<const N: usize>(a: &[[f64; N]; N]) -> [f64; N] {
    let m = Mat::<f64>::from_fn(N, N, |i, j| a[i][j]);
    let mut out = [0.0; N];
    let mut vals = m.selfadjoint_eigenvalues(Side::Lower);
    vals.sort_by(f64::total_cmp);
    out.copy_from_slice(&vals);
    out
}

/// Eigenvalues of the symmetric 2x2 matrix `[[a, b], [b, d]]`, ascending.
///
/// The smaller root is recovered from the determinant to avoid cancellation.
pub(crate) fn sym2_eigenvalues(a: f64, b: f64, d: f64) -> [f64; 2] {
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let rad = libm::hypot(half_diff, b);
    let hi = mean + rad;
    let det = a * d - b * b;
    let lo = if mean > 0.0 && hi != 0.0 { det / hi } else { mean - rad };
    [lo, hi]
}

pub(crate) fn inv3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
    let c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
    let c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
    let det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det,
            (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det,
            (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det,
            (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det,
        ],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_3x3() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = inv3(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-14);
            }
        }
        assert!(inv3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_none());
    }

    #[test]
    fn sym2_matches_general_solver() {
        let (a, b, d) = (3.0, 0.7, 1.2);
        let lam = sym2_eigenvalues(a, b, d);
        let reference = sym_eigenvalues(&[[a, b], [b, d]]);
        assert!((lam[0] - reference[0]).abs() < 1e-14);
        assert!((lam[1] - reference[1]).abs() < 1e-14);
    }
}
