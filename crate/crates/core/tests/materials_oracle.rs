use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use cshape_core::materials::{
    christoffel_velocities, rotate_stiffness, ElasticMaterial, PlaneReduction, VoigtStiffness,
};
use proptest::prelude::*;

const VOIGT: [[usize; 2]; 6] = [[0, 0], [1, 1], [2, 2], [1, 2], [0, 2], [0, 1]];

fn voigt_index(i: usize, j: usize) -> usize {
    VOIGT
        .iter()
        .position(|p| (p[0] == i && p[1] == j) || (p[0] == j && p[1] == i))
        .unwrap()
}

/// C'_ijkl = a_ip a_jq a_kr a_ls C_pqrs, evaluated term by term, with
/// a_ip = e'_i · e_p for device axes e' turned by `theta` about z.
fn brute_force_rotation(c: &VoigtStiffness, theta: f64) -> [[f64; 6]; 6] {
    let (s, co) = theta.sin_cos();
    let e1 = [co, s, 0.0];
    let e2 = [-s, co, 0.0];
    let a = [e1, e2, [0.0, 0.0, 1.0]];
    let t = |i, j, k, l| c.get(voigt_index(i, j), voigt_index(k, l));
    let mut out = [[0.0; 6]; 6];
    for (alpha, &[i, j]) in VOIGT.iter().enumerate() {
        for (beta, &[k, l]) in VOIGT.iter().enumerate() {
            let mut acc = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    for r in 0..3 {
                        for w in 0..3 {
                            acc += a[i][p] * a[j][q] * a[k][r] * a[l][w] * t(p, q, r, w);
                        }
                    }
                }
            }
            out[alpha][beta] = acc;
        }
    }
    out
}

fn max_abs_diff(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

#[test]
fn rotation_matches_rank_four_oracle() {
    let c = ElasticMaterial::silicon().stiffness;
    let scale = c.max_abs();
    for i in 0..64 {
        let theta = 2.0 * PI * i as f64 / 64.0;
        let fast = rotate_stiffness(&c, theta);
        let slow = brute_force_rotation(&c, theta);
        let err = max_abs_diff(fast.matrix(), &slow) / scale;
        assert!(err < 1e-12, "theta {theta}: {err:e}");
    }
}

#[test]
fn c16_vanishes_along_cube_and_face_diagonal() {
    let c = ElasticMaterial::silicon().stiffness;
    for theta in [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4] {
        let r = rotate_stiffness(&c, theta);
        assert!(r.c16().abs() <= 1e-10 * c.c11(), "theta {theta}: C16 = {}", r.c16());
    }
    let mid = rotate_stiffness(&c, FRAC_PI_4 / 2.0);
    assert!(mid.c16().abs() > 1e-3 * c.c11());
}

#[test]
fn cubic_christoffel_closed_forms() {
    let si = ElasticMaterial::silicon();
    let (c11, c12, c44, rho): (f64, f64, f64, f64) = (165.7e9, 63.9e9, 79.6e9, 2329.0);

    let v = christoffel_velocities(&si, [1.0, 0.0], PlaneReduction::PlaneStrain).unwrap();
    assert!((v[0] - (c44 / rho).sqrt()).abs() / v[0] < 1e-12);
    assert!((v[1] - (c11 / rho).sqrt()).abs() / v[1] < 1e-12);

    // [110]: longitudinal (C11+C12+2C44)/2, in-plane shear (C11−C12)/2.
    let d = std::f64::consts::FRAC_1_SQRT_2;
    let v = christoffel_velocities(&si, [d, d], PlaneReduction::PlaneStrain).unwrap();
    let vl = ((c11 + c12 + 2.0 * c44) / 2.0 / rho).sqrt();
    let vt = ((c11 - c12) / 2.0 / rho).sqrt();
    assert!((v[0] - vt).abs() / vt < 1e-12);
    assert!((v[1] - vl).abs() / vl < 1e-12);

    // Plane stress along [100]: Q11 = C11 − C12²/C11.
    let v = christoffel_velocities(&si, [1.0, 0.0], PlaneReduction::PlaneStress).unwrap();
    let q11 = c11 - c12 * c12 / c11;
    assert!((v[1] - (q11 / rho).sqrt()).abs() / v[1] < 1e-12);
    assert!((v[0] - (c44 / rho).sqrt()).abs() / v[0] < 1e-12);
}

#[test]
fn rotating_material_equals_rotating_direction() {
    let si = ElasticMaterial::silicon();
    for i in 0..16 {
        let theta = 0.37 * i as f64;
        let rotated = si.rotated(theta);
        let (s, c) = theta.sin_cos();
        // Device x is the crystal direction (cos θ, sin θ).
        let a = christoffel_velocities(&rotated, [1.0, 0.0], PlaneReduction::PlaneStress).unwrap();
        let b = christoffel_velocities(&si, [c, s], PlaneReduction::PlaneStress).unwrap();
        for j in 0..2 {
            assert!((a[j] - b[j]).abs() / b[j] < 1e-12);
        }
    }
}

/// Trace and squared Frobenius norm of the Mandel form, where shear rows and
/// columns carry a factor √2. Both are rotation invariants of the tensor.
fn mandel_invariants(c: &[[f64; 6]; 6]) -> (f64, f64) {
    let w = |i: usize| if i < 3 { 1.0 } else { 2.0 };
    let trace = (0..6).map(|i| w(i) * c[i][i]).sum();
    let frob = (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| w(i) * w(j) * c[i][j] * c[i][j]).sum();
    (trace, frob)
}

fn stiffness_strategy() -> impl Strategy<Value = VoigtStiffness> {
    (50e9..300e9f64, 0.05..0.45f64, 20e9..120e9f64).prop_map(|(c11, nu, c44)| {
        VoigtStiffness::cubic(c11, nu * c11, c44)
    })
}

proptest! {
    #[test]
    fn quarter_turn_periodicity(c in stiffness_strategy(), theta in -10.0..10.0f64) {
        let a = rotate_stiffness(&c, theta);
        let b = rotate_stiffness(&c, theta + FRAC_PI_2);
        prop_assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-12 * c.max_abs());
    }

    #[test]
    fn rotations_compose(c in stiffness_strategy(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let two_step = rotate_stiffness(&rotate_stiffness(&c, a), b);
        let one_step = rotate_stiffness(&c, a + b);
        prop_assert!(max_abs_diff(two_step.matrix(), one_step.matrix()) < 1e-12 * c.max_abs());
    }

    #[test]
    fn tensor_invariants_preserved(c in stiffness_strategy(), theta in -3.0..3.0f64) {
        let (t0, f0) = mandel_invariants(c.matrix());
        let (t1, f1) = mandel_invariants(rotate_stiffness(&c, theta).matrix());
        prop_assert!((t0 - t1).abs() < 1e-12 * t0);
        prop_assert!((f0 - f1).abs() < 1e-12 * f0);
    }
}
