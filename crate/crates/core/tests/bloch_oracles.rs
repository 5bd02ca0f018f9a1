use std::f64::consts::{FRAC_PI_2, PI};

use cshape_core::bloch::{
    assemble, solve, BlochWavevector, Cutoff, MaterialField, PlaneWaveBasis, SolveOptions,
};
use cshape_core::geometry::{
    build_waveguide_cell, rasterize, CShapeTaper, Primitive, Region, RegionBoundaries, Role, Shape,
    SnowflakeParams, UnitCellGeometry, WaveguideLayout,
};
use cshape_core::materials::{christoffel_velocities, ElasticMaterial, PlaneReduction, VoigtStiffness};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn homogeneous_medium_is_exact() {
    let si = ElasticMaterial::silicon();
    let cell = [500e-9, 700e-9];
    let g = UnitCellGeometry::new(cell, vec![], RegionBoundaries::all_cshape()).unwrap();
    let grid = rasterize(&g, 16, 16, &si, &si).unwrap();
    let basis = PlaneWaveBasis::new(cell, Cutoff::Box { nx: 2, ny: 2 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n_check = 8;
    for o in 0..8 {
        let theta = o as f64 * PI / 8.0 + 0.05;
        let field = MaterialField::new(&grid.materials, theta, PlaneReduction::PlaneStress, false).unwrap();
        let rotated = si.rotated(theta);
        for _ in 0..20 {
            let k = BlochWavevector::from_zone_fraction(rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95), cell);
            let p = assemble(&grid, &field, k, &basis).unwrap();
            let modes = solve(&p, &SolveOptions::bands(n_check)).unwrap();
            // Every plane wave k+G is an exact eigenvector pair.
            let mut oracle: Vec<f64> = basis
                .g_vectors()
                .iter()
                .flat_map(|gv| {
                    let q = [k.kx + gv[0], k.ky + gv[1]];
                    let qn = q[0].hypot(q[1]);
                    let v = christoffel_velocities(&rotated, [q[0] / qn, q[1] / qn], PlaneReduction::PlaneStress).unwrap();
                    [v[0] * qn, v[1] * qn]
                })
                .collect();
            oracle.sort_by(f64::total_cmp);
            for b in 0..n_check {
                let e = rel(modes[b].omega, oracle[b]);
                assert!(e < 1e-10, "theta {theta} k {k:?} band {b}: {e:e}");
            }
        }
    }
}

struct Layer {
    rho: f64,
    modulus: f64,
    thickness: f64,
}

/// Rytov dispersion: cos(ka) = cos φ₁ cos φ₂ − ½(Z₁/Z₂ + Z₂/Z₁) sin φ₁ sin φ₂.
fn rytov_residual(omega: f64, k: f64, a: &Layer, b: &Layer) -> f64 {
    let (va, vb) = ((a.modulus / a.rho).sqrt(), (b.modulus / b.rho).sqrt());
    let (za, zb) = (a.rho * va, b.rho * vb);
    let (pa, pb) = (omega * a.thickness / va, omega * b.thickness / vb);
    pa.cos() * pb.cos() - 0.5 * (za / zb + zb / za) * pa.sin() * pb.sin() - (k * (a.thickness + b.thickness)).cos()
}

fn rytov_roots(k: f64, a: &Layer, b: &Layer, omega_max: f64, count: usize) -> Vec<f64> {
    let steps = 200_000;
    let h = omega_max / steps as f64;
    let mut roots = Vec::new();
    let mut prev = rytov_residual(h * 0.5, k, a, b);
    for i in 1..steps {
        let w = h * (i as f64 + 0.5);
        let cur = rytov_residual(w, k, a, b);
        if prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (w - h, w);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if rytov_residual(mid, k, a, b).signum() == rytov_residual(lo, k, a, b).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
            if roots.len() == count {
                break;
            }
        }
        prev = cur;
    }
    roots
}

#[test]
fn laminate_matches_rytov() {
    // Silicon (isotropic approximant) and fused silica, equal thickness.
    let si = ElasticMaterial::new("si", 2329.0, VoigtStiffness::isotropic(165.7e9, 79.6e9)).unwrap();
    let sio2 = ElasticMaterial::new("sio2", 2200.0, VoigtStiffness::isotropic(78.5e9, 31.2e9)).unwrap();
    let a = 1e-6;
    let cell = [a, 0.25e-6];
    let slab = Shape {
        role: Role::Hole,
        region: Region::CShape,
        parts: vec![Primitive::Rect { center: [0.0, 0.0], half: [a / 4.0, 1e-6] }],
    };
    let g = UnitCellGeometry::new(cell, vec![slab], RegionBoundaries::all_cshape()).unwrap();
    let grid = rasterize(&g, 256, 8, &si, &sio2).unwrap();
    let basis = PlaneWaveBasis::new(cell, Cutoff::Box { nx: 32, ny: 0 }).unwrap();
    assert_eq!(basis.len(), 65);
    let field = MaterialField::new(&grid.materials, 0.0, PlaneReduction::PlaneStress, false).unwrap();

    // Plane-stress moduli for an isotropic solid: Q11 = C11 − C12²/C11, Q66 = C44.
    let q11 = |c11: f64, c44: f64| {
        let c12 = c11 - 2.0 * c44;
        c11 - c12 * c12 / c11
    };
    let layers = |long: bool| {
        let m = |rho, c11, c44, t| Layer { rho, modulus: if long { q11(c11, c44) } else { c44 }, thickness: t };
        (m(2329.0, 165.7e9, 79.6e9, a / 2.0), m(2200.0, 78.5e9, 31.2e9, a / 2.0))
    };

    for frac in [0.05, 0.2, 0.35, 0.5, 0.8, 1.0] {
        let k = BlochWavevector::from_zone_fraction(frac, 0.0, cell);
        let p = assemble(&grid, &field, k, &basis).unwrap();
        let modes = solve(&p, &SolveOptions::bands(4)).unwrap();
        let omega_max = 2.5 * modes[3].omega;
        let mut oracle = Vec::new();
        for long in [true, false] {
            let (l1, l2) = layers(long);
            oracle.extend(rytov_roots(k.kx, &l1, &l2, omega_max, 4));
        }
        oracle.sort_by(f64::total_cmp);
        for b in 0..4 {
            let e = rel(modes[b].omega, oracle[b]);
            assert!(e < 0.01, "k fraction {frac} band {b}: pwe {} rytov {} ({e:e})", modes[b].omega, oracle[b]);
        }
    }
}

fn small_waveguide() -> (UnitCellGeometry, ElasticMaterial, ElasticMaterial) {
    let c = CShapeTaper::reference().mirror_params().unwrap();
    let g = build_waveguide_cell(&c, &SnowflakeParams::reference(), &WaveguideLayout::default()).unwrap();
    let si = ElasticMaterial::silicon();
    let f = ElasticMaterial::filler_for(&si, 1e-4, 1e-6).unwrap();
    (g, si, f)
}

#[test]
fn orientation_period_and_time_reversal() {
    let (g, si, f) = small_waveguide();
    let grid = rasterize(&g, 32, 160, &si, &f).unwrap();
    let basis = PlaneWaveBasis::new(g.cell, Cutoff::Ellipse { nx: 3, ny: 16 }).unwrap();
    let opts = SolveOptions::bands(12);
    let spectrum = |theta: f64, fx: f64| -> Vec<f64> {
        let field = MaterialField::new(&grid.materials, theta, PlaneReduction::PlaneStress, false).unwrap();
        let k = BlochWavevector::from_zone_fraction(fx, 0.0, g.cell);
        let p = assemble(&grid, &field, k, &basis).unwrap();
        solve(&p, &opts).unwrap().iter().map(|m| m.omega).collect()
    };
    let theta = 0.3;
    let base = spectrum(theta, 0.35);
    let quarter = spectrum(theta + FRAC_PI_2, 0.35);
    let reversed = spectrum(theta, -0.35);
    for b in 0..base.len() {
        assert!(rel(quarter[b], base[b]) < 1e-8, "band {b}: {} vs {}", quarter[b], base[b]);
        assert!(rel(reversed[b], base[b]) < 1e-8, "band {b}: {} vs {}", reversed[b], base[b]);
    }
}
