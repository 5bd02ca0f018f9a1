use cshape_core::thermometry::{
    corrected_rates, occupancy, occupancy_from_rates, occupancy_sweep, OccupancyOptions, ProbabilityAxis,
    SidebandCounts,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

const DARK: f64 = 2e-5;
const LEAK_BLUE: f64 = 1e-5;
const LEAK_RED: f64 = 1.5e-5;

fn draw(rng: &mut ChaCha8Rng, n: f64, p_blue: f64, pulses: u64) -> SidebandCounts {
    let p_red = p_blue * n / (n + 1.0);
    let mut clicks = |p: f64| Poisson::new(pulses as f64 * p).unwrap().sample(rng) as u64;
    SidebandCounts {
        pulses,
        clicks_blue: clicks(p_blue + DARK + LEAK_BLUE),
        clicks_red: clicks(p_red + DARK + LEAK_RED),
        dark_per_pulse: DARK,
        leak_blue_per_pulse: LEAK_BLUE,
        leak_red_per_pulse: LEAK_RED,
    }
}

#[test]
fn sweep_recovers_occupancy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let probabilities = [0.002, 0.004, 0.006, 0.008, 0.010];
    let records: Vec<(usize, SidebandCounts)> =
        probabilities.iter().enumerate().map(|(g, &p)| (g, draw(&mut rng, 0.2, p, 2_000_000))).collect();
    let out = occupancy_sweep(&records, &OccupancyOptions::default(), ProbabilityAxis::Blue);
    assert_eq!(out.len(), 5);
    for (point, &p) in out.iter().zip(&probabilities) {
        assert!((point.scattering_probability / p - 1.0).abs() < 0.05);
        let est = point.estimate.as_ref().unwrap();
        assert!((est.n - 0.2).abs() < 4.0 * est.sigma_n, "{est:?}");
    }
    // Low-probability groups still resolve an occupancy below 0.2 when the
    // state is colder.
    let cold = draw(&mut rng, 0.1, 0.005, 5_000_000);
    let est = occupancy(&cold, &OccupancyOptions::default()).unwrap();
    assert!(est.n < 0.2);
}

#[test]
fn sigma_follows_inverse_sqrt_pulses() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pulses = [100_000u64, 400_000, 1_600_000];
    let spread: Vec<f64> = pulses
        .iter()
        .map(|&n| {
            let est: Vec<f64> = (0..600)
                .map(|_| occupancy(&draw(&mut rng, 0.2, 0.01, n), &OccupancyOptions::default()).unwrap().n_raw)
                .collect();
            let mean = est.iter().sum::<f64>() / est.len() as f64;
            (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
        })
        .collect();
    let slope = (spread[2] / spread[0]).ln() / (pulses[2] as f64 / pulses[0] as f64).ln();
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn efficiency_cancels_in_ratio() {
    let (pb, pr) = (0.0123, 0.0021);
    let base = occupancy_from_rates(pb, pr).unwrap();
    // Power-of-two factors scale without rounding, so the ratio is bitwise equal.
    for c in [0.125, 2.0, 1024.0] {
        assert_eq!(occupancy_from_rates(pb * c, pr * c).unwrap(), base);
    }
    // Other factors agree to rounding.
    for c in [1e-3, 0.37, 12.0, 1e4] {
        let n = occupancy_from_rates(pb * c, pr * c).unwrap();
        assert!((n - base).abs() <= 4.0 * f64::EPSILON * base);
    }
}

#[test]
fn background_order_is_irrelevant() {
    let a = SidebandCounts {
        pulses: 123_457,
        clicks_blue: 999,
        clicks_red: 171,
        dark_per_pulse: 3.3e-5,
        leak_blue_per_pulse: 1.7e-4,
        leak_red_per_pulse: 2.9e-4,
    };
    // Swap which number is called dark and which leak; the blue side sees
    // the same two backgrounds in the other order.
    let b = SidebandCounts { dark_per_pulse: 1.7e-4, leak_blue_per_pulse: 3.3e-5, ..a };
    assert_eq!(corrected_rates(&a).unwrap().p_blue, corrected_rates(&b).unwrap().p_blue);
}

#[test]
fn single_group_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = occupancy_sweep(&[("only", draw(&mut rng, 0.2, 0.005, 100_000))], &OccupancyOptions::default(), ProbabilityAxis::Red);
    assert_eq!(out.len(), 1);
}
