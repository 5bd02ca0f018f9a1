//! Phonon occupancy from pulsed sideband-asymmetry photon counting.
//!
//! With the pump on the blue sideband the scattering probability is
//! proportional to `n + 1`, on the red sideband to `n`. After subtracting dark
//! counts and pump leakage, `n = p_red / (p_blue − p_red)`. Detection
//! efficiency cancels in the ratio.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum ThermometryError {
    #[error("pulse count must be positive")]
    NoPulses,
    #[error("{name} = {value} must be finite and non-negative")]
    InvalidBackground { name: &'static str, value: f64 },
    #[error("efficiency ratio {0} must be positive")]
    InvalidEfficiency(f64),
    #[error("non-thermal asymmetry: p_blue = {p_blue} does not exceed p_red = {p_red}")]
    NonThermalAsymmetry { p_blue: f64, p_red: f64 },
}

type Result<T> = core::result::Result<T, ThermometryError>;

/// Raw counts for one pulse configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SidebandCounts {
    pub pulses: u64,
    pub clicks_blue: u64,
    pub clicks_red: u64,
    /// Expected dark counts per pulse window.
    pub dark_per_pulse: f64,
    /// Expected pump-leak counts per pulse with the pump far detuned.
    pub leak_blue_per_pulse: f64,
    pub leak_red_per_pulse: f64,
}

impl SidebandCounts {
    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(ThermometryError::NoPulses);
        }
        for (name, value) in [
            ("dark_per_pulse", self.dark_per_pulse),
            ("leak_blue_per_pulse", self.leak_blue_per_pulse),
            ("leak_red_per_pulse", self.leak_red_per_pulse),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ThermometryError::InvalidBackground { name, value });
            }
        }
        Ok(())
    }

    /// Sums records taken at the same setting. Backgrounds are pulse-weighted.
    pub fn merge(records: &[SidebandCounts]) -> Option<SidebandCounts> {
        let pulses: u64 = records.iter().map(|r| r.pulses).sum();
        if pulses == 0 {
            return None;
        }
        let w = |f: fn(&SidebandCounts) -> f64| records.iter().map(|r| r.pulses as f64 * f(r)).sum::<f64>() / pulses as f64;
        Some(SidebandCounts {
            pulses,
            clicks_blue: records.iter().map(|r| r.clicks_blue).sum(),
            clicks_red: records.iter().map(|r| r.clicks_red).sum(),
            dark_per_pulse: w(|r| r.dark_per_pulse),
            leak_blue_per_pulse: w(|r| r.leak_blue_per_pulse),
            leak_red_per_pulse: w(|r| r.leak_red_per_pulse),
        })
    }
}

/// Background-subtracted per-pulse scattering probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrectedRates {
    pub p_blue: f64,
    pub p_red: f64,
    /// Set when the blue rate fell below background and was clamped to zero.
    pub clamped_blue: bool,
    pub clamped_red: bool,
}

impl CorrectedRates {
    pub fn clamped(&self) -> bool {
        self.clamped_blue || self.clamped_red
    }
}

fn clamp(p: f64) -> (f64, bool) {
    if p < 0.0 {
        (0.0, true)
    } else {
        (p, false)
    }
}

/// `p = clicks/pulses − dark − leak` for each sideband, clamped at zero.
pub fn corrected_rates(c: &SidebandCounts) -> Result<CorrectedRates> {
    c.validate()?;
    let n = c.pulses as f64;
    // Backgrounds are summed first so the result does not depend on the order
    // in which they are listed.
    let (p_blue, clamped_blue) = clamp(c.clicks_blue as f64 / n - (c.dark_per_pulse + c.leak_blue_per_pulse));
    let (p_red, clamped_red) = clamp(c.clicks_red as f64 / n - (c.dark_per_pulse + c.leak_red_per_pulse));
    Ok(CorrectedRates { p_blue, p_red, clamped_blue, clamped_red })
}

/// `n = p_red / (p_blue − p_red)`.
pub fn occupancy_from_rates(p_blue: f64, p_red: f64) -> Result<f64> {
    if !(p_blue > p_red) || !(p_red >= 0.0) {
        return Err(ThermometryError::NonThermalAsymmetry { p_blue, p_red });
    }
    Ok(p_red / (p_blue - p_red))
}

/// How background subtractions enter the error budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum BackgroundModel {
    /// Backgrounds are known constants.
    #[default]
    Known,
    /// Backgrounds are Poisson estimates from a calibration run with the given
    /// number of pulses.
    Poisson { pulses: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OccupancyOptions {
    /// Blue-to-red detection efficiency ratio `η_b/η_r`; multiplies the red
    /// rate before the ratio is taken.
    pub efficiency_ratio: f64,
    pub background: BackgroundModel,
}

impl Default for OccupancyOptions {
    fn default() -> Self {
        Self { efficiency_ratio: 1.0, background: BackgroundModel::Known }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OccupancyEstimate {
    /// Occupancy clamped at zero.
    pub n: f64,
    /// Unclamped estimate.
    pub n_raw: f64,
    pub sigma_n: f64,
    pub rates: CorrectedRates,
}

/// Occupancy with a first-order (delta-method) uncertainty from Poisson
/// statistics on the raw clicks and, optionally, on the backgrounds.
pub fn occupancy(c: &SidebandCounts, opts: &OccupancyOptions) -> Result<OccupancyEstimate> {
    if !(opts.efficiency_ratio > 0.0 && opts.efficiency_ratio.is_finite()) {
        return Err(ThermometryError::InvalidEfficiency(opts.efficiency_ratio));
    }
    let rates = corrected_rates(c)?;
    let eta = opts.efficiency_ratio;
    let (pb, pr) = (rates.p_blue, rates.p_red * eta);
    let n_raw = occupancy_from_rates(pb, pr)?;

    let pulses = c.pulses as f64;
    let bg_var = |bg: f64| match opts.background {
        BackgroundModel::Known => 0.0,
        BackgroundModel::Poisson { pulses: m } if m > 0 => bg / m as f64,
        BackgroundModel::Poisson { .. } => f64::INFINITY,
    };
    // Dark counts enter both sidebands; treated as independent estimates.
    let var_b = c.clicks_blue as f64 / (pulses * pulses) + bg_var(c.dark_per_pulse) + bg_var(c.leak_blue_per_pulse);
    let var_r = eta * eta * (c.clicks_red as f64 / (pulses * pulses) + bg_var(c.dark_per_pulse) + bg_var(c.leak_red_per_pulse));
    let d = pb - pr;
    let dn_dpb = -pr / (d * d);
    let dn_dpr = pb / (d * d);
    let sigma_n = libm::sqrt(dn_dpb * dn_dpb * var_b + dn_dpr * dn_dpr * var_r);
    Ok(OccupancyEstimate { n: n_raw.max(0.0), n_raw, sigma_n, rates })
}

/// Which corrected rate is reported as the scattering probability of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ProbabilityAxis {
    #[default]
    Blue,
    Red,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SweepPoint<G> {
    pub group: G,
    pub counts: SidebandCounts,
    pub scattering_probability: f64,
    pub estimate: core::result::Result<OccupancyEstimate, ThermometryError>,
}

/// Occupancy per group of records, sorted by scattering probability. Records
/// sharing a group key are merged first. Per-group failures are kept in the
/// output rather than aborting the sweep; groups whose counts cannot even be
/// background-corrected are sorted last.
pub fn occupancy_sweep<G: Clone + PartialEq>(
    records: &[(G, SidebandCounts)],
    opts: &OccupancyOptions,
    axis: ProbabilityAxis,
) -> Vec<SweepPoint<G>> {
    let mut groups: Vec<(G, Vec<SidebandCounts>)> = Vec::new();
    for (g, c) in records {
        match groups.iter_mut().find(|(k, _)| k == g) {
            Some((_, v)) => v.push(*c),
            None => groups.push((g.clone(), alloc::vec![*c])),
        }
    }
    let mut out: Vec<SweepPoint<G>> = groups
        .into_iter()
        .filter_map(|(group, v)| {
            let counts = SidebandCounts::merge(&v)?;
            let probability = match corrected_rates(&counts) {
                Ok(r) => match axis {
                    ProbabilityAxis::Blue => r.p_blue,
                    ProbabilityAxis::Red => r.p_red,
                },
                Err(_) => f64::NAN,
            };
            let estimate = occupancy(&counts, opts);
            Some(SweepPoint { group, counts, scattering_probability: probability, estimate })
        })
        .collect();
    out.sort_by(|a, b| a.scattering_probability.total_cmp(&b.scattering_probability));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pulses: u64, blue: u64, red: u64) -> SidebandCounts {
        SidebandCounts {
            pulses,
            clicks_blue: blue,
            clicks_red: red,
            dark_per_pulse: 0.0,
            leak_blue_per_pulse: 0.0,
            leak_red_per_pulse: 0.0,
        }
    }

    #[test]
    fn background_subtraction() {
        let c = SidebandCounts {
            dark_per_pulse: 1e-3,
            leak_blue_per_pulse: 2e-3,
            leak_red_per_pulse: 0.0,
            ..counts(100_000, 600, 50)
        };
        let r = corrected_rates(&c).unwrap();
        assert!((r.p_blue - 0.003).abs() < 1e-15);
        assert!(r.clamped_red && r.p_red == 0.0);
        assert!(!r.clamped_blue);
    }

    #[test]
    fn one_sixth_ratio_gives_one_fifth() {
        assert_eq!(occupancy_from_rates(6.0, 1.0).unwrap(), 0.2);
        assert!((occupancy_from_rates(0.006, 0.001).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(occupancy_from_rates(0.01, 0.0).unwrap(), 0.0);
        assert!(occupancy_from_rates(0.01, 0.01).is_err());
    }

    #[test]
    fn sigma_scales_with_pulses() {
        let a = occupancy(&counts(100_000, 1200, 200), &OccupancyOptions::default()).unwrap();
        let b = occupancy(&counts(400_000, 4800, 800), &OccupancyOptions::default()).unwrap();
        assert!((a.n - b.n).abs() < 1e-15);
        assert!((a.sigma_n / b.sigma_n - 2.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_backgrounds_widen_errors() {
        let c = SidebandCounts { dark_per_pulse: 1e-4, leak_blue_per_pulse: 1e-4, leak_red_per_pulse: 1e-4, ..counts(100_000, 1200, 220) };
        let known = occupancy(&c, &OccupancyOptions::default()).unwrap();
        let pois = occupancy(&c, &OccupancyOptions { background: BackgroundModel::Poisson { pulses: 10_000 }, ..Default::default() }).unwrap();
        assert_eq!(known.n, pois.n);
        assert!(pois.sigma_n > known.sigma_n);
    }

    #[test]
    fn sweep_merges_and_sorts() {
        let recs = [("hi", counts(1000, 20, 3)), ("lo", counts(1000, 5, 1)), ("hi", counts(1000, 20, 3)), ("bad", counts(1000, 1, 2))];
        let out = occupancy_sweep(&recs, &OccupancyOptions::default(), ProbabilityAxis::Blue);
        let names: Vec<&str> = out.iter().map(|p| p.group).collect();
        assert_eq!(names, ["bad", "lo", "hi"]);
        assert_eq!(out[2].counts.pulses, 2000);
        assert!(out[0].estimate.is_err());
    }
}
