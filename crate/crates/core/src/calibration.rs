//! Optomechanical coupling from a calibrated phase-modulation tone.
//!
//! A thermally driven mechanical mode and a phase-modulator tone of known
//! depth `b` are both transduced into the detected power spectrum. The ratio
//! of their peak PSDs, together with the mode's linewidth and frequency and
//! the analyzer ENBW, gives `g0` without modelling the optical transduction.
//!
//! Frequencies `Ω` and linewidths `Γ` are angular (rad/s) throughout; PSD
//! traces are single-sided and in linear power units per Hz.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lsq::{self, LmOptions};

/// Reduced Planck constant (J s, exact SI value).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K, exact SI value).
pub const K_B: f64 = 1.380_649e-23;
/// Default phase-modulator input impedance (Ω).
pub const PM_IMPEDANCE_OHM: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid trace: {0}")]
    InvalidTrace(&'static str),
    #[error("{name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("linewidth {gamma} must be below twice the mode frequency {omega}")]
    LinewidthTooLarge { gamma: f64, omega: f64 },
    #[error("C/S1 diverges at b = 0 with a zero noise floor")]
    Domain,
    #[error("fit did not converge: {0}")]
    NonConvergence(&'static str),
    #[error("parameters are not identifiable: {0}")]
    Unidentifiable(&'static str),
    #[error("negative radicand in g0 ({0})")]
    NegativeRadicand(f64),
}

type Result<T> = core::result::Result<T, CalibrationError>;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CalibrationError::InvalidParameter { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CalibrationError::InvalidParameter { name, value })
    }
}

/// How the trace frequency enters the Lorentzian denominator.
///
/// `Angular` evaluates at `ω = 2πf`, so the fitted `Ω` and `Γ` are in rad/s
/// and the on-resonance response equals the peak parameter. `Literal` uses
/// `f/2π` as printed in the original fit function; fitted parameters are
/// then in those units. Kept for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum FrequencyConvention {
    #[default]
    Angular,
    Literal,
}

impl FrequencyConvention {
    #[inline]
    pub fn to_model(self, f_hz: f64) -> f64 {
        match self {
            FrequencyConvention::Angular => 2.0 * PI * f_hz,
            FrequencyConvention::Literal => f_hz / (2.0 * PI),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsdTrace {
    pub freq: Vec<f64>,
    pub psd: Vec<f64>,
    pub enbw: f64,
}

impl PsdTrace {
    pub fn new(freq: Vec<f64>, psd: Vec<f64>, enbw: f64) -> Result<Self> {
        if freq.len() != psd.len() {
            return Err(CalibrationError::InvalidTrace("frequency and PSD lengths differ"));
        }
        if freq.len() < 4 {
            return Err(CalibrationError::InvalidTrace("fewer than four samples"));
        }
        if freq.windows(2).any(|w| !(w[1] > w[0])) || freq.iter().any(|f| !f.is_finite()) {
            return Err(CalibrationError::InvalidTrace("frequencies must be finite and strictly increasing"));
        }
        if psd.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(CalibrationError::InvalidTrace("PSD values must be finite and non-negative"));
        }
        positive("enbw", enbw)?;
        Ok(Self { freq, psd, enbw })
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LorentzianPeak {
    pub omega: f64,
    pub gamma: f64,
    pub peak_psd: f64,
}

impl LorentzianPeak {
    pub fn validate(&self) -> Result<()> {
        positive("omega", self.omega)?;
        positive("gamma", self.gamma)?;
        positive("peak_psd", self.peak_psd)?;
        if self.gamma >= 2.0 * self.omega {
            return Err(CalibrationError::LinewidthTooLarge { gamma: self.gamma, omega: self.omega });
        }
        Ok(())
    }

    /// Response at model frequency `w`. Its maximum, at `w² = Ω² − Γ²/2`, is
    /// exactly `peak_psd`.
    #[inline]
    pub fn response(&self, w: f64) -> f64 {
        let (o, g) = (self.omega, self.gamma);
        let num = o * o * g * g - 0.25 * g * g * g * g;
        let d = (o - w) * (o + w);
        self.peak_psd * num / (d * d + g * g * w * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultiLorentzFit {
    /// Sorted by `omega`.
    pub peaks: Vec<LorentzianPeak>,
    pub psd0: f64,
    /// RMS of the fit residual, in trace units.
    pub residual: f64,
    /// Requested peaks that could not be located above the noise floor.
    pub missing_peaks: usize,
    pub convention: FrequencyConvention,
}

impl MultiLorentzFit {
    pub fn is_partial(&self) -> bool {
        self.missing_peaks > 0
    }
}

/// Background plus the sum of peak responses at model frequency `w`.
pub fn lorentzian_sum(w: f64, peaks: &[LorentzianPeak], psd0: f64) -> f64 {
    psd0 + peaks.iter().map(|p| p.response(w)).sum::<f64>()
}

/// Model PSD at trace frequency `f_hz`.
pub fn lorentzian_model(f_hz: f64, fit: &MultiLorentzFit) -> f64 {
    lorentzian_sum(fit.convention.to_model(f_hz), &fit.peaks, fit.psd0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsdFitOptions {
    pub convention: FrequencyConvention,
    /// Peaks must exceed `median + mad_k · MAD` of the trace.
    pub mad_k: f64,
    /// Extra fits from randomly perturbed starting points; the lowest cost wins.
    pub restarts: usize,
    pub seed: u64,
    pub lm: LmOptions,
}

impl Default for PsdFitOptions {
    fn default() -> Self {
        Self { convention: FrequencyConvention::Angular, mad_k: 5.0, restarts: 0, seed: 0, lm: LmOptions::default() }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Noise floor estimate `(median, MAD)`.
pub fn noise_floor(psd: &[f64]) -> (f64, f64) {
    let mut v = psd.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = psd.iter().map(|p| (p - med).abs()).collect();
    (med, median(&mut dev))
}

/// Interior local maxima above `median + k·MAD`, tallest first, each with a
/// width estimate from its half-maximum crossings. Samples within the
/// half-maximum span of an accepted peak, widened by that span on each side,
/// are skipped.
pub fn pick_peaks(trace: &PsdTrace, k: f64, max_peaks: usize, convention: FrequencyConvention) -> Vec<LorentzianPeak> {
    let n = trace.len();
    let (floor, mad) = noise_floor(&trace.psd);
    let threshold = floor + k * mad;
    let x: Vec<f64> = trace.freq.iter().map(|&f| convention.to_model(f)).collect();
    let y = &trace.psd;
    let mut order: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| y[i] > threshold && y[i] >= y[i - 1] && y[i] >= y[i + 1])
        .collect();
    order.sort_by(|&a, &b| trace.psd[b].total_cmp(&trace.psd[a]).then(a.cmp(&b)));
    let mut blocked = alloc::vec![false; n];
    let mut out = Vec::new();
    for i in order {
        if out.len() == max_peaks {
            break;
        }
        if blocked[i] {
            continue;
        }
        let height = trace.psd[i] - floor;
        let half = floor + 0.5 * height;
        let mut l = i;
        while l > 0 && trace.psd[l - 1] >= half {
            l -= 1;
        }
        let mut r = i;
        while r + 1 < n && trace.psd[r + 1] >= half {
            r += 1;
        }
        let lo = if l > 0 { l - 1 } else { l };
        let hi = if r + 1 < n { r + 1 } else { r };
        // Half-maximum crossings taken midway between the bracketing samples.
        let width = (0.5 * ((x[r] + x[hi]) - (x[l] + x[lo]))).max(f64::MIN_POSITIVE);
        let span = r - l + 1;
        let b0 = l.saturating_sub(span);
        let b1 = (r + span).min(n - 1);
        for b in &mut blocked[b0..=b1] {
            *b = true;
        }
        out.push(LorentzianPeak { omega: x[i], gamma: width.min(0.5 * x[i]), peak_psd: height });
    }
    out
}

/// Parameter vector layout: `[s, (u, v, w) per peak]` with
/// `psd0 = s²`, `Ω = Ω₀ + Γ₀u`, `Γ = Γ₀eᵛ`, `peak = P₀eʷ`.
struct Param<'a> {
    init: &'a [LorentzianPeak],
}

impl Param<'_> {
    fn decode(&self, p: &[f64], peaks: &mut Vec<LorentzianPeak>) -> f64 {
        peaks.clear();
        for (i, g) in self.init.iter().enumerate() {
            let (u, v, w) = (p[1 + 3 * i], p[2 + 3 * i], p[3 + 3 * i]);
            peaks.push(LorentzianPeak {
                omega: g.omega + g.gamma * u,
                gamma: g.gamma * libm::exp(v),
                peak_psd: g.peak_psd * libm::exp(w),
            });
        }
        p[0] * p[0]
    }
}

/// Fits `n_peaks` Lorentzians plus a constant background to the trace.
///
/// Starting values come from `init` when given (in model units; its length
/// must equal `n_peaks`) or from [`pick_peaks`]. If fewer than `n_peaks`
/// peaks are visible the fit proceeds with those found and
/// [`MultiLorentzFit::missing_peaks`] records the shortfall.
pub fn fit_psd(
    trace: &PsdTrace,
    n_peaks: usize,
    init: Option<&[LorentzianPeak]>,
    opts: &PsdFitOptions,
) -> Result<MultiLorentzFit> {
    if n_peaks == 0 {
        return Err(CalibrationError::InvalidParameter { name: "n_peaks", value: 0.0 });
    }
    let scale = trace.psd.iter().cloned().fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(CalibrationError::NonConvergence("trace is identically zero"));
    }
    let y: Vec<f64> = trace.psd.iter().map(|p| p / scale).collect();
    let x: Vec<f64> = trace.freq.iter().map(|&f| opts.convention.to_model(f)).collect();
    let (floor, _) = noise_floor(&y);

    let guesses: Vec<LorentzianPeak> = match init {
        Some(g) => {
            if g.len() != n_peaks {
                return Err(CalibrationError::InvalidParameter { name: "init", value: g.len() as f64 });
            }
            for p in g {
                p.validate()?;
            }
            g.iter().map(|p| LorentzianPeak { peak_psd: p.peak_psd / scale, ..*p }).collect()
        }
        None => {
            let scaled = PsdTrace { freq: trace.freq.clone(), psd: y.clone(), enbw: trace.enbw };
            pick_peaks(&scaled, opts.mad_k, n_peaks, opts.convention)
        }
    };
    if guesses.is_empty() {
        return Err(CalibrationError::NonConvergence("no peak rises above the noise floor"));
    }
    let missing = n_peaks - guesses.len();

    let m = y.len();
    let np = 1 + 3 * guesses.len();
    let run = |start: &[LorentzianPeak]| -> Option<(f64, Vec<LorentzianPeak>, f64)> {
        let param = Param { init: start };
        let mut buf = Vec::with_capacity(start.len());
        let f = |p: &[f64], r: &mut [f64]| {
            let psd0 = param.decode(p, &mut buf);
            let valid = buf.iter().all(|q| q.gamma < q.omega && q.omega > 0.0);
            for i in 0..m {
                r[i] = if valid { lorentzian_sum(x[i], &buf, psd0) - y[i] } else { f64::INFINITY };
            }
        };
        let mut p0 = alloc::vec![0.0; np];
        p0[0] = libm::sqrt(floor.max(0.0));
        let res = lsq::minimize(f, &p0, m, &opts.lm).ok()?;
        if !res.termination.converged() {
            return None;
        }
        let mut peaks = Vec::new();
        let psd0 = param.decode(&res.x, &mut peaks);
        Some((res.cost, peaks, psd0))
    };

    let mut best = run(&guesses);
    if opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let start: Vec<LorentzianPeak> = guesses
                .iter()
                .map(|g| LorentzianPeak {
                    omega: g.omega + g.gamma * rng.gen_range(-0.5..0.5),
                    gamma: g.gamma * libm::exp(rng.gen_range(-core::f64::consts::LN_2..core::f64::consts::LN_2)),
                    peak_psd: g.peak_psd,
                })
                .collect();
            if let Some(c) = run(&start) {
                if best.as_ref().map_or(true, |b| c.0 < b.0) {
                    best = Some(c);
                }
            }
        }
    }
    let (cost, mut peaks, psd0) = best.ok_or(CalibrationError::NonConvergence("least squares did not converge"))?;
    for p in &mut peaks {
        p.peak_psd *= scale;
        p.validate().map_err(|_| CalibrationError::NonConvergence("fitted peak left the valid region"))?;
    }
    peaks.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    Ok(MultiLorentzFit {
        peaks,
        psd0: psd0 * scale,
        residual: libm::sqrt(2.0 * cost / m as f64) * scale,
        missing_peaks: missing,
        convention: opts.convention,
    })
}

/// Bessel function of the first kind, order 0.
#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Bessel function of the first kind, order 1.
#[inline]
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

/// Carrier-to-first-sideband power ratio `J₀(b)² / (J₁(b)² + B)`.
pub fn pm_ratio_model(b: f64, floor: f64) -> Result<f64> {
    non_negative("b", b)?;
    non_negative("B", floor)?;
    let j1 = bessel_j1(b);
    let den = j1 * j1 + floor;
    if den == 0.0 {
        return Err(CalibrationError::Domain);
    }
    let j0 = bessel_j0(b);
    Ok(j0 * j0 / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PmCalibration {
    pub v_pi: f64,
    pub b_noise: f64,
    pub r_ohm: f64,
}

impl PmCalibration {
    pub fn new(v_pi: f64, b_noise: f64, r_ohm: f64) -> Result<Self> {
        positive("v_pi", v_pi)?;
        non_negative("b_noise", b_noise)?;
        positive("r_ohm", r_ohm)?;
        Ok(Self { v_pi, b_noise, r_ohm })
    }
}

/// Modulation depth `b = (π/V_π)·√(2 R P)` for RF drive power `p_pm` (W).
pub fn modulation_depth(cal: &PmCalibration, p_pm: f64) -> f64 {
    PI / cal.v_pi * libm::sqrt(2.0 * cal.r_ohm * p_pm)
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * libm::pow(10.0, dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PmFit {
    pub calibration: PmCalibration,
    /// RMS of `ln(model) − ln(measured)`.
    pub rms_log_residual: f64,
    pub iterations: usize,
}

/// Fits `V_π` and the floor `B` to measured `(P_PM [W], C/S1)` pairs.
///
/// Residuals are logarithmic, which suits multiplicative noise on a ratio
/// that spans decades. A coarse scan over the largest modulation depth seeds
/// the least-squares refinement.
pub fn fit_vpi(points: &[(f64, f64)], r_ohm: f64, lm: &LmOptions) -> Result<PmFit> {
    positive("r_ohm", r_ohm)?;
    if points.len() < 3 {
        return Err(CalibrationError::Unidentifiable("need at least three points for two parameters"));
    }
    for &(p, ratio) in points {
        non_negative("p_pm", p)?;
        positive("C/S1", ratio)?;
    }
    let mut powers: Vec<f64> = points.iter().map(|p| p.0).filter(|&p| p > 0.0).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 2 {
        return Err(CalibrationError::Unidentifiable("drive power does not vary"));
    }
    let p_max = powers[powers.len() - 1];
    let amp: Vec<f64> = points.iter().map(|p| libm::sqrt(2.0 * r_ohm * p.0)).collect();
    let log_ratio: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();

    let model = |v_pi: f64, floor: f64, i: usize| -> f64 {
        let b = PI / v_pi * amp[i];
        let j0 = bessel_j0(b);
        let j1 = bessel_j1(b);
        libm::log((j0 * j0).max(1e-300)) - libm::log((j1 * j1 + floor).max(1e-300))
    };
    let floor_for = |v_pi: f64| -> f64 {
        let mut est: Vec<f64> = points
            .iter()
            .zip(&amp)
            .map(|(p, a)| {
                let b = PI / v_pi * a;
                let j0 = bessel_j0(b);
                let j1 = bessel_j1(b);
                (j0 * j0 / p.1 - j1 * j1).max(0.0)
            })
            .collect();
        median(&mut est)
    };

    let amp_max = libm::sqrt(2.0 * r_ohm * p_max);
    let mut start = (0.0, 0.0, f64::INFINITY);
    for s in 0..200 {
        let b_max = 0.05 * libm::pow(100.0, s as f64 / 199.0);
        let v = PI * amp_max / b_max;
        let floor = floor_for(v);
        let cost: f64 = (0..points.len()).map(|i| {
            let d = model(v, floor, i) - log_ratio[i];
            d * d
        }).sum();
        if cost < start.2 {
            start = (v, floor, cost);
        }
    }
    let (v0, floor0, _) = start;
    let f = |p: &[f64], r: &mut [f64]| {
        let v = v0 * libm::exp(p[0]);
        let floor = p[1] * p[1];
        for i in 0..r.len() {
            r[i] = model(v, floor, i) - log_ratio[i];
        }
    };
    let res = lsq::minimize(f, &[0.0, libm::sqrt(floor0)], points.len(), lm)
        .map_err(|_| CalibrationError::NonConvergence("non-finite residuals at the starting point"))?;
    if !res.termination.converged() {
        return Err(CalibrationError::NonConvergence("least squares did not converge"));
    }
    let v_pi = v0 * libm::exp(res.x[0]);
    let b_noise = res.x[1] * res.x[1];
    if PI / v_pi * amp_max < 1e-3 {
        return Err(CalibrationError::Unidentifiable("all points are at negligible modulation depth"));
    }
    Ok(PmFit {
        calibration: PmCalibration::new(v_pi, b_noise, r_ohm)?,
        rms_log_residual: libm::sqrt(2.0 * res.cost / points.len() as f64),
        iterations: res.iterations,
    })
}

fn check_linewidth(gamma: f64, omega: f64) -> Result<()> {
    positive("gamma", gamma)?;
    positive("omega", omega)?;
    if gamma >= 2.0 * omega {
        return Err(CalibrationError::LinewidthTooLarge { gamma, omega });
    }
    Ok(())
}

/// Peak displacement PSD of a thermally driven mode in units of `x_zpf²`,
/// `(4 k_B T/ħ)·ΓΩ/(Γ²Ω² − Γ⁴/4)`, in seconds.
pub fn thermal_sxx_ratio(temperature: f64, gamma: f64, omega: f64) -> Result<f64> {
    positive("temperature", temperature)?;
    check_linewidth(gamma, omega)?;
    let g2 = gamma * gamma;
    Ok(4.0 * K_B * temperature / HBAR * gamma * omega / (g2 * omega * omega - 0.25 * g2 * g2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G0Inputs {
    /// `PSD_m / PSD_φ`, peak mechanical PSD over phase-tone PSD.
    pub psd_ratio: f64,
    /// Mechanical linewidth Γ (rad/s).
    pub gamma: f64,
    /// Mechanical frequency Ω (rad/s).
    pub omega: f64,
    /// Phase-modulation depth (rad).
    pub b: f64,
    /// Mode temperature (K).
    pub temperature: f64,
    /// Analyzer effective noise bandwidth (Hz).
    pub enbw: f64,
}

impl G0Inputs {
    fn validate(&self) -> Result<()> {
        positive("psd_ratio", self.psd_ratio)?;
        positive("b", self.b)?;
        positive("temperature", self.temperature)?;
        positive("enbw", self.enbw)?;
        check_linewidth(self.gamma, self.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G0Result {
    /// Vacuum coupling rate (rad/s).
    pub g0: f64,
    pub inputs: G0Inputs,
}

impl G0Result {
    pub fn g0_hz(&self) -> f64 {
        self.g0 / (2.0 * PI)
    }
}

/// `g0 = √[ r·(ΓΩ − Γ³/4Ω)·ħ b² Ω² / (4 k_B T · ENBW) ]`.
pub fn g0_extract(inputs: &G0Inputs) -> Result<G0Result> {
    inputs.validate()?;
    let G0Inputs { psd_ratio, gamma, omega, b, temperature, enbw } = *inputs;
    let radicand = psd_ratio * (gamma * omega - gamma * gamma * gamma / (4.0 * omega)) * HBAR * b * b * omega * omega
        / (4.0 * K_B * temperature * enbw);
    if !(radicand >= 0.0) {
        return Err(CalibrationError::NegativeRadicand(radicand));
    }
    Ok(G0Result { g0: libm::sqrt(radicand), inputs: *inputs })
}

/// Forward model: the `PSD_m/PSD_φ` a mode with coupling `g0` (rad/s) would
/// produce, `ENBW · g0² · (S_xx/x_zpf²) / (b² Ω²)`.
pub fn expected_psd_ratio(g0: f64, gamma: f64, omega: f64, b: f64, temperature: f64, enbw: f64) -> Result<f64> {
    non_negative("g0", g0)?;
    positive("b", b)?;
    positive("enbw", enbw)?;
    let sxx = thermal_sxx_ratio(temperature, gamma, omega)?;
    Ok(enbw * g0 * g0 * sxx / (b * b * omega * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn synth(peaks: &[LorentzianPeak], psd0: f64, f: &[f64]) -> Vec<f64> {
        f.iter().map(|&f| lorentzian_sum(2.0 * PI * f, peaks, psd0)).collect()
    }

    #[test]
    fn peak_parameter_is_the_maximum() {
        let p = LorentzianPeak { omega: 10.0, gamma: 3.0, peak_psd: 2.0 };
        let wmax = libm::sqrt(100.0 - 4.5);
        assert!((p.response(wmax) - 2.0).abs() < 1e-14);
        assert!(p.response(wmax * 1.001) < 2.0 && p.response(wmax * 0.999) < 2.0);
    }

    #[test]
    fn single_peak_round_trip() {
        let truth = LorentzianPeak { omega: 2.0 * PI * 5.0e9, gamma: 2.0 * PI * 2.0e6, peak_psd: 3.0e-12 };
        let f: Vec<f64> = (0..801).map(|i| 4.99e9 + i as f64 * 2.5e4).collect();
        let psd = synth(&[truth], 1e-14, &f);
        let trace = PsdTrace::new(f, psd, 1e3).unwrap();
        let fit = fit_psd(&trace, 1, None, &PsdFitOptions::default()).unwrap();
        let p = fit.peaks[0];
        assert!((p.omega / truth.omega - 1.0).abs() < 1e-9);
        assert!((p.gamma / truth.gamma - 1.0).abs() < 1e-6);
        assert!((p.peak_psd / truth.peak_psd - 1.0).abs() < 1e-6);
        assert!((fit.psd0 / 1e-14 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_trace_has_no_peak() {
        let f: Vec<f64> = (0..100).map(|i| 1e6 + i as f64).collect();
        let trace = PsdTrace::new(f, vec![1.0; 100], 1.0).unwrap();
        assert!(matches!(
            fit_psd(&trace, 1, None, &PsdFitOptions::default()),
            Err(CalibrationError::NonConvergence(_))
        ));
    }

    #[test]
    fn missing_peaks_are_reported() {
        let truth = LorentzianPeak { omega: 2.0 * PI * 1.0e6, gamma: 2.0 * PI * 1.0e4, peak_psd: 1.0 };
        let f: Vec<f64> = (0..400).map(|i| 0.9e6 + i as f64 * 500.0).collect();
        let trace = PsdTrace::new(f.clone(), synth(&[truth], 1e-3, &f), 1.0).unwrap();
        let fit = fit_psd(&trace, 3, None, &PsdFitOptions::default()).unwrap();
        assert_eq!(fit.peaks.len(), 1);
        assert_eq!(fit.missing_peaks, 2);
        assert!(fit.is_partial());
    }

    #[test]
    fn pm_ratio_limits() {
        assert!((pm_ratio_model(0.0, 0.01).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(pm_ratio_model(0.0, 0.0), Err(CalibrationError::Domain));
        assert!(pm_ratio_model(-1.0, 0.0).is_err());
    }

    #[test]
    fn modulation_depth_arithmetic() {
        let cal = PmCalibration::new(PI, 0.0, 50.0).unwrap();
        assert!((modulation_depth(&cal, 0.01) - 1.0).abs() < 1e-15);
        assert_eq!(modulation_depth(&cal, 0.0), 0.0);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn vpi_round_trip() {
        let cal = PmCalibration::new(3.0, 1e-3, 50.0).unwrap();
        let pts: Vec<(f64, f64)> = (1..=15)
            .map(|i| {
                let p = 1e-3 * i as f64 * 4.0;
                (p, pm_ratio_model(modulation_depth(&cal, p), cal.b_noise).unwrap())
            })
            .collect();
        let fit = fit_vpi(&pts, 50.0, &LmOptions::default()).unwrap();
        assert!((fit.calibration.v_pi / 3.0 - 1.0).abs() < 1e-4, "{:?}", fit);
        assert!((fit.calibration.b_noise / 1e-3 - 1.0).abs() < 1e-4, "{:?}", fit);
    }

    #[test]
    fn vpi_needs_three_points() {
        assert!(matches!(
            fit_vpi(&[(1e-3, 10.0), (2e-3, 5.0)], 50.0, &LmOptions::default()),
            Err(CalibrationError::Unidentifiable(_))
        ));
        assert!(matches!(
            fit_vpi(&[(0.0, 10.0), (0.0, 10.0), (0.0, 10.0)], 50.0, &LmOptions::default()),
            Err(CalibrationError::Unidentifiable(_))
        ));
    }

    #[test]
    fn thermal_ratio_rejects_overdamped() {
        assert!(thermal_sxx_ratio(1.0, 2.0, 1.0).is_err());
        let a = thermal_sxx_ratio(300.0, 1e6, 1e10).unwrap();
        let b = thermal_sxx_ratio(600.0, 1e6, 1e10).unwrap();
        assert!((b / a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn g0_inverts_forward_model() {
        let (gamma, omega, b, t, enbw) = (2.0 * PI * 3e6, 2.0 * PI * 5.3e9, 0.05, 295.0, 1e3);
        let g0 = 2.0 * PI * 8e5;
        let r = expected_psd_ratio(g0, gamma, omega, b, t, enbw).unwrap();
        let res = g0_extract(&G0Inputs { psd_ratio: r, gamma, omega, b, temperature: t, enbw }).unwrap();
        assert!((res.g0 / g0 - 1.0).abs() < 1e-13);
        let r2 = expected_psd_ratio(g0, gamma, omega, 2.0 * b, t, enbw).unwrap();
        assert!((r / r2 - 4.0).abs() < 1e-12);
    }
}
