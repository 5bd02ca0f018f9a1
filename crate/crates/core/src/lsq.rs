//! Unconstrained Levenberg-Marquardt for the small nonlinear fits in
//! [`crate::calibration`]. Callers impose bounds through smooth
//! reparametrizations (log, square, offsets scaled to a natural width).

use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Parallelism, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative cost reduction below which the fit is considered converged.
    pub ftol: f64,
    /// Relative step size below which the fit is considered converged.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which the fit is converged.
    pub gtol: f64,
    /// Initial damping relative to the largest diagonal of `JᵀJ`.
    pub tau: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 500, ftol: 1e-15, xtol: 1e-14, gtol: 1e-14, tau: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// The damping grew without bound; no descent direction was found.
    Stalled,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step | Termination::Cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// `½ Σ rᵢ²` at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("residuals are not finite at the starting point")]
    NonFiniteStart,
    #[error("need at least as many residuals ({m}) as parameters ({n})")]
    Underdetermined { m: usize, n: usize },
}

/// Central-difference Jacobian, row-major `m × n`.
pub fn numeric_jacobian<F>(f: &mut F, x: &[f64], m: usize) -> Mat<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut jac = Mat::<f64>::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let h0 = libm::cbrt(f64::EPSILON);
    for j in 0..n {
        let h = h0 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        f(&xp, &mut rp);
        xp[j] = x[j] - h;
        f(&xp, &mut rm);
        xp[j] = x[j];
        let inv = 0.5 / h;
        for i in 0..m {
            jac.write(i, j, (rp[i] - rm[i]) * inv);
        }
    }
    jac
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Solves the SPD system `a x = b`, or `None` if `a` is not numerically SPD.
fn spd_solve(a: &Mat<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let chol = a.cholesky(Side::Lower).ok()?;
    let l = chol.compute_l();
    let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), Parallelism::None);
    solve_upper_triangular_in_place(l.transpose(), x.as_mut(), Parallelism::None);
    let out: Vec<f64> = (0..b.len()).map(|i| x.read(i, 0)).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Minimizes `½‖r(x)‖²` for residuals `f(x, r)` of length `m`, starting at
/// `x0`. Uses Moré's diagonal scaling and Nielsen's damping update; the
/// Jacobian is taken by central differences.
pub fn minimize<F>(mut f: F, x0: &[f64], m: usize, opts: &LmOptions) -> Result<LmResult, LmError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    if m < n {
        return Err(LmError::Underdetermined { m, n });
    }
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    f(&x, &mut r);
    let mut cost = half_sq(&r);
    if !cost.is_finite() {
        return Err(LmError::NonFiniteStart);
    }

    let mut scale = vec![0.0f64; n];
    let mut mu = 0.0;
    let mut nu = 2.0;
    let mut r_new = vec![0.0; m];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut need_jac = true;
    let mut jtj = Mat::<f64>::zeros(n, n);
    let mut g = vec![0.0; n];

    while iterations < opts.max_iter {
        iterations += 1;
        if need_jac {
            let jac = numeric_jacobian(&mut f, &x, m);
            jtj = jac.transpose() * &jac;
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = (0..m).map(|i| jac.read(i, j) * r[i]).sum();
            }
            for (j, s) in scale.iter_mut().enumerate() {
                *s = s.max(jtj.read(j, j));
            }
            if mu == 0.0 {
                let dmax = scale.iter().cloned().fold(0.0, f64::max);
                mu = opts.tau * if dmax > 0.0 { dmax } else { 1.0 };
            }
            let gmax = g
                .iter()
                .zip(&scale)
                .map(|(gi, s)| if *s > 0.0 { gi.abs() / libm::sqrt(*s) } else { gi.abs() })
                .fold(0.0, f64::max);
            if gmax <= opts.gtol * libm::sqrt(2.0 * cost).max(f64::MIN_POSITIVE) || cost == 0.0 {
                termination = Termination::Gradient;
                break;
            }
            need_jac = false;
        }

        let mut a = jtj.clone();
        for j in 0..n {
            let d = if scale[j] > 0.0 { scale[j] } else { 1.0 };
            a.write(j, j, a.read(j, j) + mu * d);
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(step) = spd_solve(&a, &rhs) else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                termination = Termination::Stalled;
                break;
            }
            continue;
        };

        let xnorm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
        let snorm = libm::sqrt(step.iter().map(|v| v * v).sum::<f64>());
        if snorm <= opts.xtol * (xnorm + opts.xtol) {
            termination = Termination::Step;
            break;
        }

        let x_new: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        f(&x_new, &mut r_new);
        let cost_new = half_sq(&r_new);
        // Predicted reduction of the quadratic model.
        let predicted: f64 = 0.5
            * step
                .iter()
                .enumerate()
                .map(|(j, s)| s * (mu * if scale[j] > 0.0 { scale[j] } else { 1.0 } * s - g[j]))
                .sum::<f64>();
        let rho = if cost_new.is_finite() && predicted > 0.0 { (cost - cost_new) / predicted } else { -1.0 };

        if rho > 0.0 {
            let actual = cost - cost_new;
            x = x_new;
            core::mem::swap(&mut r, &mut r_new);
            cost = cost_new;
            let t = 2.0 * rho - 1.0;
            mu *= (1.0f64 / 3.0).max(1.0 - t * t * t);
            nu = 2.0;
            need_jac = true;
            if actual <= opts.ftol * cost && predicted <= opts.ftol * cost {
                termination = Termination::Cost;
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e300 {
                termination = Termination::Stalled;
                break;
            }
        }
    }

    Ok(LmResult { x, cost, iterations, termination })
}
