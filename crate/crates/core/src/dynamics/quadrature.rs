//! Closed-form path solutions of the two linear cases, driven by the same
//! Wiener increments as the integrator. Used as strong-error oracles.

use std::f64::consts::PI;

use super::SdeConfig;
use crate::error::{Error, Result};
use crate::linalg::MAX_DIM;
use crate::rng::{Domain, NormalStream};

/// The increments `ΔW_k` (per coordinate) that [`super::integrate`] draws for
/// trajectory `traj_id`, for every step of `cfg`.
pub fn wiener_increments(cfg: &SdeConfig, traj_id: u64) -> Vec<[f64; MAX_DIM]> {
    let mut noise = NormalStream::new(cfg.seed, Domain::Increments, traj_id);
    let dim = cfg.dim();
    let sd: Vec<f64> = (0..dim).map(|i| (2.0 * cfg.diffusion(i) * cfg.dt).sqrt()).collect();
    (0..cfg.n_steps())
        .map(|_| {
            let mut w = [0.0; MAX_DIM];
            for i in 0..dim {
                w[i] = sd[i] * noise.next_normal();
            }
            w
        })
        .collect()
}

/// `X(t) = e^{−ωt}[X(0) + ∫₀ᵗ e^{ωt'} dW(t')]` with the stochastic integral
/// taken as the left-point sum over `increments`; `t = increments.len()·dt`.
pub fn quadrature_ou_path(x0: f64, increments: &[f64], omega: f64, dt: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
    }
    let n = increments.len();
    let t = n as f64 * dt;
    // Written as Σ e^{−ω(t − t_k)} ΔW_k so nothing overflows for long paths.
    let noise: f64 = increments.iter().enumerate().map(|(k, dw)| (-omega * (t - k as f64 * dt)).exp() * dw).sum();
    let x = (-omega * t).exp() * x0 + noise;
    if !x.is_finite() {
        return Err(Error::Overflow(x));
    }
    Ok(x)
}

/// Value of the collapsed-oscillator path solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsedPathValue {
    pub value: f64,
    /// Some left-point time `z_k` lies within one step of a zero of
    /// `sin ωz`, where the integrand `1/sin ωz` is singular.
    pub singular_window: bool,
}

/// Path of the diffusion guided by a point collapse at `X₀` at time 0:
///
/// ```text
/// X(t) = [cos ωt − sin ωt cot ωs] X₀ + (sin ωt / sin ωs) X(s)
///        + sin ωt ∫ₛᵗ dW(z) / sin ωz,
/// ```
///
/// with the integral as a left-point sum over `increments` (which start at
/// `s`); `t = s + increments.len()·dt`. At `t = nπ/ω` the result is exactly
/// `(−1)ⁿ X₀`.
pub fn quadrature_collapsed_path(x0: f64, x_s: f64, increments: &[f64], omega: f64, s: f64, dt: f64) -> Result<CollapsedPathValue> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
    }
    let sin_s = (omega * s).sin();
    if !(s > 0.0) || sin_s == 0.0 {
        return Err(Error::invalid("s", format!("must be positive and away from nπ/ω, got {s}")));
    }
    if increments.is_empty() {
        return Ok(CollapsedPathValue { value: x_s, singular_window: false });
    }
    let t = s + increments.len() as f64 * dt;
    let half_turns = omega * t / PI;
    let n = half_turns.round();
    if (half_turns - n).abs() < 1e-9 {
        let sign = if n as i64 % 2 == 0 { 1.0 } else { -1.0 };
        return Ok(CollapsedPathValue { value: sign * x0, singular_window: false });
    }
    let (sin_t, cos_t) = (omega * t).sin_cos();
    let mut singular_window = false;
    let mut integral = 0.0;
    for (k, dw) in increments.iter().enumerate() {
        let sz = (omega * (s + k as f64 * dt)).sin();
        if sz.abs() < (omega * dt).sin().abs() {
            singular_window = true;
        }
        integral += dw / sz;
    }
    let value = (cos_t - sin_t * (omega * s).cos() / sin_s) * x0 + sin_t / sin_s * x_s + sin_t * integral;
    Ok(CollapsedPathValue { value, singular_window })
}
