//! Pointwise residuals of the evolution equations satisfied by `ψ`.
//!
//! Spatial derivatives come exactly from branch parameters; time derivatives
//! from a central difference of the closed-form evolution.

use super::{VelocityKind, Wavefunction, NEAR_NODE_LOG_RATIO};
use crate::error::{Error, Result};
use crate::linalg::Point;

/// Default time step for residual differencing, in units of `1/ω`.
pub const DEFAULT_RESIDUAL_STEP: f64 = 1e-4;

/// Signed residuals at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerms {
    /// `∂ρ/∂t + ∇·(vρ)`.
    pub continuity: f64,
    /// `∂ρ/∂t + ∇·(bρ) − ν∇²ρ`.
    pub forward_fp: f64,
    /// `∂ρ/∂t + ∇·(b*ρ) + ν∇²ρ`.
    pub backward_fp: f64,
    /// `∂S/∂t + |∇S|²/2m + V + Q`, with `Q = −(ħ²/2m)∇²√ρ/√ρ`.
    pub hjm: f64,
    /// Osmotic identity `u − ν ∇ρ/ρ`, per coordinate, with `∇ρ` by central
    /// differences of `|ψ|²` in space.
    pub osmotic: [f64; 2],
}

impl ResidualTerms {
    /// Residuals at `(x, t)` with time step `h` for differencing.
    pub fn evaluate(psi: &Wavefunction, x: &Point, t: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("step", format!("must be positive, got {h}")));
        }
        if x.dim() != psi.dim() {
            return Err(Error::DimensionMismatch { expected: psi.dim(), got: x.dim() });
        }
        let now = psi.at_time(t)?;
        let later = psi.at_time(t + h)?;
        let earlier = psi.at_time(t - h)?;
        Self::from_snapshots(&earlier, &now, &later, x)
    }

    /// Residuals from three snapshots `ψ(t−h)`, `ψ(t)`, `ψ(t+h)`; spatial terms
    /// come from the middle one. Useful for checking states that were not
    /// produced by this crate's evolution.
    pub fn from_snapshots(earlier: &Wavefunction, now: &Wavefunction, later: &Wavefunction, x: &Point) -> Result<Self> {
        let h = 0.5 * (later.time() - earlier.time());
        if !(h > 0.0) {
            return Err(Error::invalid("step", "snapshots must be ordered in time"));
        }
        if x.dim() != now.dim() {
            return Err(Error::DimensionMismatch { expected: now.dim(), got: x.dim() });
        }
        let jet = now.local_jet(x);
        if now.branches().len() > 1 && jet.log_density_ratio < NEAR_NODE_LOG_RATIO {
            return Err(Error::NearNode { log_ratio: jet.log_density_ratio });
        }
        let (lp, lm) = (later.log_evaluate(x), earlier.log_evaluate(x));

        let phys = *now.physics();
        let hbar = phys.hbar();
        let rho = (2.0 * jet.log_psi.re).exp();
        let drho_dt = ((2.0 * lp.re).exp() - (2.0 * lm.re).exp()) / (2.0 * h);
        let dphase = (lp - lm).exp().arg();
        let ds_dt = hbar * dphase / (2.0 * h);

        let b = VelocityKind::ForwardDrift.from_grad_log(&phys, &jet.grad);
        let bs = VelocityKind::BackwardDrift.from_grad_log(&phys, &jet.grad);
        let v = VelocityKind::Current.from_grad_log(&phys, &jet.grad);

        let (mut div_v, mut div_b, mut div_bs, mut lap) = (0.0, 0.0, 0.0, 0.0);
        let (mut kinetic, mut potential, mut quantum) = (0.0, 0.0, 0.0);
        for i in 0..x.dim() {
            let m = phys.mass(i);
            let k = hbar / m;
            let nu = phys.diffusion(i);
            let r1 = jet.grad[i].re;
            let r2 = jet.hess[(i, i)].re;
            let s2 = jet.hess[(i, i)].im;
            // ∂_i(f ρ) = ρ (∂_i f + 2 f ∂_i Re ln ψ).
            div_v += k * s2 + 2.0 * v[i] * r1;
            div_b += k * (r2 + s2) + 2.0 * b[i] * r1;
            div_bs += k * (s2 - r2) + 2.0 * bs[i] * r1;
            lap += nu * (4.0 * r1 * r1 + 2.0 * r2);
            let ds = hbar * jet.grad[i].im;
            kinetic += ds * ds / (2.0 * m);
            let w = phys.omega(i);
            potential += 0.5 * m * w * w * x[i] * x[i];
            quantum -= hbar * hbar / (2.0 * m) * (r2 + r1 * r1);
        }

        let mut osmotic = [0.0; 2];
        let u = VelocityKind::Osmotic.from_grad_log(&phys, &jet.grad);
        let hx = 1e-5;
        for (i, slot) in osmotic.iter_mut().enumerate().take(x.dim()) {
            let (mut xp, mut xm) = (*x, *x);
            xp[i] += hx;
            xm[i] -= hx;
            let grad_ln_rho = (2.0 * now.log_evaluate(&xp).re - 2.0 * now.log_evaluate(&xm).re) / (2.0 * hx);
            *slot = u[i] - phys.diffusion(i) * grad_ln_rho;
        }

        Ok(Self {
            continuity: drho_dt + rho * div_v,
            forward_fp: drho_dt + rho * (div_b - lap),
            backward_fp: drho_dt + rho * (div_bs + lap),
            hjm: ds_dt + kinetic + potential + quantum,
            osmotic,
        })
    }
}

/// Differencing step `DEFAULT_RESIDUAL_STEP / ω_max` (or the bare constant for
/// purely free systems).
pub(crate) fn residual_step(psi: &Wavefunction) -> f64 {
    let w = psi.physics().omegas().iter().copied().fold(0.0, f64::max);
    if w > 0.0 {
        DEFAULT_RESIDUAL_STEP / w
    } else {
        DEFAULT_RESIDUAL_STEP
    }
}

/// `|∂S/∂t + |∇S|²/2m + V + Q|` at `(x, t)`.
pub fn hjm_residual(psi: &Wavefunction, x: &Point, t: f64) -> Result<f64> {
    hjm_residual_with_step(psi, x, t, residual_step(psi))
}

pub fn hjm_residual_with_step(psi: &Wavefunction, x: &Point, t: f64, h: f64) -> Result<f64> {
    Ok(ResidualTerms::evaluate(psi, x, t, h)?.hjm.abs())
}
