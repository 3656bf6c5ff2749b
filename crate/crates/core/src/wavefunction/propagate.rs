//! Closed-form harmonic / free evolution of Gaussian branches.
//!
//! For a branch `exp(xᵀA₀x + b₀·x + c₀)` and the Hamiltonian
//! `Σ p_i²/2m_i + ½ m_i ω_i² x_i²`, write
//!
//! ```text
//! C = diag(cos ω_i τ),  S = diag(sin ω_i τ / ω_i)  (τ when ω_i = 0)
//! N = diag(1/m_i),      K = diag(m_i ω_i²)
//! Ξ = C − 2iħ S N A₀,   Π = C A₀ − (i/2ħ) K S
//! ```
//!
//! Then `A(τ) = Π Ξ⁻¹`, `b(τ) = Ξ⁻ᵀ b₀` and
//! `c(τ) = c₀ − ½ ln det Ξ + (iħ/2) b₀ᵀ Ξ⁻¹ S N b₀`. None of these blow up
//! at `sin ω τ = 0`, unlike the textbook kernel form. The logarithm of `det Ξ`
//! is continued along the path from `τ = 0` so that the stationary phase
//! `e^{−iωτ/2}` comes out right for every τ.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use super::{GaussianBranch, VelocityKind, Wavefunction};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, Point};
use crate::physics::Physics;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Branch-parameter map for one duration, shared by every branch whose
/// quadratic coefficient equals `A₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCoefficients {
    /// `A(τ)`.
    pub quad: CMat,
    /// `Ξ⁻ᵀ`, mapping `b₀ ↦ b(τ)`.
    pub lin_map: CMat,
    /// `(iħ/2) Ξ⁻¹ S N`, the quadratic form in `b₀` added to the constant.
    pub const_form: CMat,
    /// `−½ ln det Ξ`, continued from `τ = 0`.
    pub log_prefactor: Complex64,
}

impl FlowCoefficients {
    pub fn apply(&self, br: &GaussianBranch) -> GaussianBranch {
        GaussianBranch {
            quad: self.quad,
            lin: self.lin_map.mul_vec(&br.lin),
            constant: br.constant + self.log_prefactor + self.const_form.bilinear(&br.lin),
            log_weight: br.log_weight,
            label: br.label.clone(),
        }
    }

    fn lin(&self, b0: &CVec) -> CVec {
        self.lin_map.mul_vec(b0)
    }

    fn constant(&self, b0: &CVec, c0: Complex64) -> Complex64 {
        c0 + self.log_prefactor + self.const_form.bilinear(b0)
    }
}

struct FlowMatrices {
    xi: CMat,
    pi: CMat,
    sn: CMat,
}

fn flow_matrices(a0: &CMat, physics: &Physics, tau: f64) -> FlowMatrices {
    let dim = a0.dim();
    let hbar = physics.hbar();
    let mut c = CMat::zeros(dim);
    let mut s = CMat::zeros(dim);
    let mut n = CMat::zeros(dim);
    let mut k = CMat::zeros(dim);
    for i in 0..dim {
        let (w, m) = (physics.omega(i), physics.mass(i));
        let (sin_term, cos_term) = if w > 0.0 {
            let (sn, cs) = (w * tau).sin_cos();
            (sn / w, cs)
        } else {
            (tau, 1.0)
        };
        c[(i, i)] = Complex64::new(cos_term, 0.0);
        s[(i, i)] = Complex64::new(sin_term, 0.0);
        n[(i, i)] = Complex64::new(1.0 / m, 0.0);
        k[(i, i)] = Complex64::new(m * w * w, 0.0);
    }
    let sn = s * n;
    let xi = c - (sn * *a0).scale(2.0 * hbar * I);
    let pi = c * *a0 - (k * s).scale(I / (2.0 * hbar));
    FlowMatrices { xi, pi, sn }
}

/// `ln(cos θ + μ sin θ)` continued from `θ = 0`; requires `Im μ > 0` (the
/// factor then never vanishes and gains exactly `π` of phase per half period).
fn unwrapped_log_factor(mu: Complex64, theta: f64) -> Complex64 {
    let n = (theta / PI).trunc();
    let phi = theta - n * PI;
    let (s, c) = phi.sin_cos();
    (Complex64::new(c, 0.0) + mu * s).ln() + I * (n * PI)
}

fn log_det_xi(a0: &CMat, physics: &Physics, tau: f64) -> Complex64 {
    let dim = a0.dim();
    let hbar = physics.hbar();
    let mut na = *a0;
    for i in 0..dim {
        for j in 0..dim {
            na[(i, j)] = a0[(i, j)] / physics.mass(i);
        }
    }
    match physics.same_frequency() {
        Some(w) if w > 0.0 => {
            let mu = na.scale(-2.0 * hbar * I / w).eigenvalues();
            (0..dim).map(|k| unwrapped_log_factor(mu[k], w * tau)).sum()
        }
        Some(_) => {
            let mu = na.scale(-2.0 * hbar * I).eigenvalues();
            (0..dim).map(|k| (Complex64::new(1.0, 0.0) + mu[k] * tau).ln()).sum()
        }
        None => numeric_log_det(a0, physics, tau),
    }
}

/// Phase-tracks `det Ξ(s)` for `s ∈ [0, τ]`, refining until successive samples
/// differ by less than `π/4` in argument.
fn numeric_log_det(a0: &CMat, physics: &Physics, tau: f64) -> Complex64 {
    let det_at = |s: f64| flow_matrices(a0, physics, s).xi.det();
    let mut pieces = 64usize;
    loop {
        let mut prev = det_at(0.0);
        let mut phase = 0.0;
        let mut smooth = true;
        for j in 1..=pieces {
            let cur = det_at(tau * j as f64 / pieces as f64);
            let d = (cur / prev).arg();
            if d.abs() >= PI / 4.0 {
                smooth = false;
                break;
            }
            phase += d;
            prev = cur;
        }
        if smooth || pieces >= 1 << 20 {
            return Complex64::new(prev.norm().ln(), phase);
        }
        pieces *= 2;
    }
}

/// Flow coefficients for evolving quadratic coefficient `a0` by `tau`
/// (either sign).
pub fn flow_coefficients(a0: &CMat, physics: &Physics, tau: f64) -> Result<FlowCoefficients> {
    if !tau.is_finite() {
        return Err(Error::invalid("duration", "must be finite"));
    }
    if a0.dim() != physics.dim() {
        return Err(Error::DimensionMismatch { expected: physics.dim(), got: a0.dim() });
    }
    let FlowMatrices { xi, pi, sn } = flow_matrices(a0, physics, tau);
    let singular = |reason: &str| Error::SingularPropagation { duration: tau, reason: reason.into() };
    let xi_inv = xi.inverse().ok_or_else(|| singular("Gaussian integral degenerates"))?;
    let quad = (pi * xi_inv).symmetrized();
    if !quad.is_finite() || !quad.has_negative_definite_real_part() {
        return Err(singular("evolved branch is not normalizable"));
    }
    let const_form = (xi_inv * sn).symmetrized().scale(I * (0.5 * physics.hbar()));
    Ok(FlowCoefficients {
        quad,
        lin_map: xi_inv.transpose(),
        const_form,
        log_prefactor: -0.5 * log_det_xi(a0, physics, tau),
    })
}

impl Wavefunction {
    /// Evolves forward by `duration ≥ 0`.
    pub fn propagate(&self, duration: f64) -> Result<Wavefunction> {
        if !(duration >= 0.0) {
            return Err(Error::invalid("duration", format!("must be non-negative, got {duration}")));
        }
        self.propagate_signed(duration)
    }

    /// Evolves by `duration` of either sign; the closed form is valid both ways.
    pub fn propagate_signed(&self, duration: f64) -> Result<Wavefunction> {
        if duration == 0.0 {
            return Ok(self.clone());
        }
        let mut memo: Vec<(CMat, FlowCoefficients)> = Vec::new();
        let mut out = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let flow = match memo.iter().find(|(a, _)| *a == br.quad) {
                Some((_, f)) => *f,
                None => {
                    let f = flow_coefficients(&br.quad, &self.physics, duration)?;
                    memo.push((br.quad, f));
                    f
                }
            };
            out.push(flow.apply(br));
        }
        Wavefunction::from_branches(self.physics, self.time + duration, out)
    }

    /// The state at absolute time `t`.
    pub fn at_time(&self, t: f64) -> Result<Wavefunction> {
        self.propagate_signed(t - self.time)
    }
}

/// Flow coefficients for durations `k·dt`, `k = 0..len`.
#[derive(Debug, Clone)]
pub struct FlowTable {
    dt: f64,
    entries: Vec<FlowCoefficients>,
}

impl FlowTable {
    pub fn build(a0: &CMat, physics: &Physics, dt: f64, len: usize) -> Result<Self> {
        let entries = (0..len).map(|k| flow_coefficients(a0, physics, k as f64 * dt)).collect::<Result<_>>()?;
        Ok(Self { dt, entries })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> &FlowCoefficients {
        &self.entries[k]
    }
}

type CacheKey = ([u64; 9], u64, usize);

/// Shares flow tables between trajectories whose conditional states have the
/// same quadratic coefficient (e.g. every collapse of the same width).
#[derive(Debug)]
pub struct FlowCache {
    physics: Physics,
    dt: f64,
    total_steps: usize,
    tables: Mutex<HashMap<CacheKey, Arc<FlowTable>>>,
}

impl FlowCache {
    /// Tables cover steps up to and including `total_steps`.
    pub fn new(physics: Physics, dt: f64, total_steps: usize) -> Self {
        Self { physics, dt, total_steps, tables: Mutex::new(HashMap::new()) }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    /// Table for `a0` starting at grid step `origin_step`.
    pub fn table(&self, a0: &CMat, origin_step: usize) -> Result<Arc<FlowTable>> {
        let len = self.total_steps.saturating_sub(origin_step) + 1;
        let key = (a0.bit_key(), self.dt.to_bits(), len);
        if let Some(t) = self.tables.lock().expect("flow cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        // Built outside the lock; a racing builder produces an identical table.
        let table = Arc::new(FlowTable::build(a0, &self.physics, self.dt, len)?);
        let mut guard = self.tables.lock().expect("flow cache poisoned");
        Ok(Arc::clone(guard.entry(key).or_insert(table)))
    }

    pub fn len(&self) -> usize {
        self.tables.lock().expect("flow cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A wavefunction fixed at grid step `origin_step` together with the tables
/// that evolve it to any later step. Drift evaluation at a step costs a few
/// complex multiplications per branch.
#[derive(Debug, Clone)]
pub struct GuidingWave {
    physics: Physics,
    origin_step: usize,
    origin_time: f64,
    branches: Vec<GaussianBranch>,
    tables: Vec<Arc<FlowTable>>,
}

impl GuidingWave {
    pub fn new(psi: &Wavefunction, origin_step: usize, cache: &FlowCache) -> Result<Self> {
        let tables = psi.branches().iter().map(|b| cache.table(&b.quad, origin_step)).collect::<Result<_>>()?;
        Ok(Self {
            physics: *psi.physics(),
            origin_step,
            origin_time: psi.time(),
            branches: psi.branches().to_vec(),
            tables,
        })
    }

    pub fn dim(&self) -> usize {
        self.physics.dim()
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn origin_step(&self) -> usize {
        self.origin_step
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    fn offset(&self, step: usize) -> usize {
        debug_assert!(step >= self.origin_step);
        step - self.origin_step
    }

    /// The full wavefunction at grid step `step`.
    pub fn wavefunction_at(&self, step: usize) -> Result<Wavefunction> {
        let k = self.offset(step);
        let branches = self.branches.iter().zip(&self.tables).map(|(b, t)| t.get(k).apply(b)).collect();
        let time = self.origin_time + k as f64 * self.tables[0].dt();
        Wavefunction::from_branches(self.physics, time, branches)
    }

    /// Velocity of `kind` at `x` and grid step `step`, with the log density
    /// ratio to the largest branch peak for superpositions.
    pub fn velocity(&self, kind: VelocityKind, step: usize, x: &Point) -> (Point, Option<f64>) {
        let k = self.offset(step);
        if self.branches.len() == 1 {
            let f = self.tables[0].get(k);
            let g = f.quad.mul_real_vec(x).scale(Complex64::new(2.0, 0.0)) + f.lin(&self.branches[0].lin);
            return (kind.from_grad_log(&self.physics, &g), None);
        }
        let dim = x.dim();
        let mut max_re = f64::NEG_INFINITY;
        let mut peak = f64::NEG_INFINITY;
        let mut z = Complex64::new(0.0, 0.0);
        let mut acc = CVec::zeros(dim);
        for (br, table) in self.branches.iter().zip(&self.tables) {
            let f = table.get(k);
            let lin = f.lin(&br.lin);
            let evolved = GaussianBranch {
                quad: f.quad,
                lin,
                constant: f.constant(&br.lin, br.constant),
                log_weight: br.log_weight,
                label: None,
            };
            let l = evolved.log_amplitude(x);
            let g = evolved.grad_log(x);
            peak = peak.max(evolved.peak_log_density());
            if l.re > max_re {
                let rescale = Complex64::new((max_re - l.re).exp(), 0.0);
                z *= rescale;
                acc = acc.scale(rescale);
                max_re = l.re;
            }
            let w = (l - max_re).exp();
            z += w;
            acc = acc + g.scale(w);
        }
        let grad = acc.scale(Complex64::new(1.0, 0.0) / z);
        let ratio = 2.0 * (z.ln().re + max_re) - peak;
        (kind.from_grad_log(&self.physics, &grad), Some(ratio))
    }
}
