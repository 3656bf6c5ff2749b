//! Closed-form wavefunction algebra.
//!
//! A wavefunction is a finite superposition of complex Gaussian branches
//!
//! ```text
//! ψ(x) = Σ_j exp(xᵀ A_j x + b_j·x + c_j + log w_j)
//! ```
//!
//! over one or two coordinates. The family is closed under harmonic and free
//! evolution and under multiplication by Gaussian pointer states, so every
//! quantity the process needs (density, phase gradient, drift fields) comes
//! out of branch parameters without a grid.

mod propagate;
mod residual;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ln_det_positive, CMat, CVec, Point};
use crate::physics::Physics;

pub use propagate::{flow_coefficients, FlowCache, FlowCoefficients, FlowTable, GuidingWave};
pub use residual::{hjm_residual, hjm_residual_with_step, ResidualTerms, DEFAULT_RESIDUAL_STEP};
pub(crate) use residual::residual_step;

/// Density ratio (to the branch peak) below which a superposition is treated
/// as sitting on a node, as a natural log: `ln(1e-30)`.
pub const NEAR_NODE_LOG_RATIO: f64 = -69.07755278982137;

/// Largest real log-amplitude accepted by [`Wavefunction::evaluate`].
const MAX_LOG_AMPLITUDE: f64 = 700.0;

/// One complex Gaussian branch `exp(xᵀ quad x + lin·x + constant + log_weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBranch {
    pub quad: CMat,
    pub lin: CVec,
    pub constant: Complex64,
    pub log_weight: Complex64,
    pub label: Option<Arc<str>>,
}

impl GaussianBranch {
    pub fn new(quad: CMat, lin: CVec, constant: Complex64) -> Self {
        Self { quad: quad.symmetrized(), lin, constant, log_weight: Complex64::new(0.0, 0.0), label: None }
    }

    pub fn with_weight(mut self, weight: Complex64) -> Self {
        self.log_weight = weight.ln();
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(Arc::from(label));
        self
    }

    pub fn dim(&self) -> usize {
        self.quad.dim()
    }

    pub fn log_amplitude(&self, x: &Point) -> Complex64 {
        self.quad.quadratic_form(x) + self.lin.dot_real(x) + self.constant + self.log_weight
    }

    /// `∇ ln ψ_j = 2 A x + b`.
    pub fn grad_log(&self, x: &Point) -> CVec {
        self.quad.mul_real_vec(x).scale(Complex64::new(2.0, 0.0)) + self.lin
    }

    /// `ln max_x |ψ_j(x)|²`.
    pub fn peak_log_density(&self) -> f64 {
        let re_a = self.quad.re();
        let re_b = self.lin.re().to_complex();
        let total = self.constant.re + self.log_weight.re;
        match re_a.inverse() {
            Some(inv) => 2.0 * (total - 0.25 * inv.bilinear(&re_b).re),
            None => f64::INFINITY,
        }
    }

    fn is_normalizable(&self) -> bool {
        self.quad.has_negative_definite_real_part()
            && self.quad.is_finite()
            && self.lin.is_finite()
            && self.constant.is_finite()
            && self.log_weight.is_finite()
    }

    pub(crate) fn total_constant(&self) -> Complex64 {
        self.constant + self.log_weight
    }
}

/// `ln ∫ conj(ψ_j) ψ_k dx` for two branches, in closed form.
fn log_overlap(a: &GaussianBranch, b: &GaussianBranch) -> Complex64 {
    let dim = a.dim();
    let m = a.quad.conj() + b.quad;
    let j = a.lin.conj() + b.lin;
    let neg_m = m.scale(Complex64::new(-1.0, 0.0));
    let inv = m.inverse().expect("sum of normalizable quads is invertible");
    let gauss = 0.5 * dim as f64 * PI.ln() - 0.5 * ln_det_positive(&neg_m) - 0.25 * inv.bilinear(&j);
    gauss + a.total_constant().conj() + b.total_constant()
}

/// Sum of `exp(l_i)` for complex logs, returned as a log.
fn log_sum_exp(logs: impl Iterator<Item = Complex64> + Clone) -> Complex64 {
    let max_re = logs.clone().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let sum: Complex64 = logs.map(|l| (l - max_re).exp()).sum();
    sum.ln() + max_re
}

/// Which velocity field to extract from a wavefunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VelocityKind {
    /// Mean forward drift `b = v + u`.
    ForwardDrift,
    /// Mean backward drift `b* = v − u`.
    BackwardDrift,
    /// Current velocity `v = (ħ/m) Im ∇ln ψ`.
    Current,
    /// Osmotic velocity `u = (ħ/m) Re ∇ln ψ`.
    Osmotic,
}

impl VelocityKind {
    pub const ALL: [VelocityKind; 4] =
        [VelocityKind::ForwardDrift, VelocityKind::BackwardDrift, VelocityKind::Current, VelocityKind::Osmotic];

    /// Maps `∇ ln ψ` to the velocity of this kind.
    pub fn from_grad_log(self, physics: &Physics, g: &CVec) -> Point {
        let mut out = Point::zeros(g.dim());
        for i in 0..g.dim() {
            let k = physics.hbar() / physics.mass(i);
            out[i] = k * match self {
                VelocityKind::ForwardDrift => g[i].re + g[i].im,
                VelocityKind::BackwardDrift => g[i].im - g[i].re,
                VelocityKind::Current => g[i].im,
                VelocityKind::Osmotic => g[i].re,
            };
        }
        out
    }
}

/// Value, gradient and Hessian of `ln ψ` at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalJet {
    pub log_psi: Complex64,
    pub grad: CVec,
    pub hess: CMat,
    /// `ln(|ψ(x)|² / peak)`, where the peak is the largest branch peak.
    pub log_density_ratio: f64,
}

/// A finite weighted superposition of Gaussian branches at a given time.
///
/// Values are immutable once built; sharing across worker threads needs no
/// synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    branches: Vec<GaussianBranch>,
    time: f64,
    physics: Physics,
}

impl Wavefunction {
    pub fn from_branches(physics: Physics, time: f64, branches: Vec<GaussianBranch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::NotNormalizable("a wavefunction needs at least one branch".into()));
        }
        for br in &branches {
            if br.dim() != physics.dim() || br.lin.dim() != physics.dim() {
                return Err(Error::DimensionMismatch { expected: physics.dim(), got: br.dim() });
            }
            if !br.is_normalizable() {
                return Err(Error::NotNormalizable(
                    "branch quadratic coefficient must have a negative definite real part".into(),
                ));
            }
        }
        if !time.is_finite() {
            return Err(Error::invalid("time", "must be finite"));
        }
        Ok(Self { branches, time, physics })
    }

    /// Normalized oscillator ground state with `σ² = ħ / (2 m ω)`.
    pub fn ground_state(mass: f64, omega: f64, hbar: f64) -> Result<Self> {
        let physics = Physics::oscillator(mass, omega, hbar)?;
        let var = physics.ground_variance(0).expect("oscillator has omega > 0");
        let quad = CMat::real_diagonal(&[-0.25 / var]);
        let constant = Complex64::new(-0.25 * (2.0 * PI * var).ln(), 0.0);
        Self::from_branches(physics, 0.0, vec![GaussianBranch::new(quad, CVec::zeros(1), constant)])
    }

    /// Normalized real Gaussian centred at `center` whose density has standard
    /// deviation `width` in every coordinate.
    pub fn collapsed(physics: Physics, center: &Point, width: f64, time: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid("width", format!("collapse width must be positive, got {width}")));
        }
        if center.dim() != physics.dim() {
            return Err(Error::DimensionMismatch { expected: physics.dim(), got: center.dim() });
        }
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        let dim = physics.dim();
        let var = width * width;
        let quad = CMat::real_diagonal(&vec![-0.25 / var; dim]);
        let mut lin = CVec::zeros(dim);
        let mut constant = -0.25 * dim as f64 * (2.0 * PI * var).ln();
        for i in 0..dim {
            lin[i] = Complex64::new(center[i] / (2.0 * var), 0.0);
            constant -= center[i] * center[i] / (4.0 * var);
        }
        Self::from_branches(physics, time, vec![GaussianBranch::new(quad, lin, Complex64::new(constant, 0.0))])
    }

    /// Normalized real, zero-mean Gaussian with position covariance `cov`.
    pub fn correlated_gaussian(physics: Physics, cov: &[[f64; 2]; 2]) -> Result<Self> {
        if physics.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: physics.dim() });
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0 && det > 0.0) || (cov[0][1] - cov[1][0]).abs() > 0.0 {
            return Err(Error::NotNormalizable("covariance must be symmetric positive definite".into()));
        }
        let c = |x: f64| Complex64::new(x, 0.0);
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        let quad = CMat::from_rows(2, &[c(-0.25 * inv[0][0]), c(-0.25 * inv[0][1]), c(-0.25 * inv[1][0]), c(-0.25 * inv[1][1])]);
        let constant = -0.25 * ((2.0 * PI).powi(2) * det).ln();
        Self::from_branches(physics, 0.0, vec![GaussianBranch::new(quad, CVec::zeros(2), c(constant))])
    }

    pub fn branches(&self) -> &[GaussianBranch] {
        &self.branches
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn dim(&self) -> usize {
        self.physics.dim()
    }

    /// Replaces the time stamp without evolving.
    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// `ln ψ(x)`, with the imaginary part on the principal branch.
    pub fn log_evaluate(&self, x: &Point) -> Complex64 {
        log_sum_exp(self.branches.iter().map(|b| b.log_amplitude(x)))
    }

    /// `ψ(x)`. Fails rather than saturating when the exponent overflows.
    pub fn evaluate(&self, x: &Point) -> Result<Complex64> {
        self.check_dim(x)?;
        if !x.is_finite() {
            return Err(Error::invalid("x", "position must be finite"));
        }
        let l = self.log_evaluate(x);
        if l.re > MAX_LOG_AMPLITUDE {
            return Err(Error::Overflow(l.re));
        }
        Ok(l.exp())
    }

    /// `|ψ(x)|²`.
    pub fn density(&self, x: &Point) -> f64 {
        (2.0 * self.log_evaluate(x).re).exp()
    }

    /// `ln ∫ |ψ|² dx`, exact for any superposition.
    pub fn log_norm(&self) -> f64 {
        let n = self.branches.len();
        let logs: Vec<Complex64> = (0..n)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .map(|(j, k)| log_overlap(&self.branches[j], &self.branches[k]))
            .collect();
        log_sum_exp(logs.iter().copied()).re
    }

    pub fn norm(&self) -> f64 {
        self.log_norm().exp()
    }

    /// Rescales all weights so that `∫|ψ|² = 1`.
    pub fn normalized(mut self) -> Result<Self> {
        let ln = self.log_norm();
        if !ln.is_finite() {
            return Err(Error::NotNormalizable(format!("log norm is {ln}")));
        }
        for b in &mut self.branches {
            b.log_weight -= Complex64::new(0.5 * ln, 0.0);
        }
        Ok(self)
    }

    /// `ln ∫|ψ_j|²` for each branch taken alone.
    pub fn branch_log_masses(&self) -> Vec<f64> {
        self.branches.iter().map(|b| log_overlap(b, b).re).collect()
    }

    /// Largest branch peak of `ln |ψ_j|²`.
    pub fn peak_log_density(&self) -> f64 {
        self.branches.iter().map(GaussianBranch::peak_log_density).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value, gradient and Hessian of `ln ψ` at `x`.
    pub fn local_jet(&self, x: &Point) -> LocalJet {
        let dim = self.dim();
        if self.branches.len() == 1 {
            let br = &self.branches[0];
            let log_psi = br.log_amplitude(x);
            return LocalJet {
                log_psi,
                grad: br.grad_log(x),
                hess: br.quad.scale(Complex64::new(2.0, 0.0)),
                log_density_ratio: 2.0 * log_psi.re - br.peak_log_density(),
            };
        }
        let logs: Vec<Complex64> = self.branches.iter().map(|b| b.log_amplitude(x)).collect();
        let max_re = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut z = Complex64::new(0.0, 0.0);
        let mut grad = CVec::zeros(dim);
        let mut second = CMat::zeros(dim);
        for (br, l) in self.branches.iter().zip(&logs) {
            let w = (l - max_re).exp();
            let g = br.grad_log(x);
            z += w;
            grad = grad + g.scale(w);
            let mut h = br.quad.scale(Complex64::new(2.0, 0.0));
            for i in 0..dim {
                for k in 0..dim {
                    h[(i, k)] += g[i] * g[k];
                }
            }
            second = second + h.scale(w);
        }
        let inv_z = Complex64::new(1.0, 0.0) / z;
        let grad = grad.scale(inv_z);
        let mut hess = second.scale(inv_z);
        for i in 0..dim {
            for k in 0..dim {
                hess[(i, k)] -= grad[i] * grad[k];
            }
        }
        let log_psi = z.ln() + max_re;
        LocalJet { log_psi, grad, hess, log_density_ratio: 2.0 * log_psi.re - self.peak_log_density() }
    }

    /// Velocity field of the given kind, evaluated lazily.
    pub fn drift_field(&self, kind: VelocityKind) -> DriftField<'_> {
        DriftField { psi: self, kind, peak: self.peak_log_density() }
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        Ok(())
    }

    /// Multiplies by the Gaussian pointer `exp(−(x_c − X_c)² / 4w²)` in each
    /// listed coordinate and renormalizes.
    pub fn condition_on(&self, coords: &[usize], outcome: &Point, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid("width", format!("collapse width must be positive, got {width}")));
        }
        let var = width * width;
        let mut branches = self.branches.clone();
        for br in &mut branches {
            for &c in coords {
                if c >= self.dim() {
                    return Err(Error::invalid("coords", format!("coordinate {c} out of range")));
                }
                let x = outcome[c];
                br.quad[(c, c)] -= Complex64::new(0.25 / var, 0.0);
                br.lin[c] += Complex64::new(x / (2.0 * var), 0.0);
                br.constant -= Complex64::new(x * x / (4.0 * var), 0.0);
            }
        }
        Wavefunction::from_branches(self.physics, self.time, branches)?.normalized()
    }
}

/// A velocity field `x ↦ (kind)(x)` bound to one wavefunction.
#[derive(Debug, Clone, Copy)]
pub struct DriftField<'a> {
    psi: &'a Wavefunction,
    kind: VelocityKind,
    peak: f64,
}

impl DriftField<'_> {
    pub fn kind(&self) -> VelocityKind {
        self.kind
    }

    /// Field value at `x`; superpositions report a near-node condition when the
    /// density drops below `1e-30` of the largest branch peak.
    pub fn eval(&self, x: &Point) -> Result<Point> {
        self.psi.check_dim(x)?;
        let (v, ratio) = self.eval_unchecked(x);
        match ratio {
            Some(r) if r < NEAR_NODE_LOG_RATIO => Err(Error::NearNode { log_ratio: r }),
            _ => Ok(v),
        }
    }

    /// Field value plus the log density ratio (only for superpositions; a single
    /// Gaussian branch has no nodes).
    pub fn eval_unchecked(&self, x: &Point) -> (Point, Option<f64>) {
        if self.psi.branches.len() == 1 {
            let g = self.psi.branches[0].grad_log(x);
            return (self.kind.from_grad_log(&self.psi.physics, &g), None);
        }
        let jet = self.psi.local_jet(x);
        let ratio = 2.0 * jet.log_psi.re - self.peak;
        (self.kind.from_grad_log(&self.psi.physics, &jet.grad), Some(ratio))
    }
}
