//! Initial positions drawn from `|ψ|²`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMat, Point, MAX_DIM};
use crate::rng::{Domain, NormalStream};
use crate::wavefunction::{GaussianBranch, Wavefunction};

/// Smallest acceptable rejection-sampling acceptance rate.
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Mean and Cholesky factor of one branch's density `|ψ_j|²`.
struct BranchNormal {
    mean: Point,
    chol: [[f64; MAX_DIM]; MAX_DIM],
}

impl BranchNormal {
    fn new(br: &GaussianBranch) -> Result<Self> {
        let dim = br.dim();
        // |ψ_j|² ∝ exp(−½ xᵀΛx + 2 Re b·x) with Λ = −4 Re A.
        let precision = br.quad.re().scale((-4.0).into());
        let cov = precision.inverse().ok_or_else(|| Error::NotNormalizable("singular branch precision".into()))?;
        let rhs = br.lin.re().to_complex().scale(2.0.into());
        let mean = cov.mul_vec(&rhs).re();
        let chol = cholesky(&cov, dim)?;
        Ok(Self { mean, chol })
    }

    fn draw(&self, z: [f64; MAX_DIM]) -> Point {
        let mut x = self.mean;
        for i in 0..x.dim() {
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                x[i] += self.chol[i][j] * zj;
            }
        }
        x
    }
}

fn cholesky(cov: &CMat, dim: usize) -> Result<[[f64; MAX_DIM]; MAX_DIM]> {
    let mut l = [[0.0; MAX_DIM]; MAX_DIM];
    let c = |i, j| cov[(i, j)].re;
    if c(0, 0) <= 0.0 {
        return Err(Error::NotNormalizable("covariance is not positive definite".into()));
    }
    l[0][0] = c(0, 0).sqrt();
    if dim == 2 {
        l[1][0] = c(1, 0) / l[0][0];
        let d = c(1, 1) - l[1][0] * l[1][0];
        if d <= 0.0 {
            return Err(Error::NotNormalizable("covariance is not positive definite".into()));
        }
        l[1][1] = d.sqrt();
    }
    Ok(l)
}

fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` i.i.d. samples from `|ψ|²`; sample `i` depends only on `(seed, i)`.
///
/// A single branch is sampled exactly. A superposition of `J` branches uses
/// rejection against the envelope `J Σ_j |ψ_j|²`, which bounds `|ψ|²` by
/// Cauchy–Schwarz and is a Gaussian mixture; the acceptance rate is
/// `‖ψ‖² / (J Σ_j ‖ψ_j‖²)`.
pub fn sample_initial(psi: &Wavefunction, n: usize, seed: u64) -> Result<Vec<Point>> {
    let normals = psi.branches().iter().map(BranchNormal::new).collect::<Result<Vec<_>>>()?;
    let dim = psi.dim();
    let draw_normal = |stream: &mut NormalStream| {
        let mut z = [0.0; MAX_DIM];
        for zi in z.iter_mut().take(dim) {
            *zi = stream.next_normal();
        }
        z
    };
    if normals.len() == 1 {
        let bn = &normals[0];
        return Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = NormalStream::new(seed, Domain::Initial, i as u64);
                bn.draw(draw_normal(&mut s))
            })
            .collect());
    }

    let log_masses = psi.branch_log_masses();
    let j = psi.branches().len() as f64;
    let max_mass = log_masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_masses.iter().map(|m| (m - max_mass).exp()).collect();
    let log_envelope_mass = j.ln() + max_mass + weights.iter().sum::<f64>().ln();
    let acceptance = (psi.log_norm() - log_envelope_mass).exp();
    if acceptance < MIN_ACCEPTANCE {
        return Err(Error::Sampling(format!(
            "rejection envelope acceptance rate {acceptance:.2e} is below {MIN_ACCEPTANCE:.0e}"
        )));
    }
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Sampling(e.to_string()))?;
    let branches = psi.branches();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = NormalStream::new(seed, Domain::Initial, i as u64);
            for _ in 0..100_000_000u64 {
                let k = picker.sample(s.rng_mut());
                let x = normals[k].draw(draw_normal(&mut s));
                let log_target = 2.0 * psi.log_evaluate(&x).re;
                let log_env = {
                    let terms: Vec<f64> = branches.iter().map(|b| 2.0 * b.log_amplitude(&x).re).collect();
                    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    j.ln() + m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
                };
                let u = open_unit(s.rng_mut().next_u64());
                if u.ln() <= log_target - log_env {
                    return Ok(x);
                }
            }
            Err(Error::Sampling(format!("sample {i} was never accepted")))
        })
        .collect()
}
