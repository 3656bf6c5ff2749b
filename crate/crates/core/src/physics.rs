use crate::error::{Error, Result};
use crate::linalg::MAX_DIM;

/// Physical constants for a configuration space of one or two coordinates.
///
/// Each coordinate is either harmonic (`omega > 0`) or free (`omega == 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    hbar: f64,
    masses: [f64; MAX_DIM],
    omegas: [f64; MAX_DIM],
    dim: usize,
}

impl Physics {
    pub fn new(hbar: f64, masses: &[f64], omegas: &[f64]) -> Result<Self> {
        let dim = masses.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid("masses", format!("expected 1 or 2 coordinates, got {dim}")));
        }
        if omegas.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: omegas.len() });
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::invalid("hbar", format!("must be positive and finite, got {hbar}")));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::invalid("mass", format!("must be positive and finite, got {m}")));
        }
        if let Some(w) = omegas.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("omega", format!("must be non-negative and finite, got {w}")));
        }
        let mut p = Self { hbar, masses: [1.0; MAX_DIM], omegas: [0.0; MAX_DIM], dim };
        p.masses[..dim].copy_from_slice(masses);
        p.omegas[..dim].copy_from_slice(omegas);
        Ok(p)
    }

    /// One harmonic coordinate.
    pub fn oscillator(mass: f64, omega: f64, hbar: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::invalid("omega", format!("oscillator frequency must be positive, got {omega}")));
        }
        Self::new(hbar, &[mass], &[omega])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.omegas[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses[..self.dim]
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas[..self.dim]
    }

    /// Diffusion coefficient `ħ / 2m` of coordinate `i`.
    pub fn diffusion(&self, i: usize) -> f64 {
        self.hbar / (2.0 * self.masses[i])
    }

    /// Ground-state position variance `ħ / (2 m ω)` of harmonic coordinate `i`.
    pub fn ground_variance(&self, i: usize) -> Option<f64> {
        let w = self.omegas[i];
        (w > 0.0).then(|| self.hbar / (2.0 * self.masses[i] * w))
    }

    /// Restricts to a single coordinate.
    pub fn coordinate(&self, i: usize) -> Physics {
        Physics { hbar: self.hbar, masses: [self.masses[i], 1.0], omegas: [self.omegas[i], 0.0], dim: 1 }
    }

    pub(crate) fn same_frequency(&self) -> Option<f64> {
        let w0 = self.omegas[0];
        self.omegas().iter().all(|w| *w == w0).then_some(w0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_constants() {
        assert!(Physics::oscillator(0.0, 1.0, 1.0).is_err());
        assert!(Physics::oscillator(1.0, 0.0, 1.0).is_err());
        assert!(Physics::oscillator(1.0, 1.0, -1.0).is_err());
        assert!(Physics::new(1.0, &[1.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn ground_variance_is_hbar_over_two_m_omega() {
        let p = Physics::oscillator(2.0, 3.0, 1.5).unwrap();
        assert!((p.ground_variance(0).unwrap() - 1.5 / 12.0).abs() < 1e-15);
        assert!((p.diffusion(0) - 0.375).abs() < 1e-15);
    }
}
