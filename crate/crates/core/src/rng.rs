//! Counter-based randomness.
//!
//! Every random number is a pure function of `(seed, domain, stream, index)`:
//! the seed and a domain tag select a ChaCha8 key, the trajectory id selects
//! the stream, and the position in the stream is fixed by the step index. No
//! generator state crosses trajectories, so results do not depend on how work
//! is scheduled.

use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent random-number domains derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Wiener increments of the integrator.
    Increments = 1,
    /// Initial-position sampling.
    Initial = 2,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, domain, stream)` triple, positioned at word 0.
pub fn stream_rng(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform in `(0, 1]` from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two standard normals from exactly two 64-bit words (Box–Muller).
#[inline]
pub fn normal_pair(rng: &mut impl RngCore) -> [f64; 2] {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    [r * c, r * s]
}

/// The sequence of standard normals `z_0, z_1, …` of one trajectory.
///
/// Normal `j` is always derived from words `4⌊j/2⌋ .. 4⌊j/2⌋+4` of the
/// stream, so any suffix can be regenerated with [`NormalStream::starting_at`].
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, domain: Domain, stream: u64) -> Self {
        Self { rng: stream_rng(seed, domain, stream), spare: None }
    }

    /// Stream positioned so that the next value is normal number `index`.
    pub fn starting_at(seed: u64, domain: Domain, stream: u64, index: u64) -> Self {
        let mut out = Self::new(seed, domain, stream);
        out.rng.set_word_pos(u128::from(index / 2) * 4);
        if index % 2 == 1 {
            out.spare = Some(normal_pair(&mut out.rng)[1]);
        }
        out
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let [a, b] = normal_pair(&mut self.rng);
        self.spare = Some(b);
        a
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_numbers() {
        let mut a = NormalStream::new(42, Domain::Increments, 7);
        let mut b = NormalStream::new(42, Domain::Increments, 7);
        for _ in 0..100 {
            assert_eq!(a.next_normal().to_bits(), b.next_normal().to_bits());
        }
    }

    #[test]
    fn streams_and_domains_are_distinct() {
        let a = NormalStream::new(42, Domain::Increments, 7).next_normal();
        let b = NormalStream::new(42, Domain::Increments, 8).next_normal();
        let c = NormalStream::new(42, Domain::Initial, 7).next_normal();
        let d = NormalStream::new(43, Domain::Increments, 7).next_normal();
        assert!(a != b && a != c && a != d);
    }

    #[test]
    fn random_access_matches_sequential() {
        let mut seq = NormalStream::new(1, Domain::Increments, 3);
        let values: Vec<f64> = (0..50).map(|_| seq.next_normal()).collect();
        for start in [0u64, 1, 2, 17, 33, 48] {
            let mut s = NormalStream::starting_at(1, Domain::Increments, 3, start);
            for v in &values[start as usize..] {
                assert_eq!(s.next_normal().to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut s = NormalStream::new(9, Domain::Increments, 0);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            m1 += z;
            m2 += z * z;
        }
        let (m1, m2) = (m1 / n as f64, m2 / n as f64);
        assert!(m1.abs() < 4.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
