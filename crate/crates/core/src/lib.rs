//! Stochastic mechanics with effective collapse: wavefunction-guided
//! diffusions, position measurements, and multi-time correlators.

pub mod correlators;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod physics;
pub mod rng;
pub mod wavefunction;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, Point};
pub use physics::Physics;
pub use wavefunction::{GaussianBranch, VelocityKind, Wavefunction};
