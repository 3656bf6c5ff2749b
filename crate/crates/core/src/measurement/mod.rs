//! Effective collapse: position measurements that replace a trajectory's
//! guiding wavefunction, and branch selection on non-overlapping
//! superpositions.

mod presets;
mod runner;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Point;
use crate::wavefunction::Wavefunction;

pub use presets::{EventAction, ExperimentPreset, PresetKind, PresetParams, ScheduledEvent, PRESET_NAMES};
pub(crate) use presets::slit;
pub use runner::{run_experiment, selection_neutrality, NeutralityReport};

/// Default overlap tolerance for [`select_branch`].
pub const DEFAULT_SELECTION_TOLERANCE: f64 = 1e-8;
/// Default collapse width, in units of the ground-state position spread σ.
pub const DEFAULT_COLLAPSE_WIDTH_SIGMAS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Position measurement of the listed coordinates with pointer width `w`.
    Position { coords: Vec<usize>, width: f64 },
    /// Branch selection; `label` is the surviving branch's tag, if any.
    BranchSelection { branch: usize, label: Option<Arc<str>> },
}

/// A collapse applied to one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEvent {
    pub t_m: f64,
    pub kind: EventKind,
    /// The trajectory's own position at `t_m` (all coordinates).
    pub outcome: Point,
    /// Guiding wavefunction from `t_m` on.
    pub replaced: Wavefunction,
}

fn check_coords(coords: &[usize], dim: usize) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::invalid("coords", "at least one coordinate must be measured"));
    }
    for (k, &c) in coords.iter().enumerate() {
        if c >= dim {
            return Err(Error::invalid("coords", format!("coordinate {c} out of range for dimension {dim}")));
        }
        if coords[..k].contains(&c) {
            return Err(Error::invalid("coords", format!("coordinate {c} listed twice")));
        }
    }
    Ok(())
}

/// Position measurement at `t_m` with outcome `position` (the trajectory's own
/// position).
///
/// Measuring every coordinate replaces `ψ` by a normalized Gaussian of width
/// `w` centred on the outcome. Measuring a subset multiplies `ψ(·, t_m)` by a
/// width-`w` Gaussian pointer in the measured coordinates and renormalizes;
/// the unmeasured coordinates' drift then changes through the correlations.
pub fn apply_position_measurement(
    psi: &Wavefunction,
    position: &Point,
    t_m: f64,
    coords: &[usize],
    width: f64,
) -> Result<(MeasurementEvent, Wavefunction)> {
    let dim = psi.dim();
    if position.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: position.dim() });
    }
    if !position.is_finite() {
        return Err(Error::invalid("position", "trajectory position must be finite"));
    }
    check_coords(coords, dim)?;
    let replaced = if coords.len() == dim {
        Wavefunction::collapsed(*psi.physics(), position, width, t_m)?
    } else {
        psi.at_time(t_m)?.condition_on(coords, position, width)?
    };
    let event = MeasurementEvent {
        t_m,
        kind: EventKind::Position { coords: coords.to_vec(), width },
        outcome: *position,
        replaced: replaced.clone(),
    };
    Ok((event, replaced))
}

/// Outcome of [`select_branch`].
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// One branch carries at least `1 − ε` of the branch density at `x`; the
    /// wavefunction reduced to that branch, renormalized.
    Selected { branch: usize, psi: Wavefunction },
    /// No branch dominates; `psi` is returned unchanged.
    Overlapping { largest_share: f64 },
}

/// Keeps the branch that carries at least `1 − eps` of `Σ_j |ψ_j(x)|²`.
pub fn select_branch(psi: &Wavefunction, x: &Point, eps: f64) -> Result<Selection> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid("eps", format!("must lie in [0, 1), got {eps}")));
    }
    if x.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), got: x.dim() });
    }
    let logs: Vec<f64> = psi.branches().iter().map(|b| 2.0 * b.log_amplitude(x).re).collect();
    let (best, &max) = logs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let share = 1.0 / logs.iter().map(|l| (l - max).exp()).sum::<f64>();
    if share < 1.0 - eps {
        return Ok(Selection::Overlapping { largest_share: share });
    }
    let branch = psi.branches()[best].clone();
    let selected = Wavefunction::from_branches(*psi.physics(), psi.time(), vec![branch])?.normalized()?;
    Ok(Selection::Selected { branch: best, psi: selected })
}
