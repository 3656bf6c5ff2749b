//! Ensemble runs with per-trajectory collapse.

use std::sync::Arc;

use rayon::prelude::*;

use super::presets::{EventAction, ExperimentPreset};
use super::{apply_position_measurement, select_branch, EventKind, MeasurementEvent, Selection};
use crate::dynamics::{recorded_times, sample_initial, DriftSource, Ensemble, PathState, RecordPlan, SdeConfig};
use crate::error::{Error, Result};
use crate::wavefunction::{FlowCache, GuidingWave};

fn event_steps(preset: &ExperimentPreset, cfg: &SdeConfig) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(preset.schedule.len());
    for ev in &preset.schedule {
        if ev.t < cfg.t0 || ev.t > cfg.t_end {
            return Err(Error::InvalidPreset(format!("measurement time {} lies outside [{}, {}]", ev.t, cfg.t0, cfg.t_end)));
        }
        let step = cfg.step_of(ev.t)?;
        if steps.last().is_some_and(|&prev| prev >= step) {
            return Err(Error::InvalidPreset("measurement times must be strictly increasing".into()));
        }
        steps.push(step);
    }
    Ok(steps)
}

/// Runs `preset`: samples `cfg.n_traj` initial positions from `|ψ|²`,
/// integrates each path, and at every scheduled time replaces that path's
/// guiding wavefunction using its own position as the outcome.
///
/// Trajectory `i` has id `i` and depends only on `(cfg.seed, i)`.
pub fn run_experiment(preset: &ExperimentPreset, cfg: &SdeConfig, plan: &RecordPlan) -> Result<Ensemble> {
    if cfg.dim() != preset.initial.dim() {
        return Err(Error::DimensionMismatch { expected: preset.initial.dim(), got: cfg.dim() });
    }
    let steps = event_steps(preset, cfg)?;
    let starts = sample_initial(&preset.initial, cfg.n_traj, cfg.seed)?;
    let cache = FlowCache::new(*preset.initial.physics(), cfg.dt, cfg.n_steps());
    let base = Arc::new(GuidingWave::new(&preset.initial, 0, &cache)?);
    let times = recorded_times(cfg, plan);

    let trajectories = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut state = PathState::new(x0, cfg, i as u64);
            let mut guide = Arc::clone(&base);
            let mut events = Vec::with_capacity(steps.len());
            for (ev, &step) in preset.schedule.iter().zip(&steps) {
                state.advance(guide.as_ref(), step, cfg, plan)?;
                let psi_now = guide.wavefunction_at(step)?;
                let t_m = cfg.time_of(step);
                let replaced = match &ev.action {
                    EventAction::Position { coords, width } => {
                        let (event, replaced) = apply_position_measurement(&psi_now, &state.x, t_m, coords, *width)?;
                        events.push(event);
                        Some(replaced)
                    }
                    EventAction::SelectBranch { tolerance } => match select_branch(&psi_now, &state.x, *tolerance)? {
                        Selection::Selected { branch, psi } => {
                            events.push(MeasurementEvent {
                                t_m,
                                kind: EventKind::BranchSelection { branch, label: psi.branches()[0].label.clone() },
                                outcome: state.x,
                                replaced: psi.clone(),
                            });
                            Some(psi)
                        }
                        Selection::Overlapping { .. } => None,
                    },
                };
                if let Some(psi) = replaced {
                    guide = Arc::new(GuidingWave::new(&psi, step, &cache)?);
                }
            }
            state.advance(guide.as_ref(), cfg.n_steps(), cfg, plan)?;
            Ok(state.finish(plan, Arc::clone(&times), events))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { trajectories, cfg: *cfg, plan: plan.clone() })
}

/// Largest discrepancies between paths guided by the full superposition and
/// by the selected branch, under shared noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralityReport {
    /// `max |b_full − b_selected| / max(|b_selected|, 1)` along the full-ψ paths.
    pub max_relative_drift_gap: f64,
    /// `max |x_full − x_selected|` over all steps.
    pub max_position_gap: f64,
    pub n_traj: usize,
    /// Trajectories whose position overlapped both branches at selection time.
    pub unselected: usize,
}

/// Integrates the first `n_traj` trajectories of `preset` twice, with and
/// without its branch selections, and compares drifts and positions step by
/// step.
pub fn selection_neutrality(preset: &ExperimentPreset, cfg: &SdeConfig, n_traj: usize) -> Result<NeutralityReport> {
    let tolerance = preset
        .schedule
        .iter()
        .find_map(|e| match e.action {
            EventAction::SelectBranch { tolerance } => Some(tolerance),
            _ => None,
        })
        .ok_or_else(|| Error::InvalidPreset(format!("preset {} has no branch selection", preset.name())))?;
    let sel_step = cfg.step_of(preset.schedule[0].t)?;
    let starts = sample_initial(&preset.initial, n_traj, cfg.seed)?;
    let cache = FlowCache::new(*preset.initial.physics(), cfg.dt, cfg.n_steps());
    let full = GuidingWave::new(&preset.initial, 0, &cache)?;
    let none = RecordPlan::steps(vec![]);
    let per_traj = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| -> Result<(f64, f64, bool)> {
            let mut a = PathState::new(*x0, cfg, i as u64);
            a.advance(&full, sel_step, cfg, &none)?;
            let mut b = a.clone();
            let selected = match select_branch(&full.wavefunction_at(sel_step)?, &b.x, tolerance)? {
                Selection::Selected { psi, .. } => GuidingWave::new(&psi, sel_step, &cache)?,
                Selection::Overlapping { .. } => return Ok((0.0, 0.0, true)),
            };
            let (mut drift_gap, mut pos_gap) = (0.0f64, 0.0f64);
            for step in sel_step..cfg.n_steps() {
                let bf = full.drift(step, &a.x).b;
                let bs = selected.drift(step, &a.x).b;
                let scale = bs.norm().max(1.0);
                drift_gap = drift_gap.max((bf - bs).norm() / scale);
                a.advance(&full, step + 1, cfg, &none)?;
                b.advance(&selected, step + 1, cfg, &none)?;
                pos_gap = pos_gap.max((a.x - b.x).norm());
            }
            Ok((drift_gap, pos_gap, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = NeutralityReport { max_relative_drift_gap: 0.0, max_position_gap: 0.0, n_traj, unselected: 0 };
    for (d, p, unselected) in per_traj {
        report.max_relative_drift_gap = report.max_relative_drift_gap.max(d);
        report.max_position_gap = report.max_position_gap.max(p);
        report.unselected += usize::from(unselected);
    }
    Ok(report)
}
