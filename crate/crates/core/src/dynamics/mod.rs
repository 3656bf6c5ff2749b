//! Euler–Maruyama integration of the forward diffusion
//! `dX = b(X, t) dt + dW`, `E[dW_i²] = 2ν_i dt`.

mod estimators;
mod quadrature;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Point, MAX_DIM};
use crate::measurement::MeasurementEvent;
use crate::physics::Physics;
use crate::rng::{Domain, NormalStream};
use crate::wavefunction::{GuidingWave, VelocityKind, NEAR_NODE_LOG_RATIO};

pub use estimators::{drift_generator, estimate_drift_derivative, estimate_mean_derivative, BinEstimate, BinnedEstimate, Direction, DEFAULT_BINS, MIN_BIN_COUNT};
pub use quadrature::{quadrature_collapsed_path, quadrature_ou_path, wiener_increments, CollapsedPathValue};
pub use sampling::sample_initial;

mod sampling;

/// Default velocity clamp.
pub const DEFAULT_B_MAX: f64 = 1e4;

/// Integration settings shared by every trajectory of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    pub t0: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub b_max: f64,
    diffusion: [f64; MAX_DIM],
    dim: usize,
}

impl SdeConfig {
    /// Diffusion coefficients are taken from `physics` (`ν_i = ħ/2m_i`).
    pub fn new(physics: &Physics, dt: f64, t_end: f64, n_traj: usize, seed: u64) -> Result<Self> {
        let mut diffusion = [0.0; MAX_DIM];
        for (i, d) in diffusion.iter_mut().enumerate().take(physics.dim()) {
            *d = physics.diffusion(i);
        }
        Self::with_diffusion(&diffusion[..physics.dim()], dt, t_end, n_traj, seed)
    }

    pub fn with_diffusion(diffusion: &[f64], dt: f64, t_end: f64, n_traj: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t_end >= dt && t_end.is_finite()) {
            return Err(Error::invalid("t_end", format!("must be at least dt = {dt}, got {t_end}")));
        }
        if n_traj == 0 {
            return Err(Error::invalid("n_traj", "must be at least 1"));
        }
        if diffusion.is_empty() || diffusion.len() > MAX_DIM {
            return Err(Error::invalid("diffusion", "expected 1 or 2 coordinates"));
        }
        if let Some(nu) = diffusion.iter().find(|nu| !(**nu > 0.0 && nu.is_finite())) {
            return Err(Error::invalid("diffusion", format!("must be positive, got {nu}")));
        }
        let mut d = [0.0; MAX_DIM];
        d[..diffusion.len()].copy_from_slice(diffusion);
        Ok(Self { dt, t0: 0.0, t_end, n_traj, seed, b_max: DEFAULT_B_MAX, diffusion: d, dim: diffusion.len() })
    }

    pub fn with_b_max(mut self, b_max: f64) -> Self {
        self.b_max = b_max;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diffusion(&self, i: usize) -> f64 {
        self.diffusion[i]
    }

    /// Number of Euler steps from `t0` to `t_end`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round() as usize
    }

    pub fn time_of(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// Grid step for time `t`; fails when `t` is not a grid point.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let k = (t - self.t0) / self.dt;
        let r = k.round();
        if !(r >= 0.0) || (k - r).abs() > 1e-6 * r.max(1.0) || r as usize > self.n_steps() {
            return Err(Error::OffGrid { t });
        }
        Ok(r as usize)
    }

    /// Grid step nearest to `t` (clamped to the grid).
    pub fn nearest_step(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt).round().max(0.0) as usize).min(self.n_steps())
    }
}

/// Drift value at one point, plus whether the point sat near a node.
#[derive(Debug, Clone, Copy)]
pub struct DriftSample {
    pub b: Point,
    pub near_node: bool,
}

/// Supplies the forward drift `b(x, t_k)` at grid step `k`.
pub trait DriftSource: Sync {
    fn dim(&self) -> usize;
    fn drift(&self, step: usize, x: &Point) -> DriftSample;
}

impl DriftSource for GuidingWave {
    fn dim(&self) -> usize {
        self.dim()
    }

    #[inline]
    fn drift(&self, step: usize, x: &Point) -> DriftSample {
        let (b, ratio) = self.velocity(VelocityKind::ForwardDrift, step, x);
        DriftSample { b, near_node: ratio.is_some_and(|r| r < NEAR_NODE_LOG_RATIO) }
    }
}

/// Drift given by a closure of `(t, x)`, with `t = t0 + k·dt`.
pub struct FnDrift<F> {
    f: F,
    dim: usize,
    t0: f64,
    dt: f64,
}

impl<F: Fn(f64, &Point) -> Point + Sync> FnDrift<F> {
    pub fn new(dim: usize, cfg: &SdeConfig, f: F) -> Self {
        Self { f, dim, t0: cfg.t0, dt: cfg.dt }
    }
}

impl<F: Fn(f64, &Point) -> Point + Sync> DriftSource for FnDrift<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, step: usize, x: &Point) -> DriftSample {
        let t = self.t0 + step as f64 * self.dt;
        DriftSample { b: (self.f)(t, x), near_node: false }
    }
}

/// Which grid steps a trajectory keeps. Storing every step of 10⁵ paths is
/// gigabytes, so runs record only the steps their statistics need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordPlan {
    steps: Arc<[usize]>,
}

impl RecordPlan {
    pub fn all(n_steps: usize) -> Self {
        Self { steps: (0..=n_steps).collect() }
    }

    pub fn steps(mut steps: Vec<usize>) -> Self {
        steps.sort_unstable();
        steps.dedup();
        Self { steps: steps.into() }
    }

    /// Step 0 plus the grid steps nearest to each of `times`.
    pub fn at_times(cfg: &SdeConfig, times: &[f64]) -> Self {
        let mut steps = vec![0];
        steps.extend(times.iter().map(|&t| cfg.nearest_step(t)));
        Self::steps(steps)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.steps
    }

    pub fn index_of(&self, step: usize) -> Option<usize> {
        self.steps.binary_search(&step).ok()
    }
}

/// One sample path on the recorded steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub traj_id: u64,
    pub times: Arc<[f64]>,
    /// Row-major `times.len() × dim`.
    pub positions: Vec<f64>,
    pub dim: usize,
    pub events: Vec<MeasurementEvent>,
    /// Steps at which `|b|` exceeded `b_max` and was clamped.
    pub clamps: u32,
    /// Steps evaluated at a near-node point.
    pub near_nodes: u32,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, idx: usize) -> Point {
        Point::from_slice(&self.positions[idx * self.dim..(idx + 1) * self.dim])
    }
}

/// State of one path while it is being integrated.
#[derive(Debug, Clone)]
pub struct PathState {
    pub x: Point,
    pub step: usize,
    pub traj_id: u64,
    noise: NormalStream,
    clamps: u32,
    near_nodes: u32,
    recorded: Vec<f64>,
    next_record: usize,
}

impl PathState {
    pub fn new(x0: Point, cfg: &SdeConfig, traj_id: u64) -> Self {
        Self {
            x: x0,
            step: 0,
            traj_id,
            noise: NormalStream::new(cfg.seed, Domain::Increments, traj_id),
            clamps: 0,
            near_nodes: 0,
            recorded: Vec::new(),
            next_record: 0,
        }
    }

    #[inline]
    fn offer(&mut self, plan: &[usize]) {
        if plan.get(self.next_record) == Some(&self.step) {
            self.recorded.extend_from_slice(self.x.as_slice());
            self.next_record += 1;
        }
    }

    /// Euler–Maruyama steps up to (not including the drift evaluation at)
    /// `until`. Recorded steps inside `[step, until)` are stored as visited.
    pub fn advance<S: DriftSource + ?Sized>(&mut self, source: &S, until: usize, cfg: &SdeConfig, plan: &RecordPlan) -> Result<()> {
        let dim = self.x.dim();
        if source.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: source.dim() });
        }
        let mut sd = [0.0; MAX_DIM];
        for (i, s) in sd.iter_mut().enumerate().take(dim) {
            *s = (2.0 * cfg.diffusion(i) * cfg.dt).sqrt();
        }
        let plan = plan.as_slice();
        while self.step < until {
            self.offer(plan);
            let sample = source.drift(self.step, &self.x);
            let mut b = sample.b;
            if sample.near_node {
                self.near_nodes += 1;
            }
            let speed = b.norm();
            if speed > cfg.b_max {
                let s = cfg.b_max / speed;
                for i in 0..dim {
                    b[i] *= s;
                }
                self.clamps += 1;
            }
            for i in 0..dim {
                self.x[i] += b[i] * cfg.dt + sd[i] * self.noise.next_normal();
            }
            if !self.x.is_finite() {
                return Err(Error::NumericalAbort {
                    traj_id: self.traj_id,
                    step: self.step,
                    detail: format!("position became {:?}", self.x.as_slice()),
                });
            }
            self.step += 1;
        }
        Ok(())
    }

    /// Records the final point (if planned) and returns the path.
    pub fn finish(mut self, plan: &RecordPlan, times: Arc<[f64]>, events: Vec<MeasurementEvent>) -> Trajectory {
        self.offer(plan.as_slice());
        Trajectory {
            traj_id: self.traj_id,
            times,
            positions: self.recorded,
            dim: self.x.dim(),
            events,
            clamps: self.clamps,
            near_nodes: self.near_nodes,
        }
    }
}

pub(crate) fn recorded_times(cfg: &SdeConfig, plan: &RecordPlan) -> Arc<[f64]> {
    plan.as_slice().iter().map(|&k| cfg.time_of(k)).collect()
}

/// Integrates one trajectory from `x0` over the whole grid of `cfg`.
pub fn integrate<S: DriftSource + ?Sized>(source: &S, x0: Point, cfg: &SdeConfig, traj_id: u64, plan: &RecordPlan) -> Result<Trajectory> {
    let mut state = PathState::new(x0, cfg, traj_id);
    state.advance(source, cfg.n_steps(), cfg, plan)?;
    Ok(state.finish(plan, recorded_times(cfg, plan), Vec::new()))
}

/// Trajectories sharing one grid, recording plan and configuration.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub cfg: SdeConfig,
    pub plan: RecordPlan,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// Index into the recorded samples for time `t`; rejects times that are
    /// off the grid or were not recorded.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        let step = self.cfg.step_of(t)?;
        self.plan.index_of(step).ok_or(Error::OffGrid { t })
    }

    /// Coordinate `coord` of every trajectory at time `t`.
    pub fn values_at(&self, t: f64, coord: usize) -> Result<Vec<f64>> {
        let idx = self.record_index(t)?;
        let dim = self.dim();
        if coord >= dim {
            return Err(Error::invalid("coord", format!("coordinate {coord} out of range")));
        }
        Ok(self.trajectories.iter().map(|tr| tr.positions[idx * dim + coord]).collect())
    }

    /// Full positions of every trajectory at time `t`.
    pub fn points_at(&self, t: f64) -> Result<Vec<Point>> {
        let idx = self.record_index(t)?;
        Ok(self.trajectories.iter().map(|tr| tr.position(idx)).collect())
    }

    pub fn total_clamps(&self) -> u64 {
        self.trajectories.iter().map(|t| u64::from(t.clamps)).sum()
    }

    pub fn total_near_nodes(&self) -> u64 {
        self.trajectories.iter().map(|t| u64::from(t.near_nodes)).sum()
    }
}

/// Integrates one trajectory per starting point, in parallel; trajectory `i`
/// gets id `i`. Output order and values do not depend on the thread count.
pub fn simulate<S: DriftSource + ?Sized>(source: &S, starts: &[Point], cfg: &SdeConfig, plan: &RecordPlan) -> Result<Ensemble> {
    let times = recorded_times(cfg, plan);
    let trajectories = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut state = PathState::new(*x0, cfg, i as u64);
            state.advance(source, cfg.n_steps(), cfg, plan)?;
            Ok(state.finish(plan, Arc::clone(&times), Vec::new()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { trajectories, cfg: *cfg, plan: plan.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{FlowCache, Wavefunction};

    fn ground_cfg(dt: f64, t_end: f64, n: usize) -> SdeConfig {
        let phys = Physics::oscillator(1.0, 1.0, 1.0).unwrap();
        SdeConfig::new(&phys, dt, t_end, n, 11).unwrap()
    }

    #[test]
    fn config_validation() {
        let phys = Physics::oscillator(1.0, 1.0, 1.0).unwrap();
        assert!(SdeConfig::new(&phys, -1.0, 1.0, 10, 0).is_err());
        assert!(SdeConfig::new(&phys, 0.1, 0.05, 10, 0).is_err());
        assert!(SdeConfig::new(&phys, 0.1, 1.0, 0, 0).is_err());
        assert!(SdeConfig::with_diffusion(&[0.0], 0.1, 1.0, 1, 0).is_err());
    }

    #[test]
    fn grid_lookup() {
        let cfg = ground_cfg(1e-3, 5.0, 1);
        assert_eq!(cfg.n_steps(), 5000);
        assert_eq!(cfg.step_of(1.99).unwrap(), 1990);
        assert!(matches!(cfg.step_of(0.0005), Err(Error::OffGrid { .. })));
        assert!(cfg.step_of(6.0).is_err());
        assert_eq!(cfg.nearest_step(std::f64::consts::PI), 3142);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let cfg = ground_cfg(1e-2, 1.0, 1);
        let drift = FnDrift::new(1, &cfg, |_, x| Point::scalar(-x[0]));
        let plan = RecordPlan::all(cfg.n_steps());
        let a = integrate(&drift, Point::scalar(0.3), &cfg, 5, &plan).unwrap();
        let b = integrate(&drift, Point::scalar(0.3), &cfg, 5, &plan).unwrap();
        let c = integrate(&drift, Point::scalar(0.3), &cfg, 6, &plan).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions, c.positions);
        assert_eq!(a.len(), 101);
        assert_eq!(a.positions[0], 0.3);
    }

    #[test]
    fn increments_match_wiener_helper() {
        let cfg = ground_cfg(1e-2, 1.0, 1);
        let drift = FnDrift::new(1, &cfg, |_, _| Point::scalar(0.0));
        let plan = RecordPlan::all(cfg.n_steps());
        let tr = integrate(&drift, Point::scalar(0.0), &cfg, 3, &plan).unwrap();
        let dw = wiener_increments(&cfg, 3);
        let mut x = 0.0;
        for (k, w) in dw.iter().enumerate() {
            x += w[0];
            assert_eq!(x.to_bits(), tr.positions[k + 1].to_bits());
        }
    }

    #[test]
    fn pure_diffusion_variance_grows_linearly() {
        let cfg = ground_cfg(1e-2, 2.0, 20_000);
        let drift = FnDrift::new(1, &cfg, |_, _| Point::scalar(0.0));
        let starts = vec![Point::scalar(0.0); cfg.n_traj];
        let ens = simulate(&drift, &starts, &cfg, &RecordPlan::steps(vec![200])).unwrap();
        let xs = ens.values_at(2.0, 0).unwrap();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        // 2νt = 2.0; stderr of a variance estimate ≈ var·√(2/n).
        assert!((var - 2.0).abs() < 4.0 * 2.0 * (2.0 / xs.len() as f64).sqrt(), "{var}");
    }

    #[test]
    fn clamp_counts_and_nan_aborts() {
        let cfg = ground_cfg(1e-2, 0.1, 1).with_b_max(1.0);
        let fast = FnDrift::new(1, &cfg, |_, _| Point::scalar(50.0));
        let tr = integrate(&fast, Point::scalar(0.0), &cfg, 0, &RecordPlan::steps(vec![])).unwrap();
        assert_eq!(tr.clamps, 10);
        let bad = FnDrift::new(1, &cfg, |t, _| Point::scalar(if t > 0.045 { f64::NAN } else { 0.0 }));
        match integrate(&bad, Point::scalar(0.0), &cfg, 9, &RecordPlan::steps(vec![])) {
            Err(Error::NumericalAbort { traj_id: 9, step: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ground_state_marginal_variance_is_stationary() {
        let cfg = ground_cfg(1e-3, 2.0, 20_000);
        let psi = Wavefunction::ground_state(1.0, 1.0, 1.0).unwrap();
        let cache = FlowCache::new(*psi.physics(), cfg.dt, cfg.n_steps());
        let guide = GuidingWave::new(&psi, 0, &cache).unwrap();
        let starts = sample_initial(&psi, cfg.n_traj, 4).unwrap();
        let ens = simulate(&guide, &starts, &cfg, &RecordPlan::steps(vec![0, 1000, 2000])).unwrap();
        for t in [0.0, 1.0, 2.0] {
            let xs = ens.values_at(t, 0).unwrap();
            let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            assert!((var - 0.5).abs() < 4.0 * 0.5 * (2.0 / xs.len() as f64).sqrt(), "t={t} var={var}");
        }
    }
}
