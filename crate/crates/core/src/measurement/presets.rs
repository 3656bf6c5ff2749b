//! Named experiments: initial state, collapse schedule and correlation lags.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{DEFAULT_COLLAPSE_WIDTH_SIGMAS, DEFAULT_SELECTION_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, Point};
use crate::physics::Physics;
use crate::wavefunction::{GaussianBranch, Wavefunction};

pub const PRESET_NAMES: [&str; 5] =
    ["oscillator-unmeasured", "oscillator-measured-at-0", "double-slit", "entangled-pair-unmeasured", "entangled-pair-measured"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetKind {
    /// Ground-state oscillator, never measured.
    OscillatorUnmeasured,
    /// Ground-state oscillator, position measured (collapsed) at `t = 0`.
    OscillatorMeasuredAt0,
    /// Free particle through two slits, entangled with a heavy free pointer;
    /// the pointer branches are selected at `t = 0`.
    DoubleSlit,
    /// Two oscillators in a strongly correlated Gaussian state.
    EntangledPairUnmeasured,
    /// Same pair, coordinate 1 measured at `t = 0`.
    EntangledPairMeasured,
}

impl PresetKind {
    pub const ALL: [PresetKind; 5] = [
        PresetKind::OscillatorUnmeasured,
        PresetKind::OscillatorMeasuredAt0,
        PresetKind::DoubleSlit,
        PresetKind::EntangledPairUnmeasured,
        PresetKind::EntangledPairMeasured,
    ];

    pub fn name(self) -> &'static str {
        PRESET_NAMES[self as usize]
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::InvalidPreset(format!("unknown preset `{name}`; expected one of {}", PRESET_NAMES.join(", "))))
    }

    pub fn description(self) -> &'static str {
        match self {
            PresetKind::OscillatorUnmeasured => "ground-state oscillator, no measurement; E[X(0)X(t)] vs σ²e^{-ωt}",
            PresetKind::OscillatorMeasuredAt0 => "ground-state oscillator collapsed at t=0; E[X(0)X(t)] vs (-1)^n σ² at t=nπ/ω",
            PresetKind::DoubleSlit => "two-slit packet entangled with a pointer; branch selection at t=0",
            PresetKind::EntangledPairUnmeasured => "correlated oscillator pair; E[X1(0)X2(t)] decays",
            PresetKind::EntangledPairMeasured => "correlated pair, particle 1 measured at t=0; E[X1(0)X2(t)] vs C12 cos ωt",
        }
    }

    /// Whether the run contains a collapse (so the quantum-mechanical
    /// reference is the authoritative one at commuting times).
    pub fn is_measured(self) -> bool {
        matches!(self, PresetKind::OscillatorMeasuredAt0 | PresetKind::EntangledPairMeasured | PresetKind::DoubleSlit)
    }

    /// Lags reported by default, in units of `1/ω`.
    pub fn default_lags(self) -> Vec<f64> {
        match self {
            PresetKind::OscillatorUnmeasured => vec![0.0, 0.5, 1.0, 2.0, PI],
            PresetKind::OscillatorMeasuredAt0 | PresetKind::EntangledPairMeasured => vec![0.0, PI, 2.0 * PI],
            PresetKind::DoubleSlit => vec![0.0, 0.5, 1.0, 2.0],
            PresetKind::EntangledPairUnmeasured => vec![0.0, 0.5, 1.0, PI],
        }
    }
}

/// Physical and preset-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub mass: f64,
    pub omega: f64,
    pub hbar: f64,
    /// Collapse width; `None` means `0.05 σ`.
    pub collapse_width: Option<f64>,
    /// Initial position correlation of the pair presets.
    pub pair_correlation: f64,
    /// Correlation lags as absolute times; `None` means the preset default.
    pub lags: Option<Vec<f64>>,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self { mass: 1.0, omega: 1.0, hbar: 1.0, collapse_width: None, pair_correlation: 0.99, lags: None }
    }
}

impl PresetParams {
    /// Ground-state position variance `ħ/(2mω)`.
    pub fn ground_variance(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.omega)
    }

    pub fn resolved_width(&self) -> f64 {
        self.collapse_width.unwrap_or(DEFAULT_COLLAPSE_WIDTH_SIGMAS * self.ground_variance().sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    Position { coords: Vec<usize>, width: f64 },
    SelectBranch { tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledEvent {
    pub t: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub kind: PresetKind,
    pub params: PresetParams,
    pub initial: Wavefunction,
    /// Strictly increasing in time.
    pub schedule: Vec<ScheduledEvent>,
    /// Lags `t` of the correlator `E[X_i(0) X_j(t)]`.
    pub lags: Vec<f64>,
    /// `(i, j)` in `E[X_i(0) X_j(t)]`.
    pub coords: (usize, usize),
}

/// Double-slit geometry in units of `√(ħ/mω)`.
pub(crate) mod slit {
    pub const HALF_SEPARATION: f64 = 2.0;
    pub const SLIT_WIDTH: f64 = 0.3;
    pub const POINTER_OFFSET: f64 = 5.0;
    pub const POINTER_WIDTH: f64 = 0.5;
    pub const POINTER_MASS_RATIO: f64 = 100.0;
}

impl ExperimentPreset {
    pub fn build(kind: PresetKind, params: &PresetParams) -> Result<Self> {
        let PresetParams { mass, omega, hbar, .. } = *params;
        // Validates the constants; ω also sets the time unit of the free preset.
        Physics::oscillator(mass, omega, hbar)?;
        let width = params.resolved_width();
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid("collapse_width", format!("must be positive, got {width}")));
        }
        let var = params.ground_variance();
        let (initial, schedule, coords) = match kind {
            PresetKind::OscillatorUnmeasured => (Wavefunction::ground_state(mass, omega, hbar)?, vec![], (0, 0)),
            PresetKind::OscillatorMeasuredAt0 => (
                Wavefunction::ground_state(mass, omega, hbar)?,
                vec![ScheduledEvent { t: 0.0, action: EventAction::Position { coords: vec![0], width } }],
                (0, 0),
            ),
            PresetKind::DoubleSlit => (double_slit_state(params)?, vec![ScheduledEvent {
                t: 0.0,
                action: EventAction::SelectBranch { tolerance: DEFAULT_SELECTION_TOLERANCE },
            }], (0, 0)),
            PresetKind::EntangledPairUnmeasured | PresetKind::EntangledPairMeasured => {
                let r = params.pair_correlation;
                if !(r.abs() < 1.0) {
                    return Err(Error::invalid("pair_correlation", format!("must lie in (-1, 1), got {r}")));
                }
                let phys = Physics::new(hbar, &[mass, mass], &[omega, omega])?;
                let psi = Wavefunction::correlated_gaussian(phys, &[[var, r * var], [r * var, var]])?;
                let schedule = if kind == PresetKind::EntangledPairMeasured {
                    vec![ScheduledEvent { t: 0.0, action: EventAction::Position { coords: vec![0], width } }]
                } else {
                    vec![]
                };
                (psi, schedule, (0, 1))
            }
        };
        let lags = match &params.lags {
            Some(l) => l.clone(),
            None => kind.default_lags().into_iter().map(|t| t / omega).collect(),
        };
        if let Some(t) = lags.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidPreset(format!("lag {t} must be finite and non-negative")));
        }
        Ok(Self { kind, params: PresetParams { collapse_width: Some(width), lags: Some(lags.clone()), ..params.clone() }, initial, schedule, lags, coords })
    }

    pub fn by_name(name: &str, params: &PresetParams) -> Result<Self> {
        Self::build(PresetKind::from_name(name)?, params)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn collapse_width(&self) -> f64 {
        self.params.resolved_width()
    }
}

fn double_slit_state(params: &PresetParams) -> Result<Wavefunction> {
    let ell = (params.hbar / (params.mass * params.omega)).sqrt();
    let phys = Physics::new(params.hbar, &[params.mass, params.mass * slit::POINTER_MASS_RATIO], &[0.0, 0.0])?;
    let mut branches = Vec::with_capacity(2);
    for (sign, label) in [(1.0, "up"), (-1.0, "down")] {
        let x = Wavefunction::collapsed(phys.coordinate(0), &Point::scalar(sign * slit::HALF_SEPARATION * ell), slit::SLIT_WIDTH * ell, 0.0)?;
        let y = Wavefunction::collapsed(phys.coordinate(1), &Point::scalar(sign * slit::POINTER_OFFSET * ell), slit::POINTER_WIDTH * ell, 0.0)?;
        let (bx, by) = (&x.branches()[0], &y.branches()[0]);
        let quad = CMat::diagonal(&[bx.quad[(0, 0)], by.quad[(0, 0)]]);
        let lin = CVec::from_slice(&[bx.lin[0], by.lin[0]]);
        let branch = GaussianBranch::new(quad, lin, bx.constant + by.constant)
            .with_weight(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
            .with_label(label);
        branches.push(branch);
    }
    Wavefunction::from_branches(phys, 0.0, branches)?.normalized()
}
