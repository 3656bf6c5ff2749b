//! `check`: a quick pass over the structural invariants.

use clap::Args;
use nelson_core::correlators::{compare, CorrelationReport, Verdict};
use nelson_core::dynamics::{RecordPlan, SdeConfig};
use nelson_core::equilibrium::{density_check, osmotic_identity, residual_scan, residual_scan_with, velocity_identity_gap};
use nelson_core::measurement::{run_experiment, selection_neutrality, ExperimentPreset, PresetKind, PresetParams};
use nelson_core::wavefunction::hjm_residual_with_step;
use nelson_core::{Physics, Point, VelocityKind, Wavefunction};

use crate::{with_threads, CliError};

#[derive(Debug, Clone, Default, Args)]
pub struct CheckArgs {
    /// Paths per ensemble check (default 20000).
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &'static str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name, pass, detail }
}

fn two_bumps() -> Result<Wavefunction, nelson_core::Error> {
    let phys = Physics::new(1.0, &[1.0], &[1.0])?;
    let a = Wavefunction::collapsed(phys, &Point::scalar(-1.0), 0.6, 0.0)?.branches()[0].clone();
    let b = Wavefunction::collapsed(phys, &Point::scalar(1.2), 0.5, 0.0)?.branches()[0].clone();
    Wavefunction::from_branches(phys, 0.0, vec![a, b])?.normalized()
}

pub fn run_checks(args: &CheckArgs, env_seed: Option<&str>) -> Result<Vec<CheckResult>, CliError> {
    let n = args.n_traj.unwrap_or(20_000);
    if n < 1000 {
        return Err(CliError::Config(format!("--n-traj: the check suite needs at least 1000 paths, got {n}")));
    }
    let seed = match (args.seed, env_seed) {
        (Some(s), _) => s,
        (None, Some(s)) => s.trim().parse().map_err(|_| CliError::Config(format!("{}: cannot parse `{s}`", crate::config::SEED_ENV)))?,
        (None, None) => crate::config::DEFAULT_SEED,
    };
    with_threads(args.threads, || suite(n, seed))?
}

fn suite(n: usize, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let mut out = Vec::new();
    let ground = Wavefunction::ground_state(1.0, 1.0, 1.0)?;

    let scan = residual_scan(&ground, 1.0)?;
    let worst = scan.max_continuity.max(scan.max_forward_fp).max(scan.max_backward_fp).max(scan.max_hjm);
    out.push(result("ground-state residuals", worst < 1e-8, format!("max {worst:.2e} over {} points", scan.points)));

    let osc = Physics::oscillator(1.0, 1.0, 1.0)?;
    let collapsed = Wavefunction::collapsed(osc, &Point::scalar(0.8), 0.3, 0.0)?;
    let scan = residual_scan_with(&collapsed, 0.7, 201, 1e-4)?;
    out.push(result(
        "forward + backward = 2 continuity",
        scan.max_fp_identity_gap < 1e-10,
        format!("max gap {:.2e}", scan.max_fp_identity_gap),
    ));

    let x = Point::scalar(0.9);
    let (e1, e2) = (hjm_residual_with_step(&collapsed, &x, 0.4, 2e-3)?, hjm_residual_with_step(&collapsed, &x, 0.4, 1e-3)?);
    let ratio = e1 / e2;
    out.push(result("residual second-order convergence", (ratio - 4.0).abs() < 0.5, format!("error ratio {ratio:.3}")));

    let bumps = two_bumps()?.at_time(0.6)?;
    let mut gap: f64 = 0.0;
    for k in 0..100 {
        let x = Point::scalar(-3.0 + 0.06 * k as f64);
        gap = gap.max(velocity_identity_gap(&bumps, &x)?).max(osmotic_identity(&bumps, &x)?[0].abs());
    }
    out.push(result("velocity and osmotic identities", gap < 1e-12, format!("max gap {gap:.2e} at 100 points")));

    let params = PresetParams::default();
    let unmeasured = ExperimentPreset::build(PresetKind::OscillatorUnmeasured, &PresetParams { lags: Some(vec![0.0, 0.5, 1.0, 2.0]), ..params.clone() })?;
    let cfg = SdeConfig::new(unmeasured.initial.physics(), 1e-3, 2.0, n, seed)?;
    let ens = run_experiment(&unmeasured, &cfg, &RecordPlan::at_times(&cfg, &unmeasured.lags))?;
    let bound = 4.0 / (n as f64).sqrt();
    let ks = [0.0, 1.0, 2.0].iter().map(|&t| Ok(density_check(&ens, &ground, t, 0)?.ks_statistic)).collect::<Result<Vec<f64>, CliError>>()?;
    let worst = ks.iter().copied().fold(0.0, f64::max);
    out.push(result("equilibrium density (KS)", worst < bound, format!("max KS {worst:.4} < {bound:.4}")));

    let rows = compare(&CorrelationReport::build(&unmeasured, &ens, "")?);
    let zmax = rows.iter().map(|r| r.z_sm.abs()).fold(0.0, f64::max);
    out.push(result("unmeasured correlator decays", rows.iter().all(|r| r.verdict == Verdict::Pass), format!("max |z| {zmax:.2}")));

    let measured = ExperimentPreset::build(PresetKind::OscillatorMeasuredAt0, &params)?;
    let cfg = SdeConfig::new(measured.initial.physics(), 1e-3, measured.lags.iter().copied().fold(0.0, f64::max), n, seed)?;
    let ens = run_experiment(&measured, &cfg, &RecordPlan::at_times(&cfg, &measured.lags))?;
    let rows = compare(&CorrelationReport::build(&measured, &ens, "")?);
    let detail: Vec<String> = rows.iter().map(|r| format!("t={:.3}: {:.4}±{:.4}", r.t, r.estimate, r.stderr)).collect();
    out.push(result("measured correlator at commuting times", rows.iter().all(|r| r.verdict != Verdict::Fail), detail.join(", ")));

    let slit = ExperimentPreset::build(PresetKind::DoubleSlit, &params)?;
    let cfg = SdeConfig::new(slit.initial.physics(), 1e-2, 2.0, 200, seed)?;
    let neutral = selection_neutrality(&slit, &cfg, 200)?;
    out.push(result(
        "branch selection neutrality",
        neutral.unselected == 0 && neutral.max_relative_drift_gap < 1e-6,
        format!("max relative drift gap {:.2e}", neutral.max_relative_drift_gap),
    ));

    let pair = ExperimentPreset::build(PresetKind::EntangledPairUnmeasured, &params)?;
    let sigma = params.ground_variance().sqrt();
    let conditioned = pair.initial.condition_on(&[0], &Point::from_slice(&[sigma, 0.0]), params.resolved_width())?;
    let dt = 1e-3;
    let (before, after) = (pair.initial.propagate(dt)?, conditioned.propagate(dt)?);
    let mut diff: f64 = 0.0;
    for k in -5..=5 {
        let x = Point::from_slice(&[sigma, 0.2 * sigma * k as f64]);
        let b = |w: &Wavefunction| w.drift_field(VelocityKind::ForwardDrift).eval(&x).map(|v| v[1]);
        diff = diff.max((b(&before)? - b(&after)?).abs());
    }
    out.push(result("partner drift changes after measurement", diff > 1e-8, format!("max |Δb₂| {diff:.3e} at t = {dt}")));
    Ok(out)
}
