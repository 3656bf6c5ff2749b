//! Experiment runner for the stochastic-mechanics presets: configuration,
//! ensemble runs, CSV reports and verdict summaries.

pub mod check;
pub mod config;

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use nelson_core::correlators::{compare, CorrelationReport, CorrelationRow, Verdict};
use nelson_core::dynamics::{Ensemble, RecordPlan, SdeConfig};
use nelson_core::measurement::{run_experiment, ExperimentPreset, PresetKind};

pub use config::{RunArgs, RunConfig};

pub const CSV_COLUMNS: &str = "t,estimate,stderr,sm_reference,qm_reference_re,qm_reference_im,z_sm,z_qm,verdict";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] nelson_core::Error),
}

/// Runs `f` on a pool of `threads` workers (or rayon's default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    Ok(pool.install(f))
}

pub struct RunOutcome {
    pub preset: ExperimentPreset,
    pub ensemble: Ensemble,
    pub report: CorrelationReport,
    pub rows: Vec<CorrelationRow>,
}

impl RunOutcome {
    pub fn any_fail(&self) -> bool {
        self.rows.iter().any(|r| r.verdict == Verdict::Fail)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let preset = ExperimentPreset::build(cfg.preset, &cfg.params)?;
    let sde = SdeConfig::new(preset.initial.physics(), cfg.dt, cfg.t_end, cfg.n_traj, cfg.seed)?;
    let plan = RecordPlan::at_times(&sde, &preset.lags);
    let ensemble = with_threads(cfg.threads, || run_experiment(&preset, &sde, &plan))??;
    let report = CorrelationReport::build(&preset, &ensemble, cfg.hash())?;
    let rows = compare(&report);
    Ok(RunOutcome { preset, ensemble, report, rows })
}

/// CSV text: `# config:` line, optional `# generated_unix:` line, header,
/// one row per lag.
pub fn render_csv(cfg: &RunConfig, rows: &[CorrelationRow], timestamp: Option<u64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config: {}", cfg.canonical());
    let _ = writeln!(s, "# config_hash: {}", cfg.hash());
    if let Some(ts) = timestamp {
        let _ = writeln!(s, "# generated_unix: {ts}");
    }
    s.push_str(CSV_COLUMNS);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.t, r.estimate, r.stderr, r.sm_reference, r.qm_reference.re, r.qm_reference.im, r.z_sm, r.z_qm, r.verdict
        );
    }
    s
}

pub fn write_csv(cfg: &RunConfig, rows: &[CorrelationRow]) -> Result<(), CliError> {
    let ts = cfg.timestamp.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let io = |source| CliError::Io { path: cfg.out.clone(), source };
    let mut f = std::fs::File::create(&cfg.out).map_err(io)?;
    f.write_all(render_csv(cfg, rows, ts).as_bytes()).map_err(io)
}

/// Human-readable verdict table.
pub fn summary(cfg: &RunConfig, outcome: &RunOutcome) -> String {
    let mut s = String::new();
    let kind = cfg.preset;
    let _ = writeln!(s, "{} — {}", kind.name(), kind.description());
    let _ = writeln!(s, "n_traj={} dt={} t_end={} seed={} hash={}", cfg.n_traj, cfg.dt, cfg.t_end, cfg.seed, cfg.hash());
    let _ = writeln!(s, "{:>9} {:>22} {:>11} {:>22} {:>8} {:>8}  verdict", "t", "estimate ± stderr", "sm_ref", "qm_ref", "z_sm", "z_qm");
    for r in &outcome.rows {
        let _ = writeln!(
            s,
            "{:>9.4} {:>11.5} ± {:<8.5} {:>11.5} {:>10.5}{:+.5}i {:>8.2} {:>8.2}  {}",
            r.t, r.estimate, r.stderr, r.sm_reference, r.qm_reference.re, r.qm_reference.im, r.z_sm, r.z_qm, r.verdict
        );
    }
    if matches!(kind, PresetKind::EntangledPairUnmeasured | PresetKind::EntangledPairMeasured) {
        s.push_str(&pair_discrepancy(outcome));
    }
    if cfg.verbose {
        let ens = &outcome.ensemble;
        let _ = writeln!(s, "drift clamps: {}  near-node evaluations: {}", ens.total_clamps(), ens.total_near_nodes());
    }
    let (pass, fail) = outcome.rows.iter().fold((0, 0), |(p, f), r| match r.verdict {
        Verdict::Pass => (p + 1, f),
        Verdict::Fail => (p, f + 1),
        Verdict::NotApplicable => (p, f),
    });
    let _ = writeln!(s, "{pass} PASS, {fail} FAIL, {} NA", outcome.rows.len() - pass - fail);
    s
}

/// The gap between the periodic operator correlator and the process value,
/// at each commuting lag.
fn pair_discrepancy(outcome: &RunOutcome) -> String {
    let mut s = String::from("operator correlator C12·cos ωt vs process estimate at commuting times:\n");
    for r in outcome.rows.iter().filter(|r| outcome.report.is_commuting(r.t)) {
        let gap = (r.estimate - r.qm_reference.re).abs();
        let _ = writeln!(s, "  t={:.4}: |mc − C12 cos ωt| = {:.5} ({:.1} stderr)", r.t, gap, gap / r.stderr);
    }
    s
}
