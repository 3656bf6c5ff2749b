//! Run configuration: flags, `key = value` files, and validation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use nelson_core::measurement::{PresetKind, PresetParams};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "NELSON_LAB_SEED";
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N_TRAJ: usize = 100_000;
pub const DEFAULT_DT: f64 = 1e-3;

/// Keys accepted in a config file (dashes and underscores are equivalent).
pub const FILE_KEYS: [&str; 15] = [
    "preset",
    "omega",
    "mass",
    "hbar",
    "n-traj",
    "dt",
    "t-end",
    "seed",
    "collapse-width",
    "pair-correlation",
    "lags",
    "threads",
    "out",
    "no-timestamp",
    "verbose",
];

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Preset name (see `list-presets`); may also come from the config file.
    pub preset: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Defaults to the largest lag.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Falls back to $NELSON_LAB_SEED, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pointer width; defaults to 0.05σ.
    #[arg(long)]
    pub collapse_width: Option<f64>,
    /// Initial correlation of the pair presets.
    #[arg(long)]
    pub pair_correlation: Option<f64>,
    /// Comma-separated lags: times, or `pi`, `2pi`, `pi/2` (scaled by 1/ω).
    #[arg(long)]
    pub lags: Option<String>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV path; defaults to `<preset>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timestamp: bool,
    /// Also print ensemble diagnostics.
    #[arg(long)]
    pub verbose: bool,
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: PresetKind,
    pub params: PresetParams,
    pub n_traj: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub timestamp: bool,
    pub verbose: bool,
}

fn bad(flag: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("--{flag}: {reason}"))
}

/// Parses one lag token: a plain time, or a multiple of `π/ω` such as `pi`,
/// `2pi`, `0.5pi`, `pi/2`, `3pi/4`.
pub fn parse_lag(token: &str, omega: f64) -> Result<f64, CliError> {
    let tok = token.trim();
    let err = || bad("lags", format!("cannot parse lag `{tok}`"));
    let Some(pos) = tok.find("pi") else {
        return tok.parse::<f64>().map_err(|_| err());
    };
    let (head, tail) = (&tok[..pos], &tok[pos + 2..]);
    let coef = match head.trim_end_matches('*') {
        "" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| err())?,
    };
    let div = match tail {
        "" => 1.0,
        t => t.strip_prefix('/').ok_or_else(err)?.parse::<f64>().map_err(|_| err())?,
    };
    if div == 0.0 {
        return Err(err());
    }
    Ok(coef * PI / div / omega)
}

pub fn parse_lags(list: &str, omega: f64) -> Result<Vec<f64>, CliError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(|t| parse_lag(t, omega)).collect()
}

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config_text(&text, &path.display().to_string())
}

pub fn parse_config_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !FILE_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("{origin}:{}: unknown key `{}`", n + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn file_value<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    file.get(key).map(|v| v.parse::<T>().map_err(|_| bad(key, format!("cannot parse `{v}`")))).transpose()
}

fn file_bool(file: &BTreeMap<String, String>, key: &str) -> Result<bool, CliError> {
    match file.get(key).map(String::as_str) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(v) => Err(bad(key, format!("expected true or false, got `{v}`"))),
    }
}

fn positive(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(flag, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Merges flags over the config file (if any), then the seed environment
    /// variable, then defaults, and validates everything.
    pub fn resolve(args: &RunArgs, env_seed: Option<&str>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let name = args
            .preset
            .clone()
            .or_else(|| file.get("preset").cloned())
            .ok_or_else(|| CliError::Config("missing preset name".into()))?;
        let preset = PresetKind::from_name(&name).map_err(|e| CliError::Config(e.to_string()))?;

        let omega = positive("omega", args.omega.map_or_else(|| file_value(&file, "omega"), |v| Ok(Some(v)))?.unwrap_or(1.0))?;
        let mass = positive("mass", args.mass.map_or_else(|| file_value(&file, "mass"), |v| Ok(Some(v)))?.unwrap_or(1.0))?;
        let hbar = positive("hbar", args.hbar.map_or_else(|| file_value(&file, "hbar"), |v| Ok(Some(v)))?.unwrap_or(1.0))?;
        let n_traj = args.n_traj.map_or_else(|| file_value(&file, "n-traj"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_N_TRAJ);
        if n_traj < 2 {
            return Err(bad("n-traj", format!("need at least 2 trajectories, got {n_traj}")));
        }
        let dt = positive("dt", args.dt.map_or_else(|| file_value(&file, "dt"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_DT))?;
        let seed = match args.seed.map_or_else(|| file_value(&file, "seed"), |v| Ok(Some(v)))? {
            Some(s) => s,
            None => match env_seed {
                Some(s) => s.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}: cannot parse `{s}`")))?,
                None => DEFAULT_SEED,
            },
        };
        let collapse_width = args
            .collapse_width
            .map_or_else(|| file_value(&file, "collapse-width"), |v| Ok(Some(v)))?
            .map(|w| positive("collapse-width", w))
            .transpose()?;
        let pair_correlation =
            args.pair_correlation.map_or_else(|| file_value(&file, "pair-correlation"), |v| Ok(Some(v)))?.unwrap_or(0.99);
        if !(pair_correlation.abs() < 1.0) {
            return Err(bad("pair-correlation", format!("must lie in (-1, 1), got {pair_correlation}")));
        }
        let lags = match args.lags.as_deref().or(file.get("lags").map(String::as_str)) {
            Some(list) => parse_lags(list, omega)?,
            None => preset.default_lags().into_iter().map(|t| t / omega).collect(),
        };
        if lags.is_empty() {
            return Err(bad("lags", "at least one lag is required"));
        }
        if let Some(l) = lags.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(bad("lags", format!("lags must be non-negative, got {l}")));
        }
        let max_lag = lags.iter().copied().fold(0.0, f64::max);
        let t_end = match args.t_end.map_or_else(|| file_value(&file, "t-end"), |v| Ok(Some(v)))? {
            Some(t) => positive("t-end", t)?,
            None if max_lag > 0.0 => max_lag,
            None => 1.0 / omega,
        };
        if dt >= t_end {
            return Err(bad("dt", format!("must be smaller than t-end = {t_end}, got {dt}")));
        }
        if max_lag > t_end + 0.5 * dt {
            return Err(bad("t-end", format!("largest lag {max_lag} exceeds t-end = {t_end}")));
        }
        let threads = args.threads.map_or_else(|| file_value(&file, "threads"), |v| Ok(Some(v)))?;
        if threads == Some(0) {
            return Err(bad("threads", "must be at least 1"));
        }
        let out = args
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", preset.name())));
        let timestamp = !(args.no_timestamp || file_bool(&file, "no-timestamp")?);
        let verbose = args.verbose || file_bool(&file, "verbose")?;

        let mut sorted = lags;
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let params = PresetParams { mass, omega, hbar, collapse_width, pair_correlation, lags: Some(sorted) };
        let resolved_width = params.resolved_width();
        let params = PresetParams { collapse_width: Some(resolved_width), ..params };
        Ok(Self { preset, params, n_traj, dt, t_end, seed, threads, out, timestamp, verbose })
    }

    /// `key=value` list of everything that determines the output numbers.
    pub fn canonical(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = write!(
            s,
            "preset={} mass={} omega={} hbar={} n_traj={} dt={} t_end={} seed={} collapse_width={} pair_correlation={} lags=",
            self.preset.name(),
            p.mass,
            p.omega,
            p.hbar,
            self.n_traj,
            self.dt,
            self.t_end,
            self.seed,
            p.resolved_width(),
            p.pair_correlation,
        );
        let lags: Vec<String> = p.lags.iter().flatten().map(|l| l.to_string()).collect();
        s.push_str(&lags.join(","));
        s
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(preset: &str) -> RunArgs {
        RunArgs { preset: Some(preset.into()), ..Default::default() }
    }

    #[test]
    fn lag_tokens() {
        assert_eq!(parse_lag("0.5", 2.0).unwrap(), 0.5);
        assert!((parse_lag("pi", 1.0).unwrap() - PI).abs() < 1e-15);
        assert!((parse_lag("2pi", 2.0).unwrap() - PI).abs() < 1e-15);
        assert!((parse_lag("pi/2", 1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((parse_lag("3pi/4", 1.0).unwrap() - 0.75 * PI).abs() < 1e-15);
        assert!(parse_lag("pie", 1.0).is_err());
        assert!(parse_lag("x", 1.0).is_err());
        assert_eq!(parse_lags("0,pi,2pi", 1.0).unwrap().len(), 3);
    }

    #[test]
    fn happy_path() {
        let a = RunArgs { n_traj: Some(100_000), dt: Some(1e-3), lags: Some("0,pi,2pi".into()), ..args("oscillator-measured-at-0") };
        let c = RunConfig::resolve(&a, None).unwrap();
        assert_eq!(c.preset, PresetKind::OscillatorMeasuredAt0);
        assert!((c.t_end - 2.0 * PI).abs() < 1e-12);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert!(c.timestamp);
    }

    #[test]
    fn negative_dt_names_the_flag() {
        let err = RunConfig::resolve(&RunArgs { dt: Some(-1.0), ..args("oscillator-unmeasured") }, None).unwrap_err();
        assert!(err.to_string().contains("--dt"), "{err}");
        let err = RunConfig::resolve(&RunArgs { dt: Some(5.0), t_end: Some(1.0), lags: Some("0".into()), ..args("oscillator-unmeasured") }, None)
            .unwrap_err();
        assert!(err.to_string().contains("--dt"), "{err}");
    }

    #[test]
    fn unknown_keys_and_missing_preset_are_errors() {
        assert!(parse_config_text("omega = 1\nfoo = 2\n", "f").unwrap_err().to_string().contains("unknown key `foo`"));
        assert!(parse_config_text("omega 1\n", "f").is_err());
        let m = parse_config_text("# comment\nn_traj = 10 # trailing\n\n", "f").unwrap();
        assert_eq!(m["n-traj"], "10");
        assert!(RunConfig::resolve(&RunArgs::default(), None).is_err());
    }

    #[test]
    fn seed_precedence() {
        let c = RunConfig::resolve(&args("oscillator-unmeasured"), Some("77")).unwrap();
        assert_eq!(c.seed, 77);
        let c = RunConfig::resolve(&RunArgs { seed: Some(5), ..args("oscillator-unmeasured") }, Some("77")).unwrap();
        assert_eq!(c.seed, 5);
        assert!(RunConfig::resolve(&args("oscillator-unmeasured"), Some("x")).is_err());
    }

    #[test]
    fn hash_tracks_numbers_not_threads() {
        let a = RunConfig::resolve(&args("double-slit"), None).unwrap();
        let b = RunConfig::resolve(&RunArgs { threads: Some(3), ..args("double-slit") }, None).unwrap();
        let c = RunConfig::resolve(&RunArgs { seed: Some(2), ..args("double-slit") }, None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
