//! Command-line front end: configuration loading, runs, sweeps, stability
//! reports and γ calibration, with CSV/JSON output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use semtrack_core::report::{
    write_aggregate_csv, write_json, write_metrics_csv, write_sweep_csv, write_trajectory_csv,
};
use semtrack_core::rng::{stream_rng, Stream};
use semtrack_core::sim::{
    build_topology, calibrate_gamma_with, run_episode_with, run_sweep, sweep_seeds, Calibration, CalibrationMode,
    EpisodeContext, EpisodeOptions, Metrics, Scheme, SimConfig, SweepAxis,
};
use semtrack_core::stability::{stability_report, DEFAULT_MASK_TOL};

pub const TOOL_NAME: &str = "semtrack";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(semtrack_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<semtrack_core::Error> for CliError {
    fn from(e: semtrack_core::Error) -> Self {
        match e {
            semtrack_core::Error::Topology(msg) => CliError::Io(msg),
            e if e.is_numeric() => CliError::Numeric(e),
            e => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = TOOL_NAME, version, about = "Semantic communication and tracking control simulator")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON config file (flat keys).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; VALUE is parsed as JSON, falling back to a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One episode per scheme and seed.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Parameter sweep over M, N_t or power_dbw.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Coverage-mask stability test over random channel draws.
    CheckStability {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = DEFAULT_MASK_TOL)]
        mask_tol: f64,
    },
    /// Match γ to the configured power budget.
    CalibrateGamma {
        #[command(flatten)]
        common: Common,
        /// Return the nearest bracket edge instead of failing on an unreachable budget.
        #[arg(long)]
        clamp: bool,
    },
}

/// Provenance record written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: SimConfig,
    /// Topology file, or `ring(seed=…)` for the generated ring.
    pub topology: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    /// `(scheme, gamma)` pairs actually used.
    pub gammas: Vec<(String, f64)>,
}

/// Loads a flat JSON config and applies `KEY=VALUE` overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("config file {} not found", path.display())),
        _ => io_err(path, e),
    })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Usage(format!("{}: config must be a JSON object", path.display())));
    };
    apply_overrides(&mut map, overrides)?;
    let config: SimConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn apply_overrides(map: &mut Map<String, Value>, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Usage(format!("--set has an empty key: {item:?}")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    Ok(())
}

fn topology_label(config: &SimConfig) -> String {
    match &config.topology_path {
        Some(p) => p.clone(),
        None => format!("ring(seed={})", config.seed),
    }
}

fn create_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn file_names(paths: &[&str]) -> Vec<String> {
    paths.iter().map(|s| s.to_string()).collect()
}

pub fn cmd_run(common: &Common, seeds: usize) -> Result<Vec<Metrics>, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let config = load_config(&common.config, &common.overrides)?;
    let seed_list = sweep_seeds(config.seed, seeds);
    let mut all = Vec::with_capacity(seeds * Scheme::ALL.len());
    for &seed in &seed_list {
        let mut cfg = config.clone();
        // a file-provided topology is shared by all seeds; the ring is redrawn per seed
        cfg.seed = seed;
        let topo = build_topology(&cfg)?;
        let ctx = EpisodeContext::new(&cfg, topo)?.with_static_gain(&cfg)?;
        for scheme in Scheme::ALL {
            let mut c = cfg.clone();
            c.scheme = scheme;
            all.push(run_episode_with(&ctx, &c, EpisodeOptions::default())?);
        }
    }
    create_out(&common.out)?;
    write_file(&common.out.join("metrics.csv"), |w| write_metrics_csv(w, &all))?;
    write_file(&common.out.join("cost_trajectory.csv"), |w| write_trajectory_csv(w, &all))?;
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: "run".into(),
        topology: topology_label(&config),
        seeds: seed_list,
        outputs: file_names(&["metrics.csv", "cost_trajectory.csv", "manifest.json"]),
        gammas: Scheme::ALL.iter().map(|s| (s.name().to_string(), config.gamma)).collect(),
        config,
    };
    write_file(&common.out.join("manifest.json"), |w| write_json(w, &manifest))?;
    Ok(all)
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("--values: {s:?} is not a number"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values must list at least one value".into()));
    }
    Ok(values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub run: RunManifest,
    pub axis: String,
    pub values: Vec<f64>,
    /// `(value, seed, calibration)` for every cell.
    pub calibrations: Vec<(f64, u64, Calibration)>,
}

pub fn cmd_sweep(common: &Common, axis: &str, values: &str, seeds: usize) -> Result<semtrack_core::sim::SweepResult, CliError> {
    let axis: SweepAxis = axis
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown axis {axis:?}; valid axes: {}", SweepAxis::NAMES.join(", "))))?;
    let values = parse_values(values)?;
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let config = load_config(&common.config, &common.overrides)?;
    for &v in &values {
        axis.apply(&config, v)?;
    }
    let seed_list = sweep_seeds(config.seed, seeds);
    let result = run_sweep(&config, axis, &values, &seed_list)?;
    create_out(&common.out)?;
    write_file(&common.out.join("sweep.csv"), |w| write_sweep_csv(w, &result.rows))?;
    write_file(&common.out.join("aggregate.csv"), |w| write_aggregate_csv(w, &result.aggregates))?;
    let mut gammas = Vec::new();
    for (v, s, c) in &result.calibrations {
        gammas.push((format!("semantic@{}={v},seed={s}", axis.name()), c.gamma));
    }
    let manifest = SweepManifest {
        run: RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: "sweep".into(),
            topology: topology_label(&config),
            seeds: seed_list,
            outputs: file_names(&["sweep.csv", "aggregate.csv", "manifest.json"]),
            gammas,
            config,
        },
        axis: axis.name().into(),
        values: values.clone(),
        calibrations: result.calibrations.clone(),
    };
    write_file(&common.out.join("manifest.json"), |w| write_json(w, &manifest))?;
    Ok(result)
}

pub fn cmd_check_stability(
    common: &Common,
    draws: usize,
    mask_tol: f64,
) -> Result<semtrack_core::stability::StabilityReport, CliError> {
    if draws == 0 {
        return Err(CliError::Usage("--draws must be >= 1".into()));
    }
    if !(mask_tol > 0.0) {
        return Err(CliError::Usage("--mask-tol must be > 0".into()));
    }
    let config = load_config(&common.config, &common.overrides)?;
    let topo = build_topology(&config)?;
    let ctx = EpisodeContext::new(&config, topo)?;
    let mut rng = stream_rng(config.seed, Stream::Stability, 0);
    let report = stability_report(&ctx.topology, ctx.drift.alpha, draws, mask_tol, &mut rng)?;
    create_out(&common.out)?;
    write_file(&common.out.join("stability.json"), |w| write_json(w, &report))?;
    Ok(report)
}

pub fn cmd_calibrate_gamma(common: &Common, clamp: bool) -> Result<Calibration, CliError> {
    let config = load_config(&common.config, &common.overrides)?;
    let topo = build_topology(&config)?;
    let ctx = EpisodeContext::new(&config, topo)?;
    let mode = if clamp { CalibrationMode::Clamp } else { CalibrationMode::Strict };
    let cal = calibrate_gamma_with(&ctx, &config, config.power_dbw, config.n_probe_seeds, mode)?;
    create_out(&common.out)?;
    write_file(&common.out.join("calibration.json"), |w| write_json(w, &cal))?;
    Ok(cal)
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let run = || -> Result<String, CliError> {
        match &cli.command {
            Command::Run { common, seeds } => {
                let m = cmd_run(common, *seeds)?;
                Ok(m.iter()
                    .map(|m| {
                        format!(
                            "{} seed={} avg_cost={} avg_tx_power={} comm_rate={} diverged={}",
                            m.scheme.name(),
                            m.seed,
                            m.avg_cost,
                            m.avg_tx_power,
                            m.comm_rate,
                            m.diverged
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n"))
            }
            Command::Sweep { common, axis, values, seeds } => {
                let r = cmd_sweep(common, axis, values, *seeds)?;
                Ok(r.aggregates
                    .iter()
                    .map(|a| {
                        format!(
                            "{} {}={} mean_cost={} stderr={} n_diverged={}",
                            a.scheme.name(),
                            a.axis.name(),
                            a.value,
                            a.mean_cost,
                            a.stderr_cost,
                            a.n_diverged
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n"))
            }
            Command::CheckStability { common, draws, mask_tol } => {
                let r = cmd_check_stability(common, *draws, *mask_tol)?;
                Ok(format!(
                    "alpha={} fraction_satisfied={} verdict={}",
                    r.alpha, r.fraction_satisfied, r.verdict
                ))
            }
            Command::CalibrateGamma { common, clamp } => {
                let c = cmd_calibrate_gamma(common, *clamp)?;
                Ok(format!(
                    "gamma={} achieved_watts={} target_watts={} clamped={:?}",
                    c.gamma, c.achieved_watts, c.target_watts, c.clamped
                ))
            }
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(CliError::Usage(format!("--threads: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{TOOL_NAME}: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `{TOOL_NAME} --help` for usage");
            }
            e.exit_code()
        }
    }
}
