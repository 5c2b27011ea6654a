//! The per-timeslot closed loop, γ calibration and parameter sweeps.
//!
//! Each slot: the state is broadcast, fresh channels are drawn and estimated
//! from pilots, the scheme decides who transmits and what, every follower
//! receives `û = δ H u + v` through the true channel, and plant and target
//! advance. Randomness for slot `t` comes from streams keyed by
//! `(seed, purpose, t)`, so every scheme sees the same channels and noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    solve_static_gain, BaselineController, BaselineKind, GareGain, TriggerConfig, DEFAULT_DARE_MAX_ITER,
    DEFAULT_DARE_TOL, DEFAULT_KAPPA_D, DEFAULT_KAPPA_I,
};
use crate::channel::{draw_channels, ChannelEstimate, DEFAULT_PILOT_POWER};
use crate::numerics::DEFAULT_PINV_REL_TOL;
use crate::policy::{compute_drift_constants, solve_agent_rank_one, DriftConstants, PolicyParams, TieRule};
use crate::rng::{derive_seed, normal_vector, stream_rng, Stream};
use crate::swarm::{build_ring_topology, step_swarm, step_target, SwarmState, SwarmTopology, DEFAULT_NOISE_SCALE};
use crate::{Error, Matrix, Result, Vector};

pub const GAMMA_BRACKET: (f64, f64) = (1e-6, 1e6);
pub const CALIBRATION_TOLERANCE: f64 = 0.05;
pub const DIVERGENCE_PENALTY: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Semantic,
    Baseline1,
    Baseline2,
    Baseline3,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Semantic, Scheme::Baseline1, Scheme::Baseline2, Scheme::Baseline3];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Semantic => "semantic",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
            Scheme::Baseline3 => "baseline3",
        }
    }

    fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            Scheme::Semantic => None,
            Scheme::Baseline1 => Some(BaselineKind::PeriodicPid),
            Scheme::Baseline2 => Some(BaselineKind::TriggeredPid),
            Scheme::Baseline3 => Some(BaselineKind::TriggeredStatic),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("scheme", format!("unknown scheme {s:?}")))
    }
}

mod defaults {
    pub fn horizon() -> usize {
        10_000
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn pilot_power() -> f64 {
        super::DEFAULT_PILOT_POWER
    }
    pub fn noise_scale() -> f64 {
        super::DEFAULT_NOISE_SCALE
    }
    pub fn yes() -> bool {
        true
    }
    pub fn initial_target() -> f64 {
        100.0
    }
    pub fn power_dbw() -> f64 {
        8.0
    }
    pub fn kappa_i() -> f64 {
        super::DEFAULT_KAPPA_I
    }
    pub fn kappa_d() -> f64 {
        super::DEFAULT_KAPPA_D
    }
    pub fn pinv_rel_tol() -> f64 {
        super::DEFAULT_PINV_REL_TOL
    }
    pub fn stride() -> usize {
        1
    }
    pub fn probe_seeds() -> usize {
        4
    }
    pub fn dare_max_iter() -> usize {
        super::DEFAULT_DARE_MAX_ITER
    }
    pub fn dare_tol() -> f64 {
        super::DEFAULT_DARE_TOL
    }
    pub fn divergence() -> f64 {
        super::DIVERGENCE_PENALTY
    }
}

/// Flat run configuration; every field except the dimensions has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "M")]
    pub agents: usize,
    pub d: usize,
    #[serde(rename = "N_t")]
    pub n_t: usize,
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "defaults::one")]
    pub p_on: f64,
    #[serde(default = "defaults::one")]
    pub gamma: f64,
    #[serde(default = "defaults::pilot_power")]
    pub pilot_power: f64,
    /// Per-agent plant noise variance.
    #[serde(default = "defaults::noise_scale")]
    pub noise_scale: f64,
    /// Standard deviation of receiver and pilot noise.
    #[serde(default = "defaults::one")]
    pub channel_noise_std: f64,
    #[serde(default = "defaults::yes")]
    pub use_estimated_csi: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::one")]
    pub initial_state: f64,
    #[serde(default = "defaults::initial_target")]
    pub initial_target: f64,
    /// Leader power budget used when calibrating γ.
    #[serde(default = "defaults::power_dbw")]
    pub power_dbw: f64,
    /// Rescale the random `A` to this spectral norm.
    #[serde(default)]
    pub a_norm: Option<f64>,
    /// `G = g_scale · I`.
    #[serde(default = "defaults::one")]
    pub g_scale: f64,
    #[serde(default = "defaults::one")]
    pub b_scale: f64,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default = "defaults::kappa_i")]
    pub kappa_i: f64,
    #[serde(default = "defaults::kappa_d")]
    pub kappa_d: f64,
    #[serde(default)]
    pub trigger_inverted: bool,
    #[serde(default = "defaults::pinv_rel_tol")]
    pub pinv_rel_tol: f64,
    /// Relative cutoff on the effective-channel singular values.
    #[serde(default = "defaults::pinv_rel_tol")]
    pub channel_rank_tol: f64,
    #[serde(default = "defaults::stride")]
    pub trajectory_stride: usize,
    #[serde(default = "defaults::probe_seeds")]
    pub n_probe_seeds: usize,
    /// Episode length used while calibrating γ; defaults to `horizon`.
    #[serde(default)]
    pub calibration_horizon: Option<usize>,
    #[serde(default = "defaults::dare_max_iter")]
    pub dare_max_iter: usize,
    #[serde(default = "defaults::dare_tol")]
    pub dare_tol: f64,
    #[serde(default = "defaults::divergence")]
    pub divergence_threshold: f64,
    /// JSON topology file used instead of the random ring.
    #[serde(default)]
    pub topology_path: Option<String>,
}

fn default_scheme() -> Scheme {
    Scheme::Semantic
}

impl SimConfig {
    /// Defaults with the given dimensions.
    pub fn new(agents: usize, d: usize, n_t: usize, n_r: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "M": agents, "d": d, "N_t": n_t, "N_r": n_r }))
            .expect("dimension-only config always parses")
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.d == 0 || self.n_t == 0 || self.n_r == 0 {
            return Err(Error::param("dims", "M, d, N_t and N_r must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        if self.trajectory_stride == 0 {
            return Err(Error::param("trajectory_stride", "must be >= 1"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::param("divergence_threshold", "must be > 0"));
        }
        if !(self.channel_noise_std >= 0.0) {
            return Err(Error::param("channel_noise_std", "must be >= 0"));
        }
        if let Some(a) = self.a_norm {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::param("a_norm", "must be finite and >= 0"));
            }
        }
        self.policy_params().validate()
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            p_on: self.p_on,
            gamma: self.gamma,
            pinv_rel_tol: self.pinv_rel_tol,
            channel_rank_tol: self.channel_rank_tol,
            ..PolicyParams::default()
        }
    }

    pub fn power_budget_watts(&self) -> f64 {
        dbw_to_watts(self.power_dbw)
    }
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

/// Random ring topology for `config`, with the configured rescalings applied.
pub fn build_topology(config: &SimConfig) -> Result<SwarmTopology> {
    config.validate()?;
    let base = match &config.topology_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Topology(format!("{path}: {e}")))?;
            serde_json::from_str::<SwarmTopology>(&text).map_err(|e| Error::Topology(format!("{path}: {e}")))?
        }
        None => build_ring_topology(config.agents, config.d, config.n_t, config.n_r, config.noise_scale, config.seed)?,
    };
    let mut t = base;
    if let Some(norm) = config.a_norm {
        t = t.with_transition_norm(norm)?;
    }
    if config.b_scale != 1.0 {
        t = t.scale_actuation(config.b_scale)?;
    }
    if config.g_scale != 1.0 {
        let n = t.global_dim();
        t = t.with_target_transition(Matrix::identity(n, n) * config.g_scale)?;
    }
    check_dims(config, &t)?;
    Ok(t)
}

fn check_dims(config: &SimConfig, t: &SwarmTopology) -> Result<()> {
    let want = (config.agents, config.d, config.n_t, config.n_r);
    let got = (t.agent_count(), t.state_dim(), t.tx_dim(), t.rx_dim());
    if want != got {
        return Err(Error::dim("topology (M, d, N_t, N_r)", format!("{want:?}"), format!("{got:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: usize,
    pub agent: usize,
    pub delta: bool,
    /// `‖u_m‖²` (0 when silent).
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scheme: Scheme,
    pub seed: u64,
    pub gamma: f64,
    /// Mean of `‖e(t)‖²` over `t = 1..=steps`, excluding the slot that tripped
    /// the divergence guard.
    pub avg_cost: f64,
    /// Per-slot mean of `Σ_m δ_m ‖u_m‖²`.
    pub avg_tx_power: f64,
    /// Fraction of `(t, m)` pairs with `δ = 1`.
    pub comm_rate: f64,
    pub diverged: bool,
    pub steps: usize,
    /// `(t, ‖e(t)‖²)`, starting at `t = 0` and every `trajectory_stride` slots after.
    pub cost_trajectory: Vec<(usize, f64)>,
    pub decisions: Option<Vec<DecisionRecord>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub record_decisions: bool,
    /// Skip the trajectory (used for calibration probes).
    pub no_trajectory: bool,
}

/// Offline quantities shared by every episode on one topology.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub topology: SwarmTopology,
    pub drift: DriftConstants,
    gare: Option<GareGain>,
}

impl EpisodeContext {
    pub fn new(config: &SimConfig, topology: SwarmTopology) -> Result<Self> {
        check_dims(config, &topology)?;
        let drift = compute_drift_constants(topology.global_transition(), topology.target_transition(), config.tie_rule)?;
        Ok(Self { topology, drift, gare: None })
    }

    /// Solves the static-channel Riccati equation needed by the baselines.
    pub fn with_static_gain(mut self, config: &SimConfig) -> Result<Self> {
        if self.gare.is_none() {
            self.gare = Some(solve_static_gain(&self.topology, config.dare_max_iter, config.dare_tol)?);
        }
        Ok(self)
    }

    pub fn static_gain(&self) -> Option<&GareGain> {
        self.gare.as_ref()
    }
}

pub fn run_episode(config: &SimConfig, topology: &SwarmTopology) -> Result<Metrics> {
    let mut ctx = EpisodeContext::new(config, topology.clone())?;
    if config.scheme != Scheme::Semantic {
        ctx = ctx.with_static_gain(config)?;
    }
    run_episode_with(&ctx, config, EpisodeOptions::default())
}

enum Controller {
    Semantic(PolicyParams),
    Baseline(Box<BaselineController>),
}

pub fn run_episode_with(ctx: &EpisodeContext, config: &SimConfig, opts: EpisodeOptions) -> Result<Metrics> {
    config.validate()?;
    let topo = &ctx.topology;
    check_dims(config, topo)?;
    let m_count = topo.agent_count();
    let seed = config.seed;

    let mut state = SwarmState::uniform(topo, config.initial_state, config.initial_target);
    let e0 = state.error();
    let mut controller = match config.scheme.baseline_kind() {
        None => Controller::Semantic(config.policy_params()),
        Some(kind) => {
            let gare = ctx
                .gare
                .as_ref()
                .ok_or_else(|| Error::param("context", "baseline schemes need the static gain"))?;
            Controller::Baseline(Box::new(BaselineController::new(
                kind,
                topo,
                gare,
                config.kappa_i,
                config.kappa_d,
                TriggerConfig::defaults(m_count, config.trigger_inverted),
                &e0,
            )?))
        }
    };

    let mut trajectory = Vec::new();
    if !opts.no_trajectory {
        trajectory.push((0, e0.norm_squared()));
    }
    let mut log = opts.record_decisions.then(Vec::new);
    let mut cost_sum = 0.0;
    let mut power_sum = 0.0;
    let mut transmissions = 0usize;
    let mut steps = 0usize;
    let mut diverged = false;
    let mut last_cost = e0.norm_squared();

    for t in 0..config.horizon {
        let e = state.error();
        let channels = draw_channels(&mut stream_rng(seed, Stream::Channel, t as u64), m_count, topo.rx_dim(), topo.tx_dim());

        let signals: Vec<Option<Vector>> = match &mut controller {
            Controller::Semantic(params) => {
                let estimate = if config.use_estimated_csi {
                    ChannelEstimate::from_realization(
                        &channels,
                        config.pilot_power,
                        config.channel_noise_std,
                        &mut stream_rng(seed, Stream::Pilot, t as u64),
                    )?
                } else {
                    ChannelEstimate::exact(&channels)
                };
                (0..m_count)
                    .map(|m| {
                        let dec = solve_agent_rank_one(
                            &e,
                            m,
                            topo.actuation(m),
                            &estimate.per_agent[m],
                            &ctx.drift,
                            params,
                            m_count,
                        )?;
                        Ok(dec.delta.then_some(dec.signal))
                    })
                    .collect::<Result<_>>()?
            }
            Controller::Baseline(b) => b.decide(t, &e)?,
        };

        let mut noise_rng = stream_rng(seed, Stream::ChannelNoise, t as u64);
        let mut received = Vec::with_capacity(m_count);
        for (m, sig) in signals.iter().enumerate() {
            let mut y = normal_vector(&mut noise_rng, topo.rx_dim()) * config.channel_noise_std;
            let power = match sig {
                Some(u) => {
                    y += &channels.per_agent[m] * u;
                    transmissions += 1;
                    u.norm_squared()
                }
                None => 0.0,
            };
            power_sum += power;
            if let Some(log) = log.as_mut() {
                log.push(DecisionRecord {
                    t,
                    agent: m,
                    delta: sig.is_some(),
                    power,
                });
            }
            received.push(y);
        }

        let w = topo.sample_plant_noise(&mut stream_rng(seed, Stream::PlantNoise, t as u64));
        state = step_swarm(topo, &state, &received, &w)?;
        state = step_target(topo, &state)?;
        steps += 1;

        let cost = state.error().norm_squared();
        last_cost = cost;
        if !opts.no_trajectory && steps.is_multiple_of(config.trajectory_stride) {
            trajectory.push((steps, cost));
        }
        if !cost.is_finite() || cost > config.divergence_threshold {
            diverged = true;
            break;
        }
        cost_sum += cost;
    }
    let counted = if diverged { steps - 1 } else { steps };
    Ok(Metrics {
        scheme: config.scheme,
        seed,
        gamma: config.gamma,
        avg_cost: if counted > 0 { cost_sum / counted as f64 } else { last_cost },
        avg_tx_power: power_sum / steps as f64,
        comm_rate: transmissions as f64 / (steps * m_count) as f64,
        diverged,
        steps,
        cost_trajectory: trajectory,
        decisions: log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketEdge {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub target_watts: f64,
    pub achieved_watts: f64,
    /// Mean power at the lower and upper bracket edges.
    pub max_watts: f64,
    pub min_watts: f64,
    /// Set when the budget lay outside the achievable range and the nearest
    /// edge was returned instead.
    pub clamped: Option<BracketEdge>,
    pub probe_seeds: Vec<u64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// An unreachable budget is an error.
    Strict,
    /// An unreachable budget returns the nearest bracket edge.
    Clamp,
}

pub fn probe_seeds(config: &SimConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(config.seed, Stream::Probe, i)).collect()
}

/// Mean semantic-scheme `avg_tx_power` over the given episode seeds.
pub fn mean_power(ctx: &EpisodeContext, config: &SimConfig, gamma: f64, seeds: &[u64]) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.scheme = Scheme::Semantic;
    cfg.gamma = gamma;
    if let Some(h) = config.calibration_horizon {
        cfg.horizon = h;
    }
    let opts = EpisodeOptions {
        no_trajectory: true,
        ..EpisodeOptions::default()
    };
    let mut total = 0.0;
    for &s in seeds {
        cfg.seed = s;
        total += run_episode_with(ctx, &cfg, opts)?.avg_tx_power;
    }
    Ok(total / seeds.len() as f64)
}

/// Log-scale bisection on γ over [`GAMMA_BRACKET`] until the mean power over
/// the probe seeds is within 5% of `10^(dBW/10)` W. Power is taken to be
/// nonincreasing in γ.
pub fn calibrate_gamma(
    config: &SimConfig,
    topology: &SwarmTopology,
    power_budget_dbw: f64,
    n_probe_seeds: usize,
    mode: CalibrationMode,
) -> Result<Calibration> {
    let ctx = EpisodeContext::new(config, topology.clone())?;
    calibrate_gamma_with(&ctx, config, power_budget_dbw, n_probe_seeds, mode)
}

pub fn calibrate_gamma_with(
    ctx: &EpisodeContext,
    config: &SimConfig,
    power_budget_dbw: f64,
    n_probe_seeds: usize,
    mode: CalibrationMode,
) -> Result<Calibration> {
    if n_probe_seeds == 0 {
        return Err(Error::param("n_probe_seeds", "must be >= 1"));
    }
    if !power_budget_dbw.is_finite() {
        return Err(Error::param("power_budget_dbw", "must be finite"));
    }
    let target = dbw_to_watts(power_budget_dbw);
    let seeds = probe_seeds(config, n_probe_seeds);
    let (lo, hi) = GAMMA_BRACKET;
    let within = |p: f64| (p - target).abs() <= CALIBRATION_TOLERANCE * target;

    let max_watts = mean_power(ctx, config, lo, &seeds)?;
    let min_watts = mean_power(ctx, config, hi, &seeds)?;
    let mut evaluations = 2;
    let done = |gamma, achieved, clamped, evaluations| Calibration {
        gamma,
        target_watts: target,
        achieved_watts: achieved,
        max_watts,
        min_watts,
        clamped,
        probe_seeds: seeds.clone(),
        evaluations,
    };
    if within(max_watts) {
        return Ok(done(lo, max_watts, None, evaluations));
    }
    if within(min_watts) {
        return Ok(done(hi, min_watts, None, evaluations));
    }
    if !(target < max_watts && target > min_watts) {
        return match mode {
            CalibrationMode::Strict => Err(Error::BudgetUnreachable {
                target,
                min: min_watts,
                max: max_watts,
            }),
            CalibrationMode::Clamp if target >= max_watts => Ok(done(lo, max_watts, Some(BracketEdge::Lower), evaluations)),
            CalibrationMode::Clamp => Ok(done(hi, min_watts, Some(BracketEdge::Upper), evaluations)),
        };
    }

    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut best = (f64::INFINITY, lo, max_watts);
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let gamma = mid.exp();
        let p = mean_power(ctx, config, gamma, &seeds)?;
        evaluations += 1;
        let miss = (p - target).abs();
        if miss < best.0 {
            best = (miss, gamma, p);
        }
        if within(p) {
            return Ok(done(gamma, p, None, evaluations));
        }
        if p > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    match mode {
        CalibrationMode::Strict => Err(Error::BudgetUnreachable {
            target,
            min: min_watts,
            max: max_watts,
        }),
        CalibrationMode::Clamp => Ok(done(best.1, best.2, None, evaluations)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(rename = "M")]
    Agents,
    #[serde(rename = "N_t")]
    TxAntennas,
    PowerDbw,
}

impl SweepAxis {
    pub const NAMES: [&'static str; 3] = ["M", "N_t", "power_dbw"];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Agents => "M",
            SweepAxis::TxAntennas => "N_t",
            SweepAxis::PowerDbw => "power_dbw",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::param("value", format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::Agents => cfg.agents = count()?,
            SweepAxis::TxAntennas => cfg.n_t = count()?,
            SweepAxis::PowerDbw => cfg.power_dbw = value,
        }
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(SweepAxis::Agents),
            "N_t" => Ok(SweepAxis::TxAntennas),
            "power_dbw" => Ok(SweepAxis::PowerDbw),
            _ => Err(Error::param(
                "axis",
                format!("unknown axis {s:?}; valid axes: {}", SweepAxis::NAMES.join(", ")),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub gamma: f64,
    pub avg_cost: f64,
    pub avg_tx_power: f64,
    pub comm_rate: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub value: f64,
    pub n_seeds: usize,
    /// Divergent runs count as [`DIVERGENCE_PENALTY`].
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_tx_power: f64,
    pub mean_comm_rate: f64,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Ordered by value, then seed, then scheme.
    pub rows: Vec<SweepRow>,
    pub calibrations: Vec<(f64, u64, Calibration)>,
    /// Ordered by value, then scheme.
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, scheme: Scheme, value: f64) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.value == value)
    }
}

/// Seeds used by sweeps: `base, base + 1, …`.
pub fn sweep_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

fn penalized(cost: f64, diverged: bool) -> f64 {
    if diverged || !cost.is_finite() {
        DIVERGENCE_PENALTY
    } else {
        cost
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

struct Cell {
    calibration: Calibration,
    rows: Vec<SweepRow>,
}

fn sweep_cell(base: &SimConfig, axis: SweepAxis, value: f64, seed: u64) -> Result<Cell> {
    let mut cfg = axis.apply(base, value)?;
    cfg.seed = seed;
    let topology = build_topology(&cfg)?;
    let ctx = EpisodeContext::new(&cfg, topology)?.with_static_gain(&cfg)?;
    let calibration = calibrate_gamma_with(&ctx, &cfg, cfg.power_dbw, cfg.n_probe_seeds, CalibrationMode::Clamp)?;
    cfg.gamma = calibration.gamma;
    let opts = EpisodeOptions {
        no_trajectory: true,
        ..EpisodeOptions::default()
    };
    let rows = Scheme::ALL
        .into_iter()
        .map(|scheme| {
            let mut c = cfg.clone();
            c.scheme = scheme;
            let m = run_episode_with(&ctx, &c, opts)?;
            Ok(SweepRow {
                scheme,
                axis,
                value,
                seed,
                gamma: c.gamma,
                avg_cost: m.avg_cost,
                avg_tx_power: m.avg_tx_power,
                comm_rate: m.comm_rate,
                diverged: m.diverged,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Cell { calibration, rows })
}

/// For every value × seed: build the topology, calibrate γ to the budget
/// (the swept value on the power axis, `base.power_dbw` otherwise), run all
/// four schemes and aggregate per scheme × value.
pub fn run_sweep(base: &SimConfig, axis: SweepAxis, values: &[f64], seeds: &[u64]) -> Result<SweepResult> {
    base.validate()?;
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::param("sweep", "need at least one value and one seed"));
    }
    let tasks: Vec<(f64, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let cells: Vec<Cell> = tasks
        .par_iter()
        .map(|&(v, s)| sweep_cell(base, axis, v, s))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cells.len() * 4);
    let mut calibrations = Vec::with_capacity(cells.len());
    for (cell, &(v, s)) in cells.into_iter().zip(&tasks) {
        calibrations.push((v, s, cell.calibration));
        rows.extend(cell.rows);
    }
    let mut aggregates = Vec::new();
    for &value in values {
        for scheme in Scheme::ALL {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value && r.scheme == scheme).collect();
            let costs: Vec<f64> = group.iter().map(|r| penalized(r.avg_cost, r.diverged)).collect();
            let (mean_cost, stderr_cost) = mean_stderr(&costs);
            let n = group.len() as f64;
            aggregates.push(SweepAggregate {
                scheme,
                axis,
                value,
                n_seeds: group.len(),
                mean_cost,
                stderr_cost,
                mean_tx_power: group.iter().map(|r| r.avg_tx_power).sum::<f64>() / n,
                mean_comm_rate: group.iter().map(|r| r.comm_rate).sum::<f64>() / n,
                n_diverged: group.iter().filter(|r| r.diverged).count(),
            });
        }
    }
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        seeds: seeds.to_vec(),
        rows,
        calibrations,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_matrix;

    fn small() -> SimConfig {
        let mut c = SimConfig::new(2, 2, 2, 2);
        c.horizon = 50;
        c.a_norm = Some(0.9);
        c.seed = 3;
        c
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = SimConfig::new(4, 9, 4, 4);
        assert_eq!(c.horizon, 10_000);
        assert_eq!(c.initial_state, 1.0);
        assert_eq!(c.initial_target, 100.0);
        assert_eq!(c.noise_scale, 1e-5);
        assert!(c.use_estimated_csi);
        assert_eq!(c.scheme, Scheme::Semantic);
        let bad = serde_json::from_str::<SimConfig>(r#"{"M":1,"d":1,"N_t":1,"N_r":1,"bogus":2}"#);
        assert!(bad.is_err());
        let round: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn frozen_error_without_transmission() {
        let d = 2;
        let m = 2;
        let topo = SwarmTopology::new(
            d,
            d,
            d,
            vec![Matrix::identity(d, d); m],
            vec![],
            vec![normal_matrix(&mut rand::rng(), d, d); m],
            vec![Matrix::zeros(d, d); m],
            Matrix::identity(d * m, d * m),
        )
        .unwrap()
        .scale_actuation(0.0)
        .unwrap();
        let mut c = SimConfig::new(m, d, d, d);
        c.horizon = 1;
        c.p_on = 1e300;
        c.noise_scale = 0.0;
        let out = run_episode(&c, &topo).unwrap();
        assert_eq!(out.comm_rate, 0.0);
        assert_eq!(out.avg_cost, (d * m) as f64 * 99.0 * 99.0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let c = small();
        let t = build_topology(&c).unwrap();
        for scheme in Scheme::ALL {
            let mut c = c.clone();
            c.scheme = scheme;
            assert_eq!(run_episode(&c, &t).unwrap(), run_episode(&c, &t).unwrap());
        }
    }

    #[test]
    fn power_accounting_matches_decision_log() {
        let c = small();
        let t = build_topology(&c).unwrap();
        let ctx = EpisodeContext::new(&c, t).unwrap().with_static_gain(&c).unwrap();
        for scheme in Scheme::ALL {
            let mut c = c.clone();
            c.scheme = scheme;
            let opts = EpisodeOptions {
                record_decisions: true,
                ..EpisodeOptions::default()
            };
            let m = run_episode_with(&ctx, &c, opts).unwrap();
            let log = m.decisions.as_ref().unwrap();
            assert_eq!(log.len(), m.steps * 2);
            let total: f64 = log.iter().filter(|r| r.delta).map(|r| r.power).sum();
            assert!((total / m.steps as f64 - m.avg_tx_power).abs() <= 1e-12 * (1.0 + m.avg_tx_power));
            let tx = log.iter().filter(|r| r.delta).count() as f64;
            assert!((tx / log.len() as f64 - m.comm_rate).abs() < 1e-15);
            assert!(log.iter().all(|r| r.delta || r.power == 0.0));
        }
    }

    #[test]
    fn semantic_silent_at_zero_error() {
        let mut c = small();
        c.initial_state = 5.0;
        c.initial_target = 5.0;
        c.g_scale = 0.0;
        c.a_norm = Some(0.0);
        c.noise_scale = 0.0;
        c.channel_noise_std = 0.0;
        c.horizon = 5;
        let t = build_topology(&c).unwrap();
        // A = G = 0 and no noise: e(t) = 0 for all t ≥ 1 and e(0) = 0
        let m = run_episode_with(
            &EpisodeContext::new(&c, t).unwrap(),
            &c,
            EpisodeOptions {
                record_decisions: true,
                ..EpisodeOptions::default()
            },
        )
        .unwrap();
        assert_eq!(m.comm_rate, 0.0);
        assert_eq!(m.avg_cost, 0.0);
    }

    #[test]
    fn divergence_is_flagged() {
        let mut c = small();
        c.a_norm = Some(50.0);
        c.p_on = 1e300;
        c.horizon = 1000;
        let t = build_topology(&c).unwrap();
        let m = run_episode(&c, &t).unwrap();
        assert!(m.diverged);
        assert!(m.steps < 1000);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("M".parse::<SweepAxis>().unwrap(), SweepAxis::Agents);
        let err = "K".parse::<SweepAxis>().unwrap_err().to_string();
        assert!(err.contains("M, N_t, power_dbw"));
        assert!(SweepAxis::Agents.apply(&small(), 2.5).is_err());
    }

    #[test]
    fn mean_stderr_oracle() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
