//! Comparison controllers: periodic PID, state-triggered PID and a static
//! Riccati gain. None of them reads channel state.

use serde::{Deserialize, Serialize};

use crate::numerics::ensure_finite;
use crate::swarm::SwarmTopology;
use crate::{Error, Matrix, Result, Vector};

pub const DEFAULT_KAPPA_I: f64 = 0.05;
pub const DEFAULT_KAPPA_D: f64 = 0.1;
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;
pub const DEFAULT_DARE_TOL: f64 = 1e-10;

/// Static LQR gain and the Riccati fixed point it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GareGain {
    /// Aggregate gain `(R + BᵀPB)⁻¹ BᵀPA`; row block `m` (height `N_t`) is agent `m`.
    pub gain: Matrix,
    pub p: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

impl GareGain {
    pub fn agent_gain(&self, m: usize, tx_dim: usize) -> Matrix {
        self.gain.rows(m * tx_dim, tx_dim).into_owned()
    }
}

fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::param("R", "R + BᵀPB must be positive definite"))?;
    let k = chol.solve(&(&bt_p * a));
    let at_p = a.transpose() * p;
    let mut next = &at_p * a - &at_p * b * &k + q;
    next = (&next + next.transpose()) * 0.5;
    Ok((next, k))
}

fn relative_residual(p: &Matrix, next: &Matrix) -> f64 {
    (p - next).norm() / p.norm().max(1.0)
}

/// Fixed-point iteration `P ← AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q` from `P = Q`.
/// Convergence is declared when `‖P − Ric(P)‖_F / max(1, ‖P‖_F) < tol`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, max_iter: usize, tol: f64) -> Result<GareGain> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::dim("B rows", n, b.nrows()));
    }
    let k_in = b.ncols();
    if q.shape() != (n, n) {
        return Err(Error::dim("Q", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    if r.shape() != (k_in, k_in) {
        return Err(Error::dim("R", format!("{k_in}x{k_in}"), format!("{}x{}", r.nrows(), r.ncols())));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    for (m, what) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        ensure_finite(m, what)?;
    }

    let mut p = q.clone();
    let mut trace = Vec::new();
    let trace_every = (max_iter / 64).max(1);
    for it in 1..=max_iter {
        let (next, _) = riccati_map(a, b, q, r, &p)?;
        let res = relative_residual(&p, &next);
        if !res.is_finite() {
            trace.push(res);
            return Err(Error::RiccatiDivergence { iterations: it, residual: res, trace });
        }
        p = next;
        if it % trace_every == 0 {
            trace.push(res);
        }
        if res < tol {
            // residual of the returned P itself
            let (check, k) = riccati_map(a, b, q, r, &p)?;
            let final_res = relative_residual(&p, &check);
            return Ok(GareGain {
                gain: k,
                p,
                iterations: it,
                residual: final_res,
            });
        }
    }
    let (check, _) = riccati_map(a, b, q, r, &p)?;
    let residual = relative_residual(&p, &check);
    trace.push(residual);
    Err(Error::RiccatiDivergence { iterations: max_iter, residual, trace })
}

/// Aggregate input matrix under the static all-ones channel:
/// column block `m` is `B̂_m · 1_{N_r × N_t}`.
pub fn static_channel_input(topology: &SwarmTopology) -> Matrix {
    let n = topology.global_dim();
    let tx = topology.tx_dim();
    let ones = Matrix::from_element(topology.rx_dim(), tx, 1.0);
    let mut b = Matrix::zeros(n, topology.agent_count() * tx);
    for m in 0..topology.agent_count() {
        b.view_mut((0, m * tx), (n, tx)).copy_from(&(topology.global_actuation(m) * &ones));
    }
    b
}

/// Static-channel LQR with `Q = I`, `R = I`.
pub fn solve_static_gain(topology: &SwarmTopology, max_iter: usize, tol: f64) -> Result<GareGain> {
    let n = topology.global_dim();
    let b = static_channel_input(topology);
    let k = b.ncols();
    solve_dare(
        topology.global_transition(),
        &b,
        &Matrix::identity(n, n),
        &Matrix::identity(k, k),
        max_iter,
        tol,
    )
}

/// Per-agent PID gains; signs already include negative feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: Vec<Matrix>,
    pub ki: Vec<Matrix>,
    pub kd: Vec<Matrix>,
}

impl PidGains {
    pub fn from_proportional(kp: Vec<Matrix>, kappa_i: f64, kappa_d: f64) -> Self {
        let ki = kp.iter().map(|k| k * kappa_i).collect();
        let kd = kp.iter().map(|k| k * kappa_d).collect();
        Self { kp, ki, kd }
    }
}

pub fn tune_pid(topology: &SwarmTopology, kappa_i: f64, kappa_d: f64, max_iter: usize, tol: f64) -> Result<PidGains> {
    let g = solve_static_gain(topology, max_iter, tol)?;
    Ok(pid_from_gare(topology, &g, kappa_i, kappa_d))
}

pub fn pid_from_gare(topology: &SwarmTopology, gare: &GareGain, kappa_i: f64, kappa_d: f64) -> PidGains {
    let kp = (0..topology.agent_count())
        .map(|m| -gare.agent_gain(m, topology.tx_dim()))
        .collect();
    PidGains::from_proportional(kp, kappa_i, kappa_d)
}

/// Run-local PID memory: running error sum and the previous error.
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    pub accumulator: Vector,
    pub prev_error: Vector,
}

impl PidState {
    /// Fresh state at `t = 0`; the first derivative term is zero.
    pub fn new(e0: &Vector) -> Self {
        Self {
            accumulator: Vector::zeros(e0.len()),
            prev_error: e0.clone(),
        }
    }

    /// Adds `e` to the sum and records it as the previous error. Returns the
    /// previous error before the update.
    pub fn advance(&mut self, e: &Vector) -> Vector {
        self.accumulator += e;
        std::mem::replace(&mut self.prev_error, e.clone())
    }
}

/// `u = K_p e + K_i Σe + K_d (e − e_prev)`.
pub fn pid_control(kp: &Matrix, ki: &Matrix, kd: &Matrix, e: &Vector, accumulator: &Vector, prev_e: &Vector) -> Result<Vector> {
    let n = e.len();
    for (k, what) in [(kp, "K_p"), (ki, "K_i"), (kd, "K_d")] {
        if k.ncols() != n {
            return Err(Error::dim(what, n, k.ncols()));
        }
    }
    if accumulator.len() != n || prev_e.len() != n {
        return Err(Error::dim("pid state", n, accumulator.len().min(prev_e.len())));
    }
    Ok(kp * e + ki * accumulator + kd * (e - prev_e))
}

pub fn periodic_trigger(t: usize, period: usize) -> bool {
    period > 0 && t.is_multiple_of(period)
}

/// `‖e − e_l‖² ≤ σ ‖e‖²`, or `≥` when inverted.
pub fn state_trigger(e: &Vector, e_last: &Vector, sigma: f64, inverted: bool) -> bool {
    let lhs = (e - e_last).norm_squared();
    let rhs = sigma * e.norm_squared();
    if inverted {
        lhs >= rhs
    } else {
        lhs <= rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub period: usize,
    pub sigma: Vec<f64>,
    pub inverted: bool,
}

impl TriggerConfig {
    /// `T = ⌈M/2⌉`, `σ_m = m` (1-based).
    pub fn defaults(agents: usize, inverted: bool) -> Self {
        Self {
            period: agents.div_ceil(2).max(1),
            sigma: (1..=agents).map(|m| m as f64).collect(),
            inverted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// PID, transmitting every `T` slots.
    PeriodicPid,
    /// PID, transmitting on the state trigger.
    TriggeredPid,
    /// Static Riccati gain on the state trigger.
    TriggeredStatic,
}

/// Stateful baseline controller for one episode.
#[derive(Debug, Clone)]
pub struct BaselineController {
    kind: BaselineKind,
    pid: PidGains,
    static_gain: Vec<Matrix>,
    trigger: TriggerConfig,
    pid_state: PidState,
    snapshots: Vec<Vector>,
}

impl BaselineController {
    pub fn new(
        kind: BaselineKind,
        topology: &SwarmTopology,
        gare: &GareGain,
        kappa_i: f64,
        kappa_d: f64,
        trigger: TriggerConfig,
        e0: &Vector,
    ) -> Result<Self> {
        let m = topology.agent_count();
        if trigger.sigma.len() != m {
            return Err(Error::dim("trigger constants", m, trigger.sigma.len()));
        }
        if e0.len() != topology.global_dim() {
            return Err(Error::dim("initial error", topology.global_dim(), e0.len()));
        }
        let expect = (m * topology.tx_dim(), topology.global_dim());
        if gare.gain.shape() != expect {
            return Err(Error::dim(
                "static gain",
                format!("{}x{}", expect.0, expect.1),
                format!("{}x{}", gare.gain.nrows(), gare.gain.ncols()),
            ));
        }
        Ok(Self {
            kind,
            pid: pid_from_gare(topology, gare, kappa_i, kappa_d),
            static_gain: (0..m).map(|i| gare.agent_gain(i, topology.tx_dim())).collect(),
            trigger,
            pid_state: PidState::new(e0),
            snapshots: vec![e0.clone(); m],
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    /// Per-agent transmit signal for slot `t`, `None` when silent. Uses only
    /// the error history.
    pub fn decide(&mut self, t: usize, e: &Vector) -> Result<Vec<Option<Vector>>> {
        let prev = self.pid_state.advance(e);
        let agents = self.snapshots.len();
        let mut out = Vec::with_capacity(agents);
        for m in 0..agents {
            let fire = match self.kind {
                BaselineKind::PeriodicPid => periodic_trigger(t, self.trigger.period),
                BaselineKind::TriggeredPid | BaselineKind::TriggeredStatic => {
                    let hit = state_trigger(e, &self.snapshots[m], self.trigger.sigma[m], self.trigger.inverted);
                    if hit {
                        self.snapshots[m] = e.clone();
                    }
                    hit
                }
            };
            if !fire {
                out.push(None);
                continue;
            }
            let u = match self.kind {
                BaselineKind::TriggeredStatic => -(&self.static_gain[m] * e),
                _ => pid_control(
                    &self.pid.kp[m],
                    &self.pid.ki[m],
                    &self.pid.kd[m],
                    e,
                    &self.pid_state.accumulator,
                    &prev,
                )?,
            };
            out.push(Some(u));
        }
        Ok(out)
    }
}
