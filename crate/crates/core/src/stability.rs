//! Drift bound, Monte Carlo drift and the coverage-mask stability test.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::numerics::svd;
use crate::policy::{ControlDecision, DriftConstants};
use crate::rng::normal_vector;
use crate::swarm::{SwarmState, SwarmTopology};
use crate::{Error, Matrix, Result, Vector};

pub const DEFAULT_MASK_TOL: f64 = 1e-10;

/// Terms of the one-step drift bound, kept apart so callers can inspect them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftBound {
    pub plant_noise: f64,
    pub channel_noise: f64,
    /// `(α − 1) Tr(Σ)`
    pub open_loop: f64,
    /// `−2 Σ_m δ_m Tr(E_m K_m Σ Π)`
    pub correction: f64,
    /// `M Σ_m δ_m Tr(Σ (E_m K_m)ᵀ (E_m K_m))`
    pub quadratic: f64,
}

impl DriftBound {
    pub fn total(&self) -> f64 {
        self.plant_noise + self.channel_noise + self.open_loop + self.correction + self.quadratic
    }
}

fn check_decisions(decisions: &[ControlDecision], channels: &ChannelRealization, topology: &SwarmTopology) -> Result<()> {
    let m = topology.agent_count();
    if decisions.len() != m {
        return Err(Error::dim("decisions", m, decisions.len()));
    }
    if channels.per_agent.len() != m {
        return Err(Error::dim("channels", m, channels.per_agent.len()));
    }
    Ok(())
}

/// Upper bound on `E[Tr Σ(t+1) − Tr Σ(t) | Σ(t)]` for the given decisions,
/// evaluated on one channel draw (`channels` are the true links the gains are
/// applied through).
pub fn drift_bound(
    sigma: &Matrix,
    decisions: &[ControlDecision],
    channels: &ChannelRealization,
    topology: &SwarmTopology,
    drift: &DriftConstants,
) -> Result<DriftBound> {
    check_decisions(decisions, channels, topology)?;
    let n = topology.global_dim();
    if sigma.shape() != (n, n) {
        return Err(Error::dim("sigma", format!("{n}x{n}"), format!("{}x{}", sigma.nrows(), sigma.ncols())));
    }
    let m_count = topology.agent_count() as f64;
    let pi = drift.pi_matrix();
    let mut correction = 0.0;
    let mut quadratic = 0.0;
    for (m, (dec, h)) in decisions.iter().zip(&channels.per_agent).enumerate() {
        if !dec.delta {
            continue;
        }
        let applied = topology.global_actuation(m) * h * &dec.gain;
        correction -= 2.0 * (&applied * sigma * &pi).trace();
        quadratic += m_count * (sigma * applied.transpose() * &applied).trace();
    }
    Ok(DriftBound {
        plant_noise: topology.noise_trace(),
        channel_noise: topology.actuation_energy(),
        open_loop: (drift.alpha - 1.0) * sigma.trace(),
        correction,
        quadratic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

/// Monte Carlo estimate of the one-step change of `‖e‖²` with the decisions
/// and channel draw held fixed; plant and channel noise are resampled.
pub fn empirical_drift<R: Rng + ?Sized>(
    topology: &SwarmTopology,
    state: &SwarmState,
    decisions: &[ControlDecision],
    channels: &ChannelRealization,
    n_draws: usize,
    rng: &mut R,
) -> Result<DriftEstimate> {
    check_decisions(decisions, channels, topology)?;
    if n_draws < 2 {
        return Err(Error::param("n_draws", "need at least 2 draws"));
    }
    let d = topology.state_dim();
    let e = state.error();
    let before = e.norm_squared();

    // deterministic part of e(t+1)
    let mut mean_next = topology.global_transition() * &state.x - topology.target_transition() * &state.r;
    for (m, (dec, h)) in decisions.iter().zip(&channels.per_agent).enumerate() {
        if dec.delta {
            let u = -(&dec.gain * &e);
            let mut block = mean_next.rows_mut(m * d, d);
            block += topology.actuation(m) * (h * u);
        }
    }

    // Welford accumulation, sequential and therefore order-stable
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n_draws {
        let mut next = mean_next.clone() + topology.sample_plant_noise(rng);
        for m in 0..topology.agent_count() {
            let v = normal_vector(rng, topology.rx_dim());
            let mut block = next.rows_mut(m * d, d);
            block += topology.actuation(m) * v;
        }
        let sample = next.norm_squared() - before;
        let delta = sample - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (sample - mean);
    }
    let var = m2 / (n_draws - 1) as f64;
    Ok(DriftEstimate {
        mean,
        stderr: (var / n_draws as f64).sqrt(),
        draws: n_draws,
    })
}

/// Binary diagonal mask over the singular-value positions of `E_m E_mᵀ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMatrix {
    pub diagonal: Vec<bool>,
}

impl MaskMatrix {
    pub fn support_size(&self) -> usize {
        self.diagonal.iter().filter(|&&b| b).count()
    }

    pub fn full(n: usize) -> Self {
        Self { diagonal: vec![true; n] }
    }

    pub fn empty(n: usize) -> Self {
        Self { diagonal: vec![false; n] }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(
            self.diagonal.len(),
            self.diagonal.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        ))
    }
}

/// Mask of `E_m E_mᵀ`: position `i` is set iff its `i`-th singular value
/// exceeds `tol · σ_max`.
pub fn mask_for(effective: &Matrix, tol: f64) -> Result<MaskMatrix> {
    let gram = effective * effective.transpose();
    let f = svd(&gram)?;
    let cutoff = tol * f.max_singular();
    let mut diagonal = vec![false; gram.nrows()];
    for (slot, &s) in diagonal.iter_mut().zip(&f.singulars) {
        *slot = s > cutoff && s > 0.0;
    }
    Ok(MaskMatrix { diagonal })
}

pub fn compute_masks(topology: &SwarmTopology, channels: &ChannelRealization, tol: f64) -> Result<Vec<MaskMatrix>> {
    if channels.per_agent.len() != topology.agent_count() {
        return Err(Error::dim("channels", topology.agent_count(), channels.per_agent.len()));
    }
    channels
        .per_agent
        .iter()
        .enumerate()
        .map(|(m, h)| mask_for(&(topology.global_actuation(m) * h), tol))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub holds: bool,
    /// `1/α − ‖I − (1/M) Σ_m M_m‖`; positive iff the condition holds.
    pub margin: f64,
    /// `‖I − (1/M) Σ_m M_m‖` (largest uncovered fraction over positions).
    pub coverage_gap: f64,
}

pub fn check_stability_condition(masks: &[MaskMatrix], alpha: f64) -> Result<StabilityVerdict> {
    let Some(first) = masks.first() else {
        return Err(Error::param("masks", "need at least one mask"));
    };
    let n = first.diagonal.len();
    if masks.iter().any(|m| m.diagonal.len() != n) {
        return Err(Error::param("masks", "all masks must have the same size"));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", "must be > 0"));
    }
    let count = masks.len() as f64;
    // the matrix is diagonal so its spectral norm is the largest |entry|
    let gap = (0..n)
        .map(|i| {
            let covered = masks.iter().filter(|m| m.diagonal[i]).count() as f64;
            (1.0 - covered / count).abs()
        })
        .fold(0.0_f64, f64::max);
    let margin = 1.0 / alpha - gap;
    Ok(StabilityVerdict {
        holds: margin > 0.0,
        margin,
        coverage_gap: gap,
    })
}

/// One channel draw of the stability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityDraw {
    pub support_sizes: Vec<usize>,
    pub coverage_gap: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub alpha: f64,
    pub mask_tol: f64,
    pub draws: Vec<StabilityDraw>,
    pub fraction_satisfied: f64,
    /// True iff every draw satisfies the condition.
    pub verdict: bool,
}

pub fn stability_report<R: Rng + ?Sized>(
    topology: &SwarmTopology,
    alpha: f64,
    n_draws: usize,
    tol: f64,
    rng: &mut R,
) -> Result<StabilityReport> {
    if n_draws == 0 {
        return Err(Error::param("n_draws", "must be >= 1"));
    }
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let ch = crate::channel::draw_channels(rng, topology.agent_count(), topology.rx_dim(), topology.tx_dim());
        let masks = compute_masks(topology, &ch, tol)?;
        let v = check_stability_condition(&masks, alpha)?;
        draws.push(StabilityDraw {
            support_sizes: masks.iter().map(MaskMatrix::support_size).collect(),
            coverage_gap: v.coverage_gap,
            margin: v.margin,
            holds: v.holds,
        });
    }
    let satisfied = draws.iter().filter(|d| d.holds).count();
    Ok(StabilityReport {
        alpha,
        mask_tol: tol,
        fraction_satisfied: satisfied as f64 / n_draws as f64,
        verdict: satisfied == n_draws,
        draws,
    })
}
