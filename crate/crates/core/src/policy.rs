//! Closed-form communication and control policy.
//!
//! Each timeslot the leader decides, per follower `m`, whether to transmit
//! (`δ_m`) and with which state-feedback gain `K_m` (`u_m = −K_m e`). Working
//! in the effective-gain variable `K̂ = δ E_m K` with `E_m = B̂_m H_m`, the
//! per-agent drift-plus-penalty objective is
//!
//! ```text
//! f(K̂) = −2 Tr(Π K̂ Σ) + M Tr(K̂ Σ K̂ᵀ) + δ (P_on + γ Tr(K̂ ζ_m K̂ᵀ))
//! ```
//!
//! with `Σ = e eᵀ` and `ζ_m = (E_m E_mᵀ)^†`. Its minimiser at `δ = 1` is
//! `K̂* = Π Σ (MΣ + γζ_m)^†`, achieving `f = P_on − θ` with
//! `θ = Tr(Π Σ (MΣ + γζ_m)^† Σ Π)`. The agent transmits iff `P_on < θ`, and the
//! transmitted gain is the minimum-norm `K* = E_m^† K̂*`.

use serde::{Deserialize, Serialize};

use crate::numerics::{pseudo_inverse, svd, SvdFactors, DEFAULT_PINV_REL_TOL};
use crate::{Error, Matrix, Result, Vector};

/// How `π_m` is chosen when the `m`-th singular values of `A` and `G` coincide.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// `π_m = min(π_{1,m}, π_{2,m})`, so a tie yields the common value.
    #[default]
    Smaller,
    /// The two strict indicators as written; a tie yields `π_m = 0`.
    StrictFormula,
}

/// Which error matrix sits in the outer positions of the transmit threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// `Tr(Π Σ X Σ Π)`, the value actually attained by `K̂*`.
    #[default]
    Derivation,
    /// `Tr(Π Σ_m X Σ_mᵀ Π)` with the channel-rotated `Σ_m`.
    Rotated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftConstants {
    /// Diagonal of `Π`.
    pub pi: Vec<f64>,
    /// `2 max(‖A‖², ‖G‖²)`
    pub alpha: f64,
    /// Singular values of `A`, nonincreasing.
    pub state_singulars: Vec<f64>,
    /// Singular values of `G`, nonincreasing.
    pub target_singulars: Vec<f64>,
}

impl DriftConstants {
    pub fn pi_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(&self.pi))
    }
}

pub fn compute_drift_constants(a: &Matrix, g: &Matrix, rule: TieRule) -> Result<DriftConstants> {
    if !a.is_square() || a.shape() != g.shape() {
        return Err(Error::dim(
            "drift constants",
            format!("square and equal shapes, A is {}x{}", a.nrows(), a.ncols()),
            format!("G is {}x{}", g.nrows(), g.ncols()),
        ));
    }
    let sa = svd(a)?.singulars;
    let sg = svd(g)?.singulars;
    let pi = sa
        .iter()
        .zip(&sg)
        .map(|(&p1, &p2)| match rule {
            TieRule::Smaller => p1.min(p2),
            TieRule::StrictFormula => {
                if p1.abs() > p2.abs() {
                    p2
                } else if p2.abs() > p1.abs() {
                    p1
                } else {
                    0.0
                }
            }
        })
        .collect();
    let na = sa.first().copied().unwrap_or(0.0);
    let ng = sg.first().copied().unwrap_or(0.0);
    Ok(DriftConstants {
        pi,
        alpha: 2.0 * (na * na).max(ng * ng),
        state_singulars: sa,
        target_singulars: sg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Activation power `P_on ≥ 0`.
    pub p_on: f64,
    /// Communication price `γ ≥ 0`.
    pub gamma: f64,
    pub pinv_rel_tol: f64,
    /// Singular values of `E_m` below `channel_rank_tol · σ_max` are treated
    /// as zero, which caps the channel inversion in `E_m^†`.
    pub channel_rank_tol: f64,
    #[serde(default)]
    pub threshold_form: ThresholdForm,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            p_on: 1.0,
            gamma: 1.0,
            pinv_rel_tol: DEFAULT_PINV_REL_TOL,
            channel_rank_tol: DEFAULT_PINV_REL_TOL,
            threshold_form: ThresholdForm::Derivation,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_on >= 0.0) {
            return Err(Error::param("p_on", "must be >= 0"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::param("gamma", "must be >= 0"));
        }
        if !(self.pinv_rel_tol > 0.0) {
            return Err(Error::param("pinv_rel_tol", "must be > 0"));
        }
        if !(self.channel_rank_tol > 0.0 && self.channel_rank_tol < 1.0) {
            return Err(Error::param("channel_rank_tol", "must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AgentFactorization {
    /// `E_m = B̂_m H_m`, `dM × N_t`.
    pub effective: Matrix,
    pub svd: SvdFactors,
    pub rank: usize,
    /// `U diag(σ⁻², 0…) Uᵀ`
    pub zeta: Matrix,
    /// `U Σ Uᵀ`
    pub sigma_rot: Matrix,
}

impl AgentFactorization {
    /// `E_m^†` from the stored factors.
    pub fn effective_pinv(&self) -> Matrix {
        let (rows, cols) = self.effective.shape();
        let mut out = Matrix::zeros(cols, rows);
        for i in 0..self.rank {
            let v = self.svd.right_basis_t.row(i).transpose();
            let u = self.svd.left_basis.column(i);
            out += (v * u.transpose()) / self.svd.singulars[i];
        }
        out
    }
}

pub fn factorize_agent(b_hat: &Matrix, h: &Matrix, sigma: &Matrix, rel_tol: f64) -> Result<AgentFactorization> {
    if b_hat.ncols() != h.nrows() {
        return Err(Error::dim("effective channel", b_hat.ncols(), h.nrows()));
    }
    let n = b_hat.nrows();
    if sigma.shape() != (n, n) {
        return Err(Error::dim("sigma", format!("{n}x{n}"), format!("{}x{}", sigma.nrows(), sigma.ncols())));
    }
    let effective = b_hat * h;
    let f = svd(&effective)?;
    let rank = f.rank(rel_tol);
    let mut weights = Vector::zeros(n);
    for i in 0..rank {
        weights[i] = f.singulars[i].powi(-2);
    }
    let u = &f.left_basis;
    let zeta = u * Matrix::from_diagonal(&weights) * u.transpose();
    let sigma_rot = u * sigma * u.transpose();
    Ok(AgentFactorization {
        effective,
        svd: f,
        rank,
        zeta,
        sigma_rot,
    })
}

#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub delta: bool,
    /// `K_m`, `N_t × dM`; zero when inactive.
    pub gain: Matrix,
    /// `K̂_m = δ E_m K_m`, as produced by the optimiser.
    pub khat: Matrix,
    /// Objective value at the decision (0 when inactive).
    pub objective: f64,
    /// Transmit threshold `θ`.
    pub threshold: f64,
}

fn check_square(m: &Matrix, n: usize, what: &'static str) -> Result<()> {
    if m.shape() == (n, n) {
        Ok(())
    } else {
        Err(Error::dim(what, format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())))
    }
}

fn scale_rows(pi: &[f64], m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for (i, &p) in pi.iter().enumerate() {
        out.row_mut(i).scale_mut(p);
    }
    out
}

pub fn objective(
    khat: &Matrix,
    sigma: &Matrix,
    pi: &[f64],
    params: &PolicyParams,
    agents: usize,
    zeta: &Matrix,
    delta: bool,
) -> Result<f64> {
    let n = sigma.nrows();
    check_square(khat, n, "khat")?;
    check_square(sigma, n, "sigma")?;
    check_square(zeta, n, "zeta")?;
    if pi.len() != n {
        return Err(Error::dim("pi", n, pi.len()));
    }
    let ks = khat * sigma;
    let drift = -2.0 * scale_rows(pi, &ks).trace() + agents as f64 * (&ks * khat.transpose()).trace();
    let penalty = if delta {
        params.p_on + params.gamma * (khat * zeta * khat.transpose()).trace()
    } else {
        0.0
    };
    Ok(drift + penalty)
}

/// `∂f/∂K̂` at `δ = 1`: `−2ΠΣ + 2K̂(MΣ + γζ)`.
pub fn objective_gradient(
    khat: &Matrix,
    sigma: &Matrix,
    pi: &[f64],
    params: &PolicyParams,
    agents: usize,
    zeta: &Matrix,
) -> Result<Matrix> {
    let n = sigma.nrows();
    check_square(khat, n, "khat")?;
    check_square(sigma, n, "sigma")?;
    check_square(zeta, n, "zeta")?;
    if pi.len() != n {
        return Err(Error::dim("pi", n, pi.len()));
    }
    let curvature = sigma * agents as f64 + zeta * params.gamma;
    Ok(scale_rows(pi, sigma) * -2.0 + khat * curvature * 2.0)
}

/// Dense solution for a general PSD `Σ`.
pub fn solve_agent(
    sigma: &Matrix,
    b_hat: &Matrix,
    h: &Matrix,
    drift: &DriftConstants,
    params: &PolicyParams,
    agents: usize,
) -> Result<ControlDecision> {
    params.validate()?;
    let n = b_hat.nrows();
    if drift.pi.len() != n {
        return Err(Error::dim("drift constants", n, drift.pi.len()));
    }
    let fact = factorize_agent(b_hat, h, sigma, params.channel_rank_tol)?;
    let curvature = sigma * agents as f64 + &fact.zeta * params.gamma;
    let x = pseudo_inverse(&curvature, params.pinv_rel_tol)?;
    let outer = match params.threshold_form {
        ThresholdForm::Derivation => sigma,
        ThresholdForm::Rotated => &fact.sigma_rot,
    };
    let pi_outer = scale_rows(&drift.pi, outer);
    let threshold = (&pi_outer * &x * pi_outer.transpose()).trace();

    let tx = h.ncols();
    if params.p_on >= threshold {
        return Ok(ControlDecision {
            delta: false,
            gain: Matrix::zeros(tx, n),
            khat: Matrix::zeros(n, n),
            objective: 0.0,
            threshold,
        });
    }

    let khat = scale_rows(&drift.pi, sigma) * &x;
    let gain = fact.effective_pinv() * &khat;
    let value = match params.threshold_form {
        ThresholdForm::Derivation => params.p_on - threshold,
        ThresholdForm::Rotated => objective(&khat, sigma, &drift.pi, params, agents, &fact.zeta, true)?,
    };
    Ok(ControlDecision {
        delta: true,
        gain,
        khat,
        objective: value,
        threshold,
    })
}

/// `u = −K e`, zero when the agent is inactive.
pub fn control_signal(decision: &ControlDecision, e: &Vector) -> Result<Vector> {
    if decision.gain.ncols() != e.len() {
        return Err(Error::dim("error vector", decision.gain.ncols(), e.len()));
    }
    if !decision.delta {
        return Ok(Vector::zeros(decision.gain.nrows()));
    }
    Ok(-(&decision.gain * e))
}

/// Decision for `Σ = e eᵀ` without forming any `dM × dM` matrix.
#[derive(Debug, Clone)]
pub struct RankOneDecision {
    pub delta: bool,
    pub threshold: f64,
    /// `eᵀ (MΣ + γζ)^† e`; the effective correction is `K̂* e = scale · Π e`.
    pub scale: f64,
    /// Transmit signal `u = −K* e` (zero when inactive).
    pub signal: Vector,
}

/// Structured equivalent of [`solve_agent`] + [`control_signal`] for a rank-one
/// error matrix.
///
/// `E_m` is nonzero only in block row `agent`, so its SVD reduces to that of
/// the `d × N_t` block `B_m H_m`. `MΣ + γζ` lives in `span{e} + range(E_m)`;
/// with `Q = [U_r, q]` an orthonormal basis of that span the pseudoinverse is
/// `Q C^† Qᵀ` for a `(r+1) × (r+1)` matrix `C`, and every quantity the policy
/// needs is a function of `eᵀ Q C^† Qᵀ e`.
pub fn solve_agent_rank_one(
    e: &Vector,
    agent: usize,
    actuation: &Matrix,
    h: &Matrix,
    drift: &DriftConstants,
    params: &PolicyParams,
    agents: usize,
) -> Result<RankOneDecision> {
    params.validate()?;
    if params.threshold_form != ThresholdForm::Derivation {
        return Err(Error::param("threshold_form", "rank-one solver supports the derivation form only"));
    }
    let d = actuation.nrows();
    let n = e.len();
    if n != d * agents || agent >= agents {
        return Err(Error::dim("error vector", d * agents, n));
    }
    if drift.pi.len() != n {
        return Err(Error::dim("drift constants", n, drift.pi.len()));
    }
    if actuation.ncols() != h.nrows() {
        return Err(Error::dim("effective channel", actuation.ncols(), h.nrows()));
    }

    let block = actuation * h;
    let f = svd(&block)?;
    let r = f.rank(params.channel_rank_tol);
    let e_block = e.rows(agent * d, d);

    let mut coords = Vector::zeros(r + 1);
    let mut in_span = Vector::zeros(d);
    for i in 0..r {
        let ui = f.left_basis.column(i);
        let c = ui.dot(&e_block);
        coords[i] = c;
        in_span.axpy(c, &ui, 1.0);
    }
    let outside_block = e.norm_squared() - e_block.norm_squared();
    let residual = ((e_block - &in_span).norm_squared() + outside_block.max(0.0)).sqrt();
    let k = if residual > 0.0 { r + 1 } else { r };
    coords[r] = residual;
    let a = coords.rows(0, k).into_owned();

    let mut c = &a * a.transpose() * agents as f64;
    for i in 0..r {
        c[(i, i)] += params.gamma * f.singulars[i].powi(-2);
    }
    let scale = if k == 0 {
        0.0
    } else {
        let x = pseudo_inverse(&c, params.pinv_rel_tol)?;
        (a.transpose() * x * &a)[(0, 0)]
    };

    let pi_e = Vector::from_iterator(n, e.iter().zip(&drift.pi).map(|(v, p)| v * p));
    let threshold = scale * pi_e.norm_squared();
    let tx = h.ncols();
    if params.p_on >= threshold {
        return Ok(RankOneDecision {
            delta: false,
            threshold,
            scale,
            signal: Vector::zeros(tx),
        });
    }

    // u = −scale · E^† Π e, with E^† = V_r diag(1/σ) U_rᵀ on the agent block.
    let pi_e_block = pi_e.rows(agent * d, d);
    let mut signal = Vector::zeros(tx);
    for i in 0..r {
        let coef = f.left_basis.column(i).dot(&pi_e_block) / f.singulars[i];
        signal.axpy(-scale * coef, &f.right_basis_t.row(i).transpose(), 1.0);
    }
    Ok(RankOneDecision {
        delta: true,
        threshold,
        scale,
        signal,
    })
}
