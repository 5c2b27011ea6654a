//! MIMO fading links between the leader and each follower.
//!
//! Each follower `m` sees `û_m = δ_m H_m u_m + v_m` with `H_m` an `N_r × N_t`
//! matrix of i.i.d. standard normals, redrawn every timeslot, and
//! `v_m ~ N(0, I)`. Before the decision the leader sends the pilot
//! `T = √p · I_{N_t}`; the follower receives `Y = H T + V` and feeds back the
//! least-squares estimate `Ĥ = Y Tᵀ (T Tᵀ)⁻¹ = Y / √p`.

use rand::Rng;

use crate::rng::{normal_matrix, normal_vector};
use crate::{Error, Matrix, Result, Vector};

pub const DEFAULT_PILOT_POWER: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub per_agent: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub per_agent: Vec<Matrix>,
    pub pilot_power: f64,
}

pub fn draw_channels<R: Rng + ?Sized>(rng: &mut R, agents: usize, rx_dim: usize, tx_dim: usize) -> ChannelRealization {
    ChannelRealization {
        per_agent: (0..agents).map(|_| normal_matrix(rng, rx_dim, tx_dim)).collect(),
    }
}

fn check_pilot_power(pilot_power: f64) -> Result<()> {
    if pilot_power > 0.0 && pilot_power.is_finite() {
        Ok(())
    } else {
        Err(Error::param("pilot_power", format!("must be finite and > 0, got {pilot_power}")))
    }
}

/// Least-squares estimate from an explicit pilot-noise matrix `V` (`N_r × N_t`).
pub fn estimate_with_noise(h: &Matrix, pilot_power: f64, pilot_noise: &Matrix) -> Result<Matrix> {
    check_pilot_power(pilot_power)?;
    if pilot_noise.shape() != h.shape() {
        return Err(Error::dim(
            "pilot noise",
            format!("{}x{}", h.nrows(), h.ncols()),
            format!("{}x{}", pilot_noise.nrows(), pilot_noise.ncols()),
        ));
    }
    let amplitude = pilot_power.sqrt();
    let received = h * amplitude + pilot_noise;
    // With T = √p·I the LS solution Y Tᵀ(TTᵀ)⁻¹ reduces to a scaling.
    Ok(received / amplitude)
}

/// Pilot-based estimate of a single link with unit-variance pilot noise.
pub fn estimate_channel<R: Rng + ?Sized>(h: &Matrix, pilot_power: f64, rng: &mut R) -> Result<Matrix> {
    let noise = normal_matrix(rng, h.nrows(), h.ncols());
    estimate_with_noise(h, pilot_power, &noise)
}

impl ChannelEstimate {
    /// Estimates every link; pilot noise is scaled by `noise_std`.
    pub fn from_realization<R: Rng + ?Sized>(
        truth: &ChannelRealization,
        pilot_power: f64,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let per_agent = truth
            .per_agent
            .iter()
            .map(|h| {
                let noise = normal_matrix(rng, h.nrows(), h.ncols()) * noise_std;
                estimate_with_noise(h, pilot_power, &noise)
            })
            .collect::<Result<_>>()?;
        Ok(Self { per_agent, pilot_power })
    }

    /// Perfect CSI.
    pub fn exact(truth: &ChannelRealization) -> Self {
        Self {
            per_agent: truth.per_agent.clone(),
            pilot_power: f64::INFINITY,
        }
    }
}

pub fn receive_with_noise(delta: bool, h: &Matrix, u: &Vector, noise: &Vector) -> Result<Vector> {
    if u.len() != h.ncols() {
        return Err(Error::dim("transmit signal", h.ncols(), u.len()));
    }
    if noise.len() != h.nrows() {
        return Err(Error::dim("channel noise", h.nrows(), noise.len()));
    }
    if delta {
        Ok(h * u + noise)
    } else {
        Ok(noise.clone())
    }
}

/// `û = δ H u + v`, `v ~ N(0, I_{N_r})`.
pub fn receive_control<R: Rng + ?Sized>(delta: bool, h: &Matrix, u: &Vector, rng: &mut R) -> Result<Vector> {
    let v = normal_vector(rng, h.nrows());
    receive_with_noise(delta, h, u, &v)
}
