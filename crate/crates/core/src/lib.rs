//! Semantic communication and cooperative tracking control for a leader/follower
//! swarm whose control links are random MIMO fading channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: SVD, Moore–Penrose pseudoinverse and spectral norm.
//! - [`swarm`]: static system matrices and the plant/target recursions.
//! - [`channel`]: fading draws, pilot-based estimation and noisy reception.
//! - [`policy`]: drift constants and the closed-form communication/control policy.
//! - [`stability`]: drift bound, Monte Carlo drift and the coverage-mask stability test.
//! - [`baselines`]: periodic/state-triggered PID and the static Riccati gain.
//! - [`sim`]: the per-timeslot closed loop, γ calibration and parameter sweeps.
//! - [`report`]: CSV and JSON emission for the above.

pub mod baselines;
pub mod channel;
mod error;
pub mod numerics;
pub mod policy;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stability;
pub mod swarm;

pub use error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
