use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    RiccatiDivergence {
        iterations: usize,
        residual: f64,
        /// Residuals sampled along the iteration, oldest first.
        trace: Vec<f64>,
    },

    #[error("power budget {target:e} W unreachable: achievable range [{min:e}, {max:e}] W")]
    BudgetUnreachable { target: f64, min: f64, max: f64 },

    #[error("topology document: {0}")]
    Topology(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::RiccatiDivergence { .. } | Error::BudgetUnreachable { .. }
        )
    }
}
