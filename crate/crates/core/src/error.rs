use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "quadrature did not converge on [{lower}, {upper}]: achieved error estimate {achieved:e}"
    )]
    Quadrature {
        lower: f64,
        upper: f64,
        achieved: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    /// The upstream node's decisions carry no positive evidence for the
    /// transmitted symbol under the current prior.
    #[error("uninformative relay: odds numerator {numerator:e}, denominator {denominator:e}")]
    UninformativeRelay { numerator: f64, denominator: f64 },

    #[error("hypotheses are indistinguishable (equal means and variances)")]
    IndistinguishableHypotheses,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::UninformativeRelay { .. }
                | Error::IndistinguishableHypotheses
        )
    }
}
