use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    BadInput(String),

    #[error("frictionless value is infinite: {0}")]
    InfiniteValue(String),

    #[error("no-trade region is degenerate: {0}")]
    DegenerateRegion(String),

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("root finder did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("Riccati residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("portfolio became insolvent: wealth {wealth} cannot cover fixed cost {cost}")]
    Insolvent { wealth: f64, cost: f64 },

    #[error("estimate is not positive: {0}")]
    NonPositiveEstimate(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::ResidualTooLarge { .. }
                | Error::Insolvent { .. }
                | Error::NonPositiveEstimate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn bad_input(msg: impl Into<String>) -> Error {
    Error::BadInput(msg.into())
}
