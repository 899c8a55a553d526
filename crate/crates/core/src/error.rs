use thiserror::Error;

/// Errors raised while building or evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("{what} = {value} is outside the domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The model definition itself is unusable (bad parameters, negative hazards, ...).
    #[error("invalid model: {0}")]
    Model(String),

    /// A limit sequence neither converged nor diverged monotonically.
    #[error("limit did not converge; sampled values {values:?}")]
    NonConvergent { values: Vec<f64> },

    /// A diagonal hazard-ratio limit is infinite.
    #[error("hazard ratio diverges at the left endpoint of the support")]
    Divergent,

    #[error("quadrature did not reach tolerance (estimate {estimate}, error bound {error})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("absolutely continuous density undefined: {0}")]
    UndefinedDensity(String),

    /// Negative density beyond noise level; the model is not a distribution.
    #[error("negative density {value:e} at ({x1}, {x2})")]
    NegativeDensity { x1: f64, x2: f64, value: f64 },

    #[error("singular component undefined: {0}")]
    UndefinedComponent(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            expected: "finite",
        })
    }
}
