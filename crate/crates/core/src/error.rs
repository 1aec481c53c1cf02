use thiserror::Error;

/// Errors raised by the samplers, special functions and file handling.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// An iterative numerical method failed to reach its tolerance.
    #[error("numerical failure in {func}: {detail}")]
    Numeric { func: &'static str, detail: String },

    /// The rejection sampler for ν exhausted its proposal budget.
    #[error("rejection sampler exceeded {cap} proposals (eta={eta}, n={n}, xi*={xi_star})")]
    RejectionCap {
        cap: u64,
        eta: f64,
        n: usize,
        xi_star: f64,
    },

    /// A chain produced no variation, so a diagnostic is undefined.
    #[error("degenerate chain: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            func,
            detail: detail.into(),
        }
    }

    /// True for failures of numerical iterations (as opposed to bad input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric { .. } | Error::RejectionCap { .. } | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
