use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolexError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below tolerance -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("non-finite quadrature integrand at t={t}, x={x:?}")]
    Quadrature { t: f64, x: Vec<f64> },

    #[error("simulation blow-up at t={t}, x={x:?}, a={a:?}")]
    BlowUp { t: f64, x: Vec<f64>, a: Vec<f64> },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PolexError {
    /// True for failures produced by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PolexError::NotPsd { .. } | PolexError::Quadrature { .. } | PolexError::BlowUp { .. }
        )
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        PolexError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, PolexError>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PolexError::Dimension {
            what,
            expected,
            got,
        })
    }
}
