use thiserror::Error;

/// Errors raised by the library.
///
/// The variants split along the CLI exit-code contract: [`Error::Input`] and
/// [`Error::Io`] are caller mistakes, everything else is a numeric or
/// calibration failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("quantile lies in the atom at zero (p = {p}, zero mass = {zero_mass})")]
    QuantileInAtom { p: f64, zero_mass: f64 },

    #[error("Stieltjes iteration did not converge at x = {abscissa}")]
    NoConvergence { abscissa: f64 },

    #[error("inversion failed: negative density {density} at x = {abscissa}")]
    InversionFailed { abscissa: f64, density: f64 },

    #[error("quadrature did not converge (achieved tolerance {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("privatized trace collapsed to zero")]
    TraceCollapsed,

    #[error("logarithm singularity: privatized eigenvalue {index} is exactly zero")]
    LogSingularity { index: usize },

    #[error("degenerate calibration: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure is attributable to the caller's input rather than
    /// to the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
