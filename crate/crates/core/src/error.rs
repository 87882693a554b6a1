use thiserror::Error;

/// Errors raised by field construction, quadrature, and the scattering pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An adaptive rule ran out of budget before meeting its tolerance.
    #[error("quadrature did not converge: estimated error {estimate:.3e} exceeds target {target:.3e} after {evaluations} evaluations")]
    Accuracy {
        estimate: f64,
        target: f64,
        evaluations: usize,
    },

    #[error("probe geometry: {0}")]
    Geometry(String),

    #[error("frequency too low: lambda = {lambda} < |xi| = {xi_norm}")]
    FrequencyTooLow { lambda: f64, xi_norm: f64 },

    #[error("singular kernel: {0}")]
    Singularity(String),

    #[error("point outside admissible domain: {0}")]
    Domain(String),

    /// The oscillatory rule would need more samples per axis than allowed.
    #[error("insufficient resolution on {axis} axis: need {required} points ({points_per_wavelength:.2} per wavelength at wavenumber {wavenumber:.3}), limit is {limit}")]
    Resolution {
        axis: &'static str,
        required: usize,
        limit: usize,
        wavenumber: f64,
        points_per_wavelength: f64,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
