use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the model, fitting, or harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("wavelength {wavelength_nm:.1} nm outside the supported range [{min_nm:.1}, {max_nm:.1}] nm")]
    WavelengthOutOfRange {
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("evanescent longitudinal component: |k_perp| = {k_perp:.6e} rad/m exceeds the propagating limit")]
    Evanescent { k_perp: f64 },

    #[error("no phase-matching solution in the search bracket: {0}")]
    NoPhaseMatching(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate:.6e}, residual {residual:.3e})")]
    Quadrature {
        estimate: f64,
        residual: f64,
        subdivisions: usize,
    },

    #[error("degenerate optical train: {0}")]
    DegenerateTrain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit did not converge after {iterations} iterations; last relative step {last_step:.3e}")]
    FitNotConverged {
        iterations: usize,
        last_step: f64,
        trace: Vec<[f64; 4]>,
    },

    #[error("dispersion data: {0}")]
    Dispersion(String),

    #[error("config: {0}")]
    Config(String),

    #[error("sweep aborted at alpha_p = {alpha_p_deg} deg: {source}")]
    SweepAngle {
        alpha_p_deg: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
