use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid parameter `{name}` for {kind}: {reason}")]
    InvalidParameter {
        kind: String,
        name: String,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// dg/dz is numerically singular: the state is at (or close to) the impasse surface.
    #[error("algebraic Jacobian dg/dz is singular (reciprocal condition {rcond:.3e})")]
    SingularAlgebraicJacobian { rcond: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    /// Natural continuation lost the branch at `value` of the pinned state.
    #[error("continuation diverged at {parameter} = {value} after {iterations} iterations (residual {residual:.3e})")]
    ContinuationDiverged {
        parameter: String,
        value: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("Newton matrix is rank deficient (sigma_min {sigma_min:.3e}); pin a continuum parameter")]
    RankDeficientWithoutPin { sigma_min: f64 },

    #[error("dg/dx2 lost full column rank at sample {sample}")]
    RankDeficiency { sample: usize },

    #[error("window of {window} s exceeds the trajectory span of {span} s")]
    WindowTooLong { window: f64, span: f64 },

    #[error("no certificate available for device kind `{0}`")]
    UnknownDeviceKind(String),

    #[error("system is not modular structured: {0}")]
    NotModular(String),

    #[error("LMI infeasible after {iterations} iterations (best objective {best:.3e})")]
    Infeasible { iterations: usize, best: f64 },

    #[error("claim unavailable: {0}")]
    ClaimUnavailable(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("missing section `{0}`")]
    MissingSection(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
