use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Weyl group enumeration exceeded {0} elements")]
    GroupTooLarge(usize),
    #[error("invalid Cartan data: {0}")]
    InvalidCartan(String),
    #[error("Teichmüller parameter must have tau2 > 1e-9 (got {0})")]
    DegenerateTau(f64),
    #[error("level must have k >= 1 (got {0})")]
    InvalidLevel(i64),
    #[error("frame matrix is singular (condition number {0:e})")]
    SingularFrame(f64),
    #[error("sections live on different bases or parameters")]
    BasisMismatch,
    #[error("operation needs degree headroom: input degree {degree}, allowed {allowed}")]
    DegreeOverflow { degree: usize, allowed: usize },
    #[error("lattice sum tail {estimate:e} exceeds tolerance {tolerance:e}")]
    TailTooLarge { estimate: f64, tolerance: f64 },
    #[error("quadrature did not converge: node doubling changed the result by {0:e}")]
    QuadratureDiverged(f64),
    #[error("finite-difference derivative did not converge (spread {0:e})")]
    NotDifferentiable(f64),
    #[error("step halving changed the endpoint by {0:e}")]
    StepUnstable(f64),
    #[error("pairing diverged: {0}")]
    PairingDiverged(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("file format error: {0}")]
    FileFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
