use thiserror::Error;

/// Errors raised by the geometry, laminate, field and iteration routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("speed mismatch: |v|^2 = {found}, expected level {level}")]
    SpeedMismatch { found: f64, level: f64 },
    #[error("degenerate pair: b = ±a")]
    DegeneratePair,
    #[error("state is not interior to the convex hull (gap {gap})")]
    NotInterior { gap: f64 },
    #[error("zero velocity is excluded from the wave cone here")]
    ZeroVelocity,
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("state does not lie on the segment [z1, z2] (offset {offset:e})")]
    NotOnSegment { offset: f64 },
    #[error("direction is not in the wave cone")]
    NotLambdaDirection,
    #[error("slice coordinate c = {c} out of range for level {r}")]
    SliceOutOfRange { c: f64, r: f64 },
    #[error("point ({a}, {b}, {c}) is not in the closed slice region at level {r}")]
    NotInClosure { a: f64, b: f64, c: f64, r: f64 },
    #[error("state carries no generator certificate")]
    NoProvenance,
    #[error("no admissible level found below {r} within epsilon {eps}")]
    EpsilonTooSmall { r: f64, eps: f64 },
    #[error("direction is not in the wave cone")]
    NotInWaveCone,
    #[error("tolerance unreachable: frequency cap {cap} hit ({detail})")]
    ToleranceUnreachable { cap: u32, detail: String },
    #[error("unknown flow '{0}'")]
    UnknownFlow(String),
    #[error("energy profile too small: e - |v0|^2 = {slack} below margin {margin}")]
    ProfileTooSmall { slack: f64, margin: f64 },
    #[error("stage stalled: defect decrease {decrease:e} below floor {floor:e}")]
    StageStalled { decrease: f64, floor: f64 },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("state is not on the boundary of the convex hull (gap {gap:e})")]
    NotOnBoundary { gap: f64 },
    #[error("state lies on the constraint set")]
    OnConstraintSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
