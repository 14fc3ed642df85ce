use thiserror::Error;

/// Errors produced by the coordinate-field pipeline.
#[derive(Debug, Error)]
pub enum PcfError {
    #[error("degenerate barycentric coordinate system (|signed area| = {area:e})")]
    DegenerateBcs { area: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("insufficient data: need at least {needed} entries, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("singular homography")]
    SingularHomography,
    #[error("singular affine map")]
    SingularAffine,
    #[error("flow field has no valid pixel")]
    EmptyFlow,
    #[error("no candidate origin: every non-excluded pooled density is zero")]
    NoCandidate,
    #[error("could not sample a non-degenerate triangle after {attempts} attempts")]
    DegenerateAfterRetries { attempts: usize },
    #[error("flow is invalid at BCS vertex ({x}, {y})")]
    InvalidFlowAtVertex { x: f64, y: f64 },
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("coordinate set is empty")]
    EmptySet,
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("every minimal sample was degenerate")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bad magic in {format} data")]
    BadMagic { format: &'static str },
    #[error("truncated {format} data: expected {expected} bytes, found {found}")]
    TruncatedFile {
        format: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unsupported {format} content: {detail}")]
    Unsupported {
        format: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PcfError> = std::result::Result<T, E>;
