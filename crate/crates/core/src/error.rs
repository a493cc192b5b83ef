use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height} for {len} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("affine transform is singular (determinant {0})")]
    SingularTransform(f64),
    #[error("cannot reduce an empty stack")]
    EmptyStack,
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("no embryo found: largest component covers {fraction:.4} of the frame")]
    NoEmbryo { fraction: f64 },
    #[error("shape has no dominant axis (eigenvalues {major:.3} and {minor:.3})")]
    DegenerateShape { major: f64, minor: f64 },
    #[error("warped moving image does not overlap the fixed frame")]
    NoOverlap,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("atlas probability map never reaches 1.0")]
    AtlasDegenerate,
    #[error("start row {start_row} lies below the minimal radius {r_min}")]
    InfeasibleStart { start_row: usize, r_min: usize },
    #[error("rasterized contour does not enclose the center")]
    OpenContour,
    #[error("region is empty")]
    EmptyRegion,
    #[error("shape has zero perimeter")]
    DegeneratePerimeter,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("too few samples: class {class} has {count}, need at least {needed}")]
    TooFewSamples {
        class: &'static str,
        count: usize,
        needed: usize,
    },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("phantom does not fit in the frame: {0}")]
    SpecOutOfFrame(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
