use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector or matrix sizes disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// Dimension must be at least one.
    EmptyDimension,
    /// A diagonal entry of the scale factor is not strictly positive.
    NonPositiveDiagonal { index: usize, value: f64 },
    /// The scale factor has a non-zero entry above the diagonal.
    NotLowerTriangular { row: usize, col: usize },
    /// The dense scale matrix is not symmetric positive definite.
    NotPositiveDefinite,
    /// q > 1 is the heavy-tailed (Pearson VII) regime, which is not supported.
    HeavyTailedRegime { q: f64 },
    /// q lies strictly between 1 − 1e−8 and 1, where (R² − s)^m is numerically meaningless.
    QTooCloseToOne { q: f64 },
    /// A parameter is NaN or infinite.
    NonFinite { what: &'static str },
    /// An operation that needs a bounded support was called on the Gaussian limit.
    GaussianLimit { operation: &'static str },
    /// Only escort orders 0 and 1 have a radial Beta law exposed.
    UnsupportedOrder { order: u32 },
    /// Shape parameters of a Beta or Gamma law must be positive.
    InvalidShape { alpha: f64, beta: f64 },
    /// Sample count must be positive.
    EmptySample,
    /// Batch was drawn from a different law than the estimator requires.
    SourceMismatch { expected: &'static str, found: &'static str },
    /// The test function does not provide a required derivative.
    MissingDerivative { what: &'static str },
    /// The quadrature oracle only handles one and two dimensions.
    OracleDimension { dim: usize },
    /// The two closed forms of R² disagreed beyond 1e−10 relative.
    RadiusFormsDisagree { compact: f64, expanded: f64 },
    /// A finite-difference step could not keep Σ positive definite.
    PerturbationFailed,
    /// Index outside the parameter range.
    IndexOutOfRange { index: usize, len: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::EmptyDimension => f.write_str("dimension must be at least 1"),
            Error::NonPositiveDiagonal { index, value } => write!(
                f,
                "scale factor diagonal entry {index} is {value}, must be strictly positive"
            ),
            Error::NotLowerTriangular { row, col } => {
                write!(f, "scale factor entry ({row}, {col}) lies above the diagonal and must be zero")
            }
            Error::NotPositiveDefinite => {
                f.write_str("scale matrix is not symmetric positive definite")
            }
            Error::HeavyTailedRegime { q } => write!(
                f,
                "q = {q} > 1 selects the heavy-tailed Pearson VII regime, which is not supported \
                 (future work); use q < 1 or q = 1"
            ),
            Error::QTooCloseToOne { q } => write!(
                f,
                "q = {q} lies in (1 - 1e-8, 1); use q <= 1 - 1e-8 or exactly q = 1 for the Gaussian limit"
            ),
            Error::NonFinite { what } => write!(f, "{what} must be finite"),
            Error::GaussianLimit { operation } => {
                write!(f, "{operation} needs a bounded support, but q = 1 is the Gaussian limit")
            }
            Error::UnsupportedOrder { order } => {
                write!(f, "escort order {order} unsupported, expected 0 or 1")
            }
            Error::InvalidShape { alpha, beta } => {
                write!(f, "shape parameters must be positive, got ({alpha}, {beta})")
            }
            Error::EmptySample => f.write_str("sample count must be at least 1"),
            Error::SourceMismatch { expected, found } => {
                write!(f, "batch source mismatch: expected {expected} draws, found {found}")
            }
            Error::MissingDerivative { what } => write!(f, "test function has no {what}"),
            Error::OracleDimension { dim } => write!(
                f,
                "quadrature oracle supports dimensions 1 and 2 only, got {dim}"
            ),
            Error::RadiusFormsDisagree { compact, expanded } => write!(
                f,
                "radius forms disagree: compact {compact} vs expanded {expanded}"
            ),
            Error::PerturbationFailed => {
                f.write_str("finite-difference perturbation breaks positive definiteness")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
        }
    }
}

impl core::error::Error for Error {}
