//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Span endpoints do not chain into the requested topology.
    #[error("incompatible spans: {0}")]
    IncompatibleSpans(String),
    /// A span has no loss entry for the requested wavelength band.
    #[error("missing calibration: {0}")]
    MissingCalibration(String),
    /// A sample interval or rate is non-positive or otherwise unusable.
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    /// Wind speed input contained a negative sample.
    #[error("negative wind speed at sample {index}: {value} mph")]
    NegativeWind { index: usize, value: f64 },
    /// The trace sample rate cannot resolve the requested feature.
    #[error("sample rate too low: {0}")]
    RateTooLow(String),
    /// Not enough samples for the operation.
    #[error("trace too short: {0}")]
    TooShort(String),
    /// Decimation target above the native rate.
    #[error("target rate {target} Hz exceeds native rate {native} Hz")]
    RateTooHigh { target: f64, native: f64 },
    /// Fit input carries no usable leverage (constant x, too few points).
    #[error("degenerate fit input: {0}")]
    DegenerateInput(String),
    /// No spectrum bins inside the requested frequency range.
    #[error("empty frequency range: {0}")]
    RangeEmpty(String),
    /// Interpolation target lies outside the source span.
    #[error("target outside series span: {0}")]
    OutOfRange(String),
    /// Malformed input file.
    #[error("parse error in {path}: {message}")]
    ParseError { path: String, message: String },
    /// A parsed series contained no usable samples.
    #[error("empty series: {0}")]
    EmptySeries(String),
    /// The requested codebook does not fit the word length.
    #[error("codebook capacity exceeded: {0}")]
    CapacityExceeded(String),
    /// Received word length differs from the codebook word length.
    #[error("word length mismatch: expected {expected} symbols, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// Interferometer delay does not match the qubit bin spacing.
    #[error("TDI delay mismatch: {0}")]
    DelayMismatch(String),
    /// The fringe error stayed outside the capture range for too long.
    #[error("TDI lock lost: {0}")]
    LockLost(String),
    /// Sent and measured sequences differ in length.
    #[error("misaligned sequences: {0}")]
    Misaligned(String),
    /// Too many clock words failed to decode.
    #[error("receiver desynchronized: {0}")]
    DesyncError(String),
    /// A trace's unit tag does not match the operation's contract.
    #[error("unit mismatch: expected {expected}, got {got}")]
    UnitMismatch { expected: String, got: String },
    /// Qubit amplitudes are not normalized.
    #[error("invalid qubit: {0}")]
    InvalidQubit(String),
    /// A Stokes triple is not on the Poincare sphere.
    #[error("Stokes vector norm {0} is not unity")]
    NotUnitNorm(f64),
    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Constructed trace would hold no samples.
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
