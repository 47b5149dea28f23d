//! CLI failure classes: config, io, numeric. Each maps to its own exit code
//! and a single-line diagnostic.

use std::fmt;

use fiberq::Error as CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Io => "io",
            ErrorClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError {
            class,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error({}): {}", self.class.label(), self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let class = match &e {
            CoreError::ParseError { .. }
            | CoreError::MissingCalibration(_)
            | CoreError::IncompatibleSpans(_)
            | CoreError::InvalidParameter(_)
            | CoreError::EmptySeries(_)
            | CoreError::CapacityExceeded(_) => ErrorClass::Config,
            CoreError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorClass::Io, e.to_string())
    }
}
