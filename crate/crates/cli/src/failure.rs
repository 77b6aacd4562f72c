use std::fmt;

use nlch_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;
pub const EXIT_BLOWUP: u8 = 4;
pub const EXIT_PARSE: u8 = 5;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(EXIT_VALIDATION, message)
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        Self::new(EXIT_INTERNAL, format!("{context}: {e}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_)
            | Error::IndexOutOfRange { .. }
            | Error::GridTooLarge { .. }
            | Error::AssumptionViolation { .. }
            | Error::ShapeMismatch(_)
            | Error::LineageMismatch(_) => EXIT_VALIDATION,
            Error::BlowUp { .. } | Error::Trajectory(_) => EXIT_BLOWUP,
            Error::Format(_) => EXIT_PARSE,
            Error::Io(_) => EXIT_INTERNAL,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_INTERNAL, e.to_string())
    }
}
