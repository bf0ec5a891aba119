use std::fmt;

/// Process exit codes. Usage errors (unknown subcommand, bad flags) exit
/// with clap's code 2.
pub mod code {
    pub const FAILURE: u8 = 1;
    pub const INVALID_CONFIG: u8 = 3;
    pub const MISSING_ARTIFACT: u8 = 4;
    pub const CORRUPT_ARTIFACT: u8 = 5;
    pub const TRAINING_FAILED: u8 = 6;
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<csikd::Error> for CliError {
    fn from(e: csikd::Error) -> Self {
        use csikd::Error as E;
        let code = match &e {
            E::InvalidConfig(_)
            | E::Json(_)
            | E::ShapeMismatch(_)
            | E::DomainMismatch { .. }
            | E::InvalidTemperature(_) => code::INVALID_CONFIG,
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => code::MISSING_ARTIFACT,
            E::Format { .. } | E::SpecHashMismatch(_) => code::CORRUPT_ARTIFACT,
            E::Diverged { .. }
            | E::DegenerateBatch
            | E::DegenerateReference(_)
            | E::MissingGradient(_)
            | E::NonScalarLoss(_) => code::TRAINING_FAILED,
            E::Io { .. } | E::Csv(_) => code::FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
