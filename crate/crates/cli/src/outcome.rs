//! Exit-code classification: 0 success, 1 data or partial failure,
//! 2 usage or configuration error.

use std::fmt::Display;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some inputs failed; the rest were processed.
    Partial,
}

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

pub type CmdResult = Result<Status, Failure>;

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Data(_) => ExitCode::from(1),
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) => e,
        }
    }
}

impl Status {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Status::Success => ExitCode::SUCCESS,
            Status::Partial => ExitCode::from(1),
        }
    }
}

/// Tags an error with its exit class, adding context.
pub trait Classify<T> {
    fn usage(self, context: impl Display) -> Result<T, Failure>;
    fn data(self, context: impl Display) -> Result<T, Failure>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn usage(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into().context(context.to_string())))
    }

    fn data(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into().context(context.to_string())))
    }
}
