use std::fmt;

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Usage,
            source: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Data,
            source: anyhow::anyhow!("{msg}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<brainsynth::Error> for CliError {
    fn from(e: brainsynth::Error) -> Self {
        Self {
            kind: ExitKind::Data,
            source: e.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches context and an exit class to fallible calls.
pub trait Classify<T> {
    fn usage_err(self, ctx: impl fmt::Display) -> CliResult<T>;
    fn data_err(self, ctx: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage_err(self, ctx: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Usage,
            source: e.into().context(ctx.to_string()),
        })
    }

    fn data_err(self, ctx: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Data,
            source: e.into().context(ctx.to_string()),
        })
    }
}
