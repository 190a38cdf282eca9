//! Error type shared by every command.
//!
//! Each failure carries a category that decides both the process exit code
//! and the machine-readable prefix of the single diagnostic line printed to
//! stderr: `error[<category>]: <detail>`.

use std::fmt;
use std::path::Path;

/// What went wrong, at the granularity the exit code contract cares about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Malformed or inconsistent input: bad flags, unreadable records,
    /// matrix violations, shape mismatches. Exit code 2.
    Input(String),
    /// The fit finished degenerate and `--fail-on-degenerate` was set.
    /// Exit code 3.
    Degenerate(String),
    /// Filesystem trouble reading or writing, always with path context.
    /// Exit code 4.
    Io(String),
}

impl CliError {
    pub fn input(detail: impl Into<String>) -> Self {
        Self::Input(detail.into())
    }

    pub fn degenerate(detail: impl Into<String>) -> Self {
        Self::Degenerate(detail.into())
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::Io(format!("{}: {}", path.display(), err))
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Input(_) => "input",
            Self::Degenerate(_) => "degenerate",
            Self::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::Degenerate(_) => 3,
            Self::Io(_) => 4,
        }
    }

    fn detail(&self) -> &str {
        match self {
            Self::Input(d) | Self::Degenerate(d) | Self::Io(d) => d,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep the diagnostic on one line even if the detail contains
        // newlines from a wrapped source error.
        let detail = self.detail().replace('\n', " ");
        write!(f, "error[{}]: {}", self.category(), detail)
    }
}

impl std::error::Error for CliError {}
