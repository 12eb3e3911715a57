//! Command-line front end and read-only HTTP service for explanation
//! summaries.

pub mod args;
pub mod bench;
pub mod commands;
pub mod service;

use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const INTERNAL: i32 = 4;
}

/// An error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::INPUT,
            source: e.into(),
        }
    }

    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::CONFIG,
            source: e.into(),
        }
    }

    pub fn internal(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::INTERNAL,
            source: e.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<explsum::Error> for CliError {
    fn from(e: explsum::Error) -> Self {
        use explsum::Error as E;
        let code = match &e {
            E::Io(_) | E::Json(_) | E::Csv(_) | E::Parse(_) | E::Shape(_) | E::InvalidValue(_) | E::EmptyMatrix => {
                exit::INPUT
            }
            E::UnmappedFeature(_) | E::NotFound(_) => exit::INPUT,
            E::Config(_) | E::TooLarge { .. } => exit::CONFIG,
            _ => exit::INTERNAL,
        };
        Self { code, source: e.into() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
