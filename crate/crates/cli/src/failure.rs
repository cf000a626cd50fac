use std::fmt;

use docbot::Error;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const MODEL: u8 = 3;

impl Failure {
    pub fn usage(message: impl fmt::Display) -> Self {
        Failure {
            code: USAGE,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Failure {
            code: DATA,
            message: message.to_string(),
        }
    }

    pub fn model(message: impl fmt::Display) -> Self {
        Failure {
            code: MODEL,
            message: message.to_string(),
        }
    }

    /// The message on one line.
    pub fn line(&self) -> String {
        self.message.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Usage(_) => USAGE,
            Error::Shape { .. } | Error::Training(_) | Error::Model(_) | Error::Scoring(_) | Error::Evaluation(_) => {
                MODEL
            }
            _ => DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e)
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;
