//! Error taxonomy shared by the whole toolkit.
//!
//! Two failure classes matter operationally: configuration problems
//! (bad case files, invalid parameters, inconsistent requests) and
//! numerical problems (singular brackets, pole proximity, non-finite
//! values). The CLI maps them to exit codes 2 and 3 respectively.

use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration, case data or request. Messages carry the
    /// path of the offending field where one exists.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure during evaluation (singular elimination,
    /// non-finite entries, dual-form mismatch).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Numerical failure tagged with the Laplace point where it occurred.
    pub fn numerical_at(msg: impl Into<String>, s: Complex64) -> Self {
        Error::Numerical(format!("{} at s = {:e}{:+e}j", msg.into(), s.re, s.im))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
