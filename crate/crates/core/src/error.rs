use thiserror::Error;

/// Errors from the closed-form and Monte Carlo layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument fell outside its admissible range.
    #[error("parameter `{name}` out of range: got {value}, expected {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
