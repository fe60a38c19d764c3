use thiserror::Error;

/// Errors produced by the sensing library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A codeword or grid index is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Array or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An IRS phase vector contains an entry that is not unit modulus.
    #[error("IRS phase entry {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },

    /// A Fisher information block could not be inverted.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// The localization radicand is negative.
    #[error("infeasible location estimate: radicand {0}")]
    InfeasibleLocation(f64),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
