use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Denjoy–Wolff value has modulus {modulus} > 1 at t = {t}")]
    TauModulus { t: f64, modulus: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {t} is not on the tabulated grid")]
    MissingTime { t: f64 },

    #[error("φ'_{{0,t}}(0) vanished at t = {t}; the integration has lost univalence")]
    DegenerateDerivative { t: f64 },

    #[error("integration failed for the origin trajectory at t = {t}: {reason}")]
    OriginLost { t: f64, reason: String },

    #[error("deviation bound violated: measured {measured} > bound {bound}")]
    BoundViolation { measured: f64, bound: f64 },

    #[error("atlas rejected: {0}")]
    AtlasRejected(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
