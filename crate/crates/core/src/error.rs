//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong while building or analysing a tube.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (non-unit
    /// direction, non-tangent vector, bad dimension, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Array lengths do not match what the operation expects.
    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Invalid family parameters passed to a generator.
    #[error("invalid parameters for family `{family}`: {reason}")]
    Params { family: String, reason: String },

    /// A horizontal section failed the ovaloid test.
    #[error("invalid tube: section at z = {z} is not an ovaloid (margin {margin:.3e})")]
    InvalidTube { z: f64, margin: f64 },

    /// A generator would produce a degenerate cross-section (e.g. a cone apex
    /// inside the height window).
    #[error("degenerate section: {0}")]
    DegenerateSection(String),

    /// The tilted-plane height equation is not a contraction, or the solution
    /// leaves the height window.
    #[error("tilt too large: contraction factor {guard:.3e} (must stay below {limit})")]
    TiltTooLarge { guard: f64, limit: f64 },

    /// Gauss-map inversion failed on a tilted section.
    #[error("tilted section is not an ovaloid: {0}")]
    SectionNotOvaloid(String),

    /// Invalid configuration record.
    #[error("configuration error: {0}")]
    Config(String),

    /// The r(z)^2 profile is not fitted by a quadratic polynomial.
    #[error("profile is not a quadric: fit residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotQuadric { residual: f64, tolerance: f64 },

    /// Internal consistency violation, e.g. an indefinite quadratic form that
    /// fits a support function almost exactly.
    #[error("inconsistent data: {0}")]
    Inconsistency(String),

    /// Malformed input document; `path` locates the offending field.
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
