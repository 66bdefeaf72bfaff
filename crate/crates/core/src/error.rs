//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SheafError {
    #[error("graph error: {0}")]
    Graph(String),

    #[error("dimension mismatch at {location}: expected {expected}, got {found}")]
    Conformance {
        location: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid restriction map for ({vertex}, {edge}): {reason}")]
    Restriction {
        vertex: String,
        edge: String,
        reason: String,
    },

    #[error("stubborn basis at {vertex} is not orthonormal (deviation {deviation:.3e})")]
    NonOrthonormalBasis { vertex: String, deviation: f64 },

    #[error("({vertex}, {edge}) is not an incidence of the graph")]
    NotAnIncidence { vertex: String, edge: String },

    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("edge policy error on {edge}: {reason}")]
    Policy { edge: String, reason: String },

    #[error(
        "solvability violation: Poisson residual {residual:.3e} exceeds tolerance {tolerance:.3e}"
    )]
    Solvability { residual: f64, tolerance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("flow did not converge before t = {t_max}: residual velocity {residual:.3e}")]
    NonConvergence { t_max: f64, residual: f64 },

    #[error("divergence ceiling hit at t = {time}: {quantity} = {value:.3e} exceeds {ceiling:.3e} (bounded-trajectory guarantee requires every edge Type S)")]
    DivergenceCeiling {
        time: f64,
        quantity: &'static str,
        value: f64,
        ceiling: f64,
    },

    #[error("model format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("trajectory has too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<V> = std::result::Result<V, SheafError>;
