use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum ReaxError {
    #[error("{path}: line {line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: no atoms")]
    NoAtoms { path: String },

    #[error("{path}: line {line}: unknown element '{element}'")]
    UnknownElement {
        path: String,
        line: usize,
        element: String,
    },

    #[error("{path}: box missing")]
    MissingBox { path: String },

    #[error("missing required key '{key}'")]
    MissingKey { key: String },

    #[error("atom type '{element}' is missing required key '{key}'")]
    MissingTypeKey { element: String, key: String },

    #[error("pair {a}-{b}: conflicting entries for '{key}' ({first} vs {second})")]
    ConflictingPair {
        a: String,
        b: String,
        key: String,
        first: f64,
        second: f64,
    },

    #[error("bond cutoff exceeds nonbonded cutoff ({r_bond} > {r_nonb})")]
    BondCutoffExceedsNonbonded { r_bond: f64, r_nonb: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("box length {length} on axis {axis} is too small (need at least {required})")]
    BoxTooSmall {
        axis: usize,
        length: f64,
        required: f64,
    },

    #[error("replicated atom count {requested} exceeds maximum {max}")]
    AtomCountOverflow { requested: usize, max: usize },

    #[error("atom {atom}: bond capacity {capacity} exceeded")]
    BondCapacity { atom: usize, capacity: usize },

    #[error("atom {atom}: hydrogen-bond capacity {capacity} exceeded")]
    HBondCapacity { atom: usize, capacity: usize },

    #[error("degenerate angle {i}-{j}-{k}")]
    DegenerateAngle { i: usize, j: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "charge equilibration did not converge in {iterations} iterations \
         (residual s = {residual_s:e}, t = {residual_t:e})"
    )]
    NonConvergence {
        iterations: usize,
        residual_s: f64,
        residual_t: f64,
    },

    #[error("charge equilibration: sum of t vanished")]
    SingularChargeConstraint,

    #[error("non-finite energy at step {step}")]
    NonFiniteEnergy { step: u64 },

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ReaxError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReaxError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ReaxError> = std::result::Result<T, E>;
