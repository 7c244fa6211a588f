use thiserror::Error;

use crate::algebra::Violation;

/// Errors produced by the certification pipeline.
///
/// Variants split into two families that callers (notably the CLI) map to
/// distinct exit codes: malformed or out-of-domain input, and certification
/// failures where the input is well formed but no randomness can be certified.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Bloch vector has norm {norm}, which exceeds 1")]
    UnphysicalState { norm: f64 },

    #[error("input state must be pure, got Bloch norm {norm}")]
    MixedInput { norm: f64 },

    #[error("invalid POVM effect: {0}")]
    InvalidEffect(String),

    #[error("invalid POVM pair: {}", format_violations(.0))]
    InvalidPovm(Vec<Violation>),

    #[error("POVM pair is not canonical (f0.a = {a0} > f1.a = {a1})")]
    NotCanonical { a0: f64, a1: f64 },

    #[error("probability {value} for `{what}` is outside [0, 1]")]
    ProbabilityOutOfRange { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("predetermined bit stream exhausted at run {run}")]
    StreamExhausted { run: u64 },

    #[error("oracle could not reconstruct the effect (best residual {residual:e})")]
    OracleInfeasible { residual: f64 },

    #[error("feasible set is empty: {0}")]
    EmptyFeasibleSet(String),

    #[error("malformed bit-stream data: {0}")]
    Format(String),
}

impl Error {
    /// True when the error means "nothing can be certified" rather than
    /// "the input was malformed".
    pub fn is_certification_failure(&self) -> bool {
        matches!(self, Error::EmptyFeasibleSet(_))
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
