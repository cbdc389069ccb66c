//! Dense complex linear algebra over named qubits.
//!
//! Everything works with explicit `Vec<Complex64>` storage: state vectors of
//! length `2^n` and row-major square matrices. Qubit tuples are referenced by
//! name against a [`QubitLayout`] that fixes the basis order; the first
//! declared qubit is the most significant bit of a basis index.

mod gates;
mod matrix;
mod state;

pub use gates::{builtin_gate, is_builtin_gate, matrix_to_text, parse_matrix_text, GateTable};
pub use matrix::Matrix;
pub use state::{
    apply_op, apply_unitary, equal_up_to_phase, measure, partial_trace, reset_qubit, tensor,
    DensityMatrix, PureState,
};

use serde::Serialize;
use thiserror::Error;

pub type C64 = num_complex::Complex64;

/// Default numeric tolerance for unitarity, normalization and closeness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QcoreError {
    #[error("qubit `{0}` not present in layout")]
    UnknownQubit(String),
    #[error("duplicate qubit `{0}` in tuple")]
    DuplicateQubit(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("measurement operators do not sum to identity (deviation {0:.3e})")]
    IncompleteMeasurement(f64),
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("gate `{name}` does not support arity {arity}")]
    BadGateArity { name: String, arity: usize },
    #[error("gate `{name}` expects {expected} parameters, got {got}")]
    BadGateParams {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid gate parameter: {0}")]
    BadGateParamValue(String),
    #[error("matrix text: {0}")]
    MatrixText(String),
    #[error("state has zero norm")]
    ZeroNorm,
}

/// Ordered list of qubit names; declaration order fixes the basis convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QubitLayout {
    names: Vec<String>,
}

impl QubitLayout {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self, QcoreError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(QcoreError::DuplicateQubit(n.clone()));
            }
        }
        Ok(QubitLayout { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        1usize << self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, QcoreError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| QcoreError::UnknownQubit(name.to_string()))
    }

    /// Positions of `tuple` within this layout; rejects unknowns and repeats.
    pub fn positions(&self, tuple: &[String]) -> Result<Vec<usize>, QcoreError> {
        let mut seen = Vec::with_capacity(tuple.len());
        let mut out = Vec::with_capacity(tuple.len());
        for q in tuple {
            if seen.contains(&q) {
                return Err(QcoreError::DuplicateQubit(q.clone()));
            }
            seen.push(q);
            out.push(self.index_of(q)?);
        }
        Ok(out)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }
}
