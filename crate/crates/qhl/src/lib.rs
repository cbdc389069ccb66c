//! Verifier for imperative programs that mix classical control with quantum state.
//!
//! The crate is organized as a pipeline:
//!
//! * [`qcore`] - dense complex linear algebra: pure states over named qubits,
//!   operators, the builtin gate/measurement library.
//! * [`lang`] - the program and assertion languages: AST, parser, printer,
//!   free/modified-variable analyses, substitution.
//! * [`sem`] - ensemble semantics: a program maps a weighted ensemble of
//!   (classical state, pure state) branches to another such ensemble, with
//!   loops handled by truncation and an explicit residual.
//! * [`assertion`] - satisfaction of state and distribution formulas,
//!   decomposition witnesses, and a syntactic entailment engine.
//! * [`prover`] - checker for proof outlines and derivation trees over the
//!   program logic's inference rules.
//! * [`harness`] - generation of states satisfying a formula and empirical
//!   soundness fuzzing of rule instances.

pub mod assertion;
pub mod harness;
pub mod lang;
pub mod prover;
pub mod qcore;
pub mod sem;

pub use qcore::{C64, Matrix, PureState, QubitLayout};
