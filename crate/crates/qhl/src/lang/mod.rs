//! Surface language: program files, the assertion language, and proof
//! scripts, with parsers, canonical printers, evaluation of classical
//! expressions, and static analysis helpers.

pub mod analysis;
pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod registry;

pub use ast::*;
pub use parser::{
    parse_aexp, parse_bexp, parse_com, parse_dist, parse_formula, parse_program,
    parse_proof_script, ParseError,
};
pub use printer::{ket_text, rational_text};
pub use registry::{
    eval_aexp, eval_bexp, eval_bexp_full, get_var, set_var, BexpOutcome, ClassicalEnv, EvalErr,
    ForallWindow,
};
