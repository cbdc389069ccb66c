//! Recursive-descent parsers for program files, assertion strings, and proof
//! scripts. All entry points work on source text and report line/column on
//! failure.
//!
//! Disambiguation notes:
//! - a parenthesized group followed by `_{` is an amplitude-list ket;
//! - at the start of a distribution component, `a/b (` or `n (` or `f (`
//!   introduces a weight, anything else starts a formula;
//! - `(F)[a/x]` applies the substitution at parse time.

use super::analysis::subst_formula;
use super::ast::*;
use super::lexer::{lex, LexError, Spanned, Tok};
use crate::qcore::{C64, Matrix};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            line: e.line,
            col: e.col,
            msg: e.msg,
        }
    }
}

const RESERVED: &[&str] = &[
    "skip", "abort", "if", "then", "else", "fi", "while", "do", "od", "forall", "true", "false",
    "div", "mod", "random",
];

/// Classical functions callable from integer expressions, with arities.
pub const BUILTIN_FNS: &[(&str, usize)] = &[
    ("pow_mod", 3),
    ("gcd", 2),
    ("cf_denom", 3),
    ("ord", 2),
];

fn is_reserved(s: &str) -> bool {
    RESERVED.contains(&s)
}

struct P {
    toks: Vec<Spanned>,
    pos: usize,
    /// Arities of macros declared so far; empty outside program parsing.
    macros: BTreeMap<String, usize>,
    /// Accept calls to macros not in the table (proof scripts reference a
    /// program parsed separately).
    lenient_macros: bool,
}

type PResult<T> = Result<T, ParseError>;

impl P {
    fn new(src: &str, lenient_macros: bool) -> PResult<P> {
        Ok(P {
            toks: lex(src)?,
            pos: 0,
            macros: BTreeMap::new(),
            lenient_macros,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {}, found {}", t.describe(), self.found()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(id)) if id == s)
    }

    fn is_kw_at(&self, k: usize, s: &str) -> bool {
        matches!(self.peek_at(k), Some(Tok::Ident(id)) if id == s)
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.err(format!("expected `{}`, found {}", s, self.found()))
        }
    }

    /// Any identifier, rejecting reserved words.
    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Ident(s)) => self.err(format!("`{}` is a reserved word", s)),
            _ => self.err(format!("expected identifier, found {}", self.found())),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.peek() {
            Some(Tok::Int { value, .. }) => {
                let v = *value;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err(format!("expected integer, found {}", self.found())),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        if self.eat(&Tok::Minus) {
            Ok(-self.int()?)
        } else {
            self.int()
        }
    }

    fn number_f64(&mut self) -> PResult<f64> {
        match self.peek() {
            Some(Tok::Int { value, .. }) => {
                let v = *value as f64;
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::Float { value, .. }) => {
                let v = *value;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err(format!("expected number, found {}", self.found())),
        }
    }

    fn signed_f64(&mut self) -> PResult<f64> {
        if self.eat(&Tok::Minus) {
            Ok(-self.number_f64()?)
        } else {
            self.number_f64()
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.err(format!("unexpected trailing {}", self.found()))
        }
    }

    // -- integer expressions ------------------------------------------------

    fn aexp(&mut self) -> PResult<Aexp> {
        let mut acc = self.aterm()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.aterm()?;
            acc = Aexp::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn aterm(&mut self) -> PResult<Aexp> {
        let mut acc = self.aunary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Ident(s)) if s == "div" => BinOp::Div,
                Some(Tok::Ident(s)) if s == "mod" => BinOp::Mod,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.aunary()?;
            acc = Aexp::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn aunary(&mut self) -> PResult<Aexp> {
        if self.eat(&Tok::Minus) {
            Ok(Aexp::Neg(Box::new(self.aunary()?)))
        } else {
            self.aprimary()
        }
    }

    fn aprimary(&mut self) -> PResult<Aexp> {
        match self.peek() {
            Some(Tok::Int { .. }) => Ok(Aexp::Int(self.int()?)),
            Some(Tok::Float { .. }) => self.err("floating-point literals are not integer expressions"),
            Some(Tok::LParen) => {
                self.pos += 1;
                let a = self.aexp()?;
                self.expect(&Tok::RParen)?;
                Ok(a)
            }
            // the literal characters `(x)` lex as the tensor connective; in
            // integer-expression position they mean the variable x in parens
            Some(Tok::Otimes) => {
                self.pos += 1;
                Ok(Aexp::Var("x".to_string()))
            }
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let name = self.ident()?;
                if self.at_call_open() {
                    let args = self.call_args()?;
                    match BUILTIN_FNS.iter().find(|(n, _)| *n == name) {
                        Some((_, arity)) if *arity == args.len() => Ok(Aexp::Call(name, args)),
                        Some((_, arity)) => self.err(format!(
                            "`{}` takes {} arguments, got {}",
                            name,
                            arity,
                            args.len()
                        )),
                        None => self.err(format!("unknown function `{}`", name)),
                    }
                } else {
                    Ok(Aexp::Var(name))
                }
            }
            _ => self.err(format!(
                "expected integer expression, found {}",
                self.found()
            )),
        }
    }

    fn at_call_open(&self) -> bool {
        matches!(self.peek(), Some(Tok::LParen) | Some(Tok::Otimes))
    }

    /// Parse `( a, b, ... )` argument lists; the lexed-as-tensor `(x)` is a
    /// single-argument list holding the variable x.
    fn call_args(&mut self) -> PResult<Vec<Aexp>> {
        if self.eat(&Tok::Otimes) {
            return Ok(vec![Aexp::Var("x".to_string())]);
        }
        self.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                args.push(self.aexp()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(args)
    }

    // -- boolean expressions ------------------------------------------------

    fn bexp(&mut self) -> PResult<Bexp> {
        let lhs = self.bconj()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.bexp()?;
            Ok(Bexp::Imp(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn bconj(&mut self) -> PResult<Bexp> {
        let mut acc = self.bneg()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.bneg()?;
            acc = Bexp::And(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn bneg(&mut self) -> PResult<Bexp> {
        if self.eat(&Tok::Tilde) {
            Ok(Bexp::Not(Box::new(self.bneg()?)))
        } else {
            self.batom()
        }
    }

    fn batom(&mut self) -> PResult<Bexp> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(Bexp::True)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(Bexp::False)
            }
            Some(Tok::Ident(s)) if s == "forall" => {
                self.pos += 1;
                let v = self.ident()?;
                self.expect(&Tok::Dot)?;
                let body = self.bexp()?;
                Ok(Bexp::Forall(v, Box::new(body)))
            }
            Some(Tok::LParen) => {
                // Either a grouped boolean or a parenthesized integer
                // expression opening a comparison.
                let save = self.pos;
                self.pos += 1;
                if let Ok(b) = self.bexp() {
                    if self.eat(&Tok::RParen) && !self.at_cmp_op() {
                        return Ok(b);
                    }
                }
                self.pos = save;
                self.cmp_from_aexp()
            }
            _ => self.cmp_from_aexp(),
        }
    }

    fn at_cmp_op(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Eq)
                | Some(Tok::Ne)
                | Some(Tok::Le)
                | Some(Tok::Ge)
                | Some(Tok::Lt)
                | Some(Tok::Gt)
                | Some(Tok::Pipe)
        )
    }

    fn cmp_from_aexp(&mut self) -> PResult<Bexp> {
        let lhs = self.aexp()?;
        let op = match self.peek() {
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Pipe) => {
                self.pos += 1;
                let rhs = self.aexp()?;
                return Ok(Bexp::Divides(lhs, rhs));
            }
            _ => {
                return self.err(format!(
                    "expected comparison operator, found {}",
                    self.found()
                ))
            }
        };
        self.pos += 1;
        let rhs = self.aexp()?;
        Ok(Bexp::Cmp(op, lhs, rhs))
    }

    // -- commands -----------------------------------------------------------

    fn com_seq(&mut self) -> PResult<Com> {
        let mut parts = vec![self.com_atom()?];
        while self.eat(&Tok::Semi) {
            if self.com_starts() {
                parts.push(self.com_atom()?);
            } else {
                break;
            }
        }
        Ok(Com::seq_of(parts))
    }

    fn com_starts(&self) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                matches!(s.as_str(), "skip" | "abort" | "if" | "while") || !is_reserved(s)
            }
            _ => false,
        }
    }

    fn com_atom(&mut self) -> PResult<Com> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "skip" => {
                self.pos += 1;
                Ok(Com::Skip)
            }
            Some(Tok::Ident(s)) if s == "abort" => {
                self.pos += 1;
                Ok(Com::Abort)
            }
            Some(Tok::Ident(s)) if s == "if" => {
                self.pos += 1;
                let b = self.bexp()?;
                self.expect_kw("then")?;
                let c1 = self.com_seq()?;
                self.expect_kw("else")?;
                let c2 = self.com_seq()?;
                self.expect_kw("fi")?;
                Ok(Com::If(b, Box::new(c1), Box::new(c2)))
            }
            Some(Tok::Ident(s)) if s == "while" => {
                self.pos += 1;
                let b = self.bexp()?;
                self.expect_kw("do")?;
                let body = self.com_seq()?;
                self.expect_kw("od")?;
                Ok(Com::While(b, Box::new(body)))
            }
            Some(Tok::Ident(s)) if !is_reserved(s) => self.com_ident(),
            _ => self.err(format!("expected command, found {}", self.found())),
        }
    }

    fn com_ident(&mut self) -> PResult<Com> {
        let mut names = vec![self.ident()?];
        while matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s)) {
            names.push(self.ident()?);
        }
        if names.len() > 1 {
            self.expect(&Tok::Assign)?;
            self.ket_zero()?;
            return Ok(Com::InitQubit(names));
        }
        let name = names.pop().unwrap();
        match self.peek() {
            Some(Tok::Assign) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Pipe) => {
                        self.ket_zero()?;
                        Ok(Com::InitQubit(vec![name]))
                    }
                    Some(Tok::Ident(s)) if s == "random" => {
                        self.pos += 1;
                        self.expect(&Tok::LParen)?;
                        let lo = self.aexp()?;
                        self.expect(&Tok::Comma)?;
                        let hi = self.aexp()?;
                        self.expect(&Tok::RParen)?;
                        Ok(Com::Random { var: name, lo, hi })
                    }
                    Some(Tok::Ident(m))
                        if !is_reserved(m) && self.peek_at(1) == Some(&Tok::LBrack) =>
                    {
                        let meas = self.ident()?;
                        let qubits = self.bracket_qubits()?;
                        Ok(Com::Measure {
                            var: name,
                            meas,
                            qubits,
                        })
                    }
                    _ => Ok(Com::Assign(name, self.aexp()?)),
                }
            }
            Some(Tok::LParen) | Some(Tok::Otimes) => {
                let args = self.call_args()?;
                if self.peek() == Some(&Tok::LBrack) {
                    let qubits = self.bracket_qubits()?;
                    Ok(Com::Unitary(GateRef { name, args }, qubits))
                } else {
                    match self.macros.get(&name) {
                        Some(arity) if *arity == args.len() => Ok(Com::MacroCall(name, args)),
                        Some(arity) => self.err(format!(
                            "macro `{}` takes {} arguments, got {}",
                            name,
                            arity,
                            args.len()
                        )),
                        None if self.lenient_macros => Ok(Com::MacroCall(name, args)),
                        None => self.err(format!("unknown macro `{}`", name)),
                    }
                }
            }
            Some(Tok::LBrack) => {
                let qubits = self.bracket_qubits()?;
                Ok(Com::Unitary(
                    GateRef {
                        name,
                        args: Vec::new(),
                    },
                    qubits,
                ))
            }
            _ => self.err(format!(
                "expected `:=`, `[` or `(` after `{}`, found {}",
                name,
                self.found()
            )),
        }
    }

    /// Consume `|0>`.
    fn ket_zero(&mut self) -> PResult<()> {
        self.expect(&Tok::Pipe)?;
        match self.peek() {
            Some(Tok::Int { value: 0, .. }) => {
                self.pos += 1;
            }
            _ => return self.err("qubit initialization must use `|0>`"),
        }
        self.expect(&Tok::Gt)
    }

    fn bracket_qubits(&mut self) -> PResult<Vec<String>> {
        self.expect(&Tok::LBrack)?;
        let mut qs = Vec::new();
        loop {
            qs.push(self.ident()?);
            let _ = self.eat(&Tok::Comma);
            if self.peek() == Some(&Tok::RBrack) {
                break;
            }
        }
        self.expect(&Tok::RBrack)?;
        Ok(qs)
    }

    // -- programs -----------------------------------------------------------

    fn program(&mut self) -> PResult<Program> {
        let mut qubits = Vec::new();
        let mut inits = BTreeMap::new();
        let mut measurements = BTreeMap::new();
        let mut gates = BTreeMap::new();
        let mut macros = BTreeMap::new();
        loop {
            if self.is_kw("qbit") && matches!(self.peek_at(1), Some(Tok::Ident(_))) {
                self.pos += 1;
                while matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s)) {
                    qubits.push(self.ident()?);
                }
                self.expect(&Tok::Semi)?;
            } else if self.is_kw("init")
                && matches!(self.peek_at(1), Some(Tok::Ident(_)))
                && self.peek_at(2) == Some(&Tok::Eq)
            {
                self.pos += 1;
                let name = self.ident()?;
                self.expect(&Tok::Eq)?;
                let v = self.signed_int()?;
                self.expect(&Tok::Semi)?;
                if inits.insert(name.clone(), v).is_some() {
                    return self.err(format!("duplicate init for `{}`", name));
                }
            } else if self.is_kw("measurement") && matches!(self.peek_at(1), Some(Tok::Ident(_))) {
                self.pos += 1;
                let name = self.ident()?;
                let def = if self.eat(&Tok::Eq) {
                    self.expect_kw("std")?;
                    self.expect(&Tok::LParen)?;
                    let k = self.int()?;
                    self.expect(&Tok::RParen)?;
                    if !(1..=16).contains(&k) {
                        return self.err("measurement arity out of range");
                    }
                    MeasurementDef::std(k as usize)
                } else {
                    self.expect_kw("on")?;
                    let k = self.int()? as usize;
                    self.expect(&Tok::Eq)?;
                    self.expect(&Tok::LBrace)?;
                    let mut ops = Vec::new();
                    loop {
                        ops.push(self.rows_matrix()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RBrace)?;
                    let dim = 1usize << k;
                    for op in &ops {
                        if op.dim() != dim {
                            return self.err(format!(
                                "measurement operator dimension {} does not match {} qubits",
                                op.dim(),
                                k
                            ));
                        }
                    }
                    let def = MeasurementDef { arity: k, ops };
                    if def.completeness_deviation() > 1e-7 {
                        return self.err(format!(
                            "measurement `{}` operators do not sum to the identity",
                            name
                        ));
                    }
                    def
                };
                self.expect(&Tok::Semi)?;
                if measurements.insert(name.clone(), def).is_some() {
                    return self.err(format!("duplicate measurement `{}`", name));
                }
            } else if self.is_kw("gate")
                && matches!(self.peek_at(1), Some(Tok::Ident(_)))
                && self.is_kw_at(2, "on")
            {
                self.pos += 1;
                let name = self.ident()?;
                self.expect_kw("on")?;
                let k = self.int()? as usize;
                self.expect(&Tok::Eq)?;
                let m = self.rows_matrix()?;
                self.expect(&Tok::Semi)?;
                if m.dim() != 1usize << k {
                    return self.err(format!(
                        "gate `{}` matrix dimension {} does not match {} qubits",
                        name,
                        m.dim(),
                        k
                    ));
                }
                if m.unitarity_deviation() > 1e-7 {
                    return self.err(format!("gate `{}` matrix is not unitary", name));
                }
                if gates.insert(name.clone(), m).is_some() {
                    return self.err(format!("duplicate gate `{}`", name));
                }
            } else if self.is_kw("macro") && matches!(self.peek_at(1), Some(Tok::Ident(_))) {
                self.pos += 1;
                let name = self.ident()?;
                self.expect(&Tok::LParen)?;
                let mut params = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        params.push(self.ident()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(&Tok::RParen)?;
                self.expect_kw("do")?;
                let body = self.com_seq()?;
                self.expect_kw("od")?;
                let _ = self.eat(&Tok::Semi);
                if self.macros.insert(name.clone(), params.len()).is_some() {
                    return self.err(format!("duplicate macro `{}`", name));
                }
                macros.insert(name, MacroDef { params, body });
            } else {
                break;
            }
        }
        let body = self.com_seq()?;
        self.expect_end()?;
        Ok(Program {
            qubits,
            inits,
            measurements,
            gates,
            macros,
            body,
        })
    }

    /// `rows { e, e ; e, e }` with complex entries `a`, `bj`, `a+bj`, `a-bj`.
    fn rows_matrix(&mut self) -> PResult<Matrix> {
        self.expect_kw("rows")?;
        self.expect(&Tok::LBrace)?;
        let mut rows: Vec<Vec<C64>> = Vec::new();
        let mut row: Vec<C64> = Vec::new();
        loop {
            row.push(self.complex_entry()?);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.pos += 1;
                }
                Some(Tok::Semi) => {
                    self.pos += 1;
                    rows.push(std::mem::take(&mut row));
                }
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    rows.push(std::mem::take(&mut row));
                    break;
                }
                _ => return self.err(format!("expected `,`, `;` or `}}`, found {}", self.found())),
            }
        }
        let n = rows.len();
        if !n.is_power_of_two() {
            return self.err(format!("matrix has {} rows, expected a power of two", n));
        }
        for r in &rows {
            if r.len() != n {
                return self.err(format!(
                    "matrix row has {} entries, expected {}",
                    r.len(),
                    n
                ));
            }
        }
        Matrix::from_rows(rows).map_err(|e| {
            let (line, col) = self.here();
            ParseError {
                line,
                col,
                msg: e.to_string(),
            }
        })
    }

    fn complex_entry(&mut self) -> PResult<C64> {
        let first = self.signed_f64()?;
        if self.eat_kw("j") {
            return Ok(C64::new(0.0, first));
        }
        match self.peek() {
            Some(Tok::Plus) => {
                self.pos += 1;
                let im = self.number_f64()?;
                self.expect_kw("j")?;
                Ok(C64::new(first, im))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                let im = self.number_f64()?;
                self.expect_kw("j")?;
                Ok(C64::new(first, -im))
            }
            _ => Ok(C64::new(first, 0.0)),
        }
    }

    // -- assertions ---------------------------------------------------------

    fn dist_formula(&mut self) -> PResult<DistFormula> {
        let mut comps: Vec<(Option<Rational>, StateFormula)> = vec![self.dist_component()?];
        while self.eat(&Tok::Oplus) {
            comps.push(self.dist_component()?);
        }
        let weighted = comps[0].0.is_some();
        if comps.iter().any(|(w, _)| w.is_some() != weighted) {
            return self.err("cannot mix weighted and unweighted distribution components");
        }
        if weighted {
            let ws: Vec<(Rational, StateFormula)> =
                comps.into_iter().map(|(w, f)| (w.unwrap(), f)).collect();
            let total: Rational = ws.iter().map(|(w, _)| *w).sum();
            if total != Rational::new(1, 1) {
                return self.err(format!("distribution weights sum to {}, expected 1", total));
            }
            if ws.len() == 1 {
                Ok(DistFormula::Single(ws.into_iter().next().unwrap().1))
            } else {
                Ok(DistFormula::Weighted(ws))
            }
        } else if comps.len() == 1 {
            Ok(DistFormula::Single(comps.into_iter().next().unwrap().1))
        } else {
            Ok(DistFormula::Unweighted(
                comps.into_iter().map(|(_, f)| f).collect(),
            ))
        }
    }

    fn dist_component(&mut self) -> PResult<(Option<Rational>, StateFormula)> {
        // `a/b (F)`, `n (F)` or `f (F)` opens a weighted component.
        let weight = match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Int { .. }), Some(Tok::Slash)) => Some(self.rational()?),
            (Some(Tok::Int { .. }), Some(Tok::LParen)) | (Some(Tok::Float { .. }), Some(Tok::LParen)) => {
                Some(self.rational()?)
            }
            _ => None,
        };
        match weight {
            Some(w) => {
                if w <= Rational::new(0, 1) || w > Rational::new(1, 1) {
                    return self.err(format!("weight {} outside (0, 1]", w));
                }
                self.expect(&Tok::LParen)?;
                let f = self.formula()?;
                self.expect(&Tok::RParen)?;
                Ok((Some(w), f))
            }
            None => Ok((None, self.formula()?)),
        }
    }

    fn rational(&mut self) -> PResult<Rational> {
        match self.peek() {
            Some(Tok::Int { .. }) => {
                let num = self.int()?;
                if self.eat(&Tok::Slash) {
                    let den = self.int()?;
                    if den == 0 {
                        return self.err("zero denominator");
                    }
                    Ok(Rational::new(num, den))
                } else {
                    Ok(Rational::new(num, 1))
                }
            }
            Some(Tok::Float { value, .. }) => {
                let v = *value;
                self.pos += 1;
                match num_rational::Ratio::<i64>::approximate_float(v) {
                    Some(r) => Ok(r),
                    None => self.err(format!("cannot express {} as a rational weight", v)),
                }
            }
            _ => self.err(format!("expected rational, found {}", self.found())),
        }
    }

    fn formula(&mut self) -> PResult<StateFormula> {
        if self.is_kw("forall") {
            self.pos += 1;
            let v = self.ident()?;
            self.expect(&Tok::Dot)?;
            let body = self.formula()?;
            return Ok(StateFormula::Forall(v, Box::new(body)));
        }
        let mut acc = self.formula_conj()?;
        while self.eat(&Tok::Odot) {
            let rhs = self.formula_conj()?;
            acc = StateFormula::odot(acc, rhs);
        }
        Ok(acc)
    }

    fn formula_conj(&mut self) -> PResult<StateFormula> {
        let mut acc = self.formula_neg()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.formula_neg()?;
            acc = StateFormula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn formula_neg(&mut self) -> PResult<StateFormula> {
        if self.eat(&Tok::Tilde) {
            Ok(StateFormula::Not(Box::new(self.formula_neg()?)))
        } else {
            self.formula_atom()
        }
    }

    fn formula_atom(&mut self) -> PResult<StateFormula> {
        match self.peek() {
            Some(Tok::Pipe) | Some(Tok::LParen) if self.at_ket() => {
                Ok(StateFormula::Ket(self.qexpr()?))
            }
            Some(Tok::LParen) => {
                // A grouped formula, a grouped pure formula that the formula
                // grammar cannot express (implications), or a parenthesized
                // integer expression opening a comparison. Trying the formula
                // grammar first keeps `(P /\ Q)` at the formula level.
                let save = self.pos;
                self.pos += 1;
                if let Ok(f) = self.formula() {
                    if self.eat(&Tok::RParen) && !self.at_cmp_op() {
                        return self.subst_suffix(f);
                    }
                }
                self.pos = save;
                self.pos += 1;
                if let Ok(b) = self.bexp() {
                    if self.eat(&Tok::RParen) && !self.at_cmp_op() {
                        // keep quantifiers at the formula level so printing
                        // and reparsing agree structurally
                        let f = match b {
                            Bexp::Forall(v, body) => {
                                StateFormula::Forall(v, Box::new(StateFormula::Pure(*body)))
                            }
                            other => StateFormula::Pure(other),
                        };
                        return self.subst_suffix(f);
                    }
                }
                self.pos = save;
                Ok(StateFormula::Pure(self.cmp_from_aexp()?))
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(StateFormula::Pure(Bexp::True))
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(StateFormula::Pure(Bexp::False))
            }
            _ => Ok(StateFormula::Pure(self.cmp_from_aexp()?)),
        }
    }

    /// Zero or more `[a/x]` substitution suffixes.
    fn subst_suffix(&mut self, mut f: StateFormula) -> PResult<StateFormula> {
        while self.peek() == Some(&Tok::LBrack) {
            self.pos += 1;
            let a = self.aexp()?;
            self.expect(&Tok::Slash)?;
            let x = self.ident()?;
            self.expect(&Tok::RBrack)?;
            f = subst_formula(&f, &x, &a);
        }
        Ok(f)
    }

    /// True when the upcoming tokens start a ket: a `|` label, or a
    /// parenthesized amplitude list whose matching `)` is followed by `_`.
    fn at_ket(&self) -> bool {
        match self.peek() {
            Some(Tok::Pipe) => true,
            Some(Tok::LParen) => {
                let mut depth = 0usize;
                let mut k = self.pos;
                while let Some(sp) = self.toks.get(k) {
                    match sp.tok {
                        Tok::LParen => depth += 1,
                        Tok::RParen => {
                            depth -= 1;
                            if depth == 0 {
                                return self.toks.get(k + 1).map(|s| &s.tok)
                                    == Some(&Tok::Under);
                            }
                        }
                        _ => {}
                    }
                    k += 1;
                }
                false
            }
            _ => false,
        }
    }

    fn qexpr(&mut self) -> PResult<QExpr> {
        let mut acc = QExpr::Ket(self.ket_lit()?);
        while self.eat(&Tok::Otimes) {
            let rhs = QExpr::Ket(self.ket_lit()?);
            acc = QExpr::Tensor(Box::new(acc), Box::new(rhs));
        }
        // reject duplicated qubits across tensor factors
        let vars = acc.vars();
        let mut seen = std::collections::BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.clone()) {
                return self.err(format!("qubit `{}` repeated in tensor product", v));
            }
        }
        Ok(acc)
    }

    fn ket_lit(&mut self) -> PResult<KetLit> {
        match self.peek() {
            Some(Tok::Pipe) => {
                self.pos += 1;
                enum Label {
                    Raw(String, i64),
                    Plus,
                    Minus,
                }
                let label = match self.peek() {
                    Some(Tok::Int { value, raw }) => {
                        let l = Label::Raw(raw.clone(), *value);
                        self.pos += 1;
                        self.expect(&Tok::Gt)?;
                        l
                    }
                    Some(Tok::Plus) => {
                        self.pos += 1;
                        self.expect(&Tok::Gt)?;
                        Label::Plus
                    }
                    // `|->` lexes as `|` followed by `->`
                    Some(Tok::Arrow) => {
                        self.pos += 1;
                        Label::Minus
                    }
                    _ => return self.err(format!("expected ket label, found {}", self.found())),
                };
                let vars = self.ket_subscript()?;
                let n = vars.len();
                match label {
                    Label::Plus | Label::Minus => {
                        if n != 1 {
                            return self.err("`|+>` and `|->` label a single qubit");
                        }
                        let s = if matches!(label, Label::Plus) { 1.0 } else { -1.0 };
                        Ok(KetLit {
                            vars,
                            amps: vec![
                                C64::new(FRAC_1_SQRT_2, 0.0),
                                C64::new(s * FRAC_1_SQRT_2, 0.0),
                            ],
                        })
                    }
                    Label::Raw(raw, value) => {
                        let idx = self.label_index(&raw, value, n)?;
                        Ok(KetLit::basis(vars, idx))
                    }
                }
            }
            Some(Tok::LParen) => self.amp_list_ket(),
            _ => self.err(format!("expected ket, found {}", self.found())),
        }
    }

    /// `_{ q1 q2 ... }`
    fn ket_subscript(&mut self) -> PResult<Vec<String>> {
        self.expect(&Tok::Under)?;
        self.expect(&Tok::LBrace)?;
        let mut vars = Vec::new();
        loop {
            vars.push(self.ident()?);
            let _ = self.eat(&Tok::Comma);
            if self.peek() == Some(&Tok::RBrace) {
                break;
            }
        }
        self.expect(&Tok::RBrace)?;
        let mut seen = std::collections::BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.clone()) {
                return self.err(format!("qubit `{}` repeated in ket subscript", v));
            }
        }
        Ok(vars)
    }

    /// Bitstring labels must match the tuple width exactly; anything else is
    /// read as an integer index (first tuple element = most significant bit).
    fn label_index(&self, raw: &str, value: i64, n: usize) -> PResult<usize> {
        if n == 0 || n > 20 {
            return self.err("ket tuple width out of range");
        }
        let dim = 1usize << n;
        if raw.len() == n && raw.chars().all(|c| c == '0' || c == '1') {
            Ok(usize::from_str_radix(raw, 2).unwrap())
        } else if value >= 0 && (value as usize) < dim {
            Ok(value as usize)
        } else {
            self.err(format!(
                "label `{}` does not fit a {}-qubit tuple",
                raw, n
            ))
        }
    }

    /// `( a |00> + b |01> + ... )_{ q1 q2 }`
    fn amp_list_ket(&mut self) -> PResult<KetLit> {
        self.expect(&Tok::LParen)?;
        struct Term {
            sign: f64,
            amp: C64,
            raw: String,
            value: i64,
        }
        let mut terms = Vec::new();
        loop {
            let sign = if terms.is_empty() {
                if self.eat(&Tok::Minus) {
                    -1.0
                } else {
                    1.0
                }
            } else if self.eat(&Tok::Plus) {
                1.0
            } else if self.eat(&Tok::Minus) {
                -1.0
            } else {
                return self.err(format!("expected `+` or `-`, found {}", self.found()));
            };
            let amp = match self.peek() {
                Some(Tok::Pipe) => C64::new(1.0, 0.0),
                Some(Tok::Int { .. }) if self.peek_at(1) == Some(&Tok::Slash) => {
                    let num = self.int()? as f64;
                    self.expect(&Tok::Slash)?;
                    let den = self.int()? as f64;
                    if den == 0.0 {
                        return self.err("zero denominator");
                    }
                    C64::new(num / den, 0.0)
                }
                Some(Tok::Int { .. }) | Some(Tok::Float { .. }) => {
                    C64::new(self.number_f64()?, 0.0)
                }
                Some(Tok::LParen) => {
                    self.pos += 1;
                    let re = self.signed_f64()?;
                    self.expect(&Tok::Comma)?;
                    let im = self.signed_f64()?;
                    self.expect(&Tok::RParen)?;
                    C64::new(re, im)
                }
                _ => return self.err(format!("expected amplitude or `|`, found {}", self.found())),
            };
            self.expect(&Tok::Pipe)?;
            let (raw, value) = match self.peek() {
                Some(Tok::Int { value, raw }) => {
                    let r = (raw.clone(), *value);
                    self.pos += 1;
                    r
                }
                _ => return self.err(format!("expected basis label, found {}", self.found())),
            };
            self.expect(&Tok::Gt)?;
            terms.push(Term {
                sign,
                amp,
                raw,
                value,
            });
            if self.peek() == Some(&Tok::RParen) {
                self.pos += 1;
                break;
            }
        }
        let vars = self.ket_subscript()?;
        let n = vars.len();
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << n];
        let mut seen = vec![false; 1usize << n];
        for t in &terms {
            let idx = self.label_index(&t.raw, t.value, n)?;
            if seen[idx] {
                return self.err(format!("basis label `{}` repeated", t.raw));
            }
            seen[idx] = true;
            amps[idx] = t.amp * t.sign;
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-9 {
            return self.err("ket literal has zero norm");
        }
        if (norm - 1.0).abs() > 1e-12 {
            for a in &mut amps {
                *a /= norm;
            }
        }
        Ok(KetLit { vars, amps })
    }

    // -- proof scripts ------------------------------------------------------

    fn proof_script(&mut self) -> PResult<ProofScript> {
        self.expect_kw("proof")?;
        let name = self.ident()?;
        let expect = if self.eat_kw("expect") {
            if self.eat_kw("refuted") {
                Expectation::Refuted
            } else {
                self.expect_kw("valid")?;
                Expectation::Valid
            }
        } else {
            Expectation::Valid
        };
        self.expect(&Tok::LBrace)?;
        let program_ref = if self.eat_kw("program") {
            let p = match self.peek() {
                Some(Tok::Str(s)) => {
                    let s = s.clone();
                    self.pos += 1;
                    s
                }
                _ => return self.err(format!("expected string path, found {}", self.found())),
            };
            self.expect(&Tok::Semi)?;
            Some(p)
        } else {
            None
        };
        let body = if self.eat_kw("outline") {
            self.expect(&Tok::LBrace)?;
            let items = self.outline_items(&Tok::RBrace)?;
            self.expect(&Tok::RBrace)?;
            ProofBody::Outline(items)
        } else if self.is_kw("derive") {
            ProofBody::Derive(self.derive_node()?)
        } else {
            return self.err(format!(
                "expected `outline` or `derive`, found {}",
                self.found()
            ));
        };
        self.expect(&Tok::RBrace)?;
        self.expect_end()?;
        Ok(ProofScript {
            name,
            expect,
            program_ref,
            body,
        })
    }

    fn outline_items(&mut self, stop: &Tok) -> PResult<Vec<OutlineItem>> {
        let mut items = Vec::new();
        while self.peek() != Some(stop) && !self.at_end() {
            items.push(self.outline_item()?);
        }
        Ok(items)
    }

    fn outline_item(&mut self) -> PResult<OutlineItem> {
        match self.peek() {
            Some(Tok::LBrace) => {
                self.pos += 1;
                let d = self.dist_formula()?;
                self.expect(&Tok::RBrace)?;
                let by = if self.eat_kw("by") {
                    let mut rules = vec![self.rule_name()?];
                    while self.eat(&Tok::Comma) {
                        rules.push(self.rule_name()?);
                    }
                    let p = if self.is_kw("p") && self.peek_at(1) == Some(&Tok::Eq) {
                        self.pos += 2;
                        Some(self.rational()?)
                    } else {
                        None
                    };
                    Some(RuleHint { rules, p })
                } else {
                    None
                };
                Ok(OutlineItem::Assert { d, by })
            }
            Some(Tok::Ident(s)) if s == "local" => {
                self.pos += 1;
                self.expect(&Tok::LBrace)?;
                let pre = self.formula()?;
                self.expect(&Tok::RBrace)?;
                let com = self.com_atom()?;
                self.expect(&Tok::LBrace)?;
                let post = self.formula()?;
                self.expect(&Tok::RBrace)?;
                self.expect_kw("by")?;
                let rule = self.rule_name()?;
                Ok(OutlineItem::Local {
                    pre,
                    com,
                    post,
                    rule,
                })
            }
            Some(Tok::Ident(s)) if s == "lemma" => {
                self.pos += 1;
                self.expect(&Tok::LBrace)?;
                let pre = self.dist_formula()?;
                self.expect(&Tok::RBrace)?;
                let com = self.com_seq()?;
                self.expect(&Tok::LBrace)?;
                let post = self.dist_formula()?;
                self.expect(&Tok::RBrace)?;
                Ok(OutlineItem::LemmaStep { pre, com, post })
            }
            Some(Tok::Ident(s)) if s == "while" => {
                self.pos += 1;
                let guard = self.bexp()?;
                self.expect_kw("do")?;
                let body = self.outline_items_until(&["od"])?;
                self.expect_kw("od")?;
                let _ = self.eat(&Tok::Semi);
                Ok(OutlineItem::WhileBlock { guard, body })
            }
            Some(Tok::Ident(s)) if s == "if" => {
                self.pos += 1;
                let guard = self.bexp()?;
                self.expect_kw("then")?;
                let then_items = self.outline_items_until(&["else"])?;
                self.expect_kw("else")?;
                let else_items = self.outline_items_until(&["fi"])?;
                self.expect_kw("fi")?;
                let _ = self.eat(&Tok::Semi);
                Ok(OutlineItem::IfBlock {
                    guard,
                    then_items,
                    else_items,
                })
            }
            _ => {
                let c = self.com_atom()?;
                let _ = self.eat(&Tok::Semi);
                Ok(OutlineItem::Command(c))
            }
        }
    }

    fn outline_items_until(&mut self, kws: &[&str]) -> PResult<Vec<OutlineItem>> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                None => return self.err(format!("expected `{}`", kws[0])),
                Some(Tok::Ident(s)) if kws.contains(&s.as_str()) => break,
                _ => items.push(self.outline_item()?),
            }
        }
        Ok(items)
    }

    fn rule_name(&mut self) -> PResult<RuleName> {
        match self.peek() {
            Some(Tok::Ident(s)) => match RuleName::parse(s) {
                Some(r) => {
                    self.pos += 1;
                    Ok(r)
                }
                None => self.err(format!("unknown rule `{}`", s)),
            },
            _ => self.err(format!("expected rule name, found {}", self.found())),
        }
    }

    fn derive_node(&mut self) -> PResult<ProofNode> {
        self.expect_kw("derive")?;
        let rule = self.rule_name()?;
        let p = if self.is_kw("p") && self.peek_at(1) == Some(&Tok::Eq) {
            self.pos += 2;
            Some(self.rational()?)
        } else {
            None
        };
        self.expect(&Tok::LBrace)?;
        let pre = self.dist_formula()?;
        self.expect(&Tok::RBrace)?;
        let conclusion = if self.eat_kw("entails") {
            self.expect(&Tok::LBrace)?;
            let post = self.dist_formula()?;
            self.expect(&Tok::RBrace)?;
            Conclusion::Entails(pre, post)
        } else {
            let com = self.com_seq()?;
            self.expect(&Tok::LBrace)?;
            let post = self.dist_formula()?;
            self.expect(&Tok::RBrace)?;
            Conclusion::Triple(HoareTriple { pre, com, post })
        };
        let mut node = ProofNode::new(rule, conclusion);
        node.p = p;
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            while self.is_kw("derive") {
                node.premises.push(self.derive_node()?);
            }
            self.expect(&Tok::RBrace)?;
        }
        Ok(node)
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    P::new(src, false)?.program()
}

pub fn parse_proof_script(src: &str) -> Result<ProofScript, ParseError> {
    let mut p = P::new(src, true)?;
    p.proof_script()
}

pub fn parse_dist(src: &str) -> Result<DistFormula, ParseError> {
    let mut p = P::new(src, true)?;
    let d = p.dist_formula()?;
    p.expect_end()?;
    Ok(d)
}

pub fn parse_formula(src: &str) -> Result<StateFormula, ParseError> {
    let mut p = P::new(src, true)?;
    let f = p.formula()?;
    p.expect_end()?;
    Ok(f)
}

pub fn parse_bexp(src: &str) -> Result<Bexp, ParseError> {
    let mut p = P::new(src, true)?;
    let b = p.bexp()?;
    p.expect_end()?;
    Ok(b)
}

pub fn parse_aexp(src: &str) -> Result<Aexp, ParseError> {
    let mut p = P::new(src, true)?;
    let a = p.aexp()?;
    p.expect_end()?;
    Ok(a)
}

pub fn parse_com(src: &str) -> Result<Com, ParseError> {
    let mut p = P::new(src, true)?;
    let c = p.com_seq()?;
    p.expect_end()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_program() {
        let src = "
            qbit q0 q1;
            init x = 3;
            measurement M = std(1);
            q0 := |0>;
            H[q0];
            x := M[q0];
            if x = 0 then skip else abort fi
        ";
        let p = parse_program(src).unwrap();
        assert_eq!(p.qubits, vec!["q0", "q1"]);
        assert_eq!(p.inits.get("x"), Some(&3));
        assert_eq!(p.measurements["M"].arity, 1);
        let stmts = p.body.flatten();
        assert_eq!(stmts.len(), 4);
        assert_eq!(stmts[0], &Com::InitQubit(vec!["q0".into()]));
        match stmts[1] {
            Com::Unitary(g, qs) => {
                assert_eq!(g.name, "H");
                assert_eq!(qs, &vec!["q0".to_string()]);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_multi_qubit_init_and_gate_args() {
        let c = parse_com("p1 p2 := |0>; cmodmul(x, 15)[p1, p2, q1, q2, q3, q4]").unwrap();
        let stmts = c.flatten();
        assert_eq!(stmts[0], &Com::InitQubit(vec!["p1".into(), "p2".into()]));
        match stmts[1] {
            Com::Unitary(g, qs) => {
                assert_eq!(g.name, "cmodmul");
                assert_eq!(g.args.len(), 2);
                assert_eq!(qs.len(), 6);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_random_measure_macro() {
        let src = "
            qbit q;
            macro twice(a) do x := a; x := x + a od
            y := random(2, 14);
            twice(y);
            v := M[q]
        ";
        let p = parse_program(src).unwrap();
        let stmts = p.body.flatten();
        assert!(matches!(stmts[0], Com::Random { .. }));
        assert!(matches!(stmts[1], Com::MacroCall(name, _) if name == "twice"));
        assert!(matches!(stmts[2], Com::Measure { .. }));
    }

    #[test]
    fn unknown_macro_rejected_in_programs() {
        assert!(parse_program("qbit q; foo(1)").is_err());
        // but accepted in bare command strings (proof scripts)
        assert!(parse_com("foo(1)").is_ok());
    }

    #[test]
    fn parses_basic_formulas() {
        let f = parse_formula("v = 0 /\\ |0>_{q}").unwrap();
        match f {
            StateFormula::And(a, b) => {
                assert!(matches!(*a, StateFormula::Pure(Bexp::Cmp(CmpOp::Eq, _, _))));
                assert!(matches!(*b, StateFormula::Ket(_)));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn odot_binds_looser_than_and() {
        let f = parse_formula("x = 1 /\\ |0>_{p} (.) y = 2 /\\ |1>_{q}").unwrap();
        assert!(matches!(f, StateFormula::Odot(_, _)));
    }

    #[test]
    fn ket_labels() {
        let f = parse_formula("|01>_{q0 q1}").unwrap();
        match f {
            StateFormula::Ket(q) => {
                let k = q.to_ket();
                assert_eq!(k.vars, vec!["q0", "q1"]);
                assert_eq!(k.amps[1].re, 1.0);
            }
            other => panic!("unexpected {:?}", other),
        }
        // integer label over two qubits
        let f = parse_formula("|2>_{p1 p2}").unwrap();
        match f {
            StateFormula::Ket(q) => assert_eq!(q.to_ket().amps[2].re, 1.0),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn plus_minus_kets() {
        for (src, sign) in [("|+>_{q}", 1.0), ("|->_{q}", -1.0)] {
            match parse_formula(src).unwrap() {
                StateFormula::Ket(q) => {
                    let k = q.to_ket();
                    assert!((k.amps[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
                    assert!((k.amps[1].re - sign * FRAC_1_SQRT_2).abs() < 1e-15);
                }
                other => panic!("unexpected {:?}", other),
            }
        }
    }

    #[test]
    fn amp_list_ket_and_tensor() {
        let f = parse_formula("(0.6|00> + 0.8|11>)_{a b} (x) |+>_{c}").unwrap();
        match f {
            StateFormula::Ket(q) => {
                let k = q.to_ket();
                assert_eq!(k.vars, vec!["a", "b", "c"]);
                assert!((k.norm() - 1.0).abs() < 1e-12);
                // amp of |110> = 0.8 / sqrt(2)
                assert!((k.amps[6].re - 0.8 * FRAC_1_SQRT_2).abs() < 1e-12);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn amp_list_normalizes() {
        match parse_formula("(1|00> + 1|11>)_{a b}").unwrap() {
            StateFormula::Ket(q) => {
                let k = q.to_ket();
                assert!((k.amps[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
                assert!((k.amps[3].re - FRAC_1_SQRT_2).abs() < 1e-12);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn complex_pair_amplitudes() {
        match parse_formula("((0.0, 1.0)|1> + 1|0>)_{q}").unwrap() {
            StateFormula::Ket(q) => {
                let k = q.to_ket();
                assert!((k.amps[1].im - FRAC_1_SQRT_2).abs() < 1e-12);
                assert!((k.amps[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn weighted_distributions() {
        match parse_dist("1/2 (v = 0) (+) 1/2 (v = 1)").unwrap() {
            DistFormula::Weighted(ws) => {
                assert_eq!(ws.len(), 2);
                assert_eq!(ws[0].0, Rational::new(1, 2));
            }
            other => panic!("unexpected {:?}", other),
        }
        // weights must sum to one
        assert!(parse_dist("1/2 (v = 0) (+) 1/4 (v = 1)").is_err());
        // no mixing
        assert!(parse_dist("1/2 (v = 0) (+) v = 1").is_err());
    }

    #[test]
    fn unweighted_and_singleton() {
        assert!(matches!(
            parse_dist("v = 0 (+) v = 1").unwrap(),
            DistFormula::Unweighted(_)
        ));
        assert!(matches!(
            parse_dist("v = 0").unwrap(),
            DistFormula::Single(_)
        ));
        // a weight-one singleton collapses
        assert!(matches!(
            parse_dist("1 (v = 0)").unwrap(),
            DistFormula::Single(_)
        ));
    }

    #[test]
    fn weight_vs_comparison_disambiguation() {
        // `3 <= x` is a formula, not a weight
        assert!(matches!(
            parse_dist("3 <= x").unwrap(),
            DistFormula::Single(StateFormula::Pure(_))
        ));
    }

    #[test]
    fn subst_sugar() {
        let f = parse_formula("(v = 0 /\\ w = v)[1/v]").unwrap();
        assert_eq!(f, parse_formula("1 = 0 /\\ w = 1").unwrap());
    }

    #[test]
    fn pure_implication_needs_parens_and_works() {
        let f = parse_formula("(v = 0 -> w = 1)").unwrap();
        assert!(matches!(f, StateFormula::Pure(Bexp::Imp(_, _))));
    }

    #[test]
    fn divisibility_atom() {
        let b = parse_bexp("y | 15 /\\ y /= 1").unwrap();
        assert!(matches!(b, Bexp::And(_, _)));
    }

    #[test]
    fn forall_formula() {
        let f = parse_formula("forall k. (k * 0 = 0)").unwrap();
        assert!(matches!(f, StateFormula::Forall(_, _)));
    }

    #[test]
    fn parses_proof_outline() {
        let src = r#"
            proof add_check expect valid {
                program "addm.qimp";
                outline {
                    { v = 0 /\ |0>_{q} }
                    H[q];
                    { v = 0 /\ |+>_{q} } by QUnit
                    v := M[q];
                    { 1/2 (v = 0 /\ |0>_{q}) (+) 1/2 (v = 1 /\ |1>_{q}) } by QMeas
                }
            }
        "#;
        let s = parse_proof_script(src).unwrap();
        assert_eq!(s.name, "add_check");
        assert_eq!(s.expect, Expectation::Valid);
        assert_eq!(s.program_ref.as_deref(), Some("addm.qimp"));
        match &s.body {
            ProofBody::Outline(items) => {
                assert_eq!(items.len(), 5);
                assert!(matches!(items[0], OutlineItem::Assert { by: None, .. }));
                assert!(matches!(items[1], OutlineItem::Command(_)));
                match &items[4] {
                    OutlineItem::Assert { by: Some(h), .. } => {
                        assert_eq!(h.rules, vec![RuleName::QMeas]);
                    }
                    other => panic!("unexpected {:?}", other),
                }
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_derive_with_premises() {
        let src = r#"
            proof seq_demo {
                program "p.qimp";
                derive Seq { x = 0 } x := x + 1; x := x + 1 { x = 2 } {
                    derive Assgn { x = 0 } x := x + 1 { x = 1 }
                    derive Assgn { x = 1 } x := x + 1 { x = 2 }
                }
            }
        "#;
        let s = parse_proof_script(src).unwrap();
        match &s.body {
            ProofBody::Derive(n) => {
                assert_eq!(n.rule, RuleName::Seq);
                assert_eq!(n.premises.len(), 2);
                match &n.conclusion {
                    Conclusion::Triple(t) => assert_eq!(t.com.flatten().len(), 2),
                    other => panic!("unexpected {:?}", other),
                }
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_entailment_derive() {
        let src = r#"
            proof ent { derive Entail { v = 3 } entails { v >= 1 } }
        "#;
        let s = parse_proof_script(src).unwrap();
        match &s.body {
            ProofBody::Derive(n) => {
                assert_eq!(n.rule, RuleName::Entail);
                assert!(matches!(n.conclusion, Conclusion::Entails(_, _)));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_outline_while_and_if() {
        let src = r#"
            proof loops {
                outline {
                    { (x < 3 /\ x >= 0) (+) (x = 3) }
                    while x < 3 do
                        { x < 3 /\ x >= 0 }
                        x := x + 1;
                        { (x < 3 /\ x >= 0) (+) (x = 3) }
                    od
                    { x = 3 } by While
                    if x = 3 then
                        { x = 3 }
                        skip;
                        { x = 3 }
                    else
                        { false }
                        abort;
                        { false }
                    fi
                    { x = 3 } by Cond p=1
                }
            }
        "#;
        let s = parse_proof_script(src).unwrap();
        match &s.body {
            ProofBody::Outline(items) => {
                assert!(matches!(items[1], OutlineItem::WhileBlock { .. }));
                assert!(matches!(items[3], OutlineItem::IfBlock { .. }));
                match &items[4] {
                    OutlineItem::Assert { by: Some(h), .. } => {
                        assert_eq!(h.rules, vec![RuleName::Cond]);
                        assert_eq!(h.p, Some(Rational::new(1, 1)));
                    }
                    other => panic!("unexpected {:?}", other),
                }
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn parses_gate_declaration() {
        let src = "
            qbit q;
            gate Ub on 1 = rows {
                0.7071067811865476, 0.7071067811865476 ;
                0.7071067811865476, -0.7071067811865476
            };
            Ub[q]
        ";
        let p = parse_program(src).unwrap();
        assert!(p.gates.contains_key("Ub"));
        assert!(p.gates["Ub"].unitarity_deviation() < 1e-7);
    }

    #[test]
    fn rejects_non_unitary_gate() {
        let src = "qbit q; gate G on 1 = rows { 1, 0 ; 0, 2 }; G[q]";
        assert!(parse_program(src).is_err());
    }

    #[test]
    fn complex_matrix_entries() {
        let src = "qbit q; gate G on 1 = rows { 1j, 0 ; 0, -1 }; G[q]";
        let p = parse_program(src).unwrap();
        let g = &p.gates["G"];
        assert!((g[(0, 0)].im - 1.0).abs() < 1e-15);
        assert!((g[(1, 1)].re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn custom_measurement_completeness_enforced() {
        let ok = "qbit q; measurement M on 1 = { rows { 1, 0 ; 0, 0 }, rows { 0, 0 ; 0, 1 } }; x := M[q]";
        assert!(parse_program(ok).is_ok());
        let bad = "qbit q; measurement M on 1 = { rows { 1, 0 ; 0, 0 }, rows { 0, 0 ; 0, 0.5 } }; x := M[q]";
        assert!(parse_program(bad).is_err());
    }

    #[test]
    fn lemma_outline_item() {
        let src = r#"
            proof l {
                outline {
                    { x = 7 }
                    lemma { x = 7 } OF(x, 15) { z = 4 }
                    { z = 4 }
                }
            }
        "#;
        let s = parse_proof_script(src).unwrap();
        match &s.body {
            ProofBody::Outline(items) => {
                assert!(matches!(items[1], OutlineItem::LemmaStep { .. }))
            }
            other => panic!("unexpected {:?}", other),
        }
    }
}
