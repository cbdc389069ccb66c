//! Evaluation of integer and boolean expressions over classical states, and
//! the builtin classical function registry (`pow_mod`, `gcd`, `cf_denom`,
//! `ord`).
//!
//! `div` and `mod` are Euclidean (the remainder is never negative).
//! Quantified formulas are checked over a bounded window of integers; callers
//! that need to know whether a window was consulted use [`eval_bexp_full`].

use super::ast::*;
use num_integer::Integer;
use std::collections::BTreeMap;
use thiserror::Error;

pub type ClassicalEnv = BTreeMap<String, i64>;

/// Canonical store update: zero is the default value of every variable, so
/// writing 0 removes the entry. Keeps map equality in sync with semantic
/// store equality, which branch merging relies on.
pub fn set_var(env: &mut ClassicalEnv, name: &str, value: i64) {
    if value == 0 {
        env.remove(name);
    } else {
        env.insert(name.to_string(), value);
    }
}

/// Total-store read: unmentioned variables are 0.
pub fn get_var(env: &ClassicalEnv, name: &str) -> i64 {
    env.get(name).copied().unwrap_or(0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalErr {
    #[error("division by zero")]
    DivZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("{0}")]
    Domain(String),
}

/// Inclusive window for quantifier instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForallWindow {
    pub lo: i64,
    pub hi: i64,
}

impl Default for ForallWindow {
    fn default() -> Self {
        ForallWindow { lo: -64, hi: 64 }
    }
}

pub fn pow_mod(base: i64, exp: i64, modulus: i64) -> Result<i64, EvalErr> {
    if modulus <= 0 {
        return Err(EvalErr::Domain(format!("pow_mod modulus {} <= 0", modulus)));
    }
    if exp < 0 {
        return Err(EvalErr::Domain(format!("pow_mod exponent {} < 0", exp)));
    }
    let m = modulus as i128;
    let mut b = (base as i128).rem_euclid(m);
    let mut e = exp as u64;
    let mut acc: i128 = 1 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    Ok(acc as i64)
}

pub fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

/// Denominator recovered from a phase-estimation outcome: among the
/// continued-fraction convergents `h/k` of `z/m` with `k <= bound` and
/// `|z/m - h/k| < 1/(2 k^2)`, the one with the largest `k`. Returns 1 when
/// nothing qualifies (in particular when `z = 0`).
pub fn cf_denom(z: i64, m: i64, bound: i64) -> Result<i64, EvalErr> {
    if m <= 0 {
        return Err(EvalErr::Domain(format!("cf_denom modulus {} <= 0", m)));
    }
    if !(0..m).contains(&z) {
        return Err(EvalErr::Domain(format!(
            "cf_denom outcome {} outside [0, {})",
            z, m
        )));
    }
    if bound < 1 {
        return Err(EvalErr::Domain(format!("cf_denom bound {} < 1", bound)));
    }
    if z == 0 {
        return Ok(1);
    }
    // convergents of z/m by the standard recurrence
    let (mut num, mut den) = (z as i128, m as i128);
    let (mut h_prev, mut h) = (0i128, 1i128);
    let (mut k_prev, mut k) = (1i128, 0i128);
    let mut best = 1i64;
    while den != 0 {
        let a = num / den;
        let r = num - a * den;
        let h_next = a * h + h_prev;
        let k_next = a * k + k_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        num = den;
        den = r;
        if k > bound as i128 {
            break;
        }
        // |z/m - h/k| < 1/(2k^2)  <=>  2k |zk - hm| < m
        let diff = (z as i128 * k - h * m as i128).abs();
        if 2 * k * diff < m as i128 {
            best = k as i64;
        }
    }
    Ok(best)
}

/// Multiplicative order of `x` modulo `n`.
pub fn ord(x: i64, n: i64) -> Result<i64, EvalErr> {
    if n < 2 {
        return Err(EvalErr::Domain(format!("ord modulus {} < 2", n)));
    }
    let xr = x.rem_euclid(n);
    if gcd(xr, n) != 1 {
        return Err(EvalErr::Domain(format!(
            "ord({}, {}) undefined: arguments not coprime",
            x, n
        )));
    }
    let mut cur = xr as i128;
    let m = n as i128;
    for r in 1..=n {
        if cur.rem_euclid(m) == 1 {
            return Ok(r);
        }
        cur = cur * (xr as i128) % m;
    }
    Err(EvalErr::Domain(format!("ord({}, {}) not found", x, n)))
}

pub fn eval_aexp(env: &ClassicalEnv, a: &Aexp) -> Result<i64, EvalErr> {
    match a {
        Aexp::Int(v) => Ok(*v),
        // stores are total: unmentioned variables read as 0
        Aexp::Var(v) => Ok(env.get(v).copied().unwrap_or(0)),
        Aexp::Neg(x) => eval_aexp(env, x)?.checked_neg().ok_or(EvalErr::Overflow),
        Aexp::Bin(op, l, r) => {
            let a = eval_aexp(env, l)?;
            let b = eval_aexp(env, r)?;
            match op {
                BinOp::Add => a.checked_add(b).ok_or(EvalErr::Overflow),
                BinOp::Sub => a.checked_sub(b).ok_or(EvalErr::Overflow),
                BinOp::Mul => a.checked_mul(b).ok_or(EvalErr::Overflow),
                BinOp::Div => {
                    if b == 0 {
                        Err(EvalErr::DivZero)
                    } else {
                        Ok(a.div_euclid(b))
                    }
                }
                BinOp::Mod => {
                    if b == 0 {
                        Err(EvalErr::DivZero)
                    } else {
                        Ok(a.rem_euclid(b))
                    }
                }
            }
        }
        Aexp::Call(name, args) => {
            let vals: Vec<i64> = args
                .iter()
                .map(|x| eval_aexp(env, x))
                .collect::<Result<_, _>>()?;
            match (name.as_str(), vals.as_slice()) {
                ("pow_mod", [b, e, m]) => pow_mod(*b, *e, *m),
                ("gcd", [a, b]) => Ok(gcd(*a, *b)),
                ("cf_denom", [z, m, bound]) => cf_denom(*z, *m, *bound),
                ("ord", [x, n]) => ord(*x, *n),
                _ => Err(EvalErr::Domain(format!("unknown function `{}`", name))),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BexpOutcome {
    pub value: bool,
    /// True when a quantifier was instantiated over the bounded window, so
    /// the verdict is only as good as the window.
    pub windowed: bool,
}

pub fn eval_bexp(env: &ClassicalEnv, b: &Bexp, w: ForallWindow) -> Result<bool, EvalErr> {
    Ok(eval_bexp_full(env, b, w)?.value)
}

pub fn eval_bexp_full(env: &ClassicalEnv, b: &Bexp, w: ForallWindow) -> Result<BexpOutcome, EvalErr> {
    let mut windowed = false;
    let value = eval_b(env, b, w, &mut windowed)?;
    Ok(BexpOutcome { value, windowed })
}

fn eval_b(
    env: &ClassicalEnv,
    b: &Bexp,
    w: ForallWindow,
    windowed: &mut bool,
) -> Result<bool, EvalErr> {
    match b {
        Bexp::True => Ok(true),
        Bexp::False => Ok(false),
        Bexp::Cmp(op, l, r) => {
            let a = eval_aexp(env, l)?;
            let b = eval_aexp(env, r)?;
            Ok(match op {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Le => a <= b,
                CmpOp::Ge => a >= b,
                CmpOp::Lt => a < b,
                CmpOp::Gt => a > b,
            })
        }
        Bexp::Divides(l, r) => {
            let a = eval_aexp(env, l)?;
            let b = eval_aexp(env, r)?;
            Ok(if a == 0 { b == 0 } else { b.rem_euclid(a) == 0 })
        }
        Bexp::And(l, r) => Ok(eval_b(env, l, w, windowed)? && eval_b(env, r, w, windowed)?),
        Bexp::Imp(l, r) => Ok(!eval_b(env, l, w, windowed)? || eval_b(env, r, w, windowed)?),
        Bexp::Not(x) => Ok(!eval_b(env, x, w, windowed)?),
        Bexp::Forall(v, body) => {
            *windowed = true;
            let mut e2 = env.clone();
            for val in w.lo..=w.hi {
                e2.insert(v.clone(), val);
                if !eval_b(&e2, body, w, windowed)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::{parse_aexp, parse_bexp};

    fn env(pairs: &[(&str, i64)]) -> ClassicalEnv {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn pow_mod_matches_naive() {
        assert_eq!(pow_mod(7, 4, 15).unwrap(), 1);
        assert_eq!(pow_mod(7, 2, 15).unwrap(), 4);
        assert_eq!(pow_mod(2, 10, 1000).unwrap(), 24);
        assert_eq!(pow_mod(-3, 2, 5).unwrap(), 4);
        assert_eq!(pow_mod(5, 0, 7).unwrap(), 1);
        assert!(pow_mod(2, -1, 5).is_err());
        assert!(pow_mod(2, 3, 0).is_err());
    }

    #[test]
    fn gcd_cases() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(gcd(-12, 18), 6);
        assert_eq!(gcd(0, 5), 5);
        assert_eq!(gcd(0, 0), 0);
    }

    #[test]
    fn cf_denom_recovers_period() {
        // 12/16 = 3/4 exactly
        assert_eq!(cf_denom(12, 16, 15).unwrap(), 4);
        assert_eq!(cf_denom(4, 16, 15).unwrap(), 4);
        assert_eq!(cf_denom(8, 16, 15).unwrap(), 2);
        assert_eq!(cf_denom(0, 16, 15).unwrap(), 1);
        // bound cuts off the deepest convergent
        assert_eq!(cf_denom(10, 16, 7).unwrap(), 3);
        assert_eq!(cf_denom(10, 16, 8).unwrap(), 8);
        assert!(cf_denom(16, 16, 15).is_err());
        assert!(cf_denom(-1, 16, 15).is_err());
    }

    #[test]
    fn cf_denom_larger_register() {
        // 2^11 outcomes for period 12 of 5 mod 221: z near k*2048/12
        let m = 2048;
        let z = (5.0f64 / 12.0 * m as f64).round() as i64; // 853
        assert_eq!(cf_denom(z, m, 220).unwrap(), 12);
    }

    #[test]
    fn ord_cases() {
        assert_eq!(ord(7, 15).unwrap(), 4);
        assert_eq!(ord(2, 15).unwrap(), 4);
        assert_eq!(ord(4, 15).unwrap(), 2);
        assert_eq!(ord(11, 15).unwrap(), 2);
        assert_eq!(ord(13, 15).unwrap(), 4);
        assert_eq!(ord(14, 15).unwrap(), 2);
        assert!(ord(3, 15).is_err());
        assert!(ord(5, 1).is_err());
    }

    #[test]
    fn euclidean_div_mod() {
        let e = env(&[]);
        assert_eq!(
            eval_aexp(&e, &parse_aexp("(0 - 7) div 2").unwrap()).unwrap(),
            -4
        );
        assert_eq!(
            eval_aexp(&e, &parse_aexp("(0 - 7) mod 2").unwrap()).unwrap(),
            1
        );
        assert!(matches!(
            eval_aexp(&e, &parse_aexp("1 div 0").unwrap()),
            Err(EvalErr::DivZero)
        ));
    }

    #[test]
    fn divides_and_cmp() {
        let e = env(&[("y", 5), ("n", 15)]);
        let w = ForallWindow::default();
        assert!(eval_bexp(&e, &parse_bexp("y | n").unwrap(), w).unwrap());
        assert!(!eval_bexp(&e, &parse_bexp("y | 7").unwrap(), w).unwrap());
        assert!(eval_bexp(&e, &parse_bexp("y /= 1 /\\ y /= n").unwrap(), w).unwrap());
        // zero divides only zero
        assert!(eval_bexp(&e, &parse_bexp("0 | 0").unwrap(), w).unwrap());
        assert!(!eval_bexp(&e, &parse_bexp("0 | 3").unwrap(), w).unwrap());
    }

    #[test]
    fn forall_window_flagged() {
        let e = env(&[]);
        let w = ForallWindow { lo: -4, hi: 4 };
        let out = eval_bexp_full(&e, &parse_bexp("forall k. k * 0 = 0").unwrap(), w).unwrap();
        assert!(out.value);
        assert!(out.windowed);
        let out = eval_bexp_full(&e, &parse_bexp("forall k. k >= 0").unwrap(), w).unwrap();
        assert!(!out.value);
        let out = eval_bexp_full(&e, &parse_bexp("1 = 1").unwrap(), w).unwrap();
        assert!(!out.windowed);
    }

    #[test]
    fn unmentioned_variable_reads_as_zero() {
        let e = env(&[]);
        assert_eq!(eval_aexp(&e, &parse_aexp("missing + 1").unwrap()).unwrap(), 1);
    }

    #[test]
    fn call_eval() {
        let e = env(&[("x", 7), ("n", 15)]);
        assert_eq!(
            eval_aexp(&e, &parse_aexp("pow_mod(x, 2, n)").unwrap()).unwrap(),
            4
        );
        assert_eq!(
            eval_aexp(&e, &parse_aexp("gcd(x - 1, n)").unwrap()).unwrap(),
            3
        );
        assert_eq!(
            eval_aexp(&e, &parse_aexp("ord(x, n)").unwrap()).unwrap(),
            4
        );
    }
}
