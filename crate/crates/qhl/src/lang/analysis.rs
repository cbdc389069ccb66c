//! Static analysis over the AST: free and modified variables, substitution,
//! macro expansion.

use super::ast::*;
use std::collections::{BTreeMap, BTreeSet};

pub fn free_vars_aexp(a: &Aexp, out: &mut BTreeSet<String>) {
    match a {
        Aexp::Int(_) => {}
        Aexp::Var(v) => {
            out.insert(v.clone());
        }
        Aexp::Neg(x) => free_vars_aexp(x, out),
        Aexp::Bin(_, x, y) => {
            free_vars_aexp(x, out);
            free_vars_aexp(y, out);
        }
        Aexp::Call(_, args) => {
            for x in args {
                free_vars_aexp(x, out);
            }
        }
    }
}

pub fn free_vars_bexp(b: &Bexp, out: &mut BTreeSet<String>) {
    match b {
        Bexp::True | Bexp::False => {}
        Bexp::Cmp(_, x, y) | Bexp::Divides(x, y) => {
            free_vars_aexp(x, out);
            free_vars_aexp(y, out);
        }
        Bexp::And(x, y) | Bexp::Imp(x, y) => {
            free_vars_bexp(x, out);
            free_vars_bexp(y, out);
        }
        Bexp::Not(x) => free_vars_bexp(x, out),
        Bexp::Forall(v, body) => {
            let mut inner = BTreeSet::new();
            free_vars_bexp(body, &mut inner);
            inner.remove(v);
            out.extend(inner);
        }
    }
}

/// Free classical variables of a state formula.
pub fn free_vars_formula(f: &StateFormula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_formula(f, &mut out);
    out
}

fn collect_formula(f: &StateFormula, out: &mut BTreeSet<String>) {
    match f {
        StateFormula::Pure(b) => free_vars_bexp(b, out),
        StateFormula::Ket(_) => {}
        StateFormula::Odot(a, b) | StateFormula::And(a, b) => {
            collect_formula(a, out);
            collect_formula(b, out);
        }
        StateFormula::Not(a) => collect_formula(a, out),
        StateFormula::Forall(v, body) => {
            let mut inner = BTreeSet::new();
            collect_formula(body, &mut inner);
            inner.remove(v);
            out.extend(inner);
        }
    }
}

pub fn free_vars_dist(d: &DistFormula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (_, f) in d.components() {
        out.extend(free_vars_formula(f));
    }
    out
}

/// Quantum variables mentioned by ket literals anywhere in the formula.
pub fn qvars_formula(f: &StateFormula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_qvars(f, &mut out);
    out
}

fn collect_qvars(f: &StateFormula, out: &mut BTreeSet<String>) {
    match f {
        StateFormula::Pure(_) => {}
        StateFormula::Ket(q) => out.extend(q.vars()),
        StateFormula::Odot(a, b) | StateFormula::And(a, b) => {
            collect_qvars(a, out);
            collect_qvars(b, out);
        }
        StateFormula::Not(a) | StateFormula::Forall(_, a) => collect_qvars(a, out),
    }
}

pub fn qvars_dist(d: &DistFormula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (_, f) in d.components() {
        out.extend(qvars_formula(f));
    }
    out
}

pub fn subst_aexp(a: &Aexp, x: &str, r: &Aexp) -> Aexp {
    match a {
        Aexp::Int(_) => a.clone(),
        Aexp::Var(v) => {
            if v == x {
                r.clone()
            } else {
                a.clone()
            }
        }
        Aexp::Neg(inner) => Aexp::Neg(Box::new(subst_aexp(inner, x, r))),
        Aexp::Bin(op, l, rr) => Aexp::Bin(
            *op,
            Box::new(subst_aexp(l, x, r)),
            Box::new(subst_aexp(rr, x, r)),
        ),
        Aexp::Call(name, args) => Aexp::Call(
            name.clone(),
            args.iter().map(|a| subst_aexp(a, x, r)).collect(),
        ),
    }
}

/// Pick a name not in `avoid`, derived from `base` by appending primes.
fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut name = format!("{}'", base);
    while avoid.contains(&name) {
        name.push('\'');
    }
    name
}

pub fn subst_bexp(b: &Bexp, x: &str, r: &Aexp) -> Bexp {
    subst_bexp_impl(b, x, r)
}

fn subst_bexp_impl(b: &Bexp, x: &str, r: &Aexp) -> Bexp {
    match b {
        Bexp::True | Bexp::False => b.clone(),
        Bexp::Cmp(op, l, rr) => Bexp::Cmp(*op, subst_aexp(l, x, r), subst_aexp(rr, x, r)),
        Bexp::Divides(l, rr) => Bexp::Divides(subst_aexp(l, x, r), subst_aexp(rr, x, r)),
        Bexp::And(l, rr) => Bexp::And(
            Box::new(subst_bexp_impl(l, x, r)),
            Box::new(subst_bexp_impl(rr, x, r)),
        ),
        Bexp::Imp(l, rr) => Bexp::Imp(
            Box::new(subst_bexp_impl(l, x, r)),
            Box::new(subst_bexp_impl(rr, x, r)),
        ),
        Bexp::Not(inner) => Bexp::Not(Box::new(subst_bexp_impl(inner, x, r))),
        Bexp::Forall(v, body) => {
            if v == x {
                b.clone()
            } else {
                let mut rvars = BTreeSet::new();
                free_vars_aexp(r, &mut rvars);
                if rvars.contains(v) {
                    // rename the binder to avoid capture
                    let mut avoid = rvars.clone();
                    let mut bodyvars = BTreeSet::new();
                    free_vars_bexp(body, &mut bodyvars);
                    avoid.extend(bodyvars);
                    avoid.insert(x.to_string());
                    let v2 = fresh_name(v, &avoid);
                    let renamed = subst_bexp_impl(body, v, &Aexp::Var(v2.clone()));
                    Bexp::Forall(v2, Box::new(subst_bexp_impl(&renamed, x, r)))
                } else {
                    Bexp::Forall(v.clone(), Box::new(subst_bexp_impl(body, x, r)))
                }
            }
        }
    }
}

/// Substitute an integer expression for a classical variable. Ket literals
/// are untouched (their variables are quantum).
pub fn subst_formula(f: &StateFormula, x: &str, r: &Aexp) -> StateFormula {
    match f {
        StateFormula::Pure(b) => StateFormula::Pure(subst_bexp_impl(b, x, r)),
        StateFormula::Ket(_) => f.clone(),
        StateFormula::Odot(a, b) => StateFormula::odot(subst_formula(a, x, r), subst_formula(b, x, r)),
        StateFormula::And(a, b) => StateFormula::and(subst_formula(a, x, r), subst_formula(b, x, r)),
        StateFormula::Not(a) => StateFormula::Not(Box::new(subst_formula(a, x, r))),
        StateFormula::Forall(v, body) => {
            if v == x {
                f.clone()
            } else {
                let mut rvars = BTreeSet::new();
                free_vars_aexp(r, &mut rvars);
                if rvars.contains(v) {
                    let mut avoid = rvars.clone();
                    avoid.extend(free_vars_formula(body));
                    avoid.insert(x.to_string());
                    let v2 = fresh_name(v, &avoid);
                    let renamed = subst_formula(body, v, &Aexp::Var(v2.clone()));
                    StateFormula::Forall(v2, Box::new(subst_formula(&renamed, x, r)))
                } else {
                    StateFormula::Forall(v.clone(), Box::new(subst_formula(body, x, r)))
                }
            }
        }
    }
}

pub fn subst_dist(d: &DistFormula, x: &str, r: &Aexp) -> DistFormula {
    match d {
        DistFormula::Single(f) => DistFormula::Single(subst_formula(f, x, r)),
        DistFormula::Weighted(ws) => DistFormula::Weighted(
            ws.iter()
                .map(|(p, f)| (*p, subst_formula(f, x, r)))
                .collect(),
        ),
        DistFormula::Unweighted(fs) => {
            DistFormula::Unweighted(fs.iter().map(|f| subst_formula(f, x, r)).collect())
        }
    }
}

/// Classical and quantum variables a command may modify. Macro calls must be
/// expanded first; hitting one is an error.
pub fn mod_vars(c: &Com) -> Result<(BTreeSet<String>, BTreeSet<String>), String> {
    let mut cl = BTreeSet::new();
    let mut qu = BTreeSet::new();
    collect_mod(c, &mut cl, &mut qu)?;
    Ok((cl, qu))
}

fn collect_mod(
    c: &Com,
    cl: &mut BTreeSet<String>,
    qu: &mut BTreeSet<String>,
) -> Result<(), String> {
    match c {
        Com::Skip | Com::Abort => {}
        Com::Assign(v, _) => {
            cl.insert(v.clone());
        }
        Com::Random { var, .. } => {
            cl.insert(var.clone());
        }
        Com::Measure { var, qubits, .. } => {
            cl.insert(var.clone());
            qu.extend(qubits.iter().cloned());
        }
        Com::InitQubit(qs) => qu.extend(qs.iter().cloned()),
        Com::Unitary(_, qs) => qu.extend(qs.iter().cloned()),
        Com::Seq(a, b) => {
            collect_mod(a, cl, qu)?;
            collect_mod(b, cl, qu)?;
        }
        Com::If(_, a, b) => {
            collect_mod(a, cl, qu)?;
            collect_mod(b, cl, qu)?;
        }
        Com::While(_, body) => collect_mod(body, cl, qu)?,
        Com::MacroCall(name, _) => {
            return Err(format!("macro `{}` not expanded", name));
        }
    }
    Ok(())
}

/// Replace macro calls by their bodies with actual arguments substituted for
/// the formal parameters. Assignment targets must stay variables after
/// substitution. Nested macros are expanded; cycles are an error.
pub fn expand_macros(c: &Com, macros: &BTreeMap<String, MacroDef>) -> Result<Com, String> {
    let mut stack = Vec::new();
    expand(c, macros, &mut stack)
}

fn expand(
    c: &Com,
    macros: &BTreeMap<String, MacroDef>,
    stack: &mut Vec<String>,
) -> Result<Com, String> {
    Ok(match c {
        Com::Skip | Com::Abort | Com::Assign(_, _) | Com::InitQubit(_) | Com::Unitary(_, _)
        | Com::Measure { .. } | Com::Random { .. } => c.clone(),
        Com::Seq(a, b) => Com::Seq(
            Box::new(expand(a, macros, stack)?),
            Box::new(expand(b, macros, stack)?),
        ),
        Com::If(g, a, b) => Com::If(
            g.clone(),
            Box::new(expand(a, macros, stack)?),
            Box::new(expand(b, macros, stack)?),
        ),
        Com::While(g, body) => Com::While(g.clone(), Box::new(expand(body, macros, stack)?)),
        Com::MacroCall(name, args) => {
            let def = macros
                .get(name)
                .ok_or_else(|| format!("unknown macro `{}`", name))?;
            if def.params.len() != args.len() {
                return Err(format!(
                    "macro `{}` takes {} arguments, got {}",
                    name,
                    def.params.len(),
                    args.len()
                ));
            }
            if stack.contains(name) {
                return Err(format!("recursive macro `{}`", name));
            }
            let mut body = def.body.clone();
            for (p, a) in def.params.iter().zip(args.iter()) {
                body = subst_com(&body, p, a)?;
            }
            stack.push(name.clone());
            let out = expand(&body, macros, stack)?;
            stack.pop();
            out
        }
    })
}

fn subst_com(c: &Com, x: &str, r: &Aexp) -> Result<Com, String> {
    let target = |v: &String| -> Result<String, String> {
        if v == x {
            match r {
                Aexp::Var(w) => Ok(w.clone()),
                _ => Err(format!(
                    "macro argument for `{}` must be a variable (it is assigned)",
                    x
                )),
            }
        } else {
            Ok(v.clone())
        }
    };
    Ok(match c {
        Com::Skip | Com::Abort | Com::InitQubit(_) => c.clone(),
        Com::Assign(v, a) => Com::Assign(target(v)?, subst_aexp(a, x, r)),
        Com::Unitary(g, qs) => Com::Unitary(
            GateRef {
                name: g.name.clone(),
                args: g.args.iter().map(|a| subst_aexp(a, x, r)).collect(),
            },
            qs.clone(),
        ),
        Com::Measure { var, meas, qubits } => Com::Measure {
            var: target(var)?,
            meas: meas.clone(),
            qubits: qubits.clone(),
        },
        Com::Random { var, lo, hi } => Com::Random {
            var: target(var)?,
            lo: subst_aexp(lo, x, r),
            hi: subst_aexp(hi, x, r),
        },
        Com::Seq(a, b) => Com::Seq(
            Box::new(subst_com(a, x, r)?),
            Box::new(subst_com(b, x, r)?),
        ),
        Com::If(g, a, b) => Com::If(
            subst_bexp_impl(g, x, r),
            Box::new(subst_com(a, x, r)?),
            Box::new(subst_com(b, x, r)?),
        ),
        Com::While(g, body) => Com::While(subst_bexp_impl(g, x, r), Box::new(subst_com(body, x, r)?)),
        Com::MacroCall(name, args) => Com::MacroCall(
            name.clone(),
            args.iter().map(|a| subst_aexp(a, x, r)).collect(),
        ),
    })
}
