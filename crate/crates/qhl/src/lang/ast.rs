//! Abstract syntax for programs, assertions, and proof scripts.
//!
//! Weights in distribution formulas are exact rationals; ket literals store a
//! dense amplitude vector over their qubit tuple (first tuple element = most
//! significant basis bit, matching the layout convention).

use crate::qcore::{C64, Matrix};
use std::collections::BTreeMap;

pub type Rational = num_rational::Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
}

/// Integer expressions. `Call` covers the builtin function registry
/// (`pow_mod`, `gcd`, `cf_denom`, `ord`); arities are checked at parse time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Aexp {
    Int(i64),
    Var(String),
    Neg(Box<Aexp>),
    Bin(BinOp, Box<Aexp>, Box<Aexp>),
    Call(String, Vec<Aexp>),
}

impl Aexp {
    pub fn var(name: &str) -> Aexp {
        Aexp::Var(name.to_string())
    }

    /// Integer constant in the shape the parser produces: negative values
    /// become a negation of the positive literal.
    pub fn int_lit(v: i64) -> Aexp {
        if v < 0 && v != i64::MIN {
            Aexp::Neg(Box::new(Aexp::Int(-v)))
        } else {
            Aexp::Int(v)
        }
    }
}

/// Boolean / pure formulas. The same type serves as program guard and as the
/// pure layer of the assertion language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bexp {
    True,
    False,
    Cmp(CmpOp, Aexp, Aexp),
    /// `a | b`: a divides b.
    Divides(Aexp, Aexp),
    And(Box<Bexp>, Box<Bexp>),
    Imp(Box<Bexp>, Box<Bexp>),
    Not(Box<Bexp>),
    Forall(String, Box<Bexp>),
}

/// Reference to a gate by name with optional classical integer arguments
/// (evaluated in the current classical state when applied).
#[derive(Debug, Clone, PartialEq)]
pub struct GateRef {
    pub name: String,
    pub args: Vec<Aexp>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Com {
    Skip,
    Abort,
    Assign(String, Aexp),
    Seq(Box<Com>, Box<Com>),
    If(Bexp, Box<Com>, Box<Com>),
    While(Bexp, Box<Com>),
    /// `q1 q2 ... := |0>`: reset each listed qubit to `|0>` in order.
    InitQubit(Vec<String>),
    /// `U[q1,...,qk]`
    Unitary(GateRef, Vec<String>),
    /// `x := M[q1,...,qk]`
    Measure {
        var: String,
        meas: String,
        qubits: Vec<String>,
    },
    /// `x := random(lo, hi)`: uniform over the inclusive range.
    Random {
        var: String,
        lo: Aexp,
        hi: Aexp,
    },
    /// Call of a declared macro; expanded during analysis and evaluation.
    MacroCall(String, Vec<Aexp>),
}

impl Com {
    /// Right-nested sequence of the given commands; `skip` when empty.
    pub fn seq_of(mut cs: Vec<Com>) -> Com {
        match cs.len() {
            0 => Com::Skip,
            1 => cs.pop().unwrap(),
            _ => {
                let rest = cs.split_off(1);
                Com::Seq(Box::new(cs.pop().unwrap()), Box::new(Com::seq_of(rest)))
            }
        }
    }

    /// Flatten nested `Seq` into a statement list.
    pub fn flatten(&self) -> Vec<&Com> {
        match self {
            Com::Seq(a, b) => {
                let mut v = a.flatten();
                v.extend(b.flatten());
                v
            }
            other => vec![other],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDef {
    pub arity: usize,
    pub ops: Vec<Matrix>,
}

impl MeasurementDef {
    /// Computational basis measurement on `k` qubits: `2^k` projectors.
    pub fn std(k: usize) -> MeasurementDef {
        let dim = 1usize << k;
        let ops = (0..dim)
            .map(|i| {
                let mut m = Matrix::zeros(dim);
                m[(i, i)] = C64::new(1.0, 0.0);
                m
            })
            .collect();
        MeasurementDef { arity: k, ops }
    }

    /// Deviation of `sum_i M_i^dagger M_i` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let dim = 1usize << self.arity;
        let mut acc = Matrix::zeros(dim);
        for op in &self.ops {
            acc = acc.add(&op.adjoint().mul(op).expect("dim")).expect("dim");
        }
        acc.max_abs_diff(&Matrix::identity(dim))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDef {
    pub params: Vec<String>,
    pub body: Com,
}

/// A parsed program file: declarations plus the main command.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    /// Quantum variables in declaration order; fixes the basis convention.
    pub qubits: Vec<String>,
    /// Declared defaults for classical variables (overridable by the host).
    pub inits: BTreeMap<String, i64>,
    pub measurements: BTreeMap<String, MeasurementDef>,
    /// Custom static gates declared in the file.
    pub gates: BTreeMap<String, Matrix>,
    pub macros: BTreeMap<String, MacroDef>,
    pub body: Com,
}

// ---------------------------------------------------------------------------
// Assertions
// ---------------------------------------------------------------------------

/// Ket literal: dense amplitudes over an ordered qubit tuple, normalized.
#[derive(Debug, Clone)]
pub struct KetLit {
    pub vars: Vec<String>,
    pub amps: Vec<C64>,
}

impl PartialEq for KetLit {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.amps == other.amps
    }
}

impl KetLit {
    pub fn basis(vars: Vec<String>, index: usize) -> KetLit {
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << vars.len()];
        amps[index] = C64::new(1.0, 0.0);
        KetLit { vars, amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Quantum expressions: ket literals and tensor products of them.
#[derive(Debug, Clone, PartialEq)]
pub enum QExpr {
    Ket(KetLit),
    Tensor(Box<QExpr>, Box<QExpr>),
}

impl QExpr {
    pub fn vars(&self) -> Vec<String> {
        match self {
            QExpr::Ket(k) => k.vars.clone(),
            QExpr::Tensor(a, b) => {
                let mut v = a.vars();
                v.extend(b.vars());
                v
            }
        }
    }

    /// Collapse to a single ket over the concatenated tuple.
    pub fn to_ket(&self) -> KetLit {
        match self {
            QExpr::Ket(k) => k.clone(),
            QExpr::Tensor(a, b) => {
                let ka = a.to_ket();
                let kb = b.to_ket();
                let mut vars = ka.vars.clone();
                vars.extend(kb.vars.iter().cloned());
                let mut amps = Vec::with_capacity(ka.amps.len() * kb.amps.len());
                for x in &ka.amps {
                    for y in &kb.amps {
                        amps.push(x * y);
                    }
                }
                KetLit { vars, amps }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateFormula {
    Pure(Bexp),
    Ket(QExpr),
    /// Separating conjunction over disjoint quantum footprints.
    Odot(Box<StateFormula>, Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Not(Box<StateFormula>),
    Forall(String, Box<StateFormula>),
}

impl StateFormula {
    pub fn truth() -> StateFormula {
        StateFormula::Pure(Bexp::True)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, StateFormula::Pure(Bexp::True))
    }

    pub fn and(a: StateFormula, b: StateFormula) -> StateFormula {
        StateFormula::And(Box::new(a), Box::new(b))
    }

    pub fn odot(a: StateFormula, b: StateFormula) -> StateFormula {
        StateFormula::Odot(Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistFormula {
    Single(StateFormula),
    /// `p1 F1 (+) ... (+) pn Fn` with exact rational weights summing to one.
    Weighted(Vec<(Rational, StateFormula)>),
    /// `F1 (+) ... (+) Fn`: weights existentially quantified.
    Unweighted(Vec<StateFormula>),
}

impl DistFormula {
    pub fn falsum() -> DistFormula {
        DistFormula::Single(StateFormula::Pure(Bexp::False))
    }

    /// View as weighted components when possible (singleton = weight 1).
    pub fn components(&self) -> Vec<(Option<Rational>, &StateFormula)> {
        match self {
            DistFormula::Single(f) => vec![(Some(Rational::new(1, 1)), f)],
            DistFormula::Weighted(ws) => ws.iter().map(|(p, f)| (Some(*p), f)).collect(),
            DistFormula::Unweighted(fs) => fs.iter().map(|f| (None, f)).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Proof scripts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleName {
    Skip,
    Abort,
    Assgn,
    Seq,
    Cond,
    Absurd,
    Conseq,
    While,
    Conj,
    QFrame,
    Sum,
    QInit,
    QUnit,
    QMeas,
    /// Dispatch on a guard from a shared precondition; derived rule used by
    /// classical case splits (both branches must reach the same postcondition
    /// family is not required; see prover docs).
    CondCase,
    /// Random assignment: postcondition must hold for every value in range.
    Rand,
    /// Sub-triple assumed without derivation; reported as conditional.
    Lemma,
    /// Entailment leaf discharged by the entailment engine.
    Entail,
}

impl RuleName {
    pub fn parse(s: &str) -> Option<RuleName> {
        Some(match s {
            "Skip" => RuleName::Skip,
            "Abort" => RuleName::Abort,
            "Assgn" => RuleName::Assgn,
            "Seq" => RuleName::Seq,
            "Cond" => RuleName::Cond,
            "Absurd" => RuleName::Absurd,
            "Conseq" => RuleName::Conseq,
            "While" => RuleName::While,
            "Conj" => RuleName::Conj,
            "QFrame" => RuleName::QFrame,
            "Sum" => RuleName::Sum,
            "QInit" => RuleName::QInit,
            "QUnit" => RuleName::QUnit,
            "QMeas" => RuleName::QMeas,
            "CondCase" => RuleName::CondCase,
            "Rand" => RuleName::Rand,
            "Lemma" => RuleName::Lemma,
            "Entail" => RuleName::Entail,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleName::Skip => "Skip",
            RuleName::Abort => "Abort",
            RuleName::Assgn => "Assgn",
            RuleName::Seq => "Seq",
            RuleName::Cond => "Cond",
            RuleName::Absurd => "Absurd",
            RuleName::Conseq => "Conseq",
            RuleName::While => "While",
            RuleName::Conj => "Conj",
            RuleName::QFrame => "QFrame",
            RuleName::Sum => "Sum",
            RuleName::QInit => "QInit",
            RuleName::QUnit => "QUnit",
            RuleName::QMeas => "QMeas",
            RuleName::CondCase => "CondCase",
            RuleName::Rand => "Rand",
            RuleName::Lemma => "Lemma",
            RuleName::Entail => "Entail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoareTriple {
    pub pre: DistFormula,
    pub com: Com,
    pub post: DistFormula,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conclusion {
    Triple(HoareTriple),
    Entails(DistFormula, DistFormula),
}

/// A node of a derivation tree. `step` points back at the outline line the
/// node was elaborated from, when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofNode {
    pub rule: RuleName,
    pub p: Option<Rational>,
    pub weights: Option<Vec<Rational>>,
    pub frame: Option<StateFormula>,
    pub premises: Vec<ProofNode>,
    pub conclusion: Conclusion,
    pub step: Option<usize>,
}

impl ProofNode {
    pub fn new(rule: RuleName, conclusion: Conclusion) -> ProofNode {
        ProofNode {
            rule,
            p: None,
            weights: None,
            frame: None,
            premises: Vec::new(),
            conclusion,
            step: None,
        }
    }

    pub fn count(&self) -> usize {
        1 + self.premises.iter().map(ProofNode::count).sum::<usize>()
    }
}

/// Rule annotation attached to an outline assertion: `by QMeas, Sum` or
/// `by Cond p=1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleHint {
    pub rules: Vec<RuleName>,
    pub p: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutlineItem {
    /// `{ D }` with an optional justification for the step that produced it.
    Assert {
        d: DistFormula,
        by: Option<RuleHint>,
    },
    /// A bare atomic command; justified by the following assertion's hint.
    Command(Com),
    /// `local { F1 } c { F2 } by Rule`: a framed atomic step. The difference
    /// between the surrounding assertion and `F1` becomes the frame.
    Local {
        pre: StateFormula,
        com: Com,
        post: StateFormula,
        rule: RuleName,
    },
    /// `while b do <outline> od`; the following assertion must carry `by While`.
    WhileBlock { guard: Bexp, body: Vec<OutlineItem> },
    /// `if b then <outline> else <outline> fi`; followed by `by Cond p=..`.
    IfBlock {
        guard: Bexp,
        then_items: Vec<OutlineItem>,
        else_items: Vec<OutlineItem>,
    },
    /// `lemma { D1 } c { D2 }`: assumed sub-triple covering `c` in the spine.
    LemmaStep {
        pre: DistFormula,
        com: Com,
        post: DistFormula,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Valid,
    Refuted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProofBody {
    Outline(Vec<OutlineItem>),
    Derive(ProofNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofScript {
    pub name: String,
    pub expect: Expectation,
    /// Optional file reference whose body must match the outline's spine.
    pub program_ref: Option<String>,
    pub body: ProofBody,
}
