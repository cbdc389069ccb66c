//! Derivation checking: validates proof trees node by node against the
//! inference rules, computing every side condition. Entailment obligations
//! are delegated to the entailment engine; an obligation it cannot derive
//! does not fail the proof but downgrades the report to conditionally
//! checked, listing each open claim for review.

mod outline;

pub use outline::{check_script, elaborate_outline, ScriptError, ScriptOutcome};

use crate::assertion::{
    entails, ket_distance, reorder_ket, unit_ket, EntailOutcome, StepKind,
};
use crate::lang::analysis::{
    free_vars_aexp, free_vars_dist, free_vars_formula, mod_vars, qvars_dist, qvars_formula,
    subst_bexp, subst_dist,
};
use crate::lang::{
    Aexp, Bexp, Com, Conclusion, DistFormula, GateRef, HoareTriple, KetLit, MeasurementDef,
    ProofNode, Rational, RuleName, StateFormula,
};
use crate::qcore::{apply_op, GateTable, Matrix, PureState, QubitLayout};
use crate::sem::EvalConfig;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// Tolerance for comparing written kets against numerically computed ones
/// (unitary transforms, post-measurement states). Matches the satisfaction
/// layer's fixed ket tolerance.
pub const KET_CHECK_TOL: f64 = 1e-7;

/// Measurement outcomes below this probability are dropped; the rule then
/// requires the corresponding postcondition component to be absent.
pub const OUTCOME_PRUNE: f64 = 1e-12;

/// Probabilities of a complete measurement must sum to one within this.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Static context a proof is checked against: the measurement and gate
/// declarations of the program the proof speaks about.
pub struct ProofContext<'a> {
    pub measurements: &'a BTreeMap<String, MeasurementDef>,
    pub gates: &'a GateTable,
}

impl<'a> ProofContext<'a> {
    pub fn for_program(program: &'a crate::lang::Program, gates: &'a GateTable) -> Self {
        ProofContext {
            measurements: &program.measurements,
            gates,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum NodeStatus {
    Ok,
    SideConditionFailure { detail: String },
    RuleShapeMismatch { detail: String },
    DelegatedEntailmentUnknown { detail: String },
}

impl NodeStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, NodeStatus::Ok)
    }

    pub fn is_failure(&self) -> bool {
        matches!(
            self,
            NodeStatus::SideConditionFailure { .. } | NodeStatus::RuleShapeMismatch { .. }
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeReport {
    /// Dotted premise path from the root, e.g. "root.0.1".
    pub path: String,
    pub rule: String,
    pub conclusion: String,
    pub status: NodeStatus,
    /// How an ok node was justified: "structural", "numeric-ket", or
    /// "pure-window"; absent on failures and delegated unknowns.
    pub justification: Option<String>,
    /// Outline line the node was elaborated from, when there is one.
    pub step: Option<usize>,
}

/// An obligation the checker could not discharge and records for review:
/// either an entailment the engine returned unknown on, or a lemma step
/// assumed without derivation.
#[derive(Debug, Clone, Serialize)]
pub struct OpenObligation {
    pub path: String,
    pub claim: String,
    pub detail: String,
    /// Result of the fallback numeric comparison (state vectors compared up
    /// to phase): `Some(true)` means the claim holds on its literal quantum
    /// content even though no derivation was found; `None` means the shape
    /// does not admit the comparison.
    pub numeric_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub nodes: Vec<NodeReport>,
    /// No node failed a shape or side condition. Open obligations do not
    /// clear this flag; see `conditional`.
    pub ok: bool,
    /// Open obligations, in checking order.
    pub conditional: Vec<OpenObligation>,
    /// Paths of nodes whose justification rests on float comparison of
    /// quantum states.
    pub numeric: Vec<String>,
    /// Paths of nodes whose justification rests on finite-window classical
    /// reasoning.
    pub windowed: Vec<String>,
}

impl CheckReport {
    /// Every node strictly ok: no failures and no open obligations.
    pub fn clean(&self) -> bool {
        self.ok && self.conditional.is_empty()
    }

    pub fn failures(&self) -> impl Iterator<Item = &NodeReport> {
        self.nodes.iter().filter(|n| n.status.is_failure())
    }
}

/// Checks a derivation tree. Preorder walk; every node is checked even when
/// an ancestor fails, so one run reports all problems.
pub fn check_node(ctx: &ProofContext, node: &ProofNode, cfg: &EvalConfig) -> CheckReport {
    let mut report = CheckReport {
        nodes: Vec::new(),
        ok: true,
        conditional: Vec::new(),
        numeric: Vec::new(),
        windowed: Vec::new(),
    };
    walk(ctx, node, cfg, "root", &mut report);
    report
}

fn walk(ctx: &ProofContext, node: &ProofNode, cfg: &EvalConfig, path: &str, out: &mut CheckReport) {
    let verdict = match node.rule {
        RuleName::Skip => check_skip(node),
        RuleName::Abort => check_abort(node),
        RuleName::Assgn => check_assgn(node),
        RuleName::Seq => check_seq(node),
        RuleName::Cond => check_cond(node),
        RuleName::Absurd => check_absurd(node),
        RuleName::Conseq => check_conseq(node),
        RuleName::While => check_while(node),
        RuleName::Conj => check_conj(node),
        RuleName::QFrame => check_qframe(node),
        RuleName::Sum => check_sum(node),
        RuleName::QInit => check_qinit(node),
        RuleName::QUnit => check_qunit(ctx, node),
        RuleName::QMeas => check_qmeas(ctx, node),
        RuleName::CondCase => check_cond_case(node, cfg),
        RuleName::Rand => check_rand(node),
        RuleName::Lemma => check_lemma(node),
        RuleName::Entail => check_entail(node, cfg),
    };

    let (status, justification) = match verdict {
        RuleCheck::Pass(kind) => {
            let j = match kind {
                StepKind::Structural => "structural",
                StepKind::NumericKet => {
                    out.numeric.push(path.to_string());
                    "numeric-ket"
                }
                StepKind::PureWindow => {
                    out.windowed.push(path.to_string());
                    "pure-window"
                }
            };
            (NodeStatus::Ok, Some(j.to_string()))
        }
        RuleCheck::Open { claim, detail, numeric_ok } => {
            out.conditional.push(OpenObligation {
                path: path.to_string(),
                claim,
                detail: detail.clone(),
                numeric_ok,
            });
            (NodeStatus::DelegatedEntailmentUnknown { detail }, None)
        }
        RuleCheck::Shape(detail) => {
            out.ok = false;
            (NodeStatus::RuleShapeMismatch { detail }, None)
        }
        RuleCheck::Side(detail) => {
            out.ok = false;
            (NodeStatus::SideConditionFailure { detail }, None)
        }
    };

    out.nodes.push(NodeReport {
        path: path.to_string(),
        rule: node.rule.as_str().to_string(),
        conclusion: conclusion_text(&node.conclusion),
        status,
        justification,
        step: node.step,
    });

    for (i, premise) in node.premises.iter().enumerate() {
        let child = format!("{path}.{i}");
        walk(ctx, premise, cfg, &child, out);
    }
}

fn conclusion_text(c: &Conclusion) -> String {
    match c {
        Conclusion::Triple(t) => format!("{{ {} }} {} {{ {} }}", t.pre, compact_com(&t.com), t.post),
        Conclusion::Entails(a, b) => format!("{a}  |-  {b}"),
    }
}

/// One-line rendering of a command for report text.
fn compact_com(c: &Com) -> String {
    let full = c.to_string();
    let mut s = String::new();
    let mut last_space = false;
    for ch in full.chars() {
        let ch = if ch == '\n' { ' ' } else { ch };
        if ch == ' ' && last_space {
            continue;
        }
        last_space = ch == ' ';
        s.push(ch);
    }
    if s.len() > 120 {
        s.truncate(117);
        s.push_str("...");
    }
    s
}

enum RuleCheck {
    Pass(StepKind),
    Open {
        claim: String,
        detail: String,
        numeric_ok: Option<bool>,
    },
    Shape(String),
    Side(String),
}

fn shape(msg: impl Into<String>) -> RuleCheck {
    RuleCheck::Shape(msg.into())
}

fn side(msg: impl Into<String>) -> RuleCheck {
    RuleCheck::Side(msg.into())
}

fn triple(node: &ProofNode) -> Result<&HoareTriple, RuleCheck> {
    match &node.conclusion {
        Conclusion::Triple(t) => Ok(t),
        Conclusion::Entails(..) => Err(shape(format!(
            "rule {} concludes a triple, found an entailment",
            node.rule.as_str()
        ))),
    }
}

fn premise_triple<'n>(node: &'n ProofNode, i: usize) -> Result<&'n HoareTriple, RuleCheck> {
    match node.premises.get(i).map(|p| &p.conclusion) {
        Some(Conclusion::Triple(t)) => Ok(t),
        Some(Conclusion::Entails(..)) => Err(shape(format!(
            "premise {i} of {} must be a triple, found an entailment",
            node.rule.as_str()
        ))),
        None => Err(shape(format!(
            "rule {} is missing premise {i}",
            node.rule.as_str()
        ))),
    }
}

fn want_premises(node: &ProofNode, n: usize) -> Result<(), RuleCheck> {
    if node.premises.len() != n {
        return Err(shape(format!(
            "rule {} takes {n} premise(s), found {}",
            node.rule.as_str(),
            node.premises.len()
        )));
    }
    Ok(())
}

pub(super) fn single(d: &DistFormula) -> Option<&StateFormula> {
    match d {
        DistFormula::Single(f) => Some(f),
        _ => None,
    }
}

fn dist_eq(a: &DistFormula, b: &DistFormula, what: &str) -> Result<(), RuleCheck> {
    if a == b {
        Ok(())
    } else {
        Err(shape(format!("{what}: expected `{b}`, found `{a}`")))
    }
}

/// Canonical command shape: sequences right-nested, recursively. Lets
/// derivations and programs disagree on sequence bracketing without
/// spurious mismatches.
pub(crate) fn normalize_com(c: &Com) -> Com {
    match c {
        Com::Seq(..) => {
            let parts: Vec<Com> = c.flatten().iter().map(|x| normalize_com(x)).collect();
            Com::seq_of(parts)
        }
        Com::If(b, t, e) => Com::If(
            b.clone(),
            Box::new(normalize_com(t)),
            Box::new(normalize_com(e)),
        ),
        Com::While(b, body) => Com::While(b.clone(), Box::new(normalize_com(body))),
        other => other.clone(),
    }
}

fn com_eq(a: &Com, b: &Com, what: &str) -> Result<(), RuleCheck> {
    if normalize_com(a) == normalize_com(b) {
        Ok(())
    } else {
        Err(shape(format!(
            "{what}: expected `{}`, found `{}`",
            compact_com(b),
            compact_com(a)
        )))
    }
}

// ---------------------------------------------------------------------------
// Classical structural rules
// ---------------------------------------------------------------------------

fn check_skip(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    if !matches!(t.com, Com::Skip) {
        return shape(format!("Skip applies to `skip`, found `{}`", compact_com(&t.com)));
    }
    match dist_eq(&t.post, &t.pre, "Skip postcondition must repeat the precondition") {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

fn check_abort(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    if !matches!(t.com, Com::Abort) {
        return shape(format!("Abort applies to `abort`, found `{}`", compact_com(&t.com)));
    }
    match dist_eq(&t.post, &DistFormula::falsum(), "Abort postcondition") {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

fn check_assgn(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    let (x, a) = match &t.com {
        Com::Assign(x, a) => (x, a),
        other => {
            return shape(format!(
                "Assgn applies to an assignment, found `{}`",
                compact_com(other)
            ))
        }
    };
    let expected = subst_dist(&t.post, x, a);
    match dist_eq(&t.pre, &expected, "Assgn precondition must be the substituted postcondition") {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

fn check_seq(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if node.premises.len() < 2 {
        return shape("Seq needs at least two premises");
    }
    let mut spine: Vec<Com> = Vec::new();
    for i in 0..node.premises.len() {
        let pi = match premise_triple(node, i) {
            Ok(t) => t,
            Err(e) => return e,
        };
        spine.push(pi.com.clone());
        if i == 0 {
            if let Err(e) = dist_eq(&pi.pre, &t.pre, "Seq first premise precondition") {
                return e;
            }
        } else {
            let prev = match premise_triple(node, i - 1) {
                Ok(t) => t,
                Err(e) => return e,
            };
            if pi.pre != prev.post {
                return shape(format!(
                    "Seq premise {i} starts from `{}` but premise {} ends at `{}`",
                    pi.pre,
                    i - 1,
                    prev.post
                ));
            }
        }
    }
    let last = match premise_triple(node, node.premises.len() - 1) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = dist_eq(&last.post, &t.post, "Seq last premise postcondition") {
        return e;
    }
    if let Err(e) = com_eq(
        &t.com,
        &Com::seq_of(spine),
        "Seq conclusion command must concatenate the premises",
    ) {
        return e;
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn check_absurd(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    match dist_eq(&t.pre, &DistFormula::falsum(), "Absurd precondition") {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

/// Splits `F ∧ b` (or plain `b`, read as `true ∧ b`) off a conjunction whose
/// guard side must match `b` exactly.
/// Whether `f` is the guard literal `b`; a negated guard may be written at
/// the formula level (`~(F)`) or inside the classical expression.
fn is_guard_lit(f: &StateFormula, b: &Bexp) -> bool {
    if *f == StateFormula::Pure(b.clone()) {
        return true;
    }
    if let (StateFormula::Not(inner), Bexp::Not(nb)) = (f, b) {
        return **inner == StateFormula::Pure((**nb).clone());
    }
    false
}

fn split_guard(f: &StateFormula, b: &Bexp) -> Option<StateFormula> {
    if is_guard_lit(f, b) {
        return Some(StateFormula::truth());
    }
    if let StateFormula::And(l, r) = f {
        if is_guard_lit(r, b) {
            return Some((**l).clone());
        }
        if is_guard_lit(l, b) {
            return Some((**r).clone());
        }
    }
    None
}

fn check_cond(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 2) {
        return e;
    }
    let p = match node.p {
        Some(p) => p,
        None => return shape("Cond requires the branch probability p"),
    };
    if p < Rational::zero() || p > Rational::one() {
        return side(format!("Cond probability {p} outside [0, 1]"));
    }
    let (guard, c1, c2) = match &t.com {
        Com::If(b, then_c, else_c) => (b, then_c.as_ref(), else_c.as_ref()),
        other => {
            return shape(format!(
                "Cond applies to a conditional, found `{}`",
                compact_com(other)
            ))
        }
    };
    let p1 = match premise_triple(node, 0) {
        Ok(t) => t,
        Err(e) => return e,
    };
    let p2 = match premise_triple(node, 1) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = com_eq(&p1.com, c1, "Cond first premise command") {
        return e;
    }
    if let Err(e) = com_eq(&p2.com, c2, "Cond second premise command") {
        return e;
    }
    let (g1, g1p) = match (single(&p1.pre), single(&p1.post)) {
        (Some(a), Some(b)) => (a, b),
        _ => return shape("Cond premises must relate state formulas, not distributions"),
    };
    let (g2, g2p) = match (single(&p2.pre), single(&p2.post)) {
        (Some(a), Some(b)) => (a, b),
        _ => return shape("Cond premises must relate state formulas, not distributions"),
    };
    if split_guard(g1, guard).is_none() {
        return shape(format!(
            "Cond first premise precondition `{g1}` does not carry the guard `{guard}`"
        ));
    }
    let not_guard = Bexp::Not(Box::new(guard.clone()));
    if split_guard(g2, &not_guard).is_none() {
        return shape(format!(
            "Cond second premise precondition `{g2}` does not carry `{not_guard}`"
        ));
    }
    let q = Rational::one() - p;
    let want_pre = DistFormula::Weighted(vec![(p, g1.clone()), (q, g2.clone())]);
    if let Err(e) = dist_eq(&t.pre, &want_pre, "Cond precondition") {
        return e;
    }
    let want_post = DistFormula::Weighted(vec![(p, g1p.clone()), (q, g2p.clone())]);
    match dist_eq(&t.post, &want_post, "Cond postcondition") {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

fn check_conseq(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    // A sequence of premises with exactly one triple among entailment leaves:
    // [D0 |- D1]?, {D1} c {D2}, [D2 |- D3]?. The leaves are checked on their
    // own; this node validates the chaining.
    let mut core: Option<(usize, &HoareTriple)> = None;
    for (i, p) in node.premises.iter().enumerate() {
        if let Conclusion::Triple(pt) = &p.conclusion {
            if core.is_some() {
                return shape("Conseq takes a single triple premise");
            }
            core = Some((i, pt));
        }
    }
    let (k, inner) = match core {
        Some(x) => x,
        None => return shape("Conseq needs a triple premise"),
    };
    if k > 1 || node.premises.len() - k > 2 {
        return shape("Conseq premises must be [entailment], triple, [entailment]");
    }
    if let Err(e) = com_eq(&inner.com, &t.com, "Conseq premise command") {
        return e;
    }
    // Leading entailment bridges conclusion pre to premise pre.
    if k == 1 {
        match &node.premises[0].conclusion {
            Conclusion::Entails(a, b) => {
                if let Err(e) = dist_eq(a, &t.pre, "Conseq leading entailment left side") {
                    return e;
                }
                if let Err(e) = dist_eq(b, &inner.pre, "Conseq leading entailment right side") {
                    return e;
                }
            }
            Conclusion::Triple(_) => unreachable!("counted above"),
        }
    } else if let Err(e) = dist_eq(&inner.pre, &t.pre, "Conseq premise precondition") {
        return e;
    }
    // Trailing entailment bridges premise post to conclusion post.
    if node.premises.len() - k == 2 {
        match &node.premises[k + 1].conclusion {
            Conclusion::Entails(a, b) => {
                if let Err(e) = dist_eq(a, &inner.post, "Conseq trailing entailment left side") {
                    return e;
                }
                if let Err(e) = dist_eq(b, &t.post, "Conseq trailing entailment right side") {
                    return e;
                }
            }
            Conclusion::Triple(_) => unreachable!("counted above"),
        }
    } else if let Err(e) = dist_eq(&inner.post, &t.post, "Conseq premise postcondition") {
        return e;
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn check_while(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 1) {
        return e;
    }
    let (guard, body) = match &t.com {
        Com::While(b, body) => (b, body.as_ref()),
        other => {
            return shape(format!(
                "While applies to a loop, found `{}`",
                compact_com(other)
            ))
        }
    };
    let comps = match &t.pre {
        DistFormula::Unweighted(fs) if fs.len() == 2 => fs,
        other => {
            return shape(format!(
                "While invariant must be a two-component unweighted sum, found `{other}`"
            ))
        }
    };
    if split_guard(&comps[0], guard).is_none() {
        return shape(format!(
            "While invariant's first component `{}` does not carry the guard `{guard}`",
            comps[0]
        ));
    }
    let not_guard = Bexp::Not(Box::new(guard.clone()));
    if split_guard(&comps[1], &not_guard).is_none() {
        return shape(format!(
            "While invariant's second component `{}` does not carry `{not_guard}`",
            comps[1]
        ));
    }
    let p = match premise_triple(node, 0) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = com_eq(&p.com, body, "While premise command") {
        return e;
    }
    if let Err(e) = dist_eq(
        &p.pre,
        &DistFormula::Single(comps[0].clone()),
        "While premise precondition must be the invariant's guarded component",
    ) {
        return e;
    }
    if let Err(e) = dist_eq(&p.post, &t.pre, "While premise postcondition must restore the invariant")
    {
        return e;
    }
    match dist_eq(
        &t.post,
        &DistFormula::Single(comps[1].clone()),
        "While postcondition must be the invariant's exit component",
    ) {
        Ok(()) => RuleCheck::Pass(StepKind::Structural),
        Err(e) => e,
    }
}

fn check_conj(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 2) {
        return e;
    }
    let p1 = match premise_triple(node, 0) {
        Ok(t) => t,
        Err(e) => return e,
    };
    let p2 = match premise_triple(node, 1) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = com_eq(&p1.com, &t.com, "Conj first premise command") {
        return e;
    }
    if let Err(e) = com_eq(&p2.com, &t.com, "Conj second premise command") {
        return e;
    }
    let parts = (
        single(&p1.pre),
        single(&p1.post),
        single(&p2.pre),
        single(&p2.post),
        single(&t.pre),
        single(&t.post),
    );
    let (Some(f1), Some(f1p), Some(f2), Some(f2p), Some(pre), Some(post)) = parts else {
        return shape("Conj relates state formulas, not distributions");
    };
    let want_pre = StateFormula::and(f1.clone(), f2.clone());
    if *pre != want_pre {
        return shape(format!("Conj precondition: expected `{want_pre}`, found `{pre}`"));
    }
    let want_post = StateFormula::and(f1p.clone(), f2p.clone());
    if *post != want_post {
        return shape(format!("Conj postcondition: expected `{want_post}`, found `{post}`"));
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn check_qframe(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 1) {
        return e;
    }
    let frame = match &node.frame {
        Some(f) => f,
        None => return shape("QFrame requires a frame formula"),
    };
    let p = match premise_triple(node, 0) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = com_eq(&p.com, &t.com, "QFrame premise command") {
        return e;
    }
    let (Some(f1), Some(f2), Some(pre), Some(post)) =
        (single(&p.pre), single(&p.post), single(&t.pre), single(&t.post))
    else {
        return shape("QFrame relates state formulas, not distributions");
    };

    // free(frame) must avoid everything the command writes.
    let (mod_cl, mod_qu) = match mod_vars(&t.com) {
        Ok(x) => x,
        Err(e) => return side(format!("cannot compute modified variables: {e}")),
    };
    let free_cl = free_vars_formula(frame);
    let free_qu = qvars_formula(frame);
    let cl_clash: Vec<&String> = free_cl.intersection(&mod_cl).collect();
    if !cl_clash.is_empty() {
        return side(format!(
            "frame mentions classical variable(s) {} modified by the command",
            join_names(&cl_clash)
        ));
    }
    let qu_clash: Vec<&String> = free_qu.intersection(&mod_qu).collect();
    if !qu_clash.is_empty() {
        return side(format!(
            "frame mentions qubit(s) {} touched by the command",
            join_names(&qu_clash)
        ));
    }

    // The conclusion attaches the frame with ⊙, or with ∧ when it is pure.
    let by_odot = *pre == StateFormula::odot(f1.clone(), frame.clone())
        && *post == StateFormula::odot(f2.clone(), frame.clone());
    let by_and = *pre == StateFormula::and(f1.clone(), frame.clone())
        && *post == StateFormula::and(f2.clone(), frame.clone());
    if by_and && !by_odot && !free_qu.is_empty() {
        return side("plain conjunction frame requires a pure frame formula".to_string());
    }
    if !(by_odot || by_and) {
        return shape(format!(
            "QFrame conclusion must attach the frame `{frame}` on the right of the premise formulas"
        ));
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn join_names(xs: &[&String]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "`{x}`");
    }
    s
}

/// Weighted-component view used by Sum flattening; unweighted sums have no
/// canonical weights and cannot appear under Sum.
fn canon(d: &DistFormula) -> Result<Vec<(Rational, &StateFormula)>, String> {
    match d {
        DistFormula::Single(f) => Ok(vec![(Rational::one(), f)]),
        DistFormula::Weighted(ws) => Ok(ws.iter().map(|(p, f)| (*p, f)).collect()),
        DistFormula::Unweighted(_) => {
            Err("unweighted sums have no fixed weights to scale".to_string())
        }
    }
}

fn check_sum(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    let weights = match &node.weights {
        Some(w) => w,
        None => return shape("Sum requires the mixing weights"),
    };
    if node.premises.is_empty() {
        return shape("Sum needs at least one premise");
    }
    if weights.len() != node.premises.len() {
        return shape(format!(
            "Sum has {} premises but {} weights",
            node.premises.len(),
            weights.len()
        ));
    }
    let total: Rational = weights.iter().copied().sum();
    if total != Rational::one() {
        return side(format!("Sum weights add to {total}, not 1"));
    }
    for w in weights {
        if *w < Rational::zero() {
            return side(format!("Sum weight {w} is negative"));
        }
    }

    let mut want_pre: Vec<(Rational, StateFormula)> = Vec::new();
    let mut want_post: Vec<(Rational, StateFormula)> = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let p = match premise_triple(node, i) {
            Ok(t) => t,
            Err(e) => return e,
        };
        if let Err(e) = com_eq(&p.com, &t.com, "Sum premise command") {
            return e;
        }
        let pre_c = match canon(&p.pre) {
            Ok(c) => c,
            Err(m) => return shape(format!("Sum premise {i} precondition: {m}")),
        };
        let post_c = match canon(&p.post) {
            Ok(c) => c,
            Err(m) => return shape(format!("Sum premise {i} postcondition: {m}")),
        };
        for (q, f) in pre_c {
            want_pre.push((*w * q, f.clone()));
        }
        for (q, f) in post_c {
            want_post.push((*w * q, f.clone()));
        }
    }
    let got_pre = match canon(&t.pre) {
        Ok(c) => c,
        Err(m) => return shape(format!("Sum conclusion precondition: {m}")),
    };
    let got_post = match canon(&t.post) {
        Ok(c) => c,
        Err(m) => return shape(format!("Sum conclusion postcondition: {m}")),
    };
    if let Err(e) = match_flat("precondition", &got_pre, &want_pre) {
        return e;
    }
    if let Err(e) = match_flat("postcondition", &got_post, &want_post) {
        return e;
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn match_flat(
    what: &str,
    got: &[(Rational, &StateFormula)],
    want: &[(Rational, StateFormula)],
) -> Result<(), RuleCheck> {
    if got.len() != want.len() {
        return Err(shape(format!(
            "Sum {what} has {} components, premises scale to {}",
            got.len(),
            want.len()
        )));
    }
    for (i, ((gw, gf), (ww, wf))) in got.iter().zip(want).enumerate() {
        if gw != ww {
            return Err(shape(format!(
                "Sum {what} component {i} carries weight {gw}, premises scale to {ww}"
            )));
        }
        if *gf != wf {
            return Err(shape(format!(
                "Sum {what} component {i} is `{gf}`, premises give `{wf}`"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Quantum rules
// ---------------------------------------------------------------------------

fn check_qinit(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    let qs = match &t.com {
        Com::InitQubit(qs) => qs,
        other => {
            return shape(format!(
                "QInit applies to a register initialization, found `{}`",
                compact_com(other)
            ))
        }
    };
    let Some(pre) = single(&t.pre) else {
        return shape("QInit precondition must be the state formula `true`");
    };
    if !pre.is_true() {
        return shape(format!("QInit precondition must be `true`, found `{pre}`"));
    }
    let Some(StateFormula::Ket(q)) = single(&t.post) else {
        return shape("QInit postcondition must be a ket over the initialized register");
    };
    let k = q.to_ket();
    if k.vars != *qs {
        return shape(format!(
            "QInit postcondition covers ({}), command initializes ({})",
            k.vars.join(" "),
            qs.join(" ")
        ));
    }
    let want = KetLit::basis(qs.clone(), 0);
    let max_dev = k
        .amps
        .iter()
        .zip(&want.amps)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if max_dev > OUTCOME_PRUNE {
        return shape(format!(
            "QInit postcondition must be the all-zero basis state (deviation {max_dev:.2e})"
        ));
    }
    RuleCheck::Pass(StepKind::Structural)
}

/// Resolves a gate reference whose parameters must be literal constants:
/// a derivation speaks about one concrete program, so symbolic parameters
/// have nothing to bind to.
fn resolve_gate(ctx: &ProofContext, g: &GateRef, arity: usize) -> Result<Matrix, String> {
    let mut params = Vec::with_capacity(g.args.len());
    for a in &g.args {
        let mut fv = BTreeSet::new();
        free_vars_aexp(a, &mut fv);
        if !fv.is_empty() {
            return Err(format!("gate parameter `{a}` is not a constant"));
        }
        match crate::lang::eval_aexp(&BTreeMap::new(), a) {
            Ok(v) => params.push(v),
            Err(e) => return Err(format!("gate parameter `{a}`: {e}")),
        }
    }
    ctx.gates
        .resolve(&g.name, arity, &params)
        .map_err(|e| e.to_string())
}

/// Applies `op` to every ket of `f` that touches the targets. The operator
/// distributes over the connectives; a ket that covers only part of the
/// target tuple cannot host the operator and is an error.
fn transform_formula(
    f: &StateFormula,
    op: &Matrix,
    targets: &[String],
) -> Result<StateFormula, String> {
    match f {
        StateFormula::Pure(_) => Ok(f.clone()),
        StateFormula::Ket(q) => {
            let vars = q.vars();
            let covered = targets.iter().filter(|t| vars.contains(t)).count();
            if covered == 0 {
                return Ok(f.clone());
            }
            if covered < targets.len() {
                return Err(format!(
                    "operator targets ({}) are split across separate kets",
                    targets.join(" ")
                ));
            }
            let k = q.to_ket();
            let layout = QubitLayout::new(k.vars.clone()).map_err(|e| e.to_string())?;
            let psi = PureState::new(layout, k.amps.clone()).map_err(|e| e.to_string())?;
            let out = apply_op(&psi, op, targets).map_err(|e| e.to_string())?;
            Ok(StateFormula::Ket(crate::lang::QExpr::Ket(KetLit {
                vars: k.vars,
                amps: out.amps().to_vec(),
            })))
        }
        StateFormula::Odot(a, b) => Ok(StateFormula::odot(
            transform_formula(a, op, targets)?,
            transform_formula(b, op, targets)?,
        )),
        StateFormula::And(a, b) => Ok(StateFormula::and(
            transform_formula(a, op, targets)?,
            transform_formula(b, op, targets)?,
        )),
        StateFormula::Not(a) => Ok(StateFormula::Not(Box::new(transform_formula(
            a, op, targets,
        )?))),
        StateFormula::Forall(v, a) => Ok(StateFormula::Forall(
            v.clone(),
            Box::new(transform_formula(a, op, targets)?),
        )),
    }
}

/// Structural equality with kets compared numerically up to phase.
fn formula_eq_numeric(a: &StateFormula, b: &StateFormula) -> bool {
    match (a, b) {
        (StateFormula::Pure(x), StateFormula::Pure(y)) => x == y,
        (StateFormula::Ket(x), StateFormula::Ket(y)) => {
            let ka = x.to_ket();
            let kb = y.to_ket();
            let sa: BTreeSet<&String> = ka.vars.iter().collect();
            let sb: BTreeSet<&String> = kb.vars.iter().collect();
            if sa != sb {
                return false;
            }
            let kb = reorder_ket(&kb, &ka.vars);
            ket_distance(&unit_ket(&ka).amps, &unit_ket(&kb).amps) <= KET_CHECK_TOL
        }
        (StateFormula::Odot(a1, a2), StateFormula::Odot(b1, b2))
        | (StateFormula::And(a1, a2), StateFormula::And(b1, b2)) => {
            formula_eq_numeric(a1, b1) && formula_eq_numeric(a2, b2)
        }
        (StateFormula::Not(x), StateFormula::Not(y)) => formula_eq_numeric(x, y),
        (StateFormula::Forall(v, x), StateFormula::Forall(w, y)) => {
            v == w && formula_eq_numeric(x, y)
        }
        _ => false,
    }
}

fn check_qunit(ctx: &ProofContext, node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    let (gate, qs) = match &t.com {
        Com::Unitary(g, qs) => (g, qs),
        other => {
            return shape(format!(
                "QUnit applies to a gate application, found `{}`",
                compact_com(other)
            ))
        }
    };
    let op = match resolve_gate(ctx, gate, qs.len()) {
        Ok(m) => m,
        Err(e) => return side(format!("gate `{}`: {e}", gate.name)),
    };
    if op.dim() != 1usize << qs.len() {
        return side(format!(
            "gate `{}` acts on {} qubit(s), applied to {}",
            gate.name,
            op.dim().trailing_zeros(),
            qs.len()
        ));
    }
    let (Some(pre), Some(post)) = (single(&t.pre), single(&t.post)) else {
        return shape("QUnit relates state formulas, not distributions");
    };
    let adj = op.adjoint();
    let expected_pre = match transform_formula(post, &adj, qs) {
        Ok(f) => f,
        Err(m) => return shape(format!("cannot pull the postcondition back: {m}")),
    };
    if !formula_eq_numeric(pre, &expected_pre) {
        return shape(format!(
            "QUnit precondition must be the pulled-back postcondition `{expected_pre}`, found `{pre}`"
        ));
    }
    RuleCheck::Pass(StepKind::NumericKet)
}

/// Flattens a conjunction into its conjunct list; separation, negation, and
/// quantifiers cannot appear in a measurement rule's pre/post components.
fn and_parts<'f>(f: &'f StateFormula, out: &mut Vec<&'f StateFormula>) -> Result<(), String> {
    match f {
        StateFormula::And(a, b) => {
            and_parts(a, out)?;
            and_parts(b, out)
        }
        StateFormula::Odot(..) => Err("separating conjunction".to_string()),
        StateFormula::Not(_) => Err("negation".to_string()),
        StateFormula::Forall(..) => Err("quantifier".to_string()),
        _ => {
            out.push(f);
            Ok(())
        }
    }
}

pub(super) enum MeasErr {
    Shape(String),
    Side(String),
}

/// Pure conjuncts, joint precondition ket, and the numerically computed
/// `(outcome index, probability, unnormalized post state)` list for a
/// measurement applied to a component formula. Shared between rule checking
/// and outline elaboration (which needs outcome counts to split weighted
/// postconditions among premises).
pub(super) fn meas_outcomes(
    pre: &StateFormula,
    def: &MeasurementDef,
    qs: &[String],
) -> Result<(BTreeSet<Bexp>, KetLit, Vec<(usize, f64, PureState)>), MeasErr> {
    let (pre_pures, joint) = meas_component(pre).map_err(MeasErr::Shape)?;
    for q in qs {
        if !joint.vars.contains(q) {
            return Err(MeasErr::Shape(format!(
                "measured qubit `{q}` is outside the component ket ({})",
                joint.vars.join(" ")
            )));
        }
    }
    let layout = QubitLayout::new(joint.vars.clone())
        .map_err(|e| MeasErr::Shape(format!("component ket: {e}")))?;
    let psi = PureState::new(layout, joint.amps.clone())
        .map_err(|e| MeasErr::Shape(format!("component ket: {e}")))?;
    let mut outcomes: Vec<(usize, f64, PureState)> = Vec::new();
    let mut total = 0.0;
    for (i, m) in def.ops.iter().enumerate() {
        let phi = apply_op(&psi, m, qs)
            .map_err(|e| MeasErr::Side(format!("applying outcome {i}: {e}")))?;
        let p = phi.norm().powi(2);
        total += p;
        outcomes.push((i, p, phi));
    }
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(MeasErr::Side(format!(
            "outcome probabilities sum to {total:.12}, not 1: component ket must be normalized"
        )));
    }
    Ok((pre_pures, joint, outcomes))
}

/// Splits a measurement-rule component into its pure conjunct set and its
/// single joint ket. `true` conjuncts are dropped: conjunction is idempotent
/// and unordered, so components compare as sets.
fn meas_component(f: &StateFormula) -> Result<(BTreeSet<Bexp>, KetLit), String> {
    let mut parts = Vec::new();
    and_parts(f, &mut parts).map_err(|w| format!("component contains {w}"))?;
    let mut pures = BTreeSet::new();
    let mut ket = None;
    for p in parts {
        match p {
            StateFormula::Pure(Bexp::True) => {}
            StateFormula::Pure(b) => {
                pures.insert(b.clone());
            }
            StateFormula::Ket(q) => {
                if ket.is_some() {
                    return Err("component carries two kets; join them into one tuple".to_string());
                }
                ket = Some(q.to_ket());
            }
            _ => unreachable!("and_parts flattens to atoms"),
        }
    }
    match ket {
        Some(k) => Ok((pures, k)),
        None => Err("component carries no ket for the measured register".to_string()),
    }
}

fn check_qmeas(ctx: &ProofContext, node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    let (x, mname, qs) = match &t.com {
        Com::Measure { var, meas, qubits } => (var, meas, qubits),
        other => {
            return shape(format!(
                "QMeas applies to a measurement, found `{}`",
                compact_com(other)
            ))
        }
    };
    let def = match ctx.measurements.get(mname) {
        Some(d) => d,
        None => return side(format!("measurement `{mname}` is not declared")),
    };
    if def.arity != qs.len() {
        return side(format!(
            "measurement `{mname}` expects {} qubit(s), applied to {}",
            def.arity,
            qs.len()
        ));
    }
    let Some(pre) = single(&t.pre) else {
        return shape("QMeas precondition must be a state formula");
    };
    let (pre_pures, joint, outcomes) = match meas_outcomes(pre, def, qs) {
        Ok(x) => x,
        Err(MeasErr::Shape(m)) => return shape(format!("QMeas precondition: {m}")),
        Err(MeasErr::Side(m)) => return side(m),
    };
    let kept: Vec<&(usize, f64, PureState)> = outcomes
        .iter()
        .filter(|(_, p, _)| *p >= OUTCOME_PRUNE)
        .collect();

    let comps = match &t.post {
        DistFormula::Weighted(ws) => ws.clone(),
        DistFormula::Single(f) if kept.len() == 1 => {
            vec![(Rational::one(), f.clone())]
        }
        other => {
            return shape(format!(
                "QMeas postcondition must weight one component per surviving outcome, found `{other}`"
            ))
        }
    };
    if comps.len() != kept.len() {
        return shape(format!(
            "QMeas postcondition has {} component(s) but {} outcome(s) survive pruning; \
             impossible outcomes must be absent",
            comps.len(),
            kept.len()
        ));
    }

    let mut seen_pures: BTreeSet<Bexp> = BTreeSet::new();
    for ((w, f), (i, p, phi)) in comps.iter().zip(&kept) {
        let wf = match w.to_f64() {
            Some(v) => v,
            None => return shape("QMeas weight does not fit a float".to_string()),
        };
        if (wf - p).abs() > KET_CHECK_TOL {
            return side(format!(
                "outcome {i} has probability {p:.9}, postcondition weights it {wf:.9}"
            ));
        }
        let (comp_pures, comp_ket) = match meas_component(f) {
            Ok(x) => x,
            Err(m) => return shape(format!("QMeas postcondition component for outcome {i}: {m}")),
        };
        let sv: BTreeSet<&String> = comp_ket.vars.iter().collect();
        let jv: BTreeSet<&String> = joint.vars.iter().collect();
        if sv != jv {
            return shape(format!(
                "outcome {i} ket covers ({}), precondition ket covers ({})",
                comp_ket.vars.join(" "),
                joint.vars.join(" ")
            ));
        }
        let comp_ket = reorder_ket(&comp_ket, &joint.vars);
        let scale = p.sqrt();
        let collapsed: Vec<_> = phi.amps().iter().map(|a| a / scale).collect();
        let dist = ket_distance(&unit_ket(&comp_ket).amps, &collapsed);
        if dist > KET_CHECK_TOL {
            return side(format!(
                "outcome {i} postcondition ket differs from the collapsed state by {dist:.2e}"
            ));
        }
        // The precondition carries this component's pure part with the
        // outcome value substituted for the result variable.
        let idx = Aexp::Int(*i as i64);
        for b in &comp_pures {
            let inst = subst_bexp(b, x, &idx);
            if inst != Bexp::True && !pre_pures.contains(&inst) {
                return shape(format!(
                    "precondition lacks the instantiated conjunct `{inst}` for outcome {i}"
                ));
            }
            if inst != Bexp::True {
                seen_pures.insert(inst);
            }
        }
    }
    // With no pruned outcome, the precondition's pure part must be exactly
    // the union of the instantiated component parts; pruning may leave
    // conjuncts for impossible outcomes behind.
    if kept.len() == outcomes.len() {
        if let Some(extra) = pre_pures.difference(&seen_pures).next() {
            return shape(format!(
                "precondition conjunct `{extra}` does not instantiate any postcondition component"
            ));
        }
    }
    RuleCheck::Pass(StepKind::NumericKet)
}

// ---------------------------------------------------------------------------
// Derived and administrative rules
// ---------------------------------------------------------------------------

fn check_cond_case(node: &ProofNode, cfg: &EvalConfig) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 1) {
        return e;
    }
    let (guard, c1, c2) = match &t.com {
        Com::If(b, then_c, else_c) => (b, then_c.as_ref(), else_c.as_ref()),
        other => {
            return shape(format!(
                "CondCase applies to a conditional, found `{}`",
                compact_com(other)
            ))
        }
    };
    let p = match premise_triple(node, 0) {
        Ok(t) => t,
        Err(e) => return e,
    };
    let taken = if normalize_com(&p.com) == normalize_com(c1) {
        guard.clone()
    } else if normalize_com(&p.com) == normalize_com(c2) {
        Bexp::Not(Box::new(guard.clone()))
    } else {
        return shape("CondCase premise command matches neither branch".to_string());
    };
    if let Err(e) = dist_eq(&p.pre, &t.pre, "CondCase premise precondition") {
        return e;
    }
    if let Err(e) = dist_eq(&p.post, &t.post, "CondCase premise postcondition") {
        return e;
    }
    // The precondition must force the taken branch.
    let claim = DistFormula::Single(StateFormula::Pure(taken.clone()));
    match entails(&t.pre, &claim, cfg) {
        EntailOutcome::Proven(proof) => RuleCheck::Pass(proof.kind),
        EntailOutcome::Unknown(m) => RuleCheck::Open {
            claim: format!("{}  |-  {taken}", t.pre),
            detail: format!("precondition does not provably decide the guard: {m}"),
            numeric_ok: None,
        },
    }
}

fn check_rand(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    let (x, lo, hi) = match &t.com {
        Com::Random { var, lo, hi } => (var, lo, hi),
        other => {
            return shape(format!(
                "Rand applies to a random assignment, found `{}`",
                compact_com(other)
            ))
        }
    };
    let mut fv = BTreeSet::new();
    free_vars_aexp(lo, &mut fv);
    free_vars_aexp(hi, &mut fv);
    if !fv.is_empty() {
        return side("random bounds must be constants in a derivation".to_string());
    }
    let empty = BTreeMap::new();
    let (lov, hiv) = match (
        crate::lang::eval_aexp(&empty, lo),
        crate::lang::eval_aexp(&empty, hi),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return side("random bounds do not evaluate".to_string()),
    };
    if lov > hiv {
        return side(format!("empty random range {lov}..{hiv}"));
    }
    let n = (hiv - lov + 1) as i64;
    let comps = match &t.post {
        DistFormula::Weighted(ws) => ws.clone(),
        DistFormula::Single(f) if n == 1 => vec![(Rational::one(), f.clone())],
        other => {
            return shape(format!(
                "Rand postcondition must weight one component per value, found `{other}`"
            ))
        }
    };
    if comps.len() as i64 != n {
        return shape(format!(
            "range {lov}..{hiv} has {n} values, postcondition has {} component(s)",
            comps.len()
        ));
    }
    let uniform = Rational::new(1, n);
    let mut pre_set: BTreeSet<Bexp> = BTreeSet::new();
    let Some(pre) = single(&t.pre) else {
        return shape("Rand precondition must be a state formula");
    };
    let mut parts = Vec::new();
    if let Err(w) = and_parts(pre, &mut parts) {
        return shape(format!("Rand precondition contains {w}"));
    }
    for p in parts {
        match p {
            StateFormula::Pure(Bexp::True) => {}
            StateFormula::Pure(b) => {
                pre_set.insert(b.clone());
            }
            _ => return shape("Rand precondition must be pure".to_string()),
        }
    }
    let mut want_pre: BTreeSet<Bexp> = BTreeSet::new();
    for (k, (w, f)) in comps.iter().enumerate() {
        if *w != uniform {
            return side(format!(
                "component {k} carries weight {w}; a uniform draw gives {uniform}"
            ));
        }
        if !qvars_formula(f).is_empty() {
            return shape(format!(
                "Rand component {k} mentions qubits; the rule covers pure postconditions"
            ));
        }
        let v = lov + k as i64;
        let mut fparts = Vec::new();
        if let Err(wd) = and_parts(f, &mut fparts) {
            return shape(format!("Rand component {k} contains {wd}"));
        }
        for p in fparts {
            match p {
                StateFormula::Pure(Bexp::True) => {}
                StateFormula::Pure(b) => {
                    let inst = subst_bexp(b, x, &Aexp::Int(v));
                    if inst != Bexp::True {
                        want_pre.insert(inst);
                    }
                }
                _ => unreachable!("qvars checked above"),
            }
        }
    }
    if pre_set != want_pre {
        let missing: Vec<String> = want_pre
            .difference(&pre_set)
            .map(|b| format!("`{b}`"))
            .collect();
        let extra: Vec<String> = pre_set
            .difference(&want_pre)
            .map(|b| format!("`{b}`"))
            .collect();
        let mut msg = "Rand precondition must instantiate the components over the range"
            .to_string();
        if !missing.is_empty() {
            let _ = write!(msg, "; missing {}", missing.join(", "));
        }
        if !extra.is_empty() {
            let _ = write!(msg, "; extra {}", extra.join(", "));
        }
        return shape(msg);
    }
    RuleCheck::Pass(StepKind::Structural)
}

fn check_lemma(node: &ProofNode) -> RuleCheck {
    let t = match triple(node) {
        Ok(t) => t,
        Err(e) => return e,
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    RuleCheck::Open {
        claim: format!("{{ {} }} {} {{ {} }}", t.pre, compact_com(&t.com), t.post),
        detail: "assumed without derivation".to_string(),
        numeric_ok: None,
    }
}

fn check_entail(node: &ProofNode, cfg: &EvalConfig) -> RuleCheck {
    let (d1, d2) = match &node.conclusion {
        Conclusion::Entails(a, b) => (a, b),
        Conclusion::Triple(_) => return shape("Entail concludes an entailment, found a triple"),
    };
    if let Err(e) = want_premises(node, 0) {
        return e;
    }
    match entails(d1, d2, cfg) {
        EntailOutcome::Proven(proof) => RuleCheck::Pass(proof.kind),
        EntailOutcome::Unknown(m) => RuleCheck::Open {
            claim: format!("{d1}  |-  {d2}"),
            detail: m,
            numeric_ok: numeric_entail_check(d1, d2),
        },
    }
}

/// Last-resort comparison for an underived entailment: when both sides pair
/// off into components with matching weights and pure parts, and every
/// component's quantum content collapses to one ket over one tuple, the kets
/// are compared as state vectors up to phase. Validates the claim on its
/// literal content without constituting a derivation.
fn numeric_entail_check(d1: &DistFormula, d2: &DistFormula) -> Option<bool> {
    let c1 = d1.components();
    let c2 = d2.components();
    if c1.len() != c2.len() {
        return None;
    }
    let mut all = true;
    for ((w1, f1), (w2, f2)) in c1.iter().zip(&c2) {
        if w1 != w2 {
            return None;
        }
        let (p1, k1) = flatten_quant(f1)?;
        let (p2, k2) = flatten_quant(f2)?;
        if !p2.is_subset(&p1) {
            return None;
        }
        match (k1, k2) {
            (Some(a), Some(b)) => {
                let sa: BTreeSet<&String> = a.vars.iter().collect();
                let sb: BTreeSet<&String> = b.vars.iter().collect();
                if sa != sb {
                    return None;
                }
                let b = reorder_ket(&b, &a.vars);
                if ket_distance(&unit_ket(&a).amps, &unit_ket(&b).amps) > KET_CHECK_TOL {
                    all = false;
                }
            }
            (Some(_), None) => {}
            (None, Some(_)) => return None,
            (None, None) => {}
        }
    }
    Some(all)
}

/// Collapses a formula into (pure conjuncts, joined ket), tensoring kets
/// over disjoint tuples; gives up on negation, quantifiers, or overlapping
/// tuples.
fn flatten_quant(f: &StateFormula) -> Option<(BTreeSet<Bexp>, Option<KetLit>)> {
    fn go(f: &StateFormula, pures: &mut BTreeSet<Bexp>, kets: &mut Vec<KetLit>) -> bool {
        match f {
            StateFormula::Pure(Bexp::True) => true,
            StateFormula::Pure(b) => {
                pures.insert(b.clone());
                true
            }
            StateFormula::Ket(q) => {
                kets.push(q.to_ket());
                true
            }
            StateFormula::And(a, b) | StateFormula::Odot(a, b) => {
                go(a, pures, kets) && go(b, pures, kets)
            }
            StateFormula::Not(_) | StateFormula::Forall(..) => false,
        }
    }
    let mut pures = BTreeSet::new();
    let mut kets = Vec::new();
    if !go(f, &mut pures, &mut kets) {
        return None;
    }
    let joined = match kets.len() {
        0 => None,
        _ => {
            let mut vars = Vec::new();
            let mut amps = vec![num_complex::Complex64::new(1.0, 0.0)];
            for k in kets {
                for v in &k.vars {
                    if vars.contains(v) {
                        return None;
                    }
                }
                vars.extend(k.vars.iter().cloned());
                let mut next = Vec::with_capacity(amps.len() * k.amps.len());
                for a in &amps {
                    for b in &k.amps {
                        next.push(a * b);
                    }
                }
                amps = next;
            }
            Some(KetLit { vars, amps })
        }
    };
    Some((pures, joined))
}

/// Entailment check used by elaboration when deciding whether a synthesized
/// bridge is needed; cheap true/false door over the engine.
pub(crate) fn quick_entails(d1: &DistFormula, d2: &DistFormula, cfg: &EvalConfig) -> bool {
    d1 == d2 || entails(d1, d2, cfg).is_proven()
}

/// Free classical and quantum variables mentioned anywhere in a triple's
/// formulas; used by state generation to size layouts.
pub fn triple_vars(t: &HoareTriple) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut cl = free_vars_dist(&t.pre);
    cl.extend(free_vars_dist(&t.post));
    let mut qu = qvars_dist(&t.pre);
    qu.extend(qvars_dist(&t.post));
    (cl, qu)
}
