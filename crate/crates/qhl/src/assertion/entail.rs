//! Entailment between distribution formulas, decided by normalization plus a
//! small derivation search, with a trace naming each step after the rule it
//! instantiates.
//!
//! State formulas are flattened to a bag of classical conjuncts, ket facts
//! per qubit tuple, and opaque residue. Classical goals are discharged
//! syntactically, by constant propagation, or by enumerating the finite
//! variable window; ket goals by tuple permutation, tensor joins of covering
//! facts, and rank-one splits of overlapping facts. Distribution formulas
//! reduce to state obligations through exact rational weight transportation.

use super::transport::feasible_exact;
use super::{fmt_sigma, is_pure_formula, mixture_closed, KET_TOL};
use crate::lang::analysis::{free_vars_bexp, qvars_formula};
use crate::lang::{
    eval_bexp, eval_bexp_full, ket_text, set_var, Bexp, ClassicalEnv, CmpOp, DistFormula,
    ForallWindow, KetLit, QExpr, Rational, StateFormula,
};
use crate::qcore::C64;
use crate::sem::EvalConfig;
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeSet;

/// Amplitude distance under which two ket literals count as the same written
/// state; beyond it but within [`KET_TOL`] they count as numerically equal.
const KET_EXACT: f64 = 1e-12;

/// Cap on window enumeration size for classical goals.
const MAX_ASSIGNMENTS: usize = 200_000;

/// How a proof step was justified, ordered from strongest to weakest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum StepKind {
    /// Syntactic or exact-arithmetic reasoning.
    Structural,
    /// Float comparison of quantum states within [`KET_TOL`].
    NumericKet,
    /// Classical claim checked over the finite variable window only.
    PureWindow,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntailStep {
    pub rule: String,
    pub kind: StepKind,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntailProof {
    /// Weakest justification used anywhere in the proof.
    pub kind: StepKind,
    pub steps: Vec<EntailStep>,
}

#[derive(Debug, Clone)]
pub enum EntailOutcome {
    Proven(EntailProof),
    /// Not derivable by this engine; carries the first obstruction met.
    Unknown(String),
}

impl EntailOutcome {
    pub fn is_proven(&self) -> bool {
        matches!(self, EntailOutcome::Proven(_))
    }
}

fn step(rule: &str, kind: StepKind, detail: impl Into<String>) -> EntailStep {
    EntailStep {
        rule: rule.to_string(),
        kind,
        detail: detail.into(),
    }
}

/// Decide `d1 |= d2` as far as the engine can. `Proven` always carries the
/// step trace; a counterexample found along the way folds into `Unknown`
/// with its description, since the engine never claims refutations.
pub fn entails(d1: &DistFormula, d2: &DistFormula, cfg: &EvalConfig) -> EntailOutcome {
    match run(d1, d2, cfg) {
        Ok(steps) => {
            let kind = steps
                .iter()
                .map(|s| s.kind)
                .max()
                .unwrap_or(StepKind::Structural);
            EntailOutcome::Proven(EntailProof { kind, steps })
        }
        Err(m) => EntailOutcome::Unknown(m),
    }
}

fn run(d1: &DistFormula, d2: &DistFormula, cfg: &EvalConfig) -> Result<Vec<EntailStep>, String> {
    if let DistFormula::Unweighted(gs) = d2 {
        return run_to_unweighted(d1, gs, cfg);
    }
    let rs = weighted_components(d2);
    match d1 {
        DistFormula::Unweighted(fs) => run_unweighted_lhs(fs, &rs, cfg),
        _ => run_weighted(&weighted_components(d1), &rs, cfg),
    }
}

fn weighted_components(d: &DistFormula) -> Vec<(Rational, &StateFormula)> {
    match d {
        DistFormula::Single(f) => vec![(Rational::new(1, 1), f)],
        DistFormula::Weighted(ws) => ws.iter().map(|(p, f)| (*p, f)).collect(),
        DistFormula::Unweighted(_) => unreachable!("caller dispatches the unweighted forms"),
    }
}

/// Conclusion keeps weights: premise components route fractions of their
/// weight to conclusion components they entail, balancing exactly.
fn run_weighted(
    ls: &[(Rational, &StateFormula)],
    rs: &[(Rational, &StateFormula)],
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    if ls.len() == 1 && rs.len() == 1 {
        return entails_state(ls[0].1, rs[0].1, cfg);
    }
    let mut proofs: Vec<Vec<Option<Vec<EntailStep>>>> = Vec::with_capacity(ls.len());
    for (_, f) in ls {
        let mut row = Vec::with_capacity(rs.len());
        for (_, g) in rs {
            row.push(entails_state(f, g, cfg).ok());
        }
        proofs.push(row);
    }
    let supplies: Vec<Rational> = ls.iter().map(|(p, _)| *p).collect();
    let demands: Vec<Rational> = rs.iter().map(|(p, _)| *p).collect();
    let flows = feasible_exact(&supplies, &demands, &|j, i| proofs[j][i].is_some())
        .ok_or_else(|| {
            "no split of the premise weights matches the conclusion weights through provable \
             component entailments"
                .to_string()
        })?;
    let mut steps = vec![step(
        "OCon",
        StepKind::Structural,
        format!(
            "componentwise with {} premise and {} conclusion components",
            ls.len(),
            rs.len()
        ),
    )];
    for (i, (_, g)) in rs.iter().enumerate() {
        let srcs: Vec<usize> = (0..ls.len())
            .filter(|&j| flows[j][i] > Rational::zero())
            .collect();
        if srcs.len() > 1 {
            let all_same = srcs.windows(2).all(|w| ls[w[0]].1 == ls[w[1]].1);
            if !all_same && !mixture_closed(g) {
                return Err(format!(
                    "conclusion component `{}` would mix distinct premises and is not closed \
                     under mixing",
                    g
                ));
            }
            steps.push(step(
                "OMerg",
                StepKind::Structural,
                format!("{} premise components merge into `{}`", srcs.len(), g),
            ));
        }
        for j in srcs {
            steps.extend(proofs[j][i].clone().expect("arc existed"));
        }
    }
    Ok(steps)
}

/// Premise without weights entails a weighted conclusion only if every
/// premise component entails every conclusion component, since the split is
/// adversarial.
fn run_unweighted_lhs(
    fs: &[StateFormula],
    rs: &[(Rational, &StateFormula)],
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    let mut steps = vec![];
    if fs.len() > 1 || rs.len() > 1 {
        steps.push(step(
            "OCon",
            StepKind::Structural,
            "componentwise against an unknown premise split",
        ));
    }
    let all_same = fs.windows(2).all(|w| w[0] == w[1]);
    for (_, g) in rs {
        if fs.len() > 1 && !all_same && !mixture_closed(g) {
            return Err(format!(
                "conclusion component `{}` mixes distinct premise components and is not closed \
                 under mixing",
                g
            ));
        }
        for f in fs {
            let s = entails_state(f, g, cfg)
                .map_err(|e| format!("`{}` does not provably entail `{}`: {}", f, g, e))?;
            steps.extend(s);
        }
    }
    if fs.len() > 1 {
        steps.push(step(
            "OMerg",
            StepKind::Structural,
            "premise components merged into each conclusion component",
        ));
    }
    Ok(steps)
}

/// Conclusion drops weights: cover each premise component by some conclusion
/// component, with a pointwise window fallback for all-classical formulas.
fn run_to_unweighted(
    d1: &DistFormula,
    gs: &[StateFormula],
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    let lhs: Vec<&StateFormula> = d1.components().into_iter().map(|(_, f)| f).collect();
    let mut steps = vec![];
    if matches!(d1, DistFormula::Weighted(_)) {
        steps.push(step(
            "Oplus",
            StepKind::Structural,
            "premise weights forgotten",
        ));
    }
    if lhs.len() > 1 || gs.len() > 1 {
        steps.push(step(
            "OCon",
            StepKind::Structural,
            format!(
                "componentwise with {} premise and {} conclusion components",
                lhs.len(),
                gs.len()
            ),
        ));
    }
    let mut sources: Vec<Vec<&StateFormula>> = vec![vec![]; gs.len()];
    for f in &lhs {
        let mut done = false;
        let mut last = String::new();
        for (i, g) in gs.iter().enumerate() {
            match entails_state(f, g, cfg) {
                Ok(s) => {
                    steps.extend(s);
                    sources[i].push(f);
                    done = true;
                    break;
                }
                Err(e) => last = e,
            }
        }
        if !done {
            return match disjunction_fallback(d1, &lhs, gs, cfg) {
                Ok(s) => Ok(s),
                Err(e) => Err(format!(
                    "component `{}` entails no conclusion component ({}); {}",
                    f, last, e
                )),
            };
        }
    }
    for (i, srcs) in sources.iter().enumerate() {
        if srcs.len() > 1 {
            let all_same = srcs.windows(2).all(|w| w[0] == w[1]);
            if !all_same && !mixture_closed(&gs[i]) {
                return Err(format!(
                    "conclusion component `{}` mixes distinct premise components and is not \
                     closed under mixing",
                    gs[i]
                ));
            }
            steps.push(step(
                "OMerg",
                StepKind::Structural,
                format!("{} premise components share `{}`", srcs.len(), gs[i]),
            ));
        }
    }
    Ok(steps)
}

/// All-classical fallback: over the variable window, every store admitted by
/// some premise component must be admitted by some conclusion component.
/// This absorbs regroupings no per-component cover can express.
fn disjunction_fallback(
    d1: &DistFormula,
    lhs: &[&StateFormula],
    gs: &[StateFormula],
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    if !lhs.iter().all(|f| is_pure_formula(f)) || !gs.iter().all(is_pure_formula) {
        return Err("no pointwise fallback: some component mentions qubits".into());
    }
    let lps: Vec<Bexp> = lhs.iter().map(|f| formula_to_bexp(f, &mut false)).collect();
    let rps: Vec<Bexp> = gs.iter().map(|f| formula_to_bexp(f, &mut false)).collect();
    let mut vars = BTreeSet::new();
    for p in lps.iter().chain(rps.iter()) {
        free_vars_bexp(p, &mut vars);
    }
    let names: Vec<String> = vars.into_iter().collect();
    let known = ClassicalEnv::new();
    let err_ctx = |e: crate::lang::EvalErr| format!("classical evaluation failed: {}", e);
    let mut bad: Option<String> = None;
    enumerate_window(&names, cfg.window, &known, &mut |env| {
        let mut lhs_or = false;
        for p in &lps {
            match eval_bexp(env, p, cfg.window) {
                Ok(true) => {
                    lhs_or = true;
                    break;
                }
                Ok(false) => {}
                Err(e) => {
                    bad = Some(err_ctx(e));
                    return false;
                }
            }
        }
        if !lhs_or {
            return true;
        }
        let mut rhs_or = false;
        for p in &rps {
            match eval_bexp(env, p, cfg.window) {
                Ok(true) => {
                    rhs_or = true;
                    break;
                }
                Ok(false) => {}
                Err(e) => {
                    bad = Some(err_ctx(e));
                    return false;
                }
            }
        }
        if !rhs_or {
            bad = Some(format!(
                "store {} satisfies a premise component but no conclusion component",
                fmt_sigma(env)
            ));
            return false;
        }
        true
    })?;
    if let Some(msg) = bad {
        return Err(msg);
    }
    let mut steps = vec![];
    if matches!(d1, DistFormula::Weighted(_)) {
        steps.push(step(
            "Oplus",
            StepKind::Structural,
            "premise weights forgotten",
        ));
    }
    steps.push(step(
        "OCon",
        StepKind::PureWindow,
        "pointwise over the variable window: every admitted store lands in some conclusion \
         component",
    ));
    Ok(steps)
}

// ---------------------------------------------------------------------------
// State-level entailment
// ---------------------------------------------------------------------------

pub(crate) fn entails_state(
    f: &StateFormula,
    g: &StateFormula,
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    if f == g {
        return Ok(vec![step(
            "match",
            StepKind::Structural,
            "premise and conclusion coincide",
        )]);
    }
    let lhs = build_nf(f);
    let mut steps = lhs.steps.clone();
    if let Some(r) = &lhs.unsat {
        return Ok(vec![step(
            "unsat",
            StepKind::Structural,
            format!("premise unsatisfiable: {}", r),
        )]);
    }
    let known = match const_env(&lhs.pures, cfg.window) {
        Ok(k) => k,
        Err(r) => {
            return Ok(vec![step(
                "unsat",
                StepKind::Structural,
                format!("premise unsatisfiable: {}", r),
            )])
        }
    };
    let rhs = build_nf(g);
    if let Some(r) = &rhs.unsat {
        return Err(format!("conclusion unsatisfiable: {}", r));
    }
    steps.extend(rhs.steps.iter().cloned());
    for p in &rhs.pures {
        steps.extend(derive_pure(p, &lhs.pures, &known, cfg)?);
    }
    for k in &rhs.kets {
        steps.extend(derive_ket(k, &lhs.kets)?);
    }
    for r in &rhs.residue {
        if lhs.residue.contains(r) {
            steps.push(step(
                "match",
                StepKind::Structural,
                format!("premise contains `{}`", r),
            ));
        } else {
            return Err(format!("no derivation for `{}`", r));
        }
    }
    if steps.is_empty() {
        steps.push(step("PT", StepKind::Structural, "nothing to prove"));
    }
    Ok(steps)
}

// ---------------------------------------------------------------------------
// Normal form
// ---------------------------------------------------------------------------

struct NF {
    pures: Vec<Bexp>,
    kets: Vec<KetLit>,
    residue: Vec<StateFormula>,
    unsat: Option<String>,
    steps: Vec<EntailStep>,
}

#[derive(Default)]
struct Flatten {
    pures: Vec<Bexp>,
    kets: Vec<KetLit>,
    residue: Vec<StateFormula>,
    unsat: Option<String>,
    odot_nodes: usize,
    odot_pure: usize,
    pure_lift: usize,
    and_in_odot: usize,
    tensor_splits: usize,
    true_in_odot: usize,
    true_plain: usize,
}

fn build_nf(f: &StateFormula) -> NF {
    let mut fl = Flatten::default();
    fl.go(f, false);
    let mut kets: Vec<KetLit> = vec![];
    for k in fl.kets.drain(..) {
        let distinct: BTreeSet<&String> = k.vars.iter().collect();
        if distinct.len() != k.vars.len() {
            fl.unsat
                .get_or_insert_with(|| format!("ket repeats a qubit: {}", ket_text(&k)));
            continue;
        }
        match kets.iter().find(|p| p.vars == k.vars) {
            Some(prev) => {
                if ket_distance(&prev.amps, &k.amps) > KET_TOL {
                    fl.unsat.get_or_insert_with(|| {
                        format!("conflicting states for tuple ({})", k.vars.join(", "))
                    });
                }
            }
            None => kets.push(k),
        }
    }
    let mut steps = vec![];
    let mut tag = |cond: bool, rule: &str, detail: &str| {
        if cond {
            steps.push(step(rule, StepKind::Structural, detail));
        }
    };
    tag(fl.odot_nodes > 0, "OdotC", "separation treated as unordered");
    tag(fl.odot_nodes > 1, "OdotA", "nested separations flattened");
    tag(
        fl.odot_pure > 0,
        "OdotO",
        "separation of classical formulas read as conjunction",
    );
    tag(
        fl.pure_lift > 0,
        "OdotOP",
        "classical conjunct lifted out of a separation",
    );
    tag(
        fl.and_in_odot > 0,
        "OdotOA",
        "conjunction regrouped across a separation",
    );
    tag(
        fl.tensor_splits > 0,
        "OdotT",
        "tensor product separated into factors",
    );
    tag(fl.true_in_odot > 0, "OdotE", "separated tautology dropped");
    tag(fl.true_plain > 0, "PT", "tautology dropped");
    NF {
        pures: fl.pures,
        kets,
        residue: fl.residue,
        unsat: fl.unsat,
        steps,
    }
}

impl Flatten {
    fn go(&mut self, f: &StateFormula, in_odot: bool) {
        if is_pure_formula(f) {
            let mut saw_odot = false;
            let b = formula_to_bexp(f, &mut saw_odot);
            if saw_odot {
                self.odot_pure += 1;
            }
            let mut conj = vec![];
            split_conjuncts(&b, &mut conj);
            if conj.is_empty() {
                if in_odot {
                    self.true_in_odot += 1;
                } else {
                    self.true_plain += 1;
                }
                return;
            }
            if in_odot {
                self.pure_lift += 1;
            }
            self.pures.extend(conj);
            return;
        }
        match f {
            StateFormula::And(a, b) => {
                if in_odot {
                    self.and_in_odot += 1;
                }
                self.go(a, in_odot);
                self.go(b, in_odot);
            }
            StateFormula::Odot(a, b) => {
                self.odot_nodes += 1;
                let qa = qvars_formula(a);
                let qb = qvars_formula(b);
                if let Some(x) = qa.intersection(&qb).next() {
                    self.unsat
                        .get_or_insert_with(|| format!("separation shares qubit `{}`", x));
                }
                self.go(a, true);
                self.go(b, true);
            }
            StateFormula::Ket(q) => {
                let mut leaves = vec![];
                tensor_leaves(q, &mut leaves);
                if leaves.len() > 1 {
                    self.tensor_splits += 1;
                }
                self.kets.extend(leaves.into_iter().map(|k| unit_ket(&k)));
            }
            StateFormula::Not(_) | StateFormula::Forall(_, _) => self.residue.push(f.clone()),
            StateFormula::Pure(p) => self.pures.push(p.clone()),
        }
    }
}

/// Collapse a ket-free formula to a boolean expression; `saw_odot` reports
/// whether a separation was read as plain conjunction on the way.
fn formula_to_bexp(f: &StateFormula, saw_odot: &mut bool) -> Bexp {
    match f {
        StateFormula::Pure(p) => p.clone(),
        StateFormula::And(a, b) => Bexp::And(
            Box::new(formula_to_bexp(a, saw_odot)),
            Box::new(formula_to_bexp(b, saw_odot)),
        ),
        StateFormula::Odot(a, b) => {
            *saw_odot = true;
            Bexp::And(
                Box::new(formula_to_bexp(a, saw_odot)),
                Box::new(formula_to_bexp(b, saw_odot)),
            )
        }
        StateFormula::Not(a) => Bexp::Not(Box::new(formula_to_bexp(a, saw_odot))),
        StateFormula::Forall(x, b) => {
            Bexp::Forall(x.clone(), Box::new(formula_to_bexp(b, saw_odot)))
        }
        StateFormula::Ket(_) => unreachable!("caller checked purity"),
    }
}

fn split_conjuncts(b: &Bexp, out: &mut Vec<Bexp>) {
    match b {
        Bexp::True => {}
        Bexp::And(x, y) => {
            split_conjuncts(x, out);
            split_conjuncts(y, out);
        }
        other => out.push(other.clone()),
    }
}

fn tensor_leaves(q: &QExpr, out: &mut Vec<KetLit>) {
    match q {
        QExpr::Ket(k) => out.push(k.clone()),
        QExpr::Tensor(a, b) => {
            tensor_leaves(a, out);
            tensor_leaves(b, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Classical goals
// ---------------------------------------------------------------------------

/// Constants forced by the premise conjuncts (`x = e` with `e` evaluable),
/// iterated to a fixpoint. Errs when two forced values clash or a fully
/// determined conjunct evaluates to false, which makes the premise
/// unsatisfiable.
fn const_env(pures: &[Bexp], w: ForallWindow) -> Result<ClassicalEnv, String> {
    let mut known = ClassicalEnv::new();
    let mut fixed: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut changed = false;
        for p in pures {
            let Bexp::Cmp(CmpOp::Eq, a, b) = p else { continue };
            for (var_side, expr_side) in [(a, b), (b, a)] {
                let crate::lang::Aexp::Var(x) = var_side else {
                    continue;
                };
                let mut free = BTreeSet::new();
                crate::lang::analysis::free_vars_aexp(expr_side, &mut free);
                if !free.iter().all(|v| fixed.contains(v)) {
                    continue;
                }
                let Ok(v) = crate::lang::eval_aexp(&known, expr_side) else {
                    continue;
                };
                if fixed.contains(x) {
                    if crate::lang::get_var(&known, x) != v {
                        return Err(format!("`{}` is forced to two different values", x));
                    }
                } else {
                    set_var(&mut known, x, v);
                    fixed.insert(x.clone());
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for p in pures {
        let mut free = BTreeSet::new();
        free_vars_bexp(p, &mut free);
        if free.iter().all(|v| fixed.contains(v)) {
            if let Ok(false) = eval_bexp(&known, p, w) {
                return Err(format!("conjunct `{}` fails under forced constants", p));
            }
        }
    }
    // remember which names are fixed by storing them all, zeros included:
    // the caller distinguishes fixed names through this map's key set, so
    // re-add explicit zeros dropped by the canonical store
    let mut out = known;
    for x in fixed {
        if !out.contains_key(&x) {
            out.insert(x, 0);
        }
    }
    Ok(out)
}

fn derive_pure(
    goal: &Bexp,
    pures: &[Bexp],
    known: &ClassicalEnv,
    cfg: &EvalConfig,
) -> Result<Vec<EntailStep>, String> {
    if matches!(goal, Bexp::True) {
        return Ok(vec![step("PT", StepKind::Structural, "tautology")]);
    }
    if pures.contains(goal) {
        return Ok(vec![step(
            "match",
            StepKind::Structural,
            format!("premise contains `{}`", goal),
        )]);
    }
    let mut free = BTreeSet::new();
    free_vars_bexp(goal, &mut free);
    if free.iter().all(|v| known.contains_key(v)) {
        match eval_bexp_full(known, goal, cfg.window) {
            Ok(out) if out.value => {
                let kind = if out.windowed {
                    StepKind::PureWindow
                } else {
                    StepKind::Structural
                };
                return Ok(vec![step(
                    "eval",
                    kind,
                    format!("`{}` holds under forced constants", goal),
                )]);
            }
            Ok(_) => {
                return Err(format!("`{}` fails under forced constants", goal));
            }
            Err(_) => {}
        }
    }
    // window enumeration over the variables not already forced
    let mut vars = free;
    for p in pures {
        free_vars_bexp(p, &mut vars);
    }
    let names: Vec<String> = vars
        .into_iter()
        .filter(|v| !known.contains_key(v))
        .collect();
    let mut bad: Option<String> = None;
    let mut consistent = false;
    enumerate_window(&names, cfg.window, known, &mut |env| {
        for p in pures {
            match eval_bexp(env, p, cfg.window) {
                Ok(true) => {}
                Ok(false) => return true,
                Err(e) => {
                    bad = Some(format!("premise evaluation failed: {}", e));
                    return false;
                }
            }
        }
        consistent = true;
        match eval_bexp(env, goal, cfg.window) {
            Ok(true) => true,
            Ok(false) => {
                bad = Some(format!(
                    "counterexample in window: store {} satisfies the premise but not `{}`",
                    fmt_sigma(env),
                    goal
                ));
                false
            }
            Err(e) => {
                bad = Some(format!("evaluating `{}`: {}", goal, e));
                false
            }
        }
    })?;
    if let Some(msg) = bad {
        return Err(msg);
    }
    let detail = if consistent {
        format!("`{}` holds across the variable window", goal)
    } else {
        "premise admits no store in the variable window".to_string()
    };
    Ok(vec![step("eval", StepKind::PureWindow, detail)])
}

/// Run `f` on each assignment of `names` over the window (on top of the
/// forced constants); `f` returns false to stop early. Errs only when the
/// assignment space exceeds the enumeration cap.
fn enumerate_window(
    names: &[String],
    w: ForallWindow,
    known: &ClassicalEnv,
    f: &mut dyn FnMut(&ClassicalEnv) -> bool,
) -> Result<(), String> {
    let span = (w.hi - w.lo + 1) as usize;
    let total = span
        .checked_pow(names.len() as u32)
        .filter(|&t| t <= MAX_ASSIGNMENTS)
        .ok_or_else(|| {
            format!(
                "window check over {} free variables exceeds the enumeration cap",
                names.len()
            )
        })?;
    for mut t in 0..total {
        let mut env = known.clone();
        for name in names {
            let v = (t % span) as i64 + w.lo;
            t /= span;
            set_var(&mut env, name, v);
        }
        if !f(&env) {
            break;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ket goals
// ---------------------------------------------------------------------------

/// Euclidean distance after aligning global phase on the largest amplitude
/// of `a`. Zero for identical literals up to phase; robust near zero, where
/// fidelity saturates.
pub(crate) fn ket_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut k = 0;
    for (i, x) in a.iter().enumerate() {
        if x.norm_sqr() > a[k].norm_sqr() {
            k = i;
        }
    }
    let phase = if a[k].norm() > 1e-12 && b[k].norm() > 1e-12 {
        (a[k] / a[k].norm()) * (b[k] / b[k].norm()).conj()
    } else {
        C64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - phase * y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Unit-normalize with the largest amplitude made real positive.
pub(crate) fn unit_ket(k: &KetLit) -> KetLit {
    let n = k.norm();
    if n <= 0.0 {
        return k.clone();
    }
    let mut big = 0;
    for (i, a) in k.amps.iter().enumerate() {
        if a.norm_sqr() > k.amps[big].norm_sqr() {
            big = i;
        }
    }
    let ph = k.amps[big] / k.amps[big].norm();
    KetLit {
        vars: k.vars.clone(),
        amps: k.amps.iter().map(|a| a / (n * ph)).collect(),
    }
}

/// Permute a ket literal onto a reordering of its tuple.
pub(crate) fn reorder_ket(k: &KetLit, new_vars: &[String]) -> KetLit {
    let n = new_vars.len();
    let perm: Vec<usize> = new_vars
        .iter()
        .map(|v| k.vars.iter().position(|x| x == v).expect("same tuple set"))
        .collect();
    let mut amps = vec![C64::new(0.0, 0.0); k.amps.len()];
    for (t, slot) in amps.iter_mut().enumerate() {
        let mut src = 0usize;
        for (j, p) in perm.iter().enumerate() {
            let bit = (t >> (n - 1 - j)) & 1;
            src |= bit << (n - 1 - p);
        }
        *slot = k.amps[src];
    }
    KetLit {
        vars: new_vars.to_vec(),
        amps,
    }
}

fn join_kets(a: &KetLit, b: &KetLit) -> KetLit {
    let mut vars = a.vars.clone();
    vars.extend(b.vars.iter().cloned());
    let mut amps = Vec::with_capacity(a.amps.len() * b.amps.len());
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    KetLit { vars, amps }
}

/// Try to factor `k` across the given variable split. Succeeds when the
/// reshaped amplitude matrix is rank one within [`KET_TOL`] in Frobenius
/// norm; returns the factor over `left` and the residual.
fn split_ket(k: &KetLit, left: &BTreeSet<String>) -> Option<(KetLit, f64)> {
    let lvars: Vec<String> = k.vars.iter().filter(|v| left.contains(*v)).cloned().collect();
    let rvars: Vec<String> = k
        .vars
        .iter()
        .filter(|v| !left.contains(*v))
        .cloned()
        .collect();
    if lvars.is_empty() || rvars.is_empty() {
        return None;
    }
    let mut order = lvars.clone();
    order.extend(rvars.iter().cloned());
    let r = reorder_ket(k, &order);
    let ld = 1usize << lvars.len();
    let rd = 1usize << rvars.len();
    let at = |x: usize, y: usize| r.amps[x * rd + y];
    let mut pivot = 0;
    let mut best = -1.0;
    for y in 0..rd {
        let c: f64 = (0..ld).map(|x| at(x, y).norm_sqr()).sum();
        if c > best {
            best = c;
            pivot = y;
        }
    }
    if best <= 0.0 {
        return None;
    }
    let un = best.sqrt();
    let u: Vec<C64> = (0..ld).map(|x| at(x, pivot) / un).collect();
    // v = u^dagger M; rank one iff M = u v
    let v: Vec<C64> = (0..rd)
        .map(|y| (0..ld).map(|x| u[x].conj() * at(x, y)).sum())
        .collect();
    let mut res2 = 0.0;
    for x in 0..ld {
        for y in 0..rd {
            res2 += (at(x, y) - u[x] * v[y]).norm_sqr();
        }
    }
    let res = res2.sqrt();
    if res > KET_TOL {
        return None;
    }
    Some((
        unit_ket(&KetLit {
            vars: lvars,
            amps: u,
        }),
        res,
    ))
}

fn classify(d: f64) -> Option<StepKind> {
    if d <= KET_EXACT {
        Some(StepKind::Structural)
    } else if d <= KET_TOL {
        Some(StepKind::NumericKet)
    } else {
        None
    }
}

fn derive_ket(target: &KetLit, lhs: &[KetLit]) -> Result<Vec<EntailStep>, String> {
    let target = unit_ket(target);
    let tset: BTreeSet<String> = target.vars.iter().cloned().collect();

    // direct and permuted tuple matches
    for k in lhs {
        if k.vars == target.vars {
            if let Some(kind) = classify(ket_distance(&target.amps, &k.amps)) {
                return Ok(vec![step(
                    "match",
                    kind,
                    format!("premise states {}", ket_text(&target)),
                )]);
            }
        } else if k.vars.len() == target.vars.len()
            && k.vars.iter().cloned().collect::<BTreeSet<_>>() == tset
        {
            let r = reorder_ket(k, &target.vars);
            if let Some(kind) = classify(ket_distance(&target.amps, &r.amps)) {
                return Ok(vec![
                    step(
                        "ReArr",
                        StepKind::Structural,
                        format!("tuple ({}) reordered to ({})", k.vars.join(", "), target.vars.join(", ")),
                    ),
                    step("match", kind, format!("premise states {}", ket_text(&target))),
                ]);
            }
        }
    }

    // pool of facts inside the target tuple: direct subsets plus rank-one
    // splits of overlapping facts
    let mut pool: Vec<(KetLit, Option<EntailStep>)> = vec![];
    for k in lhs {
        let kset: BTreeSet<String> = k.vars.iter().cloned().collect();
        if kset.is_subset(&tset) {
            pool.push((k.clone(), None));
        } else if kset.intersection(&tset).next().is_some() {
            if let Some((part, res)) = split_ket(k, &tset) {
                let kind = if res <= KET_EXACT {
                    StepKind::Structural
                } else {
                    StepKind::NumericKet
                };
                let s = step(
                    "Separ",
                    kind,
                    format!(
                        "{} factored at the tuple boundary ({})",
                        ket_text(k),
                        part.vars.join(", ")
                    ),
                );
                pool.push((part, Some(s)));
            }
        }
    }
    if pool.len() > 16 {
        pool.truncate(16);
    }

    // exact cover of the target tuple by pairwise disjoint pool facts
    for mask in 1u32..(1 << pool.len()) {
        let mut joined: Option<KetLit> = None;
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut parts = vec![];
        let mut ok = true;
        for (idx, (k, pre)) in pool.iter().enumerate() {
            if mask & (1 << idx) == 0 {
                continue;
            }
            if k.vars.iter().any(|v| seen.contains(v)) {
                ok = false;
                break;
            }
            seen.extend(k.vars.iter().cloned());
            parts.push((k, pre));
            joined = Some(match joined {
                None => k.clone(),
                Some(j) => join_kets(&j, k),
            });
        }
        if !ok || seen != tset {
            continue;
        }
        let joined = joined.expect("nonempty mask");
        let candidate = reorder_ket(&joined, &target.vars);
        if let Some(kind) = classify(ket_distance(&target.amps, &candidate.amps)) {
            let mut steps = vec![];
            for (_, pre) in &parts {
                if let Some(s) = *pre {
                    steps.push(s.clone());
                }
            }
            if parts.len() > 1 {
                steps.push(step(
                    "Separ",
                    StepKind::Structural,
                    format!(
                        "{} facts joined onto tuple ({})",
                        parts.len(),
                        target.vars.join(", ")
                    ),
                ));
                steps.push(step(
                    "OdotT",
                    StepKind::Structural,
                    "separated facts read as one tensor product",
                ));
            }
            if joined.vars != target.vars {
                steps.push(step(
                    "ReArr",
                    StepKind::Structural,
                    format!("tuple reordered to ({})", target.vars.join(", ")),
                ));
            }
            steps.push(step(
                "match",
                kind,
                format!("premise states {}", ket_text(&target)),
            ));
            return Ok(steps);
        }
    }
    Err(format!("no derivation for {}", ket_text(&target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_dist;

    fn cfg() -> EvalConfig {
        EvalConfig::default()
    }

    fn prove(l: &str, r: &str) -> EntailOutcome {
        let d1 = parse_dist(l).unwrap();
        let d2 = parse_dist(r).unwrap();
        entails(&d1, &d2, &cfg())
    }

    fn assert_proven(l: &str, r: &str) {
        match prove(l, r) {
            EntailOutcome::Proven(_) => {}
            EntailOutcome::Unknown(m) => panic!("expected `{}` |- `{}`, got: {}", l, r, m),
        }
    }

    fn assert_unknown(l: &str, r: &str) {
        if let EntailOutcome::Proven(p) = prove(l, r) {
            panic!("expected no proof of `{}` |- `{}`, got {:?}", l, r, p.steps);
        }
    }

    #[test]
    fn syntactic_and_tautology() {
        assert_proven("v = 1 /\\ |0>_{p}", "v = 1");
        assert_proven("v = 1", "true");
        assert_unknown("true", "v = 1");
    }

    #[test]
    fn constants_propagate_into_goals() {
        assert_proven("v0 = 0 /\\ v1 = 0", "~(v0 + v1 = 1)");
        assert_proven("v = 3 /\\ w = v + 1", "w = 4");
        assert_unknown("v = 3", "v = 4");
    }

    #[test]
    fn window_discharges_open_classical_goals() {
        assert_proven("v > 2", "v > 1");
        assert_unknown("v > 1", "v > 2");
        let out = prove("v > 2", "v > 1");
        if let EntailOutcome::Proven(p) = out {
            assert_eq!(p.kind, StepKind::PureWindow);
        } else {
            panic!("expected proof");
        }
    }

    #[test]
    fn contradictory_premise_is_vacuous() {
        assert_proven("v = 1 /\\ v = 2", "|0>_{p}");
        assert_proven("v = 1 /\\ ~(v = 1)", "w = 9");
    }

    #[test]
    fn ket_matches_up_to_tuple_order() {
        assert_proven("|01>_{p q}", "|10>_{q p}");
        assert_unknown("|01>_{p q}", "|01>_{q p}");
    }

    #[test]
    fn tensor_facts_join_and_split() {
        assert_proven("|0>_{p} (.) |1>_{q}", "|01>_{p q}");
        assert_proven("|01>_{p q}", "|0>_{p} (.) |1>_{q}");
        assert_proven("|0>_{p} (x) |1>_{q}", "|01>_{p q}");
        // entangled states do not factor
        let bell = "(1|00> + 1|11>)_{p q}";
        assert_unknown(bell, "|0>_{p}");
    }

    #[test]
    fn separation_requires_disjoint_targets() {
        assert_unknown("|0>_{p}", "|0>_{p} (.) |0>_{p}");
    }

    #[test]
    fn weighted_transportation_merges_components() {
        assert_proven(
            "1/4 (v = 1) (+) 1/4 (v = 1) (+) 1/2 (v = 2)",
            "1/2 (v = 1) (+) 1/2 (v = 2)",
        );
        assert_unknown(
            "1/4 (v = 1) (+) 3/4 (v = 2)",
            "1/2 (v = 1) (+) 1/2 (v = 2)",
        );
    }

    #[test]
    fn weights_forgotten_toward_unweighted() {
        assert_proven("1/2 (v = 1) (+) 1/2 (v = 2)", "v = 1 (+) v = 2");
        assert_proven("v = 1 (+) v = 2", "v >= 1 (+) v >= 1");
    }

    #[test]
    fn pointwise_fallback_regroups_classical_components() {
        // no per-component cover exists, the window fallback closes it
        assert_proven("v <= 2 (+) v >= 5", "v <= 0 (+) v >= 1");
    }
}
