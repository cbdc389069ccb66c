//! Satisfaction checking: state formulas against single configurations,
//! distribution formulas against ensembles, and quantitative satisfaction.
//!
//! Distribution-level checks work at the granularity the semantics provides:
//! branches aggregated by classical store. A verdict of `Satisfied` always
//! carries a decomposition witness that can be replayed; `Refuted` is only
//! produced on fragments where branch-level search is exhaustive, so a failed
//! search elsewhere comes back `NotProven`.

mod entail;
mod transport;

pub use entail::{entails, EntailOutcome, EntailProof, EntailStep, StepKind};
pub(crate) use entail::{ket_distance, reorder_ket, unit_ket};
pub use transport::{feasible_exact, feasible_f64};

use crate::lang::analysis::{qvars_dist, qvars_formula, subst_formula};
use crate::lang::{
    eval_bexp, eval_bexp_full, Aexp, ClassicalEnv, DistFormula, EvalErr, ForallWindow, QExpr,
    Rational, StateFormula,
};
use crate::qcore::{partial_trace, DensityMatrix, Matrix, QcoreError};
use crate::sem::{Ensemble, EvalConfig};
use num_traits::ToPrimitive;
use serde::Serialize;
use std::collections::BTreeSet;

/// Frobenius tolerance for comparing a reduced operator against a ket
/// projector. Fixed rather than configurable: the comparison is between a
/// numerically evolved state and an exact literal, and 1e-7 rides well above
/// f64 evolution noise while staying far below any physical distinction the
/// corpus cares about.
pub const KET_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum AssertError {
    #[error("evaluating `{context}`: {err}")]
    Eval { context: String, err: EvalErr },
    #[error(transparent)]
    Qcore(#[from] QcoreError),
    #[error("state formula checked against an operator with nonpositive trace")]
    ZeroTrace,
}

/// Truth value plus a flag recording whether any quantifier was cut to the
/// finite window, in which case "true" means "true across the window".
#[derive(Debug, Clone, Copy)]
pub struct SatOutcome {
    pub value: bool,
    pub windowed: bool,
}

/// Branch-granular decomposition witness for a direct sum. Row `b` splits
/// branch `b`'s weight across components; rows sum to one. Column masses
/// match the component weights.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub fractions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Components dropped with weight zero (unweighted form only).
    pub relaxed: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    /// Failing store, when a single one pinpoints the refutation.
    pub sigma: Option<ClassicalEnv>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub enum Verdict {
    Satisfied { witness: Decomposition },
    Refuted { counterexample: Counterexample },
    NotProven { reason: String },
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied { .. })
    }
    pub fn is_refuted(&self) -> bool {
        matches!(self, Verdict::Refuted { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum ProbabilityOutcome {
    Decisive(f64),
    /// Some store group admits refinements going either way at the
    /// granularity checked here; its store is reported.
    NotDecisive { sigma: ClassicalEnv },
}

/// Whether a configuration (store, unnormalized density operator) satisfies
/// a state formula. Errors on nonpositive trace and on classical evaluation
/// failures inside the formula.
pub fn sat_state(
    sigma: &ClassicalEnv,
    rho: &DensityMatrix,
    f: &StateFormula,
    cfg: &EvalConfig,
) -> Result<bool, AssertError> {
    sat_state_full(sigma, rho, f, cfg).map(|o| o.value)
}

pub fn sat_state_full(
    sigma: &ClassicalEnv,
    rho: &DensityMatrix,
    f: &StateFormula,
    cfg: &EvalConfig,
) -> Result<SatOutcome, AssertError> {
    if rho.trace() <= 0.0 {
        return Err(AssertError::ZeroTrace);
    }
    let mut windowed = false;
    let value = sat_rec(sigma, rho, f, cfg, &mut windowed)?;
    Ok(SatOutcome { value, windowed })
}

fn sat_rec(
    sigma: &ClassicalEnv,
    rho: &DensityMatrix,
    f: &StateFormula,
    cfg: &EvalConfig,
    windowed: &mut bool,
) -> Result<bool, AssertError> {
    match f {
        StateFormula::Pure(p) => {
            let out = eval_bexp_full(sigma, p, cfg.window).map_err(|err| AssertError::Eval {
                context: p.to_string(),
                err,
            })?;
            *windowed |= out.windowed;
            Ok(out.value)
        }
        StateFormula::Ket(q) => sat_ket(rho, q),
        StateFormula::And(a, b) => {
            let va = sat_rec(sigma, rho, a, cfg, windowed)?;
            let vb = sat_rec(sigma, rho, b, cfg, windowed)?;
            Ok(va && vb)
        }
        StateFormula::Not(a) => Ok(!sat_rec(sigma, rho, a, cfg, windowed)?),
        StateFormula::Odot(a, b) => {
            // separation demands disjoint quantum footprints; the classical
            // store is shared, so restrictions only re-reduce inside atoms
            // and each side can be checked against the full operator
            let qa = qvars_formula(a);
            let qb = qvars_formula(b);
            if qa.intersection(&qb).next().is_some() {
                return Ok(false);
            }
            let va = sat_rec(sigma, rho, a, cfg, windowed)?;
            let vb = sat_rec(sigma, rho, b, cfg, windowed)?;
            Ok(va && vb)
        }
        StateFormula::Forall(x, body) => {
            *windowed = true;
            for v in cfg.window.lo..=cfg.window.hi {
                let inst = subst_formula(body, x, &Aexp::Int(v));
                if !sat_rec(sigma, rho, &inst, cfg, windowed)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Ket atom: the operator, normalized and partial-traced onto the ket's
/// qubits, must be the literal's projector within [`KET_TOL`] in Frobenius
/// norm. Scale invariant in the operator.
fn sat_ket(rho: &DensityMatrix, q: &QExpr) -> Result<bool, AssertError> {
    let ket = q.to_ket();
    let reduced = partial_trace(rho, &ket.vars)?;
    let t = reduced.trace();
    if t <= 0.0 {
        return Err(AssertError::ZeroTrace);
    }
    let dim = ket.amps.len();
    let n2 = {
        let n = ket.norm();
        if n <= 0.0 {
            return Err(AssertError::Qcore(QcoreError::DimensionMismatch(
                "ket literal with zero norm".into(),
            )));
        }
        n * n
    };
    let mut acc = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let target = ket.amps[i] * ket.amps[j].conj() / n2;
            let d = reduced.mat[(i, j)] / t - target;
            acc += d.norm_sqr();
        }
    }
    Ok(acc.sqrt() <= KET_TOL)
}

/// Truth value of `f` decided by the classical store alone, for every
/// quantum refinement. Pure atoms evaluate; separation over shared qubits is
/// false outright; conjunction is false-dominant; ket atoms decide nothing.
pub fn sigma_forces(sigma: &ClassicalEnv, f: &StateFormula, window: ForallWindow) -> Option<bool> {
    match f {
        StateFormula::Pure(p) => eval_bexp(sigma, p, window).ok(),
        StateFormula::Ket(_) => None,
        StateFormula::And(a, b) => join_forced(
            sigma_forces(sigma, a, window),
            sigma_forces(sigma, b, window),
        ),
        StateFormula::Not(a) => sigma_forces(sigma, a, window).map(|v| !v),
        StateFormula::Odot(a, b) => {
            let qa = qvars_formula(a);
            let qb = qvars_formula(b);
            if qa.intersection(&qb).next().is_some() {
                return Some(false);
            }
            join_forced(
                sigma_forces(sigma, a, window),
                sigma_forces(sigma, b, window),
            )
        }
        StateFormula::Forall(x, body) => {
            let mut all_true = true;
            for v in window.lo..=window.hi {
                let inst = subst_formula(body, x, &Aexp::Int(v));
                match sigma_forces(sigma, &inst, window) {
                    Some(false) => return Some(false),
                    Some(true) => {}
                    None => all_true = false,
                }
            }
            if all_true {
                Some(true)
            } else {
                None
            }
        }
    }
}

fn join_forced(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

/// No ket atom anywhere: satisfaction depends on the store only.
pub fn is_pure_formula(f: &StateFormula) -> bool {
    qvars_formula(f).is_empty()
}

/// Closed under mixing: any convex combination of satisfying operators over
/// a common store still satisfies. Holds for pure formulas (store-decided),
/// ket atoms (all satisfiers are proportional), and their positive
/// combinations; negation over quantum content breaks it.
pub fn mixture_closed(f: &StateFormula) -> bool {
    match f {
        StateFormula::Pure(_) | StateFormula::Ket(_) => true,
        StateFormula::And(a, b) | StateFormula::Odot(a, b) => {
            mixture_closed(a) && mixture_closed(b)
        }
        StateFormula::Not(_) => is_pure_formula(f),
        StateFormula::Forall(_, b) => mixture_closed(b),
    }
}

struct Groups {
    sigma: Vec<ClassicalEnv>,
    idxs: Vec<Vec<usize>>,
    density: Vec<DensityMatrix>,
    mass: Vec<f64>,
    of_branch: Vec<usize>,
}

fn group(mu: &Ensemble) -> Groups {
    let raw = mu.sigma_groups();
    let mut g = Groups {
        sigma: Vec::with_capacity(raw.len()),
        idxs: Vec::with_capacity(raw.len()),
        density: Vec::with_capacity(raw.len()),
        mass: Vec::with_capacity(raw.len()),
        of_branch: vec![0; mu.branches.len()],
    };
    for (gi, (sigma, idxs)) in raw.into_iter().enumerate() {
        let mut acc = DensityMatrix {
            vars: mu.layout.names().to_vec(),
            mat: Matrix::zeros(mu.layout.dim()),
        };
        let mut m = 0.0;
        for &i in &idxs {
            let b = &mu.branches[i];
            acc = acc
                .add(&b.state.density().scale(b.weight))
                .expect("shared layout");
            m += b.weight;
            g.of_branch[i] = gi;
        }
        g.sigma.push(sigma.clone());
        g.idxs.push(idxs);
        g.density.push(acc);
        g.mass.push(m);
    }
    g
}

fn fmt_sigma(sigma: &ClassicalEnv) -> String {
    if sigma.is_empty() {
        return "{}".into();
    }
    let inner: Vec<String> = sigma.iter().map(|(k, v)| format!("{} = {}", k, v)).collect();
    format!("{{{}}}", inner.join(", "))
}

/// Decide whether the ensemble satisfies the distribution formula. Wrapper
/// over [`satisfies_full`] dropping the window flag.
pub fn satisfies(mu: &Ensemble, d: &DistFormula, cfg: &EvalConfig) -> Result<Verdict, AssertError> {
    satisfies_full(mu, d, cfg).map(|(v, _)| v)
}

pub fn satisfies_full(
    mu: &Ensemble,
    d: &DistFormula,
    cfg: &EvalConfig,
) -> Result<(Verdict, bool), AssertError> {
    let comps = d.components();
    let k = comps.len();

    // empty ensemble: every decomposition obligation quantifies over nothing
    if mu.branches.is_empty() || mu.mass() <= cfg.prune {
        let weights = comps
            .iter()
            .map(|(p, _)| p.and_then(|r| r.to_f64()).unwrap_or(0.0))
            .collect();
        let witness = Decomposition {
            fractions: vec![],
            weights,
            relaxed: (0..k).collect(),
        };
        return Ok((Verdict::Satisfied { witness }, false));
    }

    let g = group(mu);
    let mut windowed = false;

    if let DistFormula::Single(f) = d {
        for gi in 0..g.sigma.len() {
            let out = sat_state_full(&g.sigma[gi], &g.density[gi], f, cfg)?;
            windowed |= out.windowed;
            if !out.value {
                let v = Verdict::Refuted {
                    counterexample: Counterexample {
                        sigma: Some(g.sigma[gi].clone()),
                        reason: format!(
                            "store {} does not satisfy {}",
                            fmt_sigma(&g.sigma[gi]),
                            f
                        ),
                    },
                };
                return Ok((v, windowed));
            }
        }
        let witness = Decomposition {
            fractions: vec![vec![1.0]; mu.branches.len()],
            weights: vec![1.0],
            relaxed: vec![],
        };
        return Ok((Verdict::Satisfied { witness }, windowed));
    }

    // per-branch and per-group satisfaction of every component
    let nb = mu.branches.len();
    let ng = g.sigma.len();
    let mut sat_b = vec![vec![false; k]; nb];
    let mut sat_g = vec![vec![false; k]; ng];
    for (ci, (_, f)) in comps.iter().enumerate() {
        for gi in 0..ng {
            let out = sat_state_full(&g.sigma[gi], &g.density[gi], f, cfg)?;
            windowed |= out.windowed;
            sat_g[gi][ci] = out.value;
        }
        for (bi, b) in mu.branches.iter().enumerate() {
            let gi = g.of_branch[bi];
            let out = if g.idxs[gi].len() == 1 {
                // single-branch group: identical to the group answer
                SatOutcome {
                    value: sat_g[gi][ci],
                    windowed: false,
                }
            } else {
                sat_state_full(&b.sigma, &b.state.density(), f, cfg)?
            };
            windowed |= out.windowed;
            sat_b[bi][ci] = out.value;
        }
    }

    // the search below is exhaustive when every formula is store-decided, or
    // every (group, component) pair is decisive at this granularity
    let all_pure = comps.iter().all(|(_, f)| is_pure_formula(f));
    let complete = all_pure
        || (0..ng).all(|gi| {
            g.idxs[gi].len() == 1
                || comps
                    .iter()
                    .all(|(_, f)| sigma_forces(&g.sigma[gi], f, cfg.window).is_some())
        });

    let verdict = match d {
        DistFormula::Single(_) => unreachable!("handled above"),
        DistFormula::Weighted(_) => {
            satisfies_weighted(mu, &g, &comps, &sat_b, &sat_g, complete, cfg, &mut windowed)?
        }
        DistFormula::Unweighted(_) => {
            satisfies_unweighted(mu, &g, &comps, &sat_b, &sat_g, complete, cfg, &mut windowed)?
        }
    };
    Ok((verdict, windowed))
}

#[allow(clippy::too_many_arguments)]
fn satisfies_weighted(
    mu: &Ensemble,
    g: &Groups,
    comps: &[(Option<Rational>, &StateFormula)],
    sat_b: &[Vec<bool>],
    sat_g: &[Vec<bool>],
    complete: bool,
    cfg: &EvalConfig,
    windowed: &mut bool,
) -> Result<Verdict, AssertError> {
    let mass = mu.mass();
    let k = comps.len();
    let supplies: Vec<f64> = mu.branches.iter().map(|b| b.weight).collect();
    let demands: Vec<f64> = comps
        .iter()
        .map(|(p, _)| p.and_then(|r| r.to_f64()).unwrap_or(0.0) * mass)
        .collect();

    // attempt 1 routes each branch only to components it satisfies alone;
    // attempt 2 also allows routing via the whole group's density, which is
    // sound for splits that scale a branch but can overshoot for formulas
    // not closed under mixing, hence the verification pass
    let arcs_branch = |b: usize, i: usize| sat_b[b][i];
    let arcs_group = |b: usize, i: usize| sat_b[b][i] || sat_g[g.of_branch[b]][i];
    for arc in [&arcs_branch as &dyn Fn(usize, usize) -> bool, &arcs_group] {
        if let Some(flows) = feasible_f64(&supplies, &demands, arc, cfg.tol) {
            if verify_columns(mu, g, comps, &flows, cfg, windowed)? {
                let weights: Vec<f64> = demands.iter().map(|d| d / mass).collect();
                let relaxed = (0..k).filter(|&i| demands[i] <= cfg.tol).collect();
                let fractions = flows
                    .iter()
                    .zip(&supplies)
                    .map(|(row, w)| row.iter().map(|f| f / w).collect())
                    .collect();
                return Ok(Verdict::Satisfied {
                    witness: Decomposition {
                        fractions,
                        weights,
                        relaxed,
                    },
                });
            }
        }
    }

    let reason = "no split of branch masses meets the component weights".to_string();
    if complete {
        Ok(Verdict::Refuted {
            counterexample: Counterexample {
                sigma: None,
                reason,
            },
        })
    } else {
        Ok(Verdict::NotProven {
            reason: format!("{reason} at store granularity"),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn satisfies_unweighted(
    mu: &Ensemble,
    g: &Groups,
    comps: &[(Option<Rational>, &StateFormula)],
    sat_b: &[Vec<bool>],
    sat_g: &[Vec<bool>],
    complete: bool,
    cfg: &EvalConfig,
    windowed: &mut bool,
) -> Result<Verdict, AssertError> {
    let mass = mu.mass();
    let k = comps.len();
    let nb = mu.branches.len();
    let mut flows = vec![vec![0.0; k]; nb];

    // groups pick a component wholesale when one fits; otherwise branches
    // pick individually (first fit)
    for gi in 0..g.sigma.len() {
        if let Some(ci) = (0..k).find(|&ci| sat_g[gi][ci]) {
            for &bi in &g.idxs[gi] {
                flows[bi][ci] = mu.branches[bi].weight;
            }
            continue;
        }
        for &bi in &g.idxs[gi] {
            match (0..k).find(|&ci| sat_b[bi][ci]) {
                Some(ci) => flows[bi][ci] = mu.branches[bi].weight,
                None => {
                    let cex = Counterexample {
                        sigma: Some(g.sigma[gi].clone()),
                        reason: format!(
                            "store {} satisfies no component",
                            fmt_sigma(&g.sigma[gi])
                        ),
                    };
                    return Ok(if complete {
                        Verdict::Refuted { counterexample: cex }
                    } else {
                        Verdict::NotProven {
                            reason: format!("{} at store granularity", cex.reason),
                        }
                    });
                }
            }
        }
    }

    if verify_columns(mu, g, comps, &flows, cfg, windowed)? {
        let col_mass: Vec<f64> = (0..k).map(|ci| (0..nb).map(|bi| flows[bi][ci]).sum()).collect();
        let weights: Vec<f64> = col_mass.iter().map(|m| m / mass).collect();
        let relaxed = (0..k).filter(|&ci| col_mass[ci] <= cfg.prune).collect();
        let fractions = flows
            .iter()
            .zip(mu.branches.iter())
            .map(|(row, b)| row.iter().map(|f| f / b.weight).collect())
            .collect();
        return Ok(Verdict::Satisfied {
            witness: Decomposition {
                fractions,
                weights,
                relaxed,
            },
        });
    }
    Ok(Verdict::NotProven {
        reason: "component assignment found but its mixtures fail verification".into(),
    })
}

/// Replay a candidate decomposition: each component's reconstructed ensemble
/// must satisfy its formula, checked per store group of the slice. This is
/// the soundness gate behind every `Satisfied`.
fn verify_columns(
    mu: &Ensemble,
    g: &Groups,
    comps: &[(Option<Rational>, &StateFormula)],
    flows: &[Vec<f64>],
    cfg: &EvalConfig,
    windowed: &mut bool,
) -> Result<bool, AssertError> {
    for (ci, (_, f)) in comps.iter().enumerate() {
        for gi in 0..g.sigma.len() {
            let mut acc = DensityMatrix {
                vars: mu.layout.names().to_vec(),
                mat: Matrix::zeros(mu.layout.dim()),
            };
            let mut m = 0.0;
            for &bi in &g.idxs[gi] {
                let w = flows[bi][ci];
                if w > 0.0 {
                    acc = acc
                        .add(&mu.branches[bi].state.density().scale(w))
                        .expect("shared layout");
                    m += w;
                }
            }
            if m <= cfg.prune {
                continue;
            }
            let out = sat_state_full(&g.sigma[gi], &acc, f, cfg)?;
            *windowed |= out.windowed;
            if !out.value {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Greatest mass fraction resolvable to `f`, when every store group decides
/// `f` at this granularity. Groups that would need sub-branch splitting to
/// decide come back as `NotDecisive`.
pub fn probability_of(
    mu: &Ensemble,
    f: &StateFormula,
    cfg: &EvalConfig,
) -> Result<ProbabilityOutcome, AssertError> {
    if mu.branches.is_empty() || mu.mass() <= cfg.prune {
        return Ok(ProbabilityOutcome::NotDecisive {
            sigma: ClassicalEnv::new(),
        });
    }
    let g = group(mu);
    let mut hit = 0.0;
    for gi in 0..g.sigma.len() {
        let value = match sigma_forces(&g.sigma[gi], f, cfg.window) {
            Some(v) => v,
            None if g.idxs[gi].len() == 1 => sat_state(&g.sigma[gi], &g.density[gi], f, cfg)?,
            None => {
                return Ok(ProbabilityOutcome::NotDecisive {
                    sigma: g.sigma[gi].clone(),
                })
            }
        };
        if value {
            hit += g.mass[gi];
        }
    }
    Ok(ProbabilityOutcome::Decisive(hit / mu.mass()))
}

/// Quantum footprint of a distribution formula, re-exported for callers
/// staging frame checks.
pub fn dist_qvars(d: &DistFormula) -> BTreeSet<String> {
    qvars_dist(d)
}
