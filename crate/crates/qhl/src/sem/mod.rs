//! Execution semantics over weighted ensembles.
//!
//! A program configuration is a classical store plus a pure quantum state; a
//! program denotes a map from weighted ensembles of configurations to weighted
//! ensembles. Total weight starts at one and never increases: `abort` deletes
//! mass, and loops cut off at the iteration cap leave their still-running
//! mass behind (reported per loop, see [`LoopStats`]). Evaluating on an
//! ensemble with several branches agrees with evaluating the branches
//! separately and mixing the results, which is what makes the ensemble view a
//! faithful stand-in for density-operator evolution.

mod eval;
mod sample;

pub use eval::{eval_com, eval_program, Evaluator, ProgramContext};
pub use sample::{sample_program, SampleOutcome};

use crate::lang::ClassicalEnv;
use crate::qcore::{C64, DensityMatrix, PureState, QcoreError, QubitLayout};
use sha2::{Digest, Sha256};

/// One weighted configuration: classical store, weight, pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub sigma: ClassicalEnv,
    pub weight: f64,
    pub state: PureState,
}

/// Weighted ensemble of configurations over a shared qubit layout.
/// Invariant after [`Ensemble::normalize_rep`]: branches are sorted by
/// classical store first, weights are above the prune threshold, and no two
/// branches share both a store and a state (up to global phase).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub layout: QubitLayout,
    pub branches: Vec<Branch>,
}

/// Knobs for evaluation. `tol` doubles as the amplitude tolerance used when
/// merging branches that differ only by floating-point noise.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub prune: f64,
    pub window: crate::lang::ForallWindow,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tol: 1e-9,
            max_iter: 1000,
            prune: 1e-12,
            window: crate::lang::ForallWindow::default(),
        }
    }
}

/// Per-loop accounting from one execution of a `while`.
///
/// `exit_masses[k]` is the weight that left the loop after exactly `k` body
/// executions; `active_masses[k]` is the weight still inside when body run
/// `k` started. `residual` is the weight still running at the cap; it is
/// dropped from the result, making the returned ensemble a lower
/// approximation of the loop's limit.
#[derive(Debug, Clone)]
pub struct LoopStats {
    pub iterations: usize,
    pub entry_mass: f64,
    pub exit_masses: Vec<f64>,
    pub active_masses: Vec<f64>,
    pub residual: f64,
}

/// Result of evaluating a whole program.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub ensemble: Ensemble,
    /// One entry per `while` execution, in completion order.
    pub loops: Vec<LoopStats>,
    /// Mass deleted by `abort` and by failing branches.
    pub aborted: f64,
    /// Mass dropped with sub-threshold branches.
    pub pruned: f64,
    /// Diagnostics for deleted branches and truncated loops.
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Mass left running inside loops at their iteration caps.
    pub fn truncated(&self) -> f64 {
        self.loops.iter().map(|l| l.residual).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SemError {
    #[error("in `{context}`: {err}")]
    Eval {
        context: String,
        err: crate::lang::EvalErr,
    },
    #[error(transparent)]
    Qcore(#[from] QcoreError),
    #[error("unknown measurement `{0}`")]
    UnknownMeasurement(String),
    #[error("measurement `{name}` covers {arity} qubits, applied to {got}")]
    MeasurementArity {
        name: String,
        arity: usize,
        got: usize,
    },
    #[error("macro handling: {0}")]
    Macro(String),
    #[error("macro call `{0}` survived expansion")]
    UnexpandedMacro(String),
}

impl Ensemble {
    pub fn new(layout: QubitLayout) -> Ensemble {
        Ensemble {
            layout,
            branches: Vec::new(),
        }
    }

    /// Single-branch ensemble with weight one.
    pub fn single(layout: QubitLayout, sigma: ClassicalEnv, state: PureState) -> Ensemble {
        Ensemble {
            layout,
            branches: vec![Branch {
                sigma,
                weight: 1.0,
                state,
            }],
        }
    }

    pub fn mass(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    pub fn scaled(&self, w: f64) -> Ensemble {
        let mut out = self.clone();
        for b in out.branches.iter_mut() {
            b.weight *= w;
        }
        out
    }

    /// Merge same-store branches whose states agree up to global phase within
    /// `tol` (amplitude scale), drop weights at or below `prune`, fix the
    /// global phase of each survivor, and sort. Returns the dropped mass.
    pub fn normalize_rep(&mut self, tol: f64, prune: f64) -> f64 {
        let mut kept: Vec<Branch> = Vec::with_capacity(self.branches.len());
        for br in self.branches.drain(..) {
            match kept
                .iter_mut()
                .find(|k| k.sigma == br.sigma && states_match(&k.state, &br.state, tol))
            {
                Some(k) => k.weight += br.weight,
                None => kept.push(br),
            }
        }
        let mut dropped = 0.0;
        kept.retain(|b| {
            if b.weight <= prune {
                dropped += b.weight;
                false
            } else {
                true
            }
        });
        for b in kept.iter_mut() {
            b.state = canonical_phase(&b.state);
        }
        kept.sort_by(|a, b| {
            a.sigma
                .cmp(&b.sigma)
                .then_with(|| amp_order(a.state.amps(), b.state.amps()))
        });
        self.branches = kept;
        dropped
    }

    /// Convex mixture of ensembles over the same layout.
    pub fn mix(parts: &[(f64, &Ensemble)]) -> Result<Ensemble, QcoreError> {
        let layout = match parts.first() {
            Some((_, e)) => e.layout.clone(),
            None => QubitLayout::new(Vec::<String>::new())?,
        };
        let mut out = Ensemble::new(layout.clone());
        for (w, e) in parts {
            if e.layout != layout {
                return Err(QcoreError::DimensionMismatch(
                    "mixing ensembles over different layouts".into(),
                ));
            }
            for b in &e.branches {
                let mut b = b.clone();
                b.weight *= w;
                out.branches.push(b);
            }
        }
        out.normalize_rep(1e-12, 0.0);
        Ok(out)
    }

    /// Total quantum density operator, weighted by branch mass and ignoring
    /// the classical stores. Trace equals the ensemble mass.
    pub fn density(&self) -> DensityMatrix {
        let mut acc = DensityMatrix {
            vars: self.layout.names().to_vec(),
            mat: crate::qcore::Matrix::zeros(self.layout.dim()),
        };
        for b in &self.branches {
            acc = acc
                .add(&b.state.density().scale(b.weight))
                .expect("shared layout");
        }
        acc
    }

    /// Branch indices grouped by classical store, in store order. Branches
    /// must already be in normalized representation.
    pub fn sigma_groups(&self) -> Vec<(&ClassicalEnv, Vec<usize>)> {
        let mut out: Vec<(&ClassicalEnv, Vec<usize>)> = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            match out.last_mut() {
                Some((s, idxs)) if *s == &b.sigma => idxs.push(i),
                _ => out.push((&b.sigma, vec![i])),
            }
        }
        out
    }

    /// Weighted density operator per classical store, in store order.
    pub fn densities_by_sigma(&self) -> Vec<(ClassicalEnv, DensityMatrix)> {
        self.sigma_groups()
            .into_iter()
            .map(|(sigma, idxs)| {
                let mut acc = DensityMatrix {
                    vars: self.layout.names().to_vec(),
                    mat: crate::qcore::Matrix::zeros(self.layout.dim()),
                };
                for i in idxs {
                    let b = &self.branches[i];
                    acc = acc
                        .add(&b.state.density().scale(b.weight))
                        .expect("shared layout");
                }
                (sigma.clone(), acc)
            })
            .collect()
    }

    /// Short content hash over stores, weights, and amplitudes, all quantized
    /// at 1e-9. Stable across runs for deterministic evaluations.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for name in self.layout.names() {
            h.update(name.as_bytes());
            h.update([0]);
        }
        for b in &self.branches {
            for (k, v) in &b.sigma {
                h.update(k.as_bytes());
                h.update(v.to_le_bytes());
            }
            h.update(quantize(b.weight).to_le_bytes());
            for a in b.state.amps() {
                h.update(quantize(a.re).to_le_bytes());
                h.update(quantize(a.im).to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut s = String::new();
        for byte in digest.iter().take(8) {
            s.push_str(&format!("{:02x}", byte));
        }
        s
    }
}

fn quantize(x: f64) -> i64 {
    (x / 1e-9).round() as i64
}

/// Same state up to global phase, judged at amplitude scale: after aligning
/// phases on the largest amplitude, every entry must agree within `tol` in
/// Euclidean norm. Sharper than a fidelity test near one, where f64 loses
/// resolution.
pub fn states_match(a: &PureState, b: &PureState, tol: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let k = argmax_amp(a.amps());
    let ak = a.amps()[k];
    let bk = b.amps()[k];
    if ak.norm() < 1e-12 {
        return false;
    }
    let phase = if bk.norm() < 1e-12 {
        return false;
    } else {
        let r = bk / ak;
        r / r.norm()
    };
    let mut dist2 = 0.0;
    for (x, y) in a.amps().iter().zip(b.amps()) {
        dist2 += (x * phase - y).norm_sqr();
    }
    dist2.sqrt() <= tol
}

fn argmax_amp(amps: &[C64]) -> usize {
    let mut best = 0usize;
    let mut best_n = -1.0f64;
    for (i, a) in amps.iter().enumerate() {
        let n = a.norm_sqr();
        if n > best_n {
            best_n = n;
            best = i;
        }
    }
    best
}

/// Rotate the global phase so the largest amplitude is positive real.
pub fn canonical_phase(state: &PureState) -> PureState {
    let k = argmax_amp(state.amps());
    let a = state.amps()[k];
    let n = a.norm();
    if n < 1e-15 {
        return state.clone();
    }
    let phase = a.conj() / n;
    PureState::new(
        state.layout().clone(),
        state.amps().iter().map(|x| x * phase).collect(),
    )
    .expect("same dim")
}

fn amp_order(a: &[C64], b: &[C64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    std::cmp::Ordering::Equal
}

/// Entrywise comparison of the per-store density operators of two ensembles.
/// Missing stores count as zero operators, so sub-`tol` groups on one side
/// only are fine.
pub fn ensembles_close(a: &Ensemble, b: &Ensemble, tol: f64) -> bool {
    if a.layout != b.layout {
        return false;
    }
    let da = a.densities_by_sigma();
    let db = b.densities_by_sigma();
    let mut ia = 0usize;
    let mut ib = 0usize;
    while ia < da.len() || ib < db.len() {
        let ord = match (da.get(ia), db.get(ib)) {
            (Some((sa, _)), Some((sb, _))) => sa.cmp(sb),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => break,
        };
        match ord {
            std::cmp::Ordering::Equal => {
                if da[ia].1.mat.max_abs_diff(&db[ib].1.mat) > tol {
                    return false;
                }
                ia += 1;
                ib += 1;
            }
            std::cmp::Ordering::Less => {
                if da[ia].1.trace() > tol {
                    return false;
                }
                ia += 1;
            }
            std::cmp::Ordering::Greater => {
                if db[ib].1.trace() > tol {
                    return false;
                }
                ib += 1;
            }
        }
    }
    true
}
