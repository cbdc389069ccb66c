//! Exhaustive evaluator: pushes a whole ensemble through a command,
//! splitting branches at measurements, resets, and random assignments, and
//! merging duplicates as it goes.
//!
//! A branch whose classical arithmetic fails (division by zero in a guard,
//! overflow, a gate parameter outside its domain) is deleted like an abort,
//! with a diagnostic recorded; structural problems (unknown gate or
//! measurement, layout mismatches) fail the whole evaluation.

use super::{Branch, Ensemble, EvalConfig, EvalReport, LoopStats, SemError};
use crate::lang::analysis::expand_macros;
use crate::lang::{eval_aexp, eval_bexp, set_var, Bexp, Com, MeasurementDef, Program};
use crate::lang::{ClassicalEnv, EvalErr};
use crate::qcore::{measure, reset_qubit, GateTable, PureState, QcoreError, QubitLayout};
use std::collections::BTreeMap;

const MAX_WARNINGS: usize = 32;

/// Declarations a command needs at run time, prebuilt from a program:
/// expanded body, qubit layout, gate registry.
pub struct ProgramContext<'a> {
    pub program: &'a Program,
    pub body: Com,
    pub layout: QubitLayout,
    pub table: GateTable,
}

impl<'a> ProgramContext<'a> {
    pub fn new(program: &'a Program) -> Result<Self, SemError> {
        let body = expand_macros(&program.body, &program.macros).map_err(SemError::Macro)?;
        let layout = QubitLayout::new(program.qubits.clone())?;
        let mut table = GateTable::new();
        for (name, m) in &program.gates {
            table.register(name, m.clone())?;
        }
        Ok(ProgramContext {
            program,
            body,
            layout,
            table,
        })
    }

    /// Declared defaults overlaid with host-supplied values.
    pub fn initial_sigma(&self, overrides: &ClassicalEnv) -> ClassicalEnv {
        let mut sigma = ClassicalEnv::new();
        for (k, v) in &self.program.inits {
            set_var(&mut sigma, k, *v);
        }
        for (k, v) in overrides {
            set_var(&mut sigma, k, *v);
        }
        sigma
    }

    pub fn initial_ensemble(&self, overrides: &ClassicalEnv) -> Ensemble {
        Ensemble::single(
            self.layout.clone(),
            self.initial_sigma(overrides),
            PureState::zero(self.layout.clone()),
        )
    }
}

/// Stateful walker so nested loops can report their accounting to one place.
pub struct Evaluator<'a> {
    pub measurements: &'a BTreeMap<String, MeasurementDef>,
    pub table: &'a GateTable,
    pub cfg: EvalConfig,
    pub loops: Vec<LoopStats>,
    /// Mass deleted by `abort` and by per-branch failures.
    pub aborted: f64,
    pub pruned: f64,
    pub warnings: Vec<String>,
    suppressed_warnings: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        measurements: &'a BTreeMap<String, MeasurementDef>,
        table: &'a GateTable,
        cfg: EvalConfig,
    ) -> Self {
        Evaluator {
            measurements,
            table,
            cfg,
            loops: Vec::new(),
            aborted: 0.0,
            pruned: 0.0,
            warnings: Vec::new(),
            suppressed_warnings: 0,
        }
    }

    fn warn(&mut self, msg: String) {
        if self.warnings.len() < MAX_WARNINGS {
            self.warnings.push(msg);
        } else {
            self.suppressed_warnings += 1;
        }
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        let mut w = std::mem::take(&mut self.warnings);
        if self.suppressed_warnings > 0 {
            w.push(format!("{} further warnings suppressed", self.suppressed_warnings));
            self.suppressed_warnings = 0;
        }
        w
    }

    /// Delete a failing branch, keeping its mass in the abort account.
    fn fail_branch(&mut self, weight: f64, context: &str, err: EvalErr) {
        self.aborted += weight;
        self.warn(format!("branch deleted in `{}`: {}", context, err));
    }

    pub fn eval(&mut self, c: &Com, mu: Ensemble) -> Result<Ensemble, SemError> {
        if mu.branches.is_empty() {
            return Ok(mu);
        }
        let mut out = match c {
            Com::Skip => mu,
            Com::Abort => {
                self.aborted += mu.mass();
                Ensemble::new(mu.layout)
            }
            Com::Assign(x, a) => {
                let mut kept = Vec::with_capacity(mu.branches.len());
                for mut b in mu.branches {
                    match eval_aexp(&b.sigma, a) {
                        Ok(v) => {
                            set_var(&mut b.sigma, x, v);
                            kept.push(b);
                        }
                        Err(e) => self.fail_branch(b.weight, &format!("{} := {}", x, a), e),
                    }
                }
                Ensemble {
                    layout: mu.layout,
                    branches: kept,
                }
            }
            Com::Seq(c1, c2) => {
                let mid = self.eval(c1, mu)?;
                self.eval(c2, mid)?
            }
            Com::If(g, c1, c2) => {
                let layout = mu.layout.clone();
                let (yes, no) = self.split_by_guard(g, mu);
                let r1 = self.eval(
                    c1,
                    Ensemble {
                        layout: layout.clone(),
                        branches: yes,
                    },
                )?;
                let r2 = self.eval(
                    c2,
                    Ensemble {
                        layout: layout.clone(),
                        branches: no,
                    },
                )?;
                let mut merged = Ensemble {
                    layout,
                    branches: r1.branches,
                };
                merged.branches.extend(r2.branches);
                merged
            }
            Com::While(g, body) => self.eval_while(g, body, mu)?,
            Com::InitQubit(qs) => {
                let mut mu = mu;
                for q in qs {
                    let mut next = Vec::new();
                    for b in mu.branches {
                        for (w, st) in reset_qubit(&b.state, q)? {
                            next.push(Branch {
                                sigma: b.sigma.clone(),
                                weight: b.weight * w,
                                state: st,
                            });
                        }
                    }
                    mu = Ensemble {
                        layout: mu.layout,
                        branches: next,
                    };
                    self.pruned += mu.normalize_rep(self.cfg.tol, self.cfg.prune);
                }
                mu
            }
            Com::Unitary(gate, qs) => {
                let mut kept = Vec::with_capacity(mu.branches.len());
                'branches: for mut b in mu.branches {
                    let mut params = Vec::with_capacity(gate.args.len());
                    for a in &gate.args {
                        match eval_aexp(&b.sigma, a) {
                            Ok(v) => params.push(v),
                            Err(e) => {
                                self.fail_branch(b.weight, &format!("{}", gate), e);
                                continue 'branches;
                            }
                        }
                    }
                    match self.table.resolve(&gate.name, qs.len(), &params) {
                        Ok(m) => {
                            b.state = crate::qcore::apply_unitary(&b.state, &m, qs)?;
                            kept.push(b);
                        }
                        // parameter-dependent domain failures are per branch;
                        // anything else is structural
                        Err(QcoreError::BadGateParamValue(msg)) => {
                            self.fail_branch(b.weight, &format!("{}", gate), EvalErr::Domain(msg));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                Ensemble {
                    layout: mu.layout,
                    branches: kept,
                }
            }
            Com::Measure { var, meas, qubits } => {
                let def = self
                    .measurements
                    .get(meas)
                    .ok_or_else(|| SemError::UnknownMeasurement(meas.clone()))?;
                if def.arity != qubits.len() {
                    return Err(SemError::MeasurementArity {
                        name: meas.clone(),
                        arity: def.arity,
                        got: qubits.len(),
                    });
                }
                let mut next = Vec::new();
                for b in mu.branches {
                    for (outcome, p, post) in measure(&b.state, &def.ops, qubits)? {
                        let mut sigma = b.sigma.clone();
                        set_var(&mut sigma, var, outcome as i64);
                        next.push(Branch {
                            sigma,
                            weight: b.weight * p,
                            state: post,
                        });
                    }
                }
                Ensemble {
                    layout: mu.layout,
                    branches: next,
                }
            }
            Com::Random { var, lo, hi } => {
                let mut next = Vec::new();
                for b in mu.branches {
                    let bounds = eval_aexp(&b.sigma, lo).and_then(|l| {
                        eval_aexp(&b.sigma, hi).and_then(|h| {
                            if h < l {
                                Err(EvalErr::Domain(format!("empty range [{}, {}]", l, h)))
                            } else {
                                Ok((l, h))
                            }
                        })
                    });
                    match bounds {
                        Ok((l, h)) => {
                            let n = (h - l + 1) as f64;
                            for v in l..=h {
                                let mut sigma = b.sigma.clone();
                                set_var(&mut sigma, var, v);
                                next.push(Branch {
                                    sigma,
                                    weight: b.weight / n,
                                    state: b.state.clone(),
                                });
                            }
                        }
                        Err(e) => self.fail_branch(
                            b.weight,
                            &format!("{} := random({}, {})", var, lo, hi),
                            e,
                        ),
                    }
                }
                Ensemble {
                    layout: mu.layout,
                    branches: next,
                }
            }
            Com::MacroCall(name, _) => return Err(SemError::UnexpandedMacro(name.clone())),
        };
        self.pruned += out.normalize_rep(self.cfg.tol, self.cfg.prune);
        Ok(out)
    }

    fn split_by_guard(&mut self, g: &Bexp, mu: Ensemble) -> (Vec<Branch>, Vec<Branch>) {
        let mut yes = Vec::new();
        let mut no = Vec::new();
        for b in mu.branches {
            match eval_bexp(&b.sigma, g, self.cfg.window) {
                Ok(true) => yes.push(b),
                Ok(false) => no.push(b),
                Err(e) => self.fail_branch(b.weight, &format!("{}", g), e),
            }
        }
        (yes, no)
    }

    /// Run the loop in lockstep over the whole ensemble: collect the mass
    /// whose guard is false after each body execution; stop once the running
    /// mass falls under `tol` or the iteration cap is reached, dropping
    /// whatever is still inside.
    fn eval_while(&mut self, g: &Bexp, body: &Com, mu: Ensemble) -> Result<Ensemble, SemError> {
        let layout = mu.layout.clone();
        let entry_mass = mu.mass();
        let (mut active, mut done) = self.split_by_guard(g, mu);
        let mut exit_masses = vec![done.iter().map(|b| b.weight).sum::<f64>()];
        let mut active_masses = Vec::new();
        let mut iterations = 0usize;
        loop {
            let active_mass = active.iter().map(|b| b.weight).sum::<f64>();
            if active.is_empty() || active_mass < self.cfg.tol || iterations >= self.cfg.max_iter {
                break;
            }
            active_masses.push(active_mass);
            let stepped = self.eval(
                body,
                Ensemble {
                    layout: layout.clone(),
                    branches: active,
                },
            )?;
            iterations += 1;
            let (yes, no) = self.split_by_guard(g, stepped);
            exit_masses.push(no.iter().map(|b| b.weight).sum::<f64>());
            done.extend(no);
            active = yes;
        }
        let residual = active.iter().map(|b| b.weight).sum::<f64>();
        if iterations >= self.cfg.max_iter && residual >= self.cfg.tol {
            self.warn(format!(
                "loop `while {} ...` still carries mass {:.3e} after {} iterations",
                g, residual, iterations
            ));
        }
        self.loops.push(LoopStats {
            iterations,
            entry_mass,
            exit_masses,
            active_masses,
            residual,
        });
        let mut out = Ensemble {
            layout,
            branches: done,
        };
        self.pruned += out.normalize_rep(self.cfg.tol, self.cfg.prune);
        Ok(out)
    }
}

/// Evaluate a program from its declared initial configuration.
pub fn eval_program(
    program: &Program,
    overrides: &ClassicalEnv,
    cfg: &EvalConfig,
) -> Result<EvalReport, SemError> {
    let ctx = ProgramContext::new(program)?;
    let mut ev = Evaluator::new(&program.measurements, &ctx.table, *cfg);
    let ensemble = ev.eval(&ctx.body, ctx.initial_ensemble(overrides))?;
    Ok(EvalReport {
        ensemble,
        loops: std::mem::take(&mut ev.loops),
        aborted: ev.aborted,
        pruned: ev.pruned,
        warnings: ev.take_warnings(),
    })
}

/// Evaluate a bare command against explicit declarations. Macros in `com`
/// must already be expanded.
pub fn eval_com(
    com: &Com,
    measurements: &BTreeMap<String, MeasurementDef>,
    table: &GateTable,
    input: Ensemble,
    cfg: &EvalConfig,
) -> Result<EvalReport, SemError> {
    let mut ev = Evaluator::new(measurements, table, *cfg);
    let ensemble = ev.eval(com, input)?;
    Ok(EvalReport {
        ensemble,
        loops: std::mem::take(&mut ev.loops),
        aborted: ev.aborted,
        pruned: ev.pruned,
        warnings: ev.take_warnings(),
    })
}
