//! Single-trajectory sampling: runs one random execution path, drawing
//! measurement outcomes, reset branches, and `random(..)` values from a
//! seeded generator. The empirical distribution over many seeds converges to
//! the exhaustive evaluator's ensemble.

use super::{EvalConfig, SemError};
use crate::lang::{eval_aexp, eval_bexp, set_var, ClassicalEnv, Com, EvalErr, MeasurementDef, Program};
use crate::qcore::{measure, reset_qubit, GateTable, PureState, QcoreError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub sigma: ClassicalEnv,
    pub state: PureState,
    /// False when a loop was still running at the iteration cap.
    pub terminated: bool,
    /// Set by `abort` and by arithmetic failures along the path.
    pub aborted: bool,
    /// `(variable, outcome)` log of measurements along the path.
    pub measured: Vec<(String, i64)>,
    /// Diagnostics; non-empty when the path failed rather than aborting.
    pub warnings: Vec<String>,
}

enum Halt {
    Aborted,
    IterLimit,
    Failed(String),
}

struct Sampler<'a> {
    measurements: &'a BTreeMap<String, MeasurementDef>,
    table: &'a GateTable,
    cfg: EvalConfig,
    rng: ChaCha8Rng,
    measured: Vec<(String, i64)>,
}

impl<'a> Sampler<'a> {
    fn run(
        &mut self,
        c: &Com,
        sigma: &mut ClassicalEnv,
        state: &mut PureState,
    ) -> Result<Option<Halt>, SemError> {
        match c {
            Com::Skip => Ok(None),
            Com::Abort => Ok(Some(Halt::Aborted)),
            Com::Assign(x, a) => match eval_aexp(sigma, a) {
                Ok(v) => {
                    set_var(sigma, x, v);
                    Ok(None)
                }
                Err(e) => Ok(Some(fail(&format!("{} := {}", x, a), e))),
            },
            Com::Seq(c1, c2) => {
                if let Some(h) = self.run(c1, sigma, state)? {
                    return Ok(Some(h));
                }
                self.run(c2, sigma, state)
            }
            Com::If(g, c1, c2) => match self.guard(g, sigma) {
                Ok(true) => self.run(c1, sigma, state),
                Ok(false) => self.run(c2, sigma, state),
                Err(h) => Ok(Some(h)),
            },
            Com::While(g, body) => {
                let mut iterations = 0usize;
                loop {
                    match self.guard(g, sigma) {
                        Ok(true) => {}
                        Ok(false) => return Ok(None),
                        Err(h) => return Ok(Some(h)),
                    }
                    if iterations >= self.cfg.max_iter {
                        return Ok(Some(Halt::IterLimit));
                    }
                    if let Some(h) = self.run(body, sigma, state)? {
                        return Ok(Some(h));
                    }
                    iterations += 1;
                }
            }
            Com::InitQubit(qs) => {
                for q in qs {
                    let branches = reset_qubit(state, q)?;
                    let pick = self.pick(branches.iter().map(|(w, _)| *w))?;
                    *state = branches[pick].1.clone();
                }
                Ok(None)
            }
            Com::Unitary(gate, qs) => {
                let mut params = Vec::with_capacity(gate.args.len());
                for a in &gate.args {
                    match eval_aexp(sigma, a) {
                        Ok(v) => params.push(v),
                        Err(e) => return Ok(Some(fail(&format!("{}", gate), e))),
                    }
                }
                match self.table.resolve(&gate.name, qs.len(), &params) {
                    Ok(m) => {
                        *state = crate::qcore::apply_unitary(state, &m, qs)?;
                        Ok(None)
                    }
                    Err(QcoreError::BadGateParamValue(msg)) => {
                        Ok(Some(fail(&format!("{}", gate), EvalErr::Domain(msg))))
                    }
                    Err(e) => Err(e.into()),
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
                let outcomes = measure(state, &def.ops, qubits)?;
                let pick = self.pick(outcomes.iter().map(|(_, p, _)| *p))?;
                let (outcome, _, post) = &outcomes[pick];
                set_var(sigma, var, *outcome as i64);
                self.measured.push((var.clone(), *outcome as i64));
                *state = post.clone();
                Ok(None)
            }
            Com::Random { var, lo, hi } => {
                let context = || format!("{} := random({}, {})", var, lo, hi);
                let l = match eval_aexp(sigma, lo) {
                    Ok(v) => v,
                    Err(e) => return Ok(Some(fail(&context(), e))),
                };
                let h = match eval_aexp(sigma, hi) {
                    Ok(v) => v,
                    Err(e) => return Ok(Some(fail(&context(), e))),
                };
                if h < l {
                    let e = EvalErr::Domain(format!("empty range [{}, {}]", l, h));
                    return Ok(Some(fail(&context(), e)));
                }
                let v = self.rng.gen_range(l..=h);
                set_var(sigma, var, v);
                Ok(None)
            }
            Com::MacroCall(name, _) => Err(SemError::UnexpandedMacro(name.clone())),
        }
    }

    fn guard(&self, g: &crate::lang::Bexp, sigma: &ClassicalEnv) -> Result<bool, Halt> {
        eval_bexp(sigma, g, self.cfg.window).map_err(|e| fail(&format!("{}", g), e))
    }

    /// Draw an index proportionally to the given weights.
    fn pick(&mut self, weights: impl Iterator<Item = f64>) -> Result<usize, SemError> {
        let ws: Vec<f64> = weights.collect();
        let total: f64 = ws.iter().sum();
        if !(total > 0.0) {
            return Err(SemError::Eval {
                context: "probabilistic choice".into(),
                err: EvalErr::Domain("no outcome has positive weight".into()),
            });
        }
        let mut u = self.rng.gen::<f64>() * total;
        for (i, w) in ws.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return Ok(i);
            }
        }
        Ok(ws.len() - 1)
    }
}

fn fail(context: &str, err: EvalErr) -> Halt {
    Halt::Failed(format!("path deleted in `{}`: {}", context, err))
}

/// Run one seeded trajectory of the program.
pub fn sample_program(
    program: &Program,
    overrides: &ClassicalEnv,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SampleOutcome, SemError> {
    let ctx = super::ProgramContext::new(program)?;
    let mut sampler = Sampler {
        measurements: &program.measurements,
        table: &ctx.table,
        cfg: *cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        measured: Vec::new(),
    };
    let mut sigma = ctx.initial_sigma(overrides);
    let mut state = PureState::zero(ctx.layout.clone());
    let halt = sampler.run(&ctx.body, &mut sigma, &mut state)?;
    let mut warnings = Vec::new();
    if let Some(Halt::Failed(msg)) = &halt {
        warnings.push(msg.clone());
    }
    Ok(SampleOutcome {
        sigma,
        state,
        terminated: !matches!(halt, Some(Halt::IterLimit)),
        aborted: matches!(halt, Some(Halt::Aborted) | Some(Halt::Failed(_))),
        measured: sampler.measured,
        warnings,
    })
}
