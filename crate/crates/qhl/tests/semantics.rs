//! End-to-end checks of the ensemble evaluator: exhaustive tables worked out
//! by hand, agreement with an independent density-operator evolution, mixing
//! linearity, loop accounting, and sampling frequencies.

use proptest::prelude::*;
use qhl::lang::{get_var, parse_com, parse_program, set_var, ClassicalEnv, Com, MeasurementDef};
use qhl::qcore::{apply_op, GateTable, Matrix, PureState, QubitLayout, C64};
use qhl::sem::{
    ensembles_close, eval_com, eval_program, sample_program, Ensemble, EvalConfig, SemError,
};
use std::collections::BTreeMap;

const ADDM: &str = r#"
qbit q0 q1;
measurement M = std(1);

q0 := |0>;
H[q0];
q1 := |0>;
H[q1];
v0 := M[q0];
v1 := M[q1];
v := v0 + v1
"#;

// stores never carry explicit zeros, so build them the same way
fn env(pairs: &[(&str, i64)]) -> ClassicalEnv {
    let mut e = ClassicalEnv::new();
    for (k, v) in pairs {
        set_var(&mut e, k, *v);
    }
    e
}

/// Full table of the two-measurement adder: four branches of weight 1/4,
/// stores covering (v0, v1) in {0,1}^2 with v = v0 + v1, each quantum state
/// collapsed to |v0 v1>.
#[test]
fn addm_exhaustive_table() {
    let prog = parse_program(ADDM).unwrap();
    let report = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    let e = &report.ensemble;
    assert!((e.mass() - 1.0).abs() < 1e-12);
    assert_eq!(e.branches.len(), 4);
    for (v0, v1) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)] {
        let want = env(&[("v", v0 + v1), ("v0", v0), ("v1", v1)]);
        let br = e
            .branches
            .iter()
            .find(|b| b.sigma == want)
            .expect("branch present");
        assert!((br.weight - 0.25).abs() < 1e-12);
        let idx = (v0 * 2 + v1) as usize;
        assert!((br.state.amps()[idx].norm() - 1.0).abs() < 1e-9);
    }
    assert_eq!(report.aborted, 0.0);
    assert!(report.truncated() == 0.0);
}

#[test]
fn addm_is_deterministic() {
    let prog = parse_program(ADDM).unwrap();
    let a = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    let b = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    assert_eq!(a.ensemble.fingerprint(), b.ensemble.fingerprint());
}

#[test]
fn override_changes_initial_store() {
    let prog = parse_program("qbit q;\ninit x = 3;\ny := x + 1").unwrap();
    let r = eval_program(&prog, &env(&[("x", 10)]), &EvalConfig::default()).unwrap();
    assert_eq!(r.ensemble.branches[0].sigma["y"], 11);
}

#[test]
fn gate_arguments_evaluate_per_branch() {
    // The multiplier comes from a random draw, so each branch applies a
    // different permutation to |1>.
    let src = r#"
qbit a b c d;
x := random(7, 8);
Uplus[a, b, c, d];
modmul(x, 15)[a, b, c, d]
"#;
    let prog = parse_program(src).unwrap();
    let r = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    assert_eq!(r.ensemble.branches.len(), 2);
    for b in &r.ensemble.branches {
        let x = b.sigma["x"] as usize;
        assert!((b.state.amps()[x].norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn abort_deletes_mass() {
    let src = r#"
qbit q;
v := random(0, 3);
if v = 0 then abort else skip fi
"#;
    let prog = parse_program(src).unwrap();
    let r = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    assert!((r.ensemble.mass() - 0.75).abs() < 1e-12);
    assert!((r.aborted - 0.25).abs() < 1e-12);
}

/// Arithmetic failure is confined to the branch it happens in: the division
/// by zero deletes the v = 0 branch with a diagnostic, the rest keep going.
#[test]
fn arithmetic_failure_deletes_only_its_branch() {
    let src = r#"
qbit q;
v := random(0, 3);
w := 6 div v
"#;
    let prog = parse_program(src).unwrap();
    let r = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    assert!((r.ensemble.mass() - 0.75).abs() < 1e-12);
    assert!((r.aborted - 0.25).abs() < 1e-12);
    assert_eq!(r.ensemble.branches.len(), 3);
    for b in &r.ensemble.branches {
        assert_eq!(get_var(&b.sigma, "w"), 6 / get_var(&b.sigma, "v"));
    }
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("w := 6 div v"), "{}", r.warnings[0]);

    // the sampler reports the same failure on the trajectory that hits it
    let mut failed = 0;
    for seed in 0..40 {
        let out = sample_program(&prog, &ClassicalEnv::new(), &EvalConfig::default(), seed).unwrap();
        if out.aborted {
            failed += 1;
            assert!(!out.warnings.is_empty());
        }
    }
    assert!(failed > 0);
}

#[test]
fn unbounded_loop_reports_residual() {
    let prog = parse_program("qbit q;\nwhile true do skip od").unwrap();
    let cfg = EvalConfig {
        max_iter: 50,
        ..EvalConfig::default()
    };
    let r = eval_program(&prog, &ClassicalEnv::new(), &cfg).unwrap();
    assert_eq!(r.ensemble.branches.len(), 0);
    assert_eq!(r.loops.len(), 1);
    assert_eq!(r.loops[0].iterations, 50);
    assert!((r.loops[0].residual - 1.0).abs() < 1e-12);
    assert!((r.truncated() - 1.0).abs() < 1e-12);
    assert!(r.warnings.iter().any(|w| w.contains("while")), "{:?}", r.warnings);
}

/// Geometric loop: each pass measures |+> and exits on outcome 0 with
/// probability 1/2. Exit mass halves every iteration until the running
/// branch falls under the mass floor; all mass is accounted for.
#[test]
fn geometric_loop_mass_accounting() {
    let src = r#"
qbit q;
measurement M = std(1);
b := 1;
while b = 1 do
  q := |0>;
  H[q];
  b := M[q]
od
"#;
    let prog = parse_program(src).unwrap();
    let r = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();
    let stats = &r.loops[0];
    assert!((stats.exit_masses[0] - 0.0).abs() < 1e-12);
    for k in 1..=10 {
        assert!((stats.exit_masses[k] - 0.5f64.powi(k as i32)).abs() < 1e-12);
    }
    // per-iteration exit rate is exactly 1/2
    for k in 0..10 {
        let rate = stats.exit_masses[k + 1] / stats.active_masses[k];
        assert!((rate - 0.5).abs() < 1e-12);
    }
    let total = r.ensemble.mass() + r.aborted + r.pruned + r.truncated();
    assert!((total - 1.0).abs() < 1e-9);
    // the running branch crosses the 1e-9 mass floor after exactly 30 halvings
    assert_eq!(stats.iterations, 30);
    assert!(stats.residual < EvalConfig::default().tol);
    assert_eq!(r.ensemble.branches.len(), 1);
}

// ---------------------------------------------------------------------------
// density-operator oracle
// ---------------------------------------------------------------------------

/// Independent evolution in density-operator form: a list of (store,
/// unnormalized density) pairs, advanced channel by channel. Branch
/// bookkeeping in the ensemble evaluator must reproduce these operators
/// exactly.
struct DensityOracle {
    layout: QubitLayout,
    parts: Vec<(ClassicalEnv, Matrix)>,
}

impl DensityOracle {
    fn new(layout: QubitLayout, sigma: ClassicalEnv) -> Self {
        let dim = layout.dim();
        let mut zero = Matrix::zeros(dim);
        zero[(0, 0)] = C64::new(1.0, 0.0);
        DensityOracle {
            layout,
            parts: vec![(sigma, zero)],
        }
    }

    fn embed(&self, op: &Matrix, targets: &[String]) -> Matrix {
        let dim = self.layout.dim();
        let mut full = Matrix::zeros(dim);
        for j in 0..dim {
            let e = PureState::basis(self.layout.clone(), j);
            let col = apply_op(&e, op, targets).unwrap();
            for i in 0..dim {
                full[(i, j)] = col.amps()[i];
            }
        }
        full
    }

    fn conjugate(&mut self, op: &Matrix, targets: &[String]) {
        let full = self.embed(op, targets);
        let adj = full.adjoint();
        for (_, rho) in self.parts.iter_mut() {
            *rho = full.mul(rho).unwrap().mul(&adj).unwrap();
        }
    }

    fn unitary(&mut self, op: &Matrix, targets: &[String]) {
        self.conjugate(op, targets);
    }

    fn reset(&mut self, q: &str) {
        // sum of the two Kraus conjugations |0><0| and |0><1|
        let k0 = Matrix::from_rows(vec![
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        ])
        .unwrap();
        let k1 = Matrix::from_rows(vec![
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        ])
        .unwrap();
        let e0 = self.embed(&k0, &[q.to_string()]);
        let e1 = self.embed(&k1, &[q.to_string()]);
        for (_, rho) in self.parts.iter_mut() {
            let a = e0.mul(rho).unwrap().mul(&e0.adjoint()).unwrap();
            let b = e1.mul(rho).unwrap().mul(&e1.adjoint()).unwrap();
            *rho = a.add(&b).unwrap();
        }
    }

    fn measure(&mut self, var: &str, ops: &[Matrix], targets: &[String]) {
        let mut next = Vec::new();
        for (sigma, rho) in &self.parts {
            for (i, op) in ops.iter().enumerate() {
                let full = self.embed(op, targets);
                let post = full.mul(rho).unwrap().mul(&full.adjoint()).unwrap();
                if post.trace().re > 1e-15 {
                    let mut s = sigma.clone();
                    set_var(&mut s, var, i as i64);
                    next.push((s, post));
                }
            }
        }
        self.parts = next;
    }

    fn assign(&mut self, var: &str, value: impl Fn(&ClassicalEnv) -> i64) {
        for (sigma, _) in self.parts.iter_mut() {
            let v = value(sigma);
            set_var(sigma, var, v);
        }
    }

    /// Collapse to per-store densities, merging duplicate stores.
    fn by_sigma(mut self) -> Vec<(ClassicalEnv, Matrix)> {
        self.parts.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(ClassicalEnv, Matrix)> = Vec::new();
        for (sigma, rho) in self.parts {
            match out.last_mut() {
                Some((s, acc)) if *s == sigma => *acc = acc.add(&rho).unwrap(),
                _ => out.push((sigma, rho)),
            }
        }
        out
    }
}

/// The adder program, stepped through the oracle by hand, must match the
/// ensemble evaluator's per-store densities entrywise.
#[test]
fn addm_matches_density_oracle() {
    let prog = parse_program(ADDM).unwrap();
    let report = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();

    let layout = QubitLayout::new(vec!["q0", "q1"]).unwrap();
    let mut oracle = DensityOracle::new(layout, ClassicalEnv::new());
    let h = qhl::qcore::builtin_gate("H", 1, &[]).unwrap();
    let m = MeasurementDef::std(1);
    oracle.reset("q0");
    oracle.unitary(&h, &["q0".to_string()]);
    oracle.reset("q1");
    oracle.unitary(&h, &["q1".to_string()]);
    oracle.measure("v0", &m.ops, &["q0".to_string()]);
    oracle.measure("v1", &m.ops, &["q1".to_string()]);
    oracle.assign("v", |s| get_var(s, "v0") + get_var(s, "v1"));

    let got = report.ensemble.densities_by_sigma();
    let want = oracle.by_sigma();
    assert_eq!(got.len(), want.len());
    for ((s1, d1), (s2, d2)) in got.iter().zip(&want) {
        assert_eq!(s1, s2);
        assert!(d1.mat.max_abs_diff(d2) < 1e-12);
    }
}

/// Same cross-check on a program with interference: the measured qubit is
/// rotated conditionally on an earlier outcome, so getting the branch
/// weights right requires the amplitudes, not just the probabilities.
#[test]
fn conditional_rotation_matches_density_oracle() {
    let src = r#"
qbit q0 q1;
measurement M = std(1);
q0 := |0>;
H[q0];
CNOT[q0, q1];
v := M[q0];
if v = 1 then H[q1] else skip fi;
w := M[q1]
"#;
    let prog = parse_program(src).unwrap();
    let report = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap();

    let layout = QubitLayout::new(vec!["q0", "q1"]).unwrap();
    let mut oracle = DensityOracle::new(layout, ClassicalEnv::new());
    let h = qhl::qcore::builtin_gate("H", 1, &[]).unwrap();
    let cx = qhl::qcore::builtin_gate("CNOT", 2, &[]).unwrap();
    let m = MeasurementDef::std(1);
    oracle.reset("q0");
    oracle.unitary(&h, &["q0".to_string()]);
    oracle.unitary(&cx, &["q0".to_string(), "q1".to_string()]);
    oracle.measure("v", &m.ops, &["q0".to_string()]);
    // guard v = 1 splits the parts; apply H only there
    let (mut yes, mut no): (Vec<_>, Vec<_>) =
        oracle.parts.drain(..).partition(|(s, _)| get_var(s, "v") == 1);
    for (_, rho) in yes.iter_mut() {
        let full = {
            let dim = 4;
            let mut fullm = Matrix::zeros(dim);
            for j in 0..dim {
                let e = PureState::basis(QubitLayout::new(vec!["q0", "q1"]).unwrap(), j);
                let col = apply_op(&e, &h, &["q1".to_string()]).unwrap();
                for i in 0..dim {
                    fullm[(i, j)] = col.amps()[i];
                }
            }
            fullm
        };
        *rho = full.mul(rho).unwrap().mul(&full.adjoint()).unwrap();
    }
    no.append(&mut yes);
    oracle.parts = no;
    oracle.measure("w", &m.ops, &["q1".to_string()]);

    let got = report.ensemble.densities_by_sigma();
    let want = oracle.by_sigma();
    assert_eq!(got.len(), want.len());
    for ((s1, d1), (s2, d2)) in got.iter().zip(&want) {
        assert_eq!(s1, s2);
        assert!(d1.mat.max_abs_diff(d2) < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// mixing linearity
// ---------------------------------------------------------------------------

fn pilot_commands() -> Vec<Com> {
    let srcs = [
        "x := x + 1",
        "if x = 0 then H[q0] else X[q1] fi",
        "v := M[q0]",
        "q0 := |0>",
        "x := random(0, 2)",
        "H[q0]; v := M[q0]; if v = 1 then X[q1] else skip fi",
        "while x < 3 do x := x + 1; H[q0] od",
        "if x = 1 then abort else skip fi",
    ];
    srcs.iter().map(|s| parse_com(s).unwrap()).collect()
}

fn measurements() -> BTreeMap<String, MeasurementDef> {
    let mut m = BTreeMap::new();
    m.insert("M".to_string(), MeasurementDef::std(1));
    m
}

fn arb_state(layout: QubitLayout) -> impl Strategy<Value = PureState> {
    proptest::collection::vec(-1.0f64..1.0, 8).prop_filter_map("state norm too small", move |xs| {
        let amps: Vec<C64> = xs.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        let st = PureState::new(layout.clone(), amps).unwrap();
        if st.norm() < 0.3 {
            None
        } else {
            Some(st.normalized().unwrap())
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Evaluating a mixture equals mixing the evaluations, entrywise on the
    /// per-store densities.
    #[test]
    fn evaluation_is_linear_in_the_input(
        cmd_idx in 0usize..8,
        st0 in arb_state(QubitLayout::new(vec!["q0", "q1"]).unwrap()),
        st1 in arb_state(QubitLayout::new(vec!["q0", "q1"]).unwrap()),
        x0 in 0i64..4,
        x1 in 0i64..4,
        p in 0.0f64..=1.0,
    ) {
        let layout = QubitLayout::new(vec!["q0", "q1"]).unwrap();
        let com = &pilot_commands()[cmd_idx];
        let meas = measurements();
        let table = GateTable::new();
        let cfg = EvalConfig::default();

        let mu0 = Ensemble::single(layout.clone(), env(&[("x", x0)]), st0);
        let mu1 = Ensemble::single(layout.clone(), env(&[("x", x1)]), st1);
        let mixed = Ensemble::mix(&[(p, &mu0), (1.0 - p, &mu1)]).unwrap();

        let r_mixed = eval_com(com, &meas, &table, mixed, &cfg).unwrap();
        let r0 = eval_com(com, &meas, &table, mu0, &cfg).unwrap();
        let r1 = eval_com(com, &meas, &table, mu1, &cfg).unwrap();
        let remixed = Ensemble::mix(&[(p, &r0.ensemble), (1.0 - p, &r1.ensemble)]).unwrap();

        prop_assert!(ensembles_close(&r_mixed.ensemble, &remixed, 1e-9));
        // deleted mass is linear too
        prop_assert!((r_mixed.aborted - (p * r0.aborted + (1.0 - p) * r1.aborted)).abs() < 1e-9);
    }

    /// Total mass splits into surviving, aborted, pruned and truncated parts.
    #[test]
    fn mass_is_conserved_and_never_grows(
        cmd_idx in 0usize..8,
        st0 in arb_state(QubitLayout::new(vec!["q0", "q1"]).unwrap()),
        x0 in 0i64..4,
    ) {
        let layout = QubitLayout::new(vec!["q0", "q1"]).unwrap();
        let com = &pilot_commands()[cmd_idx];
        let meas = measurements();
        let table = GateTable::new();
        let mu = Ensemble::single(layout, env(&[("x", x0)]), st0);
        let r = eval_com(com, &meas, &table, mu, &EvalConfig::default()).unwrap();
        let total = r.ensemble.mass() + r.aborted + r.pruned + r.truncated();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(r.ensemble.mass() <= 1.0 + 1e-9);
    }
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

/// 10^4 seeded trajectories of the adder: the (v0, v1) cell counts must pass
/// a chi-squared test against the uniform 1/4 law, and the frequency of v = 1
/// must sit within 0.02 of 1/2.
#[test]
fn sampling_tracks_exhaustive_frequencies() {
    let prog = parse_program(ADDM).unwrap();
    let cfg = EvalConfig::default();
    let mut cells = [0usize; 4];
    let mut ones = 0usize;
    let n = 10_000usize;
    for seed in 0..n as u64 {
        let out = sample_program(&prog, &ClassicalEnv::new(), &cfg, seed).unwrap();
        assert!(out.terminated && !out.aborted);
        let v0 = get_var(&out.sigma, "v0");
        let v1 = get_var(&out.sigma, "v1");
        assert_eq!(get_var(&out.sigma, "v"), v0 + v1);
        cells[(v0 * 2 + v1) as usize] += 1;
        if v0 + v1 == 1 {
            ones += 1;
        }
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = cells
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 3 degrees of freedom at the 3-sigma level
    assert!(chi2 < 14.16, "chi2 = {}, cells = {:?}", chi2, cells);
    let f1 = ones as f64 / n as f64;
    assert!((f1 - 0.5).abs() < 0.02, "f1 = {}", f1);
}

#[test]
fn sampling_is_seed_deterministic() {
    let prog = parse_program(ADDM).unwrap();
    let cfg = EvalConfig::default();
    let a = sample_program(&prog, &ClassicalEnv::new(), &cfg, 7).unwrap();
    let b = sample_program(&prog, &ClassicalEnv::new(), &cfg, 7).unwrap();
    assert_eq!(a.sigma, b.sigma);
    assert_eq!(a.measured, b.measured);
}

#[test]
fn sampling_reports_divergence() {
    let prog = parse_program("qbit q;\nwhile true do skip od").unwrap();
    let cfg = EvalConfig {
        max_iter: 10,
        ..EvalConfig::default()
    };
    let out = sample_program(&prog, &ClassicalEnv::new(), &cfg, 0).unwrap();
    assert!(!out.terminated);
}

#[test]
fn unknown_measurement_is_reported() {
    let prog = parse_program("qbit q;\nv := Nope[q]").unwrap();
    let err = eval_program(&prog, &ClassicalEnv::new(), &EvalConfig::default()).unwrap_err();
    assert!(matches!(err, SemError::UnknownMeasurement(_)));
}
