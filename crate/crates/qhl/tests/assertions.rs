//! Distribution-formula satisfaction and entailment, end to end: the
//! two-coin adder examples, witness replay, quantitative satisfaction,
//! the axiom schemes of the entailment logic, and a feasibility oracle for
//! the transportation solver.

use proptest::prelude::*;
use qhl::assertion::{
    entails, feasible_exact, probability_of, satisfies, Decomposition, EntailOutcome,
    ProbabilityOutcome, Verdict,
};
use qhl::lang::{
    parse_dist, parse_program, set_var, ClassicalEnv, DistFormula, Rational, StateFormula,
};
use qhl::qcore::{PureState, QubitLayout, C64};
use qhl::sem::{eval_program, Branch, Ensemble, EvalConfig};

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

fn addm() -> Ensemble {
    let program = parse_program(ADDM).unwrap();
    eval_program(&program, &ClassicalEnv::new(), &EvalConfig::default())
        .unwrap()
        .ensemble
}

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

fn dist(src: &str) -> DistFormula {
    parse_dist(src).unwrap()
}

/// Replay a Satisfied witness: rows sum to one, column masses match the
/// weights, each reconstructed column satisfies its component, and mixing
/// the columns back together reproduces the ensemble.
fn check_witness(mu: &Ensemble, d: &DistFormula, w: &Decomposition) {
    let comps = d.components();
    assert_eq!(w.fractions.len(), mu.branches.len());
    assert_eq!(w.weights.len(), comps.len());
    for row in &w.fractions {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "row sums to {}", s);
    }
    let mass = mu.mass();
    let mut parts: Vec<Ensemble> = Vec::new();
    for (ci, (_, f)) in comps.iter().enumerate() {
        let col: f64 = mu
            .branches
            .iter()
            .zip(&w.fractions)
            .map(|(b, row)| b.weight * row[ci])
            .sum();
        assert!(
            (col - w.weights[ci] * mass).abs() < 1e-9,
            "column {} carries {} instead of {}",
            ci,
            col,
            w.weights[ci] * mass
        );
        let mut part = Ensemble::new(mu.layout.clone());
        for (b, row) in mu.branches.iter().zip(&w.fractions) {
            if b.weight * row[ci] > 1e-12 {
                let mut nb = b.clone();
                nb.weight = b.weight * row[ci];
                part.branches.push(nb);
            }
        }
        part.normalize_rep(1e-9, 0.0);
        if part.mass() > 1e-12 {
            let v = satisfies(&part, &DistFormula::Single((*f).clone()), &cfg()).unwrap();
            assert!(
                v.is_satisfied(),
                "column {} fails its component: {:?}",
                ci,
                v
            );
        }
        parts.push(part);
    }
    let weighted: Vec<(f64, &Ensemble)> = parts.iter().map(|p| (1.0, p)).collect();
    let mixed = Ensemble::mix(&weighted).unwrap();
    assert_eq!(mixed.fingerprint(), mu.fingerprint());
}

#[test]
fn addm_satisfies_the_half_half_split() {
    let mu = addm();
    let d = dist("1/2 (v = 1) (+) 1/2 (v /= 1)");
    match satisfies(&mu, &d, &cfg()).unwrap() {
        Verdict::Satisfied { witness } => {
            // outcome order: (0,0) (0,1) (1,0) (1,1); v = 1 exactly on the
            // two mixed branches
            check_witness(&mu, &d, &witness);
            let to_first: Vec<bool> = witness.fractions.iter().map(|r| r[0] > 0.5).collect();
            let by_v1: Vec<bool> = mu
                .branches
                .iter()
                .map(|b| qhl::lang::get_var(&b.sigma, "v") == 1)
                .collect();
            assert_eq!(to_first, by_v1);
        }
        other => panic!("expected satisfaction, got {:?}", other),
    }
}

#[test]
fn addm_refutes_the_skewed_split() {
    let mu = addm();
    let d = dist("3/4 (v = 1) (+) 1/4 (v /= 1)");
    match satisfies(&mu, &d, &cfg()).unwrap() {
        Verdict::Refuted { counterexample } => {
            assert!(counterexample.reason.contains("component weights"));
        }
        other => panic!("expected refutation, got {:?}", other),
    }
}

#[test]
fn addm_satisfies_the_unweighted_split() {
    let mu = addm();
    let d = dist("v = 1 (+) v /= 1");
    match satisfies(&mu, &d, &cfg()).unwrap() {
        Verdict::Satisfied { witness } => {
            check_witness(&mu, &d, &witness);
            assert!((witness.weights[0] - 0.5).abs() < 1e-9);
        }
        other => panic!("expected satisfaction, got {:?}", other),
    }
}

#[test]
fn addm_probabilities() {
    let mu = addm();
    let c = cfg();
    let p = |src: &str| {
        let f = match dist(src) {
            DistFormula::Single(f) => f,
            _ => unreachable!(),
        };
        probability_of(&mu, &f, &c).unwrap()
    };
    match p("v = 1") {
        ProbabilityOutcome::Decisive(x) => assert!((x - 0.5).abs() < 1e-9),
        other => panic!("{:?}", other),
    }
    match p("true") {
        ProbabilityOutcome::Decisive(x) => assert!((x - 1.0).abs() < 1e-9),
        other => panic!("{:?}", other),
    }
    match p("v = 0") {
        ProbabilityOutcome::Decisive(x) => assert!((x - 0.25).abs() < 1e-9),
        other => panic!("{:?}", other),
    }
}

fn one_qubit_branches(parts: &[(f64, [f64; 2])]) -> Ensemble {
    let layout = QubitLayout::new(vec!["p".to_string()]).unwrap();
    let mut mu = Ensemble::new(layout.clone());
    for (w, amps) in parts {
        let n: f64 = amps.iter().map(|x| x * x).sum::<f64>().sqrt();
        let state = PureState::new(
            layout.clone(),
            amps.iter().map(|x| C64::new(x / n, 0.0)).collect(),
        )
        .unwrap();
        mu.branches.push(Branch {
            sigma: ClassicalEnv::new(),
            weight: *w,
            state,
        });
    }
    mu.normalize_rep(1e-9, 1e-12);
    mu
}

#[test]
fn probability_reports_sub_branch_groups_as_not_decisive() {
    // one store group holding two different pure states: deciding a ket
    // would need a finer split than branch granularity provides
    let mu = one_qubit_branches(&[(0.5, [1.0, 0.0]), (0.5, [0.0, 1.0])]);
    let f = match dist("|0>_{p}") {
        DistFormula::Single(f) => f,
        _ => unreachable!(),
    };
    let not_f = StateFormula::Not(Box::new(f.clone()));
    assert!(matches!(
        probability_of(&mu, &f, &cfg()).unwrap(),
        ProbabilityOutcome::NotDecisive { .. }
    ));
    assert!(matches!(
        probability_of(&mu, &not_f, &cfg()).unwrap(),
        ProbabilityOutcome::NotDecisive { .. }
    ));
}

#[test]
fn complement_probabilities_sum_to_one() {
    let mu = addm();
    let c = cfg();
    for src in ["v = 1", "v0 = 0", "v = 0 /\\ v0 = 0", "v >= 1"] {
        let f = match dist(src) {
            DistFormula::Single(f) => f,
            _ => unreachable!(),
        };
        let not_f = StateFormula::Not(Box::new(f.clone()));
        match (
            probability_of(&mu, &f, &c).unwrap(),
            probability_of(&mu, &not_f, &c).unwrap(),
        ) {
            (ProbabilityOutcome::Decisive(a), ProbabilityOutcome::Decisive(b)) => {
                assert!((a + b - 1.0).abs() < 1e-9, "{}: {} + {}", src, a, b);
            }
            other => panic!("{}: expected both decisive, got {:?}", src, other),
        }
    }
}

#[test]
fn pure_plus_state_refutes_basis_split() {
    // a pure |+> branch cannot be split into |0> and |1> parts: every
    // sub-part of a one-branch group scales the same state
    let mu = one_qubit_branches(&[(1.0, [1.0, 1.0])]);
    let d = dist("1/2 (|0>_{p}) (+) 1/2 (|1>_{p})");
    assert!(satisfies(&mu, &d, &cfg()).unwrap().is_refuted());
}

#[test]
fn mixed_basis_group_splits_by_branch() {
    let mu = one_qubit_branches(&[(0.5, [1.0, 0.0]), (0.5, [0.0, 1.0])]);
    let d = dist("1/2 (|0>_{p}) (+) 1/2 (|1>_{p})");
    match satisfies(&mu, &d, &cfg()).unwrap() {
        Verdict::Satisfied { witness } => check_witness(&mu, &d, &witness),
        other => panic!("expected satisfaction, got {:?}", other),
    }
}

#[test]
fn short_basis_mass_is_not_proven_when_group_is_blurry() {
    // |0> carries a quarter, |1> a quarter, |+> a half, all in one group:
    // the |0> component cannot reach its half, but deciding that for sure
    // would need sub-branch splitting
    let mu = one_qubit_branches(&[(0.25, [1.0, 0.0]), (0.25, [0.0, 1.0]), (0.5, [1.0, 1.0])]);
    let d = dist("1/2 (|0>_{p}) (+) 1/2 (~|0>_{p})");
    match satisfies(&mu, &d, &cfg()).unwrap() {
        Verdict::NotProven { .. } => {}
        other => panic!("expected NotProven, got {:?}", other),
    }
}

#[test]
fn empty_ensemble_satisfies_vacuously() {
    let layout = QubitLayout::new(vec!["p".to_string()]).unwrap();
    let mu = Ensemble::new(layout);
    let d = dist("1/3 (v = 0) (+) 2/3 (|1>_{p})");
    assert!(satisfies(&mu, &d, &cfg()).unwrap().is_satisfied());
}

// ---------------------------------------------------------------------------
// Entailment axiom schemes
// ---------------------------------------------------------------------------

fn assert_entails(l: &str, r: &str) {
    match entails(&dist(l), &dist(r), &cfg()) {
        EntailOutcome::Proven(_) => {}
        EntailOutcome::Unknown(m) => panic!("`{}` |- `{}` not derived: {}", l, r, m),
    }
}

fn assert_equiv(l: &str, r: &str) {
    assert_entails(l, r);
    assert_entails(r, l);
}

#[test]
fn axiom_pt() {
    assert_entails("v = 1 /\\ |0>_{p}", "true");
}

#[test]
fn axiom_odot_unit() {
    assert_equiv("|0>_{p} (.) true", "|0>_{p}");
}

#[test]
fn axiom_odot_commutes() {
    assert_equiv("|0>_{p} (.) |1>_{q}", "|1>_{q} (.) |0>_{p}");
}

#[test]
fn axiom_odot_associates() {
    assert_equiv(
        "|0>_{p} (.) (|1>_{q} (.) v = 1)",
        "(|0>_{p} (.) |1>_{q}) (.) v = 1",
    );
}

#[test]
fn axiom_odot_on_pure_pair() {
    assert_equiv("v = 1 (.) w = 2", "v = 1 /\\ w = 2");
}

#[test]
fn axiom_odot_on_pure_and_quantum() {
    assert_equiv("v = 1 (.) |0>_{p}", "v = 1 /\\ |0>_{p}");
}

#[test]
fn axiom_pure_conjunct_moves_into_odot() {
    assert_equiv(
        "v = 1 /\\ (|0>_{p} (.) |1>_{q})",
        "(v = 1 /\\ |0>_{p}) (.) |1>_{q}",
    );
}

#[test]
fn axiom_odot_distributes_over_and() {
    assert_equiv(
        "|0>_{p} (.) (|1>_{q} /\\ w = 2)",
        "(|0>_{p} (.) |1>_{q}) /\\ (|0>_{p} (.) w = 2)",
    );
}

#[test]
fn axiom_tensor_factors_rearrange() {
    assert_equiv("|0>_{p} (x) |+>_{q}", "|+>_{q} (x) |0>_{p}");
}

#[test]
fn axiom_tensor_joins_into_one_tuple() {
    assert_equiv("|0>_{p} (x) |1>_{q}", "|01>_{p q}");
}

#[test]
fn axiom_tensor_reads_as_separation() {
    assert_equiv("|0>_{p} (x) |1>_{q}", "|0>_{p} (.) |1>_{q}");
}

#[test]
fn axiom_equal_components_merge() {
    assert_equiv(
        "1/4 (|0>_{p}) (+) 1/4 (|0>_{p}) (+) 1/2 (v = 1)",
        "1/2 (|0>_{p}) (+) 1/2 (v = 1)",
    );
}

#[test]
fn axiom_weights_forgotten() {
    assert_entails("1/3 (|0>_{p}) (+) 2/3 (|1>_{p})", "|0>_{p} (+) |1>_{p}");
}

#[test]
fn axiom_componentwise_consequence() {
    assert_entails(
        "1/2 (v = 1 /\\ |0>_{p}) (+) 1/2 (|01>_{p q})",
        "1/2 (v = 1) (+) 1/2 (|0>_{p})",
    );
}

// ---------------------------------------------------------------------------
// Transportation feasibility oracle
// ---------------------------------------------------------------------------

/// Feasibility of the balanced transportation instance by the covering
/// condition: every set of components must be reachable by enough supply
/// mass. With balanced totals this is exactly max-flow feasibility, checked
/// here over all component subsets.
fn hall_feasible(supplies: &[Rational], demands: &[Rational], arcs: &[Vec<bool>]) -> bool {
    let nc = demands.len();
    for mask in 0u32..(1 << nc) {
        let mut need = Rational::new(0, 1);
        for (i, d) in demands.iter().enumerate() {
            if mask & (1 << i) != 0 {
                need += *d;
            }
        }
        let mut avail = Rational::new(0, 1);
        for (b, w) in supplies.iter().enumerate() {
            if (0..nc).any(|i| mask & (1 << i) != 0 && arcs[b][i]) {
                avail += *w;
            }
        }
        if avail < need {
            return false;
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn transportation_matches_hall_condition(
        raw_supplies in prop::collection::vec(1i64..12, 1..8),
        raw_demand_cuts in prop::collection::vec(0i64..100, 0..2),
        arc_bits in prop::collection::vec(any::<bool>(), 24),
    ) {
        // balanced instance: supplies sum to one, demands cut the same total
        let total: i64 = raw_supplies.iter().sum();
        let supplies: Vec<Rational> = raw_supplies.iter().map(|&w| Rational::new(w, total)).collect();
        let mut cuts: Vec<Rational> = raw_demand_cuts.iter().map(|&c| Rational::new(c.min(100), 100)).collect();
        cuts.sort();
        let mut demands = vec![];
        let mut prev = Rational::new(0, 1);
        for c in cuts {
            demands.push(c - prev);
            prev = c;
        }
        demands.push(Rational::new(1, 1) - prev);
        let nb = supplies.len();
        let nc = demands.len();
        let arcs: Vec<Vec<bool>> = (0..nb)
            .map(|b| (0..nc).map(|i| arc_bits[(b * nc + i) % arc_bits.len()]).collect())
            .collect();
        let solved = feasible_exact(&supplies, &demands, &|b, i| arcs[b][i]);
        let oracle = hall_feasible(&supplies, &demands, &arcs);
        prop_assert_eq!(solved.is_some(), oracle);
        if let Some(flows) = solved {
            // flows are a valid routing: nonnegative, on arcs, row/column sums exact
            for b in 0..nb {
                let mut row = Rational::new(0, 1);
                for i in 0..nc {
                    prop_assert!(flows[b][i] >= Rational::new(0, 1));
                    if flows[b][i] > Rational::new(0, 1) {
                        prop_assert!(arcs[b][i]);
                    }
                    row += flows[b][i];
                }
                prop_assert_eq!(row, supplies[b]);
            }
            for i in 0..nc {
                let mut col = Rational::new(0, 1);
                for b in 0..nb {
                    col += flows[b][i];
                }
                prop_assert_eq!(col, demands[i]);
            }
        }
    }

    #[test]
    fn weighted_satisfaction_implies_unweighted(
        weights in prop::collection::vec(1u32..8, 2..5),
        values in prop::collection::vec(0i64..4, 2..5),
        cuts in prop::collection::vec(1u32..8, 1..3),
    ) {
        // classical ensembles over one variable; components distinguish its
        // values, so satisfaction is exhaustive in both forms
        let layout = QubitLayout::new(vec!["p".to_string()]).unwrap();
        let state = PureState::new(layout.clone(), vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let mut mu = Ensemble::new(layout);
        let wtotal: u32 = weights.iter().sum();
        for (w, v) in weights.iter().zip(values.iter().cycle()) {
            let mut sigma = ClassicalEnv::new();
            set_var(&mut sigma, "v", *v);
            mu.branches.push(Branch {
                sigma,
                weight: *w as f64 / wtotal as f64,
                state: state.clone(),
            });
        }
        mu.normalize_rep(1e-9, 1e-12);

        let ctotal: u32 = cuts.iter().sum::<u32>() + 1;
        let mut srcs: Vec<String> = cuts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}/{} (v = {})", c, ctotal, i))
            .collect();
        srcs.push(format!("{}/{} (v >= {})", 1, ctotal, cuts.len()));
        let weighted = dist(&srcs.join(" (+) "));
        let unweighted_src: Vec<String> = (0..cuts.len())
            .map(|i| format!("v = {}", i))
            .chain(std::iter::once(format!("v >= {}", cuts.len())))
            .collect();
        let unweighted = dist(&unweighted_src.join(" (+) "));

        let vw = satisfies(&mu, &weighted, &cfg()).unwrap();
        let vu = satisfies(&mu, &unweighted, &cfg()).unwrap();
        if vw.is_satisfied() {
            prop_assert!(vu.is_satisfied());
        }
        // classical instances always resolve one way or the other
        let w_decided = !matches!(vw, Verdict::NotProven { .. });
        let u_decided = !matches!(vu, Verdict::NotProven { .. });
        prop_assert!(w_decided);
        prop_assert!(u_decided);
    }
}
