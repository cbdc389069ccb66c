//! Drive satisfaction and entailment on the two-coin adder.

use qhl::assertion::{entails, probability_of, satisfies};
use qhl::lang::{parse_dist, parse_program, ClassicalEnv, DistFormula};
use qhl::sem::{eval_program, EvalConfig};

const SRC: &str = r#"
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

fn main() {
    let cfg = EvalConfig::default();
    let program = parse_program(SRC).unwrap();
    let mu = eval_program(&program, &ClassicalEnv::new(), &cfg)
        .unwrap()
        .ensemble;

    for src in [
        "1/2 (v = 1) (+) 1/2 (v /= 1)",
        "3/4 (v = 1) (+) 1/4 (v /= 1)",
        "v = 1 (+) v /= 1",
    ] {
        let d = parse_dist(src).unwrap();
        let verdict = satisfies(&mu, &d, &cfg).unwrap();
        println!("sat  {:45} {:?}", src, verdict_tag(&verdict));
    }

    for src in ["v = 1", "v = 0", "true"] {
        let f = match parse_dist(src).unwrap() {
            DistFormula::Single(f) => f,
            _ => unreachable!(),
        };
        println!("prob {:45} {:?}", src, probability_of(&mu, &f, &cfg).unwrap());
    }

    for (l, r) in [
        ("|0>_{p} (x) |1>_{q}", "|01>_{p q}"),
        ("1/2 (v = 1 /\\ |0>_{p}) (+) 1/2 (|01>_{p q})", "1/2 (v = 1) (+) 1/2 (|0>_{p})"),
        ("(1|00> + 1|11>)_{p q}", "|0>_{p}"),
    ] {
        let out = entails(&parse_dist(l).unwrap(), &parse_dist(r).unwrap(), &cfg);
        println!("ent  {:45} |- {:35} proven={}", l, r, out.is_proven());
    }
}

fn verdict_tag(v: &qhl::assertion::Verdict) -> &'static str {
    match v {
        qhl::assertion::Verdict::Satisfied { .. } => "Satisfied",
        qhl::assertion::Verdict::Refuted { .. } => "Refuted",
        qhl::assertion::Verdict::NotProven { .. } => "NotProven",
    }
}
