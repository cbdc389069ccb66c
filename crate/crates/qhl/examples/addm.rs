//! Evaluate the two-coin adder and print its outcome table.
//!
//! Run with `cargo run -p qhl --example addm`.

use qhl::lang::{parse_program, ClassicalEnv};
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
    let program = parse_program(SRC).expect("program parses");
    let report = eval_program(&program, &ClassicalEnv::new(), &EvalConfig::default())
        .expect("program evaluates");
    println!("branches: {}", report.ensemble.branches.len());
    for b in &report.ensemble.branches {
        let sigma: Vec<String> = b.sigma.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
        println!("  weight {:.4}  sigma {{{}}}", b.weight, sigma.join(", "));
    }
    println!("mass: {:.6}", report.ensemble.mass());
    println!("aborted: {:.6}", report.aborted);
    println!("fingerprint: {}", report.ensemble.fingerprint());
}
