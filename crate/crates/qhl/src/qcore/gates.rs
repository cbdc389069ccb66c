//! Builtin gate library and the registry programs resolve gate references
//! against.
//!
//! Gates are resolved by `(name, arity, integer params)`. Tensor-power
//! builtins (`H`, `X`, `I`) accept any arity; `QFT`/`QFTinv` act on the whole
//! tuple; `cmodmul`/`modmul` build modular-arithmetic permutations used by the
//! order-finding circuits. Custom matrices can be registered from a plain text
//! format: one row per line, whitespace-separated entries like `0.5`,
//! `-0.25+0.75j`.

use super::{C64, Matrix, QcoreError};
use std::cell::RefCell;
use std::collections::HashMap;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn h1() -> Matrix {
    Matrix::from_rows(vec![
        vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
        vec![c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
    ])
    .expect("2x2")
}

fn x1() -> Matrix {
    Matrix::from_rows(vec![
        vec![c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(1.0, 0.0), c(0.0, 0.0)],
    ])
    .expect("2x2")
}

fn cnot() -> Matrix {
    let mut m = Matrix::zeros(4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 1)] = c(1.0, 0.0);
    m[(2, 3)] = c(1.0, 0.0);
    m[(3, 2)] = c(1.0, 0.0);
    m
}

fn tensor_power(base: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::identity(1);
    for _ in 0..n {
        out = out.kron(base);
    }
    out
}

/// Discrete Fourier transform on `2^n` dims: `F|j> = sum_k w^{jk} |k> / sqrt(N)`.
fn qft(n: usize) -> Matrix {
    let dim = 1usize << n;
    let norm = 1.0 / (dim as f64).sqrt();
    Matrix::from_fn(dim, |k, j| {
        let phase = 2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / (dim as f64);
        C64::from_polar(norm, phase)
    })
}

fn pow_mod(base: i64, mut exp: i64, modulus: i64) -> i64 {
    let mut result: i64 = 1 % modulus;
    let mut b = base.rem_euclid(modulus);
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % modulus;
        }
        b = b * b % modulus;
        exp >>= 1;
    }
    result
}

fn gcd(a: i64, b: i64) -> i64 {
    num_integer::gcd(a, b)
}

/// Bits needed to hold values `0..N-1`.
fn bits_for(n: i64) -> usize {
    let mut bits = 1usize;
    while (1i64 << bits) < n {
        bits += 1;
    }
    bits
}

/// Modular multiplication permutation on `L` qubits:
/// `|y> -> |x*y mod N>` for `y < N`, identity on `y >= N`.
/// The `y = N` case must ride the identity branch, otherwise `x*N mod N = 0`
/// collides with the image of `y = 0` and the matrix is not a permutation.
fn modmul_perm(x: i64, n_mod: i64, l: usize) -> Result<Matrix, QcoreError> {
    if n_mod < 2 {
        return Err(QcoreError::BadGateParamValue(format!(
            "modulus {} too small",
            n_mod
        )));
    }
    if gcd(x.rem_euclid(n_mod), n_mod) != 1 {
        return Err(QcoreError::BadGateParamValue(format!(
            "multiplier {} not coprime to modulus {}",
            x, n_mod
        )));
    }
    let dim = 1usize << l;
    if (dim as i64) < n_mod {
        return Err(QcoreError::BadGateParamValue(format!(
            "{} qubits cannot hold residues mod {}",
            l, n_mod
        )));
    }
    let xm = x.rem_euclid(n_mod);
    let mut m = Matrix::zeros(dim);
    for y in 0..dim {
        let out = if (y as i64) < n_mod {
            (xm * y as i64).rem_euclid(n_mod) as usize
        } else {
            y
        };
        m[(out, y)] = c(1.0, 0.0);
    }
    Ok(m)
}

/// Controlled modular multiplication on `t` control + `L` target qubits:
/// `|i>|y> -> |i> |x^i * y mod N>` with the same out-of-range convention as
/// [`modmul_perm`].
fn cmodmul_perm(x: i64, n_mod: i64, arity: usize) -> Result<Matrix, QcoreError> {
    let l = bits_for(n_mod);
    if arity <= l {
        return Err(QcoreError::BadGateArity {
            name: "cmodmul".into(),
            arity,
        });
    }
    if gcd(x.rem_euclid(n_mod), n_mod) != 1 {
        return Err(QcoreError::BadGateParamValue(format!(
            "multiplier {} not coprime to modulus {}",
            x, n_mod
        )));
    }
    let t = arity - l;
    let tdim = 1usize << t;
    let ldim = 1usize << l;
    let mut m = Matrix::zeros(tdim * ldim);
    for i in 0..tdim {
        let xi = pow_mod(x, i as i64, n_mod);
        for y in 0..ldim {
            let out_y = if (y as i64) < n_mod {
                (xi * y as i64).rem_euclid(n_mod) as usize
            } else {
                y
            };
            m[(i * ldim + out_y, i * ldim + y)] = c(1.0, 0.0);
        }
    }
    Ok(m)
}

pub fn is_builtin_gate(name: &str) -> bool {
    matches!(
        name,
        "H" | "X" | "I" | "CNOT" | "QFT" | "QFTinv" | "Uplus" | "modmul" | "cmodmul"
    )
}

/// Resolve a builtin gate at the given arity. `params` carries the integer
/// arguments of parameterized gates (`modmul`/`cmodmul` take multiplier and
/// modulus); plain gates take none.
pub fn builtin_gate(name: &str, arity: usize, params: &[i64]) -> Result<Matrix, QcoreError> {
    let expect_params = |n: usize| -> Result<(), QcoreError> {
        if params.len() != n {
            return Err(QcoreError::BadGateParams {
                name: name.to_string(),
                expected: n,
                got: params.len(),
            });
        }
        Ok(())
    };
    match name {
        "H" => {
            expect_params(0)?;
            Ok(tensor_power(&h1(), arity))
        }
        "X" => {
            expect_params(0)?;
            Ok(tensor_power(&x1(), arity))
        }
        "I" => {
            expect_params(0)?;
            Ok(Matrix::identity(1usize << arity))
        }
        "CNOT" => {
            expect_params(0)?;
            if arity != 2 {
                return Err(QcoreError::BadGateArity {
                    name: name.into(),
                    arity,
                });
            }
            Ok(cnot())
        }
        "QFT" => {
            expect_params(0)?;
            Ok(qft(arity))
        }
        "QFTinv" => {
            expect_params(0)?;
            Ok(qft(arity).adjoint())
        }
        // Maps |0...0> to |0...01>: X on the least significant (last) qubit.
        "Uplus" => {
            expect_params(0)?;
            if arity == 0 {
                return Err(QcoreError::BadGateArity {
                    name: name.into(),
                    arity,
                });
            }
            Ok(tensor_power(&Matrix::identity(2), arity - 1).kron(&x1()))
        }
        "modmul" => {
            expect_params(2)?;
            modmul_perm(params[0], params[1], arity)
        }
        "cmodmul" => {
            expect_params(2)?;
            cmodmul_perm(params[0], params[1], arity)
        }
        _ => Err(QcoreError::UnknownGate(name.to_string())),
    }
}

/// Parse the plain text matrix format: one row per line, entries separated by
/// whitespace, each entry `a`, `bj`, or `a+bj` (also accepts `i`).
pub fn parse_matrix_text(text: &str) -> Result<Matrix, QcoreError> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            row.push(parse_complex_entry(tok)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(QcoreError::MatrixText("no rows".into()));
    }
    let m = Matrix::from_rows(rows).map_err(|e| QcoreError::MatrixText(e.to_string()))?;
    if !m.dim().is_power_of_two() {
        return Err(QcoreError::MatrixText(format!(
            "dimension {} is not a power of two",
            m.dim()
        )));
    }
    Ok(m)
}

pub(crate) fn parse_complex_entry(tok: &str) -> Result<C64, QcoreError> {
    let bad = || QcoreError::MatrixText(format!("bad entry `{}`", tok));
    let s = tok.trim();
    if s.is_empty() {
        return Err(bad());
    }
    // Pure imaginary: ends with i/j and has no inner sign split.
    let body = s.strip_suffix(['i', 'j']);
    // Find a +/- that separates real and imaginary parts (not at position 0,
    // not following an exponent marker).
    let split_at = s
        .char_indices()
        .skip(1)
        .find(|(k, ch)| {
            (*ch == '+' || *ch == '-')
                && !matches!(s.as_bytes()[k - 1], b'e' | b'E')
        })
        .map(|(k, _)| k);
    match (split_at, body) {
        (Some(k), Some(_)) => {
            let re: f64 = s[..k].parse().map_err(|_| bad())?;
            let imtxt = &s[k..s.len() - 1];
            let im: f64 = if imtxt == "+" {
                1.0
            } else if imtxt == "-" {
                -1.0
            } else {
                imtxt.parse().map_err(|_| bad())?
            };
            Ok(c(re, im))
        }
        (None, Some(imtxt)) => {
            let im: f64 = if imtxt.is_empty() || imtxt == "+" {
                1.0
            } else if imtxt == "-" {
                -1.0
            } else {
                imtxt.parse().map_err(|_| bad())?
            };
            Ok(c(0.0, im))
        }
        (_, None) => {
            let re: f64 = s.parse().map_err(|_| bad())?;
            Ok(c(re, 0.0))
        }
    }
}

/// Render a matrix in the text format accepted by [`parse_matrix_text`].
pub fn matrix_to_text(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.dim() {
        let mut first = true;
        for j in 0..m.dim() {
            if !first {
                out.push(' ');
            }
            first = false;
            let e = m[(i, j)];
            if e.im == 0.0 {
                out.push_str(&format!("{:?}", e.re));
            } else {
                out.push_str(&format!("{:?}{}{:?}j", e.re, if e.im < 0.0 { "" } else { "+" }, e.im));
            }
        }
        out.push('\n');
    }
    out
}

/// Gate registry: builtins plus custom named matrices, with a small cache for
/// parameterized builds (the modular permutations recur per loop iteration).
#[derive(Debug, Default)]
pub struct GateTable {
    custom: HashMap<String, (usize, Matrix)>,
    cache: RefCell<HashMap<(String, usize, Vec<i64>), Matrix>>,
}

impl GateTable {
    pub fn new() -> Self {
        GateTable::default()
    }

    /// Register a custom static matrix under `name` for a fixed arity.
    /// The matrix must be unitary.
    pub fn register(&mut self, name: &str, matrix: Matrix) -> Result<(), QcoreError> {
        let arity = matrix.dim().trailing_zeros() as usize;
        if matrix.dim() != 1usize << arity {
            return Err(QcoreError::DimensionMismatch(format!(
                "gate `{}` has dimension {}",
                name,
                matrix.dim()
            )));
        }
        matrix.check_unitary(1e-7)?;
        self.custom.insert(name.to_string(), (arity, matrix));
        Ok(())
    }

    pub fn resolve(&self, name: &str, arity: usize, params: &[i64]) -> Result<Matrix, QcoreError> {
        if let Some((a, m)) = self.custom.get(name) {
            if !params.is_empty() {
                return Err(QcoreError::BadGateParams {
                    name: name.into(),
                    expected: 0,
                    got: params.len(),
                });
            }
            if *a != arity {
                return Err(QcoreError::BadGateArity {
                    name: name.into(),
                    arity,
                });
            }
            return Ok(m.clone());
        }
        let key = (name.to_string(), arity, params.to_vec());
        if let Some(m) = self.cache.borrow().get(&key) {
            return Ok(m.clone());
        }
        let m = builtin_gate(name, arity, params)?;
        self.cache.borrow_mut().insert(key, m.clone());
        Ok(m)
    }

    pub fn custom_names(&self) -> impl Iterator<Item = &String> {
        self.custom.keys()
    }
}
