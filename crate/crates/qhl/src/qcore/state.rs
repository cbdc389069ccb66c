//! Pure states over named qubits, plus the channel-level primitives the
//! semantics needs: targeted unitaries, measurement, single-qubit reset, and
//! partial trace.

use super::{C64, Matrix, QcoreError, QubitLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: QubitLayout,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(layout: QubitLayout, amps: Vec<C64>) -> Result<Self, QcoreError> {
        if amps.len() != layout.dim() {
            return Err(QcoreError::DimensionMismatch(format!(
                "{} amplitudes for a {}-qubit layout",
                amps.len(),
                layout.len()
            )));
        }
        Ok(PureState { layout, amps })
    }

    /// Computational basis state `|index>` in the layout's bit order.
    pub fn basis(layout: QubitLayout, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[index] = C64::new(1.0, 0.0);
        PureState { layout, amps }
    }

    /// All-zero state `|0...0>`.
    pub fn zero(layout: QubitLayout) -> Self {
        PureState::basis(layout, 0)
    }

    pub fn layout(&self) -> &QubitLayout {
        &self.layout
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<PureState, QcoreError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QcoreError::ZeroNorm);
        }
        let mut s = self.clone();
        for a in s.amps.iter_mut() {
            *a /= n;
        }
        Ok(s)
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Bit of basis `index` at layout position `pos` (position 0 = MSB).
    pub fn bit_at(&self, index: usize, pos: usize) -> usize {
        (index >> (self.layout.len() - 1 - pos)) & 1
    }

    pub fn density(&self) -> DensityMatrix {
        let dim = self.dim();
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix {
            vars: self.layout.names().to_vec(),
            mat: m,
        }
    }
}

/// Density operator over an ordered qubit tuple. Not necessarily normalized;
/// the trace carries branch weight where relevant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub vars: Vec<String>,
    pub mat: Matrix,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn scale(&self, w: f64) -> DensityMatrix {
        DensityMatrix {
            vars: self.vars.clone(),
            mat: self.mat.scale(C64::new(w, 0.0)),
        }
    }

    pub fn add(&self, other: &DensityMatrix) -> Result<DensityMatrix, QcoreError> {
        if self.vars != other.vars {
            return Err(QcoreError::DimensionMismatch(
                "density operators over different tuples".into(),
            ));
        }
        Ok(DensityMatrix {
            vars: self.vars.clone(),
            mat: self.mat.add(&other.mat)?,
        })
    }

    /// Largest eigenvalue-free purity proxy: `tr(rho^2) / tr(rho)^2`.
    /// Equals 1 exactly when the operator is rank one.
    pub fn purity(&self) -> f64 {
        let t = self.trace();
        if t <= 0.0 {
            return 0.0;
        }
        let sq = self.mat.mul(&self.mat).expect("same dim").trace().re;
        sq / (t * t)
    }
}

/// `|a> (x) |b>`; layouts must be disjoint. The left operand occupies the
/// most significant index bits of the result.
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState, QcoreError> {
    let mut names = a.layout.names().to_vec();
    for n in b.layout.names() {
        if a.layout.contains(n) {
            return Err(QcoreError::DuplicateQubit(n.clone()));
        }
        names.push(n.clone());
    }
    let layout = QubitLayout::new(names)?;
    let mut amps = Vec::with_capacity(a.dim() * b.dim());
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    PureState::new(layout, amps)
}

/// Positions of `targets` interpreted against `layout`, plus the remaining
/// positions in layout order.
fn split_positions(
    layout: &QubitLayout,
    targets: &[String],
) -> Result<(Vec<usize>, Vec<usize>), QcoreError> {
    let tpos = layout.positions(targets)?;
    let rest: Vec<usize> = (0..layout.len()).filter(|p| !tpos.contains(p)).collect();
    Ok((tpos, rest))
}

/// Compose a full basis index from a sub-index over `positions` (first
/// position = MSB of the sub-index) and a fixed remainder index.
fn compose_index(
    n: usize,
    positions: &[usize],
    sub: usize,
    rest_positions: &[usize],
    rest: usize,
) -> usize {
    let mut idx = 0usize;
    for (k, &p) in positions.iter().enumerate() {
        let bit = (sub >> (positions.len() - 1 - k)) & 1;
        idx |= bit << (n - 1 - p);
    }
    for (k, &p) in rest_positions.iter().enumerate() {
        let bit = (rest >> (rest_positions.len() - 1 - k)) & 1;
        idx |= bit << (n - 1 - p);
    }
    idx
}

/// Apply a `2^k x 2^k` operator to the named target qubits.
pub fn apply_unitary(
    psi: &PureState,
    op: &Matrix,
    targets: &[String],
) -> Result<PureState, QcoreError> {
    apply_op(psi, op, targets)
}

/// Same embedding as [`apply_unitary`] but without any unitarity assumption;
/// used for measurement elements.
pub fn apply_op(psi: &PureState, op: &Matrix, targets: &[String]) -> Result<PureState, QcoreError> {
    let n = psi.layout.len();
    let (tpos, rest) = split_positions(&psi.layout, targets)?;
    let k = tpos.len();
    if op.dim() != (1usize << k) {
        return Err(QcoreError::DimensionMismatch(format!(
            "operator dim {} applied to {} target qubits",
            op.dim(),
            k
        )));
    }
    let mut out = vec![C64::new(0.0, 0.0); psi.dim()];
    let sub_dim = 1usize << k;
    let rest_dim = 1usize << rest.len();
    let mut gathered = vec![C64::new(0.0, 0.0); sub_dim];
    for r in 0..rest_dim {
        for s in 0..sub_dim {
            gathered[s] = psi.amps[compose_index(n, &tpos, s, &rest, r)];
        }
        let applied = op.mat_vec(&gathered)?;
        for s in 0..sub_dim {
            out[compose_index(n, &tpos, s, &rest, r)] = applied[s];
        }
    }
    PureState::new(psi.layout.clone(), out)
}

/// Trace out everything but `keep`; the result's basis follows the order of
/// `keep` as given, so callers can compare against kets over arbitrary tuples.
pub fn partial_trace(rho: &DensityMatrix, keep: &[String]) -> Result<DensityMatrix, QcoreError> {
    let layout = QubitLayout::new(rho.vars.clone())?;
    let n = layout.len();
    let (kpos, rest) = split_positions(&layout, keep)?;
    let kd = 1usize << kpos.len();
    let rd = 1usize << rest.len();
    let mut out = Matrix::zeros(kd);
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..rd {
                let i = compose_index(n, &kpos, a, &rest, r);
                let j = compose_index(n, &kpos, b, &rest, r);
                acc += rho.mat[(i, j)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix {
        vars: keep.to_vec(),
        mat: out,
    })
}

/// Computational-basis measurement defined by explicit operators on the
/// target qubits. Returns `(outcome index, probability, normalized post
/// state)` for every outcome with nonzero probability, in outcome order.
pub fn measure(
    psi: &PureState,
    m_ops: &[Matrix],
    targets: &[String],
) -> Result<Vec<(usize, f64, PureState)>, QcoreError> {
    let mut out = Vec::new();
    for (i, op) in m_ops.iter().enumerate() {
        let post = apply_op(psi, op, targets)?;
        let p = post.norm().powi(2);
        if p > 1e-15 {
            out.push((i, p, post.normalized()?));
        }
    }
    Ok(out)
}

/// Reset channel on one qubit: `rho -> |0><0| rho |0><0| + |0><1| rho |1><0|`.
/// On a pure input this yields at most two weighted pure branches, both with
/// the qubit in `|0>`.
pub fn reset_qubit(psi: &PureState, q: &str) -> Result<Vec<(f64, PureState)>, QcoreError> {
    let n = psi.layout.len();
    let pos = psi.layout.index_of(q)?;
    let shift = n - 1 - pos;
    let mut branches = Vec::new();
    for bit in 0..2usize {
        // Kraus element |0><bit|: select the component with the qubit at
        // `bit` and move it to 0.
        let mut amps = vec![C64::new(0.0, 0.0); psi.dim()];
        for idx in 0..psi.dim() {
            if (idx >> shift) & 1 == bit {
                amps[idx & !(1usize << shift)] = psi.amps[idx];
            }
        }
        let st = PureState::new(psi.layout.clone(), amps)?;
        let w = st.norm().powi(2);
        if w > 1e-15 {
            branches.push((w, st.normalized()?));
        }
    }
    Ok(branches)
}

/// True when the states differ only by a global phase: `|<a|b>| >= 1 - tol`.
/// Both inputs must share a layout and be normalized.
pub fn equal_up_to_phase(a: &PureState, b: &PureState, tol: f64) -> Result<bool, QcoreError> {
    if a.layout != b.layout {
        return Err(QcoreError::DimensionMismatch(
            "states over different layouts".into(),
        ));
    }
    Ok(a.inner(b).norm() >= 1.0 - tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::gates::builtin_gate;

    fn layout(names: &[&str]) -> QubitLayout {
        QubitLayout::new(names.to_vec()).unwrap()
    }

    fn bell(l: &QubitLayout) -> PureState {
        // (|00> + |11>)/sqrt(2)
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(
            l.clone(),
            vec![
                C64::new(s, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(s, 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn tensor_of_basis_states_concatenates_indices() {
        let a = PureState::basis(layout(&["q0"]), 1);
        let b = PureState::basis(layout(&["q1"]), 0);
        let t = tensor(&a, &b).unwrap();
        // |1>|0> = |10> = index 2 under big-endian ordering
        assert_eq!(t.amps()[2], C64::new(1.0, 0.0));
        assert_eq!(t.norm(), 1.0);
    }

    #[test]
    fn hadamard_then_cnot_gives_bell() {
        let l = layout(&["q0", "q1"]);
        let h = builtin_gate("H", 1, &[]).unwrap();
        let cx = builtin_gate("CNOT", 2, &[]).unwrap();
        let psi = PureState::zero(l.clone());
        let psi = apply_unitary(&psi, &h, &["q0".into()]).unwrap();
        let psi = apply_unitary(&psi, &cx, &["q0".into(), "q1".into()]).unwrap();
        assert!(equal_up_to_phase(&psi, &bell(&l), 1e-12).unwrap());
    }

    #[test]
    fn unitary_on_second_qubit_only_touches_its_bit() {
        let l = layout(&["q0", "q1"]);
        let x = builtin_gate("X", 1, &[]).unwrap();
        let psi = PureState::basis(l, 0b10);
        let psi = apply_unitary(&psi, &x, &["q1".into()]).unwrap();
        assert_eq!(psi.amps()[0b11], C64::new(1.0, 0.0));
    }

    #[test]
    fn partial_trace_of_bell_is_maximally_mixed() {
        let l = layout(&["q0", "q1"]);
        let rho = bell(&l).density();
        for q in ["q0", "q1"] {
            let red = partial_trace(&rho, &[q.to_string()]).unwrap();
            assert!((red.mat[(0, 0)].re - 0.5).abs() < 1e-12);
            assert!((red.mat[(1, 1)].re - 0.5).abs() < 1e-12);
            assert!(red.mat[(0, 1)].norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_follows_requested_order() {
        // |01> over (q0,q1); keeping (q1,q0) must describe |10>.
        let l = layout(&["q0", "q1"]);
        let rho = PureState::basis(l, 0b01).density();
        let red = partial_trace(&rho, &["q1".into(), "q0".into()]).unwrap();
        assert!((red.mat[(2, 2)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_of_plus_state_splits_evenly() {
        let l = layout(&["q0"]);
        let h = builtin_gate("H", 1, &[]).unwrap();
        let psi = apply_unitary(&PureState::zero(l), &h, &["q0".into()]).unwrap();
        let p0 = Matrix::from_fn(2, |i, j| {
            if i == 0 && j == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let p1 = Matrix::from_fn(2, |i, j| {
            if i == 1 && j == 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let res = measure(&psi, &[p0, p1], &["q0".into()]).unwrap();
        assert_eq!(res.len(), 2);
        assert!((res[0].1 - 0.5).abs() < 1e-12);
        assert!((res[1].1 - 0.5).abs() < 1e-12);
    }

    /// Reset on one half of a Bell pair. Oracle (worked by hand from the
    /// channel definition): both Kraus branches have weight 1/2 and map to
    /// |00> and |01> respectively over (q0,q1) when resetting q0... resetting
    /// q0 of (|00>+|11>)/sqrt(2): the |0><0| branch keeps |00>, the |0><1|
    /// branch takes the |11> component to |01>.
    #[test]
    fn reset_of_bell_half_gives_two_even_branches() {
        let l = layout(&["q0", "q1"]);
        let res = reset_qubit(&bell(&l), "q0").unwrap();
        assert_eq!(res.len(), 2);
        assert!((res[0].0 - 0.5).abs() < 1e-12);
        assert!((res[1].0 - 0.5).abs() < 1e-12);
        assert_eq!(res[0].1.amps()[0b00], C64::new(1.0, 0.0));
        assert_eq!(res[1].1.amps()[0b01], C64::new(1.0, 0.0));
    }

    #[test]
    fn reset_preserves_total_weight() {
        let l = layout(&["q0", "q1"]);
        let h = builtin_gate("H", 1, &[]).unwrap();
        let psi = apply_unitary(&bell(&l), &h, &["q1".into()]).unwrap();
        let res = reset_qubit(&psi, "q1").unwrap();
        let total: f64 = res.iter().map(|(w, _)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_up_to_phase_accepts_global_phase() {
        let l = layout(&["q0"]);
        let h = builtin_gate("H", 1, &[]).unwrap();
        let plus = apply_unitary(&PureState::zero(l.clone()), &h, &["q0".into()]).unwrap();
        let phase = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let rotated =
            PureState::new(l, plus.amps().iter().map(|a| a * phase).collect()).unwrap();
        assert!(equal_up_to_phase(&plus, &rotated, 1e-9).unwrap());
        let zero = PureState::zero(layout(&["q0"]));
        assert!(!equal_up_to_phase(&plus, &zero, 1e-9).unwrap());
    }
}
