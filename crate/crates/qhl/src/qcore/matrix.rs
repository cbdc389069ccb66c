//! Row-major square complex matrices, sized for statevector work (dim <= 2^10).

use super::{C64, QcoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self, QcoreError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(QcoreError::DimensionMismatch(format!(
                    "row length {} in a {}x{} matrix",
                    r.len(),
                    dim,
                    dim
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, QcoreError> {
        if self.dim != other.dim {
            return Err(QcoreError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.dim, self.dim, other.dim, other.dim
            )));
        }
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, QcoreError> {
        if self.dim != other.dim {
            return Err(QcoreError::DimensionMismatch("matrix add".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, c: C64) -> Matrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn mat_vec(&self, v: &[C64]) -> Result<Vec<C64>, QcoreError> {
        if v.len() != self.dim {
            return Err(QcoreError::DimensionMismatch(format!(
                "matrix dim {} applied to vector length {}",
                self.dim,
                v.len()
            )));
        }
        let n = self.dim;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Kronecker product; `self` occupies the most significant index bits.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let (n, m) = (self.dim, other.dim);
        let mut out = Matrix::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Largest entrywise deviation of `U U^dagger` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = self.mul(&self.adjoint()).expect("same dim");
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let expect = if i == j { 1.0 } else { 0.0 };
                let d = (prod[(i, j)] - C64::new(expect, 0.0)).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn check_unitary(&self, tol: f64) -> Result<(), QcoreError> {
        let d = self.unitarity_deviation();
        if d > tol {
            return Err(QcoreError::NotUnitary(d));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}
