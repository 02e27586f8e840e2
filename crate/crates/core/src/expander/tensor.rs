use crate::error::{check_len, Error, Result};

use super::BipartiteExpander;

/// Kronecker square `X̂ ⊗ X̂` of a base expander, applied matrix-free.
///
/// A vector of length `P²` is read as a `P × P` matrix `Z` in column-major
/// order; `(X̂ ⊗ X̂)·vec(Z) = vec(X̂ Z X̂ᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorExpander {
    base: BipartiteExpander,
}

impl TensorExpander {
    pub fn new(base: BipartiteExpander) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &BipartiteExpander {
        &self.base
    }

    pub fn n_rows(&self) -> usize {
        self.base.n_rows() * self.base.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.base.n_cols() * self.base.n_cols()
    }

    /// Ones per implied column.
    pub fn degree(&self) -> usize {
        self.base.degree() * self.base.degree()
    }

    pub fn matvec(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_square(beta.len(), self.base.n_cols())?;
        let mut out = vec![0.0; self.n_rows()];
        self.apply_into(beta, &mut out);
        Ok(out)
    }

    pub fn adjoint_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_square(v.len(), self.base.n_rows())?;
        let mut out = vec![0.0; self.n_cols()];
        self.adjoint_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, beta: &[f64], out: &mut [f64]) {
        let (n, p) = (self.base.n_rows(), self.base.n_cols());
        // A = X̂ Z, stored column-major n × p.
        let mut a = vec![0.0; n * p];
        for j in 0..p {
            self.base
                .apply_into(&beta[j * p..(j + 1) * p], &mut a[j * n..(j + 1) * n]);
        }
        // W = A X̂ᵀ: W[r, :] = X̂ · A[r, :]ᵀ.
        let mut row = vec![0.0; p];
        let mut w_row = vec![0.0; n];
        for r in 0..n {
            for (c, x) in row.iter_mut().enumerate() {
                *x = a[r + c * n];
            }
            self.base.apply_into(&row, &mut w_row);
            for (b, &w) in w_row.iter().enumerate() {
                out[r + b * n] = w;
            }
        }
    }

    pub(crate) fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let (n, p) = (self.base.n_rows(), self.base.n_cols());
        // B = X̂ᵀ V, column-major p × n.
        let mut b = vec![0.0; p * n];
        for j in 0..n {
            self.base
                .adjoint_into(&v[j * n..(j + 1) * n], &mut b[j * p..(j + 1) * p]);
        }
        // U = B X̂: U[r, :] = X̂ᵀ · B[r, :]ᵀ.
        let mut row = vec![0.0; n];
        let mut u_row = vec![0.0; p];
        for r in 0..p {
            for (c, x) in row.iter_mut().enumerate() {
                *x = b[r + c * p];
            }
            self.base.adjoint_into(&row, &mut u_row);
            for (c, &u) in u_row.iter().enumerate() {
                out[r + c * p] = u;
            }
        }
    }

    fn check_square(&self, len: usize, side: usize) -> Result<()> {
        if len != side * side {
            let root = (len as f64).sqrt().round() as usize;
            if root * root != len {
                return Err(Error::InvalidShape(format!(
                    "tensor operand length {len} is not a perfect square"
                )));
            }
        }
        check_len(side * side, len)
    }

    /// Dense row-major Kronecker product, for tiny-scale checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let base = self.base.to_dense();
        let (n, p) = (self.base.n_rows(), self.base.n_cols());
        let mut dense = vec![vec![0.0; p * p]; n * n];
        for i in 0..n {
            for j in 0..p {
                if base[i][j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..p {
                        dense[i * n + k][j * p + l] = base[i][j] * base[k][l];
                    }
                }
            }
        }
        dense
    }
}
