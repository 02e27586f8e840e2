use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::expander::{BipartiteExpander, TensorExpander};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Expander,
    TensorExpander,
    DenseGaussian,
    ExplicitDense,
}

impl OperatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorKind::Expander => "expander",
            OperatorKind::TensorExpander => "tensor-expander",
            OperatorKind::DenseGaussian => "gaussian",
            OperatorKind::ExplicitDense => "explicit-dense",
        }
    }
}

/// A linear map `R^p → R^n` known only through products with `X` and `Xᵀ`.
///
/// The `_into` methods do not check lengths; the solver validates shapes
/// once up front.
pub trait LinearOperator: Send + Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn kind(&self) -> OperatorKind;
    fn apply_into(&self, x: &[f64], out: &mut [f64]);
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_cols(), x.len())?;
        let mut out = vec![0.0; self.n_rows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn adjoint_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_rows(), v.len())?;
        let mut out = vec![0.0; self.n_cols()];
        self.adjoint_into(v, &mut out);
        Ok(out)
    }
}

impl LinearOperator for BipartiteExpander {
    fn n_rows(&self) -> usize {
        BipartiteExpander::n_rows(self)
    }
    fn n_cols(&self) -> usize {
        BipartiteExpander::n_cols(self)
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::Expander
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        BipartiteExpander::apply_into(self, x, out)
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        BipartiteExpander::adjoint_into(self, v, out)
    }
}

impl LinearOperator for TensorExpander {
    fn n_rows(&self) -> usize {
        TensorExpander::n_rows(self)
    }
    fn n_cols(&self) -> usize {
        TensorExpander::n_cols(self)
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::TensorExpander
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        TensorExpander::apply_into(self, x, out)
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        TensorExpander::adjoint_into(self, v, out)
    }
}

/// `scale · X`; used for the `X/d` normalization of expanders.
#[derive(Debug, Clone)]
pub struct Scaled<O> {
    pub inner: O,
    pub scale: f64,
}

impl<O> Scaled<O> {
    pub fn new(inner: O, scale: f64) -> Self {
        Self { inner, scale }
    }
}

impl<O: LinearOperator> LinearOperator for Scaled<O> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }
    fn kind(&self) -> OperatorKind {
        self.inner.kind()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply_into(x, out);
        out.iter_mut().for_each(|o| *o *= self.scale);
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        self.inner.adjoint_into(v, out);
        out.iter_mut().for_each(|o| *o *= self.scale);
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn n_rows(&self) -> usize {
        (**self).n_rows()
    }
    fn n_cols(&self) -> usize {
        (**self).n_cols()
    }
    fn kind(&self) -> OperatorKind {
        (**self).kind()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        (**self).adjoint_into(v, out)
    }
}

const ADJOINT_CHUNK: usize = 512;

/// Dot product with eight fixed lanes so the compiler can vectorize while
/// the summation order stays fixed.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Row-major dense matrix.
///
/// Products parallelize over output entries; each entry is a fixed-order
/// sum, so results do not depend on the thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    kind: OperatorKind,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidShape(
                "dense matrix needs at least one entry".into(),
            ));
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::InvalidShape(format!(
                    "row {i} has length {}, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
            kind: OperatorKind::ExplicitDense,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            n_rows: n,
            n_cols: n,
            data,
            kind: OperatorKind::ExplicitDense,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl LinearOperator for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
    fn kind(&self) -> OperatorKind {
        self.kind
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.n_cols;
        out.par_iter_mut()
            .zip(self.data.par_chunks(p))
            .for_each(|(o, row)| *o = dot(row, x));
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let p = self.n_cols;
        out.par_chunks_mut(ADJOINT_CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let start = ci * ADJOINT_CHUNK;
                chunk.fill(0.0);
                for (r, &vr) in v.iter().enumerate() {
                    let row = &self.data[r * p + start..r * p + start + chunk.len()];
                    for (o, a) in chunk.iter_mut().zip(row) {
                        *o += vr * a;
                    }
                }
            });
    }
}

/// Dense matrix with i.i.d. `N(0, 1/n)` entries.
///
/// `max_entries` bounds `n·p`; larger requests fail with a resource error
/// instead of attempting the allocation.
pub fn make_gaussian(n: usize, p: usize, seed: u64, max_entries: usize) -> Result<DenseMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidShape(format!(
            "gaussian operator needs n, p >= 1 (n = {n}, p = {p})"
        )));
    }
    let entries = n
        .checked_mul(p)
        .ok_or_else(|| Error::Resource(format!("{n} x {p} overflows")))?;
    if entries > max_entries {
        return Err(Error::Resource(format!(
            "dense {n} x {p} gaussian needs {entries} entries, budget is {max_entries}"
        )));
    }
    let mut data = Vec::new();
    data.try_reserve_exact(entries)
        .map_err(|e| Error::Resource(format!("cannot allocate {n} x {p} gaussian: {e}")))?;
    let mut rng = seed::rng(seed);
    let std = (1.0 / n as f64).sqrt();
    data.extend((0..entries).map(|_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * std
    }));
    Ok(DenseMatrix {
        n_rows: n,
        n_cols: p,
        data,
        kind: OperatorKind::DenseGaussian,
    })
}
