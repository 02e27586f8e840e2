use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_model::{l2_norm, GroupModel};
use crate::error::{Error, Result};
use crate::expander::BipartiteExpander;
use crate::seed;

use super::{kernel_lemma_factor, EpsilonCertificate};

/// Largest dimension for which the matrix is materialized.
pub const MAX_KERNEL_DIM: usize = 200;

const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelLemmaReport {
    pub k: usize,
    pub epsilon: f64,
    pub certified: bool,
    pub kernel_dim: usize,
    pub samples: usize,
    /// `2εg/(1−2ε)`; `None` when `ε ≥ 1/2`.
    pub bound_factor: Option<f64>,
    /// Largest observed `Σ_top ‖z_G‖ / Σ_all ‖z_G‖`.
    pub max_ratio: f64,
    pub violations: usize,
    pub max_relative_residual: f64,
    /// No kernel, no finite bound, or a bound factor of at least one.
    pub vacuous: bool,
}

/// Orthonormal basis of `{z : Az = 0}` for a dense row-major `A`.
///
/// Reduced row echelon form with partial pivoting gives one kernel vector
/// per free column; two passes of modified Gram-Schmidt orthonormalize them.
pub fn kernel_basis(rows: &[Vec<f64>], n_cols: usize) -> Vec<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let n_rows = a.len();
    let max_abs = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * max_abs.max(1.0) * n_rows.max(n_cols) as f64;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n_cols {
        if r == n_rows {
            break;
        }
        let (best, best_abs) = (r..n_rows)
            .map(|i| (i, a[i][c].abs()))
            .fold((r, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best_abs <= tol {
            continue;
        }
        a.swap(r, best);
        let pv = a[r][c];
        a[r].iter_mut().for_each(|v| *v /= pv);
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r && row[c] != 0.0 {
                let f = row[c];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let mut is_pivot = vec![false; n_cols];
    pivots.iter().for_each(|&c| is_pivot[c] = true);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for f in (0..n_cols).filter(|&c| !is_pivot[c]) {
        let mut v = vec![0.0; n_cols];
        v[f] = 1.0;
        for (i, &pc) in pivots.iter().enumerate() {
            v[pc] = -a[i][f];
        }
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = l2_norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

/// `Σ_{best k} ‖z_G‖₂ / Σ_G ‖z_G‖₂`, with `0/0 = 0`.
pub fn kernel_mass_ratio(model: &GroupModel, z: &[f64], k: usize) -> Result<f64> {
    let norms = model.group_norms(z)?;
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let top = model.best_k_block_support(z, k)?;
    let mass: f64 = top.indices().iter().map(|&gi| norms[gi]).sum();
    Ok(mass / total)
}

/// Sample random kernel vectors of the materialized `X` and check the
/// group-mass inequality against the certified `ε`.
pub fn verify_kernel_lemma(
    x: &BipartiteExpander,
    model: &GroupModel,
    k: usize,
    epsilon: &EpsilonCertificate,
    trials: usize,
    seed: u64,
) -> Result<KernelLemmaReport> {
    if x.n_cols() != model.p() {
        return Err(Error::ShapeMismatch {
            expected: x.n_cols(),
            actual: model.p(),
        });
    }
    if x.n_rows() > MAX_KERNEL_DIM || x.n_cols() > MAX_KERNEL_DIM {
        return Err(Error::Domain(format!(
            "kernel check materializes X; n = {} and p = {} must be <= {MAX_KERNEL_DIM}",
            x.n_rows(),
            x.n_cols()
        )));
    }
    if epsilon.k != k {
        return Err(Error::Model(format!(
            "epsilon certificate is for k = {}, not k = {k}",
            epsilon.k
        )));
    }
    let basis = kernel_basis(&x.to_dense(), x.n_cols());
    let factor = kernel_lemma_factor(epsilon.epsilon, model.group_size());
    let mut report = KernelLemmaReport {
        k,
        epsilon: epsilon.epsilon,
        certified: epsilon.certified,
        kernel_dim: basis.len(),
        samples: 0,
        bound_factor: factor,
        max_ratio: 0.0,
        violations: 0,
        max_relative_residual: 0.0,
        vacuous: basis.is_empty() || factor.is_none_or(|f| f >= 1.0),
    };
    if basis.is_empty() {
        return Ok(report);
    }
    for trial in 0..trials {
        let mut rng = seed::rng(seed::derive(seed, seed::stream::KERNEL, trial as u64));
        let mut z = vec![0.0; x.n_cols()];
        for b in &basis {
            let c: f64 = StandardNormal.sample(&mut rng);
            z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += c * bi);
        }
        let residual = l2_norm(&x.matvec(&z)?) / l2_norm(&z);
        if residual > RESIDUAL_TOL {
            return Err(Error::Domain(format!(
                "kernel sample {trial} has relative residual {residual:e} > {RESIDUAL_TOL:e}"
            )));
        }
        report.max_relative_residual = report.max_relative_residual.max(residual);
        let ratio = kernel_mass_ratio(model, &z, k)?;
        report.max_ratio = report.max_ratio.max(ratio);
        if factor.is_some_and(|f| ratio > f + 1e-12) {
            report.violations += 1;
        }
        report.samples += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::certify_epsilon;
    use crate::expander::ExpansionMode;
    use nalgebra::DMatrix;

    #[test]
    fn basis_of_a_known_matrix() {
        // x + y + z = 0 has a two-dimensional kernel.
        let basis = kernel_basis(&[vec![1.0, 1.0, 1.0]], 3);
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!((b.iter().sum::<f64>()).abs() < 1e-14);
            assert!((l2_norm(b) - 1.0).abs() < 1e-14);
        }
        let dot: f64 = basis[0].iter().zip(&basis[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-14);
        assert!(kernel_basis(&[vec![1.0, 0.0], vec![0.0, 2.0]], 2).is_empty());
        assert_eq!(kernel_basis(&[vec![0.0, 0.0]], 2).len(), 2);
    }

    #[test]
    fn dimension_matches_svd_rank() {
        for seed in 0..10 {
            let x = BipartiteExpander::construct_random(40, 20, 4, seed).unwrap();
            let dense = x.to_dense();
            let basis = kernel_basis(&dense, 40);
            let m = DMatrix::from_fn(20, 40, |i, j| dense[i][j]);
            let rank = m.svd(false, false).rank(1e-9);
            assert_eq!(basis.len(), 40 - rank);
            for b in &basis {
                let r = l2_norm(&x.matvec(b).unwrap());
                assert!(r < 1e-12);
            }
        }
    }

    #[test]
    fn zero_vector_ratio_is_zero() {
        let model = GroupModel::consecutive(8, 2).unwrap();
        assert_eq!(kernel_mass_ratio(&model, &[0.0; 8], 2).unwrap(), 0.0);
        let z = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(kernel_mass_ratio(&model, &z, 1).unwrap(), 0.5);
    }

    #[test]
    fn full_rank_is_vacuous() {
        let cols = (0..12u32).map(|c| vec![c]).collect();
        let x = BipartiteExpander::from_columns(12, cols).unwrap();
        let model = GroupModel::consecutive(12, 3).unwrap();
        let c = certify_epsilon(&x, &model, 1, ExpansionMode::exhaustive()).unwrap();
        let r = verify_kernel_lemma(&x, &model, 1, &c, 100, 0).unwrap();
        assert_eq!(r.kernel_dim, 0);
        assert_eq!(r.samples, 0);
        assert!(r.vacuous);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn random_instance_has_no_violations() {
        let x = BipartiteExpander::construct_random(40, 20, 4, 3).unwrap();
        let model = GroupModel::consecutive(40, 4).unwrap();
        let c = certify_epsilon(&x, &model, 2, ExpansionMode::exhaustive()).unwrap();
        let r = verify_kernel_lemma(&x, &model, 2, &c, 200, 1).unwrap();
        assert_eq!(r.kernel_dim, 20);
        assert_eq!(r.samples, 200);
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio > 0.0 && r.max_ratio <= 1.0);
        assert!(r.max_relative_residual <= RESIDUAL_TOL);
    }

    #[test]
    fn oversized_matrix_is_refused() {
        let x = BipartiteExpander::construct_random(300, 20, 2, 0).unwrap();
        let model = GroupModel::consecutive(300, 3).unwrap();
        let c = certify_epsilon(&x, &model, 1, ExpansionMode::exhaustive()).unwrap();
        assert!(matches!(
            verify_kernel_lemma(&x, &model, 1, &c, 1, 0),
            Err(Error::Domain(_))
        ));
    }
}
