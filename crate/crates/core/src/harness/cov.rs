//! Recovery of a group-sparse empirical covariance from sketched samples.
//!
//! Samples `z_i ∈ R^{√p}` are observed only through `w_i = X̂z_i`. The
//! sketched covariance satisfies `Σ̂_w = X̂Σ̂_zX̂ᵀ`, i.e.
//! `vec(Σ̂_w) = (X̂⊗X̂)·vec(Σ̂_z)`, so `vec(Σ̂_z)` is recovered by group basis
//! pursuit with the tensor operator. Groups on `vec(Σ)` are consecutive runs
//! of the column-major vectorization; the default size `√p` makes each
//! group one column of `Σ`.

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_model::{l2_norm, BlockSupport, GroupModel};
use crate::error::{Error, Result};
use crate::expander::{BipartiteExpander, TensorExpander};
use crate::seed;
use crate::solver::{solve, Constraint, LinearOperator, RecoveryProblem, Scaled, SolverConfig};

/// Smallest eigenvalue enforced on the planted covariance.
pub const MIN_EIGENVALUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSketchConfig {
    pub sqrt_p: usize,
    pub sqrt_n: usize,
    pub d: usize,
    pub q: usize,
    /// Group size on `vec(Σ)`; `None` means `√p` (columns of `Σ`).
    pub cov_group_g: Option<usize>,
    /// Active covariates; `None` draws `k` of them from the seed.
    pub true_support: Option<Vec<usize>>,
    pub k: usize,
    /// Off-diagonal correlation among active covariates.
    pub rho: f64,
    /// Use `X̂ = I` (requires `√n = √p` and `d = 1`).
    pub identity_sketch: bool,
    /// Groups whose norm exceeds this fraction of the largest group norm
    /// count as recovered.
    pub support_threshold: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for CovSketchConfig {
    fn default() -> Self {
        Self {
            sqrt_p: 32,
            sqrt_n: 16,
            d: 4,
            q: 5000,
            cov_group_g: None,
            true_support: None,
            k: 3,
            rho: 0.5,
            identity_sketch: false,
            support_threshold: 1e-3,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl CovSketchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sqrt_p == 0 || self.sqrt_n == 0 || self.sqrt_n > self.sqrt_p {
            return Err(Error::Config(format!(
                "need 1 <= sqrt_n <= sqrt_p (sqrt_n = {}, sqrt_p = {})",
                self.sqrt_n, self.sqrt_p
            )));
        }
        if self.q == 0 {
            return Err(Error::Config("q must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.identity_sketch && (self.sqrt_n != self.sqrt_p || self.d != 1) {
            return Err(Error::Config(
                "identity sketch needs sqrt_n = sqrt_p and d = 1".into(),
            ));
        }
        if !(self.support_threshold > 0.0 && self.support_threshold < 1.0) {
            return Err(Error::Config("support_threshold must lie in (0, 1)".into()));
        }
        if let Some(g) = self.cov_group_g {
            let p = self.sqrt_p * self.sqrt_p;
            if g == 0 || !p.is_multiple_of(g) {
                return Err(Error::Config(format!(
                    "group size {g} does not divide p = {p}"
                )));
            }
        }
        match &self.true_support {
            Some(s) if s.iter().any(|&j| j >= self.sqrt_p) => {
                Err(Error::Config("true support index outside 0..sqrt_p".into()))
            }
            None if self.k == 0 || self.k > self.sqrt_p => Err(Error::Config(format!(
                "k = {} must lie in 1..={}",
                self.k, self.sqrt_p
            ))),
            _ => self.solver.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSketchReport {
    pub sqrt_p: usize,
    pub sqrt_n: usize,
    pub d: usize,
    pub q: usize,
    pub active_covariates: Vec<usize>,
    pub planted_groups: Vec<usize>,
    pub recovered_groups: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    /// `‖β̂ − vec(Σ̂_z)‖₂`
    pub err_l2: f64,
    pub rel_err: f64,
    /// `max |(X̂⊗X̂)vec(Σ̂_z) − vec(Σ̂_w)|`; zero up to rounding.
    pub sketch_consistency: f64,
    /// Added to the diagonal when the planted covariance was too close to
    /// singular.
    pub diagonal_boost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `(1/q)·Σ_i a_i a_iᵀ`, column-major.
fn empirical_covariance(samples: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut cov = vec![0.0; dim * dim];
    for s in samples {
        for (j, &sj) in s.iter().enumerate() {
            if sj != 0.0 {
                for (i, &si) in s.iter().enumerate() {
                    cov[j * dim + i] += si * sj;
                }
            }
        }
    }
    let q = samples.len() as f64;
    cov.iter_mut().for_each(|c| *c /= q);
    cov
}

pub fn run_cov_sketch(config: &CovSketchConfig) -> Result<CovSketchReport> {
    config.validate()?;
    let sp = config.sqrt_p;
    let p = sp * sp;
    let base = if config.identity_sketch {
        BipartiteExpander::from_columns(sp, (0..sp as u32).map(|c| vec![c]).collect())?
    } else {
        BipartiteExpander::construct_random(
            sp,
            config.sqrt_n,
            config.d,
            seed::derive(config.seed, seed::stream::MATRIX, 0),
        )?
    };
    let active: Vec<usize> = match &config.true_support {
        Some(s) => {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        }
        None => {
            let mut rng = seed::rng(seed::derive(config.seed, seed::stream::SUPPORT, 0));
            let mut s = sample(&mut rng, sp, config.k).into_vec();
            s.sort_unstable();
            s
        }
    };

    // Σ_JJ = (1−ρ)I + ρ11ᵀ has smallest eigenvalue 1−ρ (for ρ ≥ 0).
    let diagonal_boost = (MIN_EIGENVALUE - (1.0 - config.rho)).max(0.0);
    if diagonal_boost > 0.0 {
        log::warn!(
            "planted covariance has smallest eigenvalue {} < {MIN_EIGENVALUE}; boosting the diagonal by {diagonal_boost}",
            1.0 - config.rho
        );
    }
    let a = (1.0 - config.rho + diagonal_boost).sqrt();
    let b = config.rho.sqrt();
    let mut rng = seed::rng(seed::derive(config.seed, seed::stream::SAMPLES, 0));
    let mut z_samples = Vec::with_capacity(config.q);
    let mut w_samples = Vec::with_capacity(config.q);
    for _ in 0..config.q {
        let shared: f64 = StandardNormal.sample(&mut rng);
        let mut z = vec![0.0; sp];
        for &j in &active {
            let u: f64 = StandardNormal.sample(&mut rng);
            z[j] = a * u + b * shared;
        }
        w_samples.push(base.matvec(&z)?);
        z_samples.push(z);
    }
    let sigma_z = empirical_covariance(&z_samples, sp);
    let sigma_w = empirical_covariance(&w_samples, base.n_rows());

    let tensor = TensorExpander::new(base);
    let sketch_consistency = tensor
        .matvec(&sigma_z)?
        .iter()
        .zip(&sigma_w)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let d2 = tensor.degree() as f64;
    let op = Scaled::new(tensor, 1.0 / d2);
    let y: Vec<f64> = sigma_w.iter().map(|v| v / d2).collect();
    let model = GroupModel::consecutive(p, config.cov_group_g.unwrap_or(sp))?;
    let problem = RecoveryProblem::new(
        &op as &dyn LinearOperator,
        y,
        Some(&model),
        Constraint::Equality,
    )?;
    let report = solve(&problem, &config.solver)?;

    let mut truth = vec![0.0; p];
    for &j in &active {
        for &i in &active {
            truth[j * sp + i] = 1.0;
        }
    }
    let planted = model.active_groups(&truth)?;
    let norms = model.group_norms(&report.beta_hat)?;
    let top = norms.iter().copied().fold(0.0, f64::max);
    let recovered: Vec<usize> = (0..norms.len())
        .filter(|&gi| top > 0.0 && norms[gi] > config.support_threshold * top)
        .collect();
    let recovered = BlockSupport::new(recovered, model.num_groups())?;
    let hits = recovered
        .indices()
        .iter()
        .filter(|&&gi| planted.contains(gi))
        .count();
    let precision = if recovered.is_empty() {
        1.0
    } else {
        hits as f64 / recovered.len() as f64
    };
    let recall = if planted.is_empty() {
        1.0
    } else {
        hits as f64 / planted.len() as f64
    };
    let diff: Vec<f64> = report
        .beta_hat
        .iter()
        .zip(&sigma_z)
        .map(|(x, y)| x - y)
        .collect();
    let err_l2 = l2_norm(&diff);
    Ok(CovSketchReport {
        sqrt_p: sp,
        sqrt_n: config.sqrt_n,
        d: config.d,
        q: config.q,
        active_covariates: active,
        planted_groups: planted.indices().to_vec(),
        recovered_groups: recovered.indices().to_vec(),
        precision,
        recall,
        err_l2,
        rel_err: err_l2 / l2_norm(&sigma_z).max(f64::MIN_POSITIVE),
        sketch_consistency,
        diagonal_boost,
        iterations: report.iterations,
        converged: report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_covariance_by_hand() {
        let c = empirical_covariance(&[vec![1.0, 2.0], vec![3.0, 0.0]], 2);
        assert_eq!(c, vec![5.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn identity_sketch_is_exact() {
        let cfg = CovSketchConfig {
            sqrt_p: 8,
            sqrt_n: 8,
            d: 1,
            q: 200,
            identity_sketch: true,
            solver: SolverConfig {
                rel_tol: 1e-12,
                feas_tol: 1e-12,
                ..SolverConfig::default()
            },
            ..CovSketchConfig::default()
        };
        let r = run_cov_sketch(&cfg).unwrap();
        assert!(r.rel_err <= 1e-9, "{r:?}");
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.sketch_consistency, 0.0);
    }

    #[test]
    fn boost_and_validation() {
        let cfg = CovSketchConfig {
            sqrt_p: 8,
            sqrt_n: 6,
            d: 2,
            q: 50,
            rho: 0.95,
            ..CovSketchConfig::default()
        };
        let r = run_cov_sketch(&cfg).unwrap();
        assert!((r.diagonal_boost - 0.05).abs() < 1e-12);
        assert!(r.sketch_consistency < 1e-12);
        let bad = CovSketchConfig {
            sqrt_n: 9,
            ..cfg.clone()
        };
        assert!(run_cov_sketch(&bad).is_err());
        let bad = CovSketchConfig {
            identity_sketch: true,
            ..cfg.clone()
        };
        assert!(run_cov_sketch(&bad).is_err());
        let bad = CovSketchConfig {
            true_support: Some(vec![8]),
            ..cfg
        };
        assert!(run_cov_sketch(&bad).is_err());
    }
}
