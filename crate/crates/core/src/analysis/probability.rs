//! Monte Carlo estimate of the probability that a random left-`d`-regular
//! graph expands every small block set.
//!
//! For `t ≤ k` blocks there are `C(M, t)` distinct block sets of `t·g`
//! columns each. A union bound over all of them, with the single-set tail
//! `P{Ω_S^c} ≤ (μεn/(ds))^{−εds}`, gives a failure probability of at most
//! `Σ_t exp(ψ(d, t, ε))` with
//! `ψ = M·H(t/M) − εdtg·log(μεn/(dtg))` and `H(x) < −x log x + x`.
//! The constants `μ` and `C̃ > 1` (validity needs `n ≥ C̃ds/ε`) are not
//! pinned down, so this module estimates the probability directly; `ψ` is
//! available from the grid helpers for comparison.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_model::GroupModel;
use crate::error::{Error, Result};
use crate::expander::{binomial, BipartiteExpander, Combinations, NeighborhoodCounter};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionProbabilityParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub g: usize,
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    /// Target failure probability; the estimate is compared against `1 − η`.
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbabilityMode {
    /// Every `t`-subset for every `t ≤ k`, refusing above `cap` sets per matrix.
    PerMatrixExhaustive { cap: u128 },
    /// `sets_per_size` random `t`-subsets for each `t ≤ k`.
    PerMatrixSampled { sets_per_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionProbabilityEstimate {
    pub params: ExpansionProbabilityParams,
    pub mode: ProbabilityMode,
    pub trials: usize,
    pub successes: usize,
    pub estimate: f64,
    pub target: f64,
    pub meets_target: bool,
    pub sets_per_trial: u128,
}

fn check_params(p: &ExpansionProbabilityParams) -> Result<()> {
    if p.m == 0 || p.g == 0 || p.n == 0 {
        return Err(Error::Domain("M, g and n must be positive".into()));
    }
    if p.k == 0 || p.k > p.m {
        return Err(Error::Domain(format!(
            "k = {} must lie in 1..={}",
            p.k, p.m
        )));
    }
    if p.d == 0 || p.d > p.n {
        return Err(Error::InvalidDegree {
            degree: p.d,
            n_rows: p.n,
        });
    }
    if !(p.epsilon >= 0.0 && p.epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon = {} must lie in [0, 1)",
            p.epsilon
        )));
    }
    if !(p.eta > 0.0 && p.eta < 1.0) {
        return Err(Error::Domain(format!("eta = {} must lie in (0, 1)", p.eta)));
    }
    Ok(())
}

/// Does one matrix expand every checked set? Returns `(ok, sets_checked)`.
fn trial(
    x: &BipartiteExpander,
    model: &GroupModel,
    params: &ExpansionProbabilityParams,
    mode: ProbabilityMode,
    set_seed: u64,
) -> (bool, u128) {
    let mut counter = NeighborhoodCounter::new(x, model);
    let mut ok = true;
    let mut checked = 0u128;
    let mut rng = seed::rng(set_seed);
    for t in 1..=params.k {
        // |Γ| is an integer, so compare against the ceiling of the threshold
        // with a small allowance for rounding in (1 − ε).
        let need = (1.0 - params.epsilon) * (params.d * t * params.g) as f64;
        let need = (need - 1e-9).ceil() as usize;
        let mut check = |set: &[usize]| {
            checked += 1;
            if counter.count(set) < need {
                ok = false;
            }
        };
        match mode {
            ProbabilityMode::PerMatrixExhaustive { .. } => {
                Combinations::new(params.m, t).for_each(|s| check(&s));
            }
            ProbabilityMode::PerMatrixSampled { sets_per_size } => {
                for _ in 0..sets_per_size {
                    let s = sample(&mut rng, params.m, t).into_vec();
                    check(&s);
                }
            }
        }
    }
    (ok, checked)
}

pub fn estimate_expansion_probability(
    params: ExpansionProbabilityParams,
    trials: usize,
    seed: u64,
    mode: ProbabilityMode,
) -> Result<ExpansionProbabilityEstimate> {
    check_params(&params)?;
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let per_matrix: u128 = match mode {
        ProbabilityMode::PerMatrixExhaustive { cap } => {
            let count =
                (1..=params.k).fold(0u128, |acc, t| acc.saturating_add(binomial(params.m, t)));
            if count > cap {
                return Err(Error::CapExceeded { count, cap });
            }
            count
        }
        ProbabilityMode::PerMatrixSampled { sets_per_size } => {
            if sets_per_size == 0 {
                return Err(Error::Domain("sets_per_size must be >= 1".into()));
            }
            (sets_per_size * params.k) as u128
        }
    };
    let model = GroupModel::consecutive(params.m * params.g, params.g)?;
    let outcomes: Vec<(bool, u128)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let x = BipartiteExpander::construct_random(
                params.m * params.g,
                params.n,
                params.d,
                seed::derive(seed, seed::stream::MATRIX, i as u64),
            )
            .expect("parameters validated above");
            trial(
                &x,
                &model,
                &params,
                mode,
                seed::derive(seed, seed::stream::SAMPLES, i as u64),
            )
        })
        .collect();
    debug_assert!(outcomes.iter().all(|&(_, c)| c == per_matrix));
    let successes = outcomes.iter().filter(|o| o.0).count();
    let estimate = successes as f64 / trials as f64;
    let target = 1.0 - params.eta;
    Ok(ExpansionProbabilityEstimate {
        params,
        mode,
        trials,
        successes,
        estimate,
        target,
        meets_target: estimate >= target,
        sets_per_trial: per_matrix,
    })
}
