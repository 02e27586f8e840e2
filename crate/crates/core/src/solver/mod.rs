//! Matvec-only primal-dual solvers for l1 and l2,1 basis pursuit.
//!
//! Problems have the form `min ‖β‖ subject to Xβ ∈ C` where the norm is l1
//! or the group l2,1 norm and `C` is `{y}`, an l1 ball around `y` or an l2
//! ball around `y`. They are solved with a Chambolle–Pock iteration that only
//! touches `X` through `apply` / `adjoint_apply`:
//!
//! ```text
//! v⁺ = prox_{σ ι_C*}(v + σ X β̄)
//! β⁺ = prox_{τ ‖·‖}(β − τ Xᵀ v⁺)
//! β̄  = 2β⁺ − β
//! ```
//!
//! with `τσ‖X‖² < 1`. The conjugate prox follows from Moreau's identity,
//! `prox_{σ ι_C*}(u) = u − σ·P_C(u/σ)`.

mod operator;
mod projection;

pub use operator::{make_gaussian, DenseMatrix, LinearOperator, OperatorKind, Scaled};
pub use projection::{project_l1_ball, project_l2_ball};

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_model::{l1_norm, l2_norm, soft_threshold_in_place, GroupModel};
use crate::error::{check_len, Error, Result};
use crate::seed;

/// Safety factor on the power-iteration norm estimate.
pub const OPNORM_SAFETY: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Equality,
    L1Ball { gamma: f64 },
    L2Ball { sigma: f64 },
}

pub struct RecoveryProblem<'a> {
    op: &'a dyn LinearOperator,
    y: Vec<f64>,
    model: Option<&'a GroupModel>,
    constraint: Constraint,
}

impl<'a> RecoveryProblem<'a> {
    /// `model = None` selects the plain l1 objective.
    pub fn new(
        op: &'a dyn LinearOperator,
        y: Vec<f64>,
        model: Option<&'a GroupModel>,
        constraint: Constraint,
    ) -> Result<Self> {
        check_len(op.n_rows(), y.len())?;
        if let Some(m) = model {
            check_len(op.n_cols(), m.p())?;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "observations contain non-finite values".into(),
            ));
        }
        match constraint {
            Constraint::L1Ball { gamma: r } | Constraint::L2Ball { sigma: r }
                if !(r >= 0.0 && r.is_finite()) =>
            {
                return Err(Error::Input(format!(
                    "ball radius {r} must be finite and >= 0"
                )));
            }
            _ => {}
        }
        Ok(Self {
            op,
            y,
            model,
            constraint,
        })
    }

    pub fn op(&self) -> &dyn LinearOperator {
        self.op
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn model(&self) -> Option<&GroupModel> {
        self.model
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        match self.model {
            Some(m) => m.l21_norm(beta).unwrap_or(f64::NAN),
            None => l1_norm(beta),
        }
    }

    /// Distance from `Xβ` to the constraint set, measured in the
    /// constraint's own norm (l2 for equality).
    fn infeasibility(&self, xb: &[f64]) -> f64 {
        let diff: Vec<f64> = xb.iter().zip(&self.y).map(|(a, b)| a - b).collect();
        match self.constraint {
            Constraint::Equality => l2_norm(&diff),
            Constraint::L1Ball { gamma } => (l1_norm(&diff) - gamma).max(0.0),
            Constraint::L2Ball { sigma } => (l2_norm(&diff) - sigma).max(0.0),
        }
    }
}

pub const DEFAULT_STEP_RATIO: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// `τ = r/L`, `σ = 1/(rL)`. Values well below 1 favor the dual; at 1 the
    /// l1 solves stall near feasibility.
    pub step_ratio: f64,
    pub norm_estimate_iters: usize,
    pub record_trace: bool,
    /// Convergence also requires the constraint violation of `Xβ` to be at
    /// most `feas_tol·‖y‖₂`; the step rule alone stops early when a small
    /// coordinate is still pinned at zero by the shrinkage.
    pub feas_tol: f64,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
    /// Wall-clock budget; the solve stops (unconverged) when exceeded.
    pub time_limit_secs: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            rel_tol: 1e-6,
            step_ratio: DEFAULT_STEP_RATIO,
            norm_estimate_iters: 100,
            record_trace: false,
            feas_tol: 1e-6,
            seed: 0,
            time_limit_secs: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!(
                "rel_tol = {} must be positive",
                self.rel_tol
            )));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "step_ratio = {} must be positive",
                self.step_ratio
            )));
        }
        if !(self.feas_tol >= 0.0) {
            return Err(Error::Config(format!(
                "feas_tol = {} must be >= 0",
                self.feas_tol
            )));
        }
        if self.norm_estimate_iters == 0 {
            return Err(Error::Config("norm_estimate_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub objective: f64,
    pub residual_l2: f64,
    pub step_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub beta_hat: Vec<f64>,
    /// Final dual iterate; `-Xᵀv` is a subgradient of the objective at
    /// `beta_hat` at convergence.
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub timed_out: bool,
    pub residual_l2: f64,
    pub residual_l1: f64,
    pub objective: f64,
    pub step_change: f64,
    pub opnorm: f64,
    pub wall_time_secs: f64,
    pub trace: Option<Vec<TraceEntry>>,
}

/// `‖Xβ − y‖₁` and `‖Xβ − y‖₂`.
pub fn residuals(problem: &RecoveryProblem<'_>, beta: &[f64]) -> Result<(f64, f64)> {
    let xb = problem.op.apply(beta)?;
    let diff: Vec<f64> = xb.iter().zip(&problem.y).map(|(a, b)| a - b).collect();
    Ok((l1_norm(&diff), l2_norm(&diff)))
}

/// Power iteration on `XᵀX` from a seeded Gaussian start; returns the
/// square root of the final Rayleigh quotient, which never exceeds `‖X‖₂`.
pub fn estimate_opnorm(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let p = op.n_cols();
    let mut rng = seed::rng(seed::derive(seed, seed::stream::POWER, 0));
    let mut x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut xv = vec![0.0; op.n_rows()];
    let mut w = vec![0.0; p];
    let norm = l2_norm(&x);
    if norm == 0.0 {
        return 0.0;
    }
    x.iter_mut().for_each(|v| *v /= norm);
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        op.apply_into(&x, &mut xv);
        lambda = xv.iter().map(|v| v * v).sum::<f64>();
        op.adjoint_into(&xv, &mut w);
        let wn = l2_norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi = wi / wn;
        }
    }
    lambda.sqrt()
}

fn dual_prox(constraint: Constraint, y: &[f64], u: &mut [f64], sigma: f64) {
    match constraint {
        Constraint::Equality => {
            for (ui, yi) in u.iter_mut().zip(y) {
                *ui -= sigma * yi;
            }
        }
        Constraint::L1Ball { gamma } | Constraint::L2Ball { sigma: gamma } => {
            let shifted: Vec<f64> = u.iter().zip(y).map(|(ui, yi)| ui / sigma - yi).collect();
            let proj = match constraint {
                Constraint::L1Ball { .. } => project_l1_ball(&shifted, gamma),
                _ => project_l2_ball(&shifted, gamma),
            };
            for ((ui, yi), pi) in u.iter_mut().zip(y).zip(&proj) {
                *ui -= sigma * (yi + pi);
            }
        }
    }
}

pub fn solve(problem: &RecoveryProblem<'_>, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    let start = Instant::now();
    let op = problem.op;
    let (n, p) = (op.n_rows(), op.n_cols());

    let mut opnorm = estimate_opnorm(op, config.norm_estimate_iters, config.seed);
    if opnorm == 0.0 {
        opnorm = 1.0;
    }
    let l = OPNORM_SAFETY * opnorm;
    let tau = config.step_ratio / l;
    let sigma = 1.0 / (config.step_ratio * l);

    let mut x = vec![0.0; p];
    let mut x_new = vec![0.0; p];
    let mut kx = vec![0.0; n];
    let mut kx_new = vec![0.0; n];
    let mut kx_bar = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut ktv = vec![0.0; p];
    let mut trace = config.record_trace.then(Vec::new);

    let y_norm = l2_norm(&problem.y);
    let mut iterations = 0;
    let mut converged = false;
    let mut timed_out = false;
    let mut step_change = f64::INFINITY;

    for it in 1..=config.max_iter {
        iterations = it;
        for (vi, kb) in v.iter_mut().zip(&kx_bar) {
            *vi += sigma * kb;
        }
        dual_prox(problem.constraint, &problem.y, &mut v, sigma);

        op.adjoint_into(&v, &mut ktv);
        for ((xn, xi), g) in x_new.iter_mut().zip(&x).zip(&ktv) {
            *xn = xi - tau * g;
        }
        match problem.model {
            Some(m) => m.group_soft_threshold_in_place(&mut x_new, tau)?,
            None => soft_threshold_in_place(&mut x_new, tau),
        }

        op.apply_into(&x_new, &mut kx_new);
        for ((kb, a), b) in kx_bar.iter_mut().zip(&kx_new).zip(&kx) {
            *kb = 2.0 * a - b;
        }

        let diff = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let new_norm = l2_norm(&x_new);
        step_change = if new_norm > 0.0 {
            diff / new_norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut kx, &mut kx_new);

        if let Some(tr) = trace.as_mut() {
            let diff: Vec<f64> = kx.iter().zip(&problem.y).map(|(a, b)| a - b).collect();
            tr.push(TraceEntry {
                objective: problem.objective(&x),
                residual_l2: l2_norm(&diff),
                step_change,
            });
        }

        if step_change <= config.rel_tol && problem.infeasibility(&kx) <= config.feas_tol * y_norm {
            converged = true;
            break;
        }
        if let Some(limit) = config.time_limit_secs {
            if it % 16 == 0 && start.elapsed().as_secs_f64() > limit {
                timed_out = true;
                break;
            }
        }
    }

    let diff: Vec<f64> = kx.iter().zip(&problem.y).map(|(a, b)| a - b).collect();
    Ok(SolverReport {
        objective: problem.objective(&x),
        residual_l2: l2_norm(&diff),
        residual_l1: l1_norm(&diff),
        beta_hat: x,
        dual: v,
        iterations,
        converged,
        timed_out,
        step_change,
        opnorm,
        wall_time_secs: start.elapsed().as_secs_f64(),
        trace,
    })
}

#[cfg(test)]
mod tests;
