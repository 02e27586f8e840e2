use serde::{Deserialize, Serialize};

use crate::block_model::{l1_norm, GroupModel};
use crate::error::{check_len, Error, Result};
use crate::expander::{check_expansion, BipartiteExpander, ExpansionMode};

use super::{denominator, is_feasible};

/// Expansion constant used by the bound checks.
///
/// The kernel argument applies the expansion property to unions of two
/// k-block sets, so the certificate is the worst deficit over every set of
/// `t ≤ min(2k, M)` groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub k: usize,
    pub max_blocks: usize,
    pub epsilon: f64,
    pub sets_checked: u128,
    /// True only when every set size was enumerated exhaustively.
    pub certified: bool,
}

pub fn certify_epsilon(
    x: &BipartiteExpander,
    model: &GroupModel,
    k: usize,
    mode: ExpansionMode,
) -> Result<EpsilonCertificate> {
    if k == 0 || k > model.num_groups() {
        return Err(Error::Domain(format!(
            "k = {k} must lie in 1..={}",
            model.num_groups()
        )));
    }
    let max_blocks = (2 * k).min(model.num_groups());
    let mut epsilon = 0.0f64;
    let mut sets_checked = 0u128;
    let mut certified = true;
    for t in 1..=max_blocks {
        let r = check_expansion(x, model, t, mode)?;
        epsilon = epsilon.max(r.epsilon);
        sets_checked = sets_checked.saturating_add(r.sets_checked);
        certified &= r.exhaustive;
    }
    Ok(EpsilonCertificate {
        k,
        max_blocks,
        epsilon,
        sets_checked,
        certified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub epsilon: f64,
    pub g: usize,
    pub k: usize,
    pub d: usize,
    pub certified: bool,
    pub feasible: bool,
    pub constant_c1: Option<f64>,
    pub noise_constant: Option<f64>,
    /// `‖β* − β*_{best k}‖_{2,1}`
    pub tail: f64,
    /// `‖X(β* − β̂)‖₁` with the unnormalized binary `X`.
    pub gamma: f64,
    /// `max(0, ‖β̂‖_{2,1} − ‖β*‖_{2,1})`; zero at an exact minimizer.
    pub norm_excess: f64,
    pub predicted_error: Option<f64>,
    pub measured_error: f64,
    pub scale: f64,
    pub satisfied: bool,
}

impl BoundCertificate {
    /// A certified, feasible bound that the measurement exceeds.
    pub fn is_violation(&self) -> bool {
        self.certified && self.feasible && !self.satisfied
    }
}

/// Evaluate the l2,1 error bound for one `(β*, β̂)` pair.
///
/// The prediction is `C1·tail + N·(w·γ + δ)` with `N = C1/2`,
/// `δ = norm_excess` and `w = max(1, 2/((1−2ε)d))`. For `δ = 0` and
/// `d ≥ 2/(1−2ε)` this is exactly the noisy-case bound; `γ = 0` gives the
/// noiseless one. `δ` absorbs solver inexactness in `‖β̂‖_{2,1} ≤ ‖β*‖_{2,1}`
/// and `w` keeps the residual term valid for very small `d`.
pub fn verify_theorem1(
    x: &BipartiteExpander,
    model: &GroupModel,
    k: usize,
    epsilon: &EpsilonCertificate,
    beta_star: &[f64],
    beta_hat: &[f64],
) -> Result<BoundCertificate> {
    if x.n_cols() != model.p() {
        return Err(Error::ShapeMismatch {
            expected: x.n_cols(),
            actual: model.p(),
        });
    }
    if !model.has_unit_weights() {
        return Err(Error::Model(
            "the bound is stated for unit group weights".into(),
        ));
    }
    if epsilon.k != k {
        return Err(Error::Model(format!(
            "epsilon certificate is for k = {}, not k = {k}",
            epsilon.k
        )));
    }
    check_len(model.p(), beta_star.len())?;
    check_len(model.p(), beta_hat.len())?;
    let diff: Vec<f64> = beta_star.iter().zip(beta_hat).map(|(a, b)| a - b).collect();
    let measured = model.l21_norm(&diff)?;
    let tail = model.tail_l21(beta_star, k)?;
    let gamma = l1_norm(&x.matvec(&diff)?);
    let norm_star = model.l21_norm(beta_star)?;
    let norm_hat = model.l21_norm(beta_hat)?;
    let norm_excess = (norm_hat - norm_star).max(0.0);
    let scale = norm_star + norm_hat;

    let eps = epsilon.epsilon;
    let g = model.group_size();
    let feasible = is_feasible(eps, g);
    let (c1, nc, predicted) = if feasible {
        let den = denominator(eps, g);
        let c1 = 2.0 / den;
        let nc = 1.0 / den;
        let w = (2.0 / ((1.0 - 2.0 * eps) * x.degree() as f64)).max(1.0);
        (
            Some(c1),
            Some(nc),
            Some(c1 * tail + nc * (w * gamma + norm_excess)),
        )
    } else {
        (None, None, None)
    };
    let satisfied = predicted.is_some_and(|p| measured <= p + 1e-9 * scale);
    Ok(BoundCertificate {
        epsilon: eps,
        g,
        k,
        d: x.degree(),
        certified: epsilon.certified,
        feasible,
        constant_c1: c1,
        noise_constant: nc,
        tail,
        gamma,
        norm_excess,
        predicted_error: predicted,
        measured_error: measured,
        scale,
        satisfied,
    })
}
