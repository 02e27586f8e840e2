//! Closed-form error-bound constants and their empirical verification.
//!
//! Constants that do not exist (non-positive denominator) are `None`.

mod grid;
mod kernel;
mod probability;
mod theorem;

pub use grid::{feasibility_grid, psi, write_feasibility_csv, FeasibilityRow, PsiParams};
pub use kernel::{
    kernel_basis, kernel_mass_ratio, verify_kernel_lemma, KernelLemmaReport, MAX_KERNEL_DIM,
};
pub use probability::{
    estimate_expansion_probability, ExpansionProbabilityEstimate, ExpansionProbabilityParams,
    ProbabilityMode,
};
pub use theorem::{certify_epsilon, verify_theorem1, BoundCertificate, EpsilonCertificate};

use crate::error::{Error, Result};

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} must lie in (0, 1/2)"
        )));
    }
    Ok(())
}

fn check_g(g: usize) -> Result<()> {
    if g == 0 {
        return Err(Error::Domain("group size g must be >= 1".into()));
    }
    Ok(())
}

/// `ε < 1/(2(1+2g))`, the sign test of the denominator below done against
/// the exact threshold so boundary values are classified consistently.
pub(crate) fn is_feasible(epsilon: f64, g: usize) -> bool {
    epsilon < 1.0 / (2.0 * (1.0 + 2.0 * g as f64))
}

/// `1 − 4εg/(1−2ε)`, for `ε ∈ [0, 1/2)`.
pub(crate) fn denominator(epsilon: f64, g: usize) -> f64 {
    1.0 - 4.0 * epsilon * g as f64 / (1.0 - 2.0 * epsilon)
}

/// `2 / (1 − 4εg/(1−2ε))`, the l2,1 approximation constant.
pub fn theorem1_constant(epsilon: f64, g: usize) -> Result<Option<f64>> {
    check_epsilon(epsilon)?;
    check_g(g)?;
    Ok(is_feasible(epsilon, g).then(|| 2.0 / denominator(epsilon, g)))
}

/// `1 / (1 − 4εg/(1−2ε))`, the multiplier on the residual term of the noisy bound.
pub fn noise_constant(epsilon: f64, g: usize) -> Result<Option<f64>> {
    check_epsilon(epsilon)?;
    check_g(g)?;
    Ok(is_feasible(epsilon, g).then(|| 1.0 / denominator(epsilon, g)))
}

/// `2√g / (1 − 4ε/(1−2ε))`: the plain-sparsity l1 constant carried over to
/// the l2,1 norm through `‖v‖₁ ≤ √g‖v‖_{2,1}`.
pub fn naive_l1_constant(epsilon: f64, g: usize) -> Result<Option<f64>> {
    check_epsilon(epsilon)?;
    check_g(g)?;
    Ok(is_feasible(epsilon, 1).then(|| 2.0 * (g as f64).sqrt() / denominator(epsilon, 1)))
}

/// Largest admissible `ε` for the group bound and for the plain l1 bound:
/// `(1/(2(1+2g)), 1/6)`.
pub fn feasibility_region(g: usize) -> Result<(f64, f64)> {
    check_g(g)?;
    Ok((1.0 / (2.0 * (1.0 + 2.0 * g as f64)), 1.0 / 6.0))
}

/// `2εg/(1−2ε)`, the kernel-mass fraction bound; `None` when `ε ≥ 1/2`.
pub fn kernel_lemma_factor(epsilon: f64, g: usize) -> Option<f64> {
    (epsilon < 0.5).then(|| 2.0 * epsilon * g as f64 / (1.0 - 2.0 * epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_examples() {
        let c = theorem1_constant(0.02, 10).unwrap().unwrap();
        assert!((c - 12.0).abs() < 1e-12);
        assert_eq!(theorem1_constant(0.05, 10).unwrap(), None);
        let n = noise_constant(0.02, 10).unwrap().unwrap();
        assert!((n - 6.0).abs() < 1e-12);
        assert!(theorem1_constant(0.0, 1).is_err());
        assert!(theorem1_constant(0.5, 1).is_err());
        assert!(theorem1_constant(0.1, 0).is_err());
        assert!(naive_l1_constant(-0.1, 1).is_err());
    }

    #[test]
    fn g1_boundary_is_one_sixth() {
        assert!(theorem1_constant(1.0 / 6.0 - 1e-9, 1).unwrap().is_some());
        assert_eq!(theorem1_constant(1.0 / 6.0 + 1e-9, 1).unwrap(), None);
        assert_eq!(naive_l1_constant(1.0 / 6.0, 1).unwrap(), None);
        assert!(naive_l1_constant(1.0 / 6.0 - 1e-9, 1).unwrap().is_some());
    }

    #[test]
    fn naive_limit_is_two_sqrt_g() {
        let c = naive_l1_constant(1e-12, 4).unwrap().unwrap();
        assert!((c - 4.0).abs() < 1e-9);
    }

    #[test]
    fn feasibility_values_are_exact() {
        assert_eq!(feasibility_region(1).unwrap(), (1.0 / 6.0, 1.0 / 6.0));
        assert_eq!(feasibility_region(10).unwrap(), (1.0 / 42.0, 1.0 / 6.0));
        let mut prev = f64::INFINITY;
        for g in 1..200 {
            let (ours, theirs) = feasibility_region(g).unwrap();
            assert!(ours < prev);
            assert_eq!(theirs, 1.0 / 6.0);
            prev = ours;
        }
        assert!(feasibility_region(0).is_err());
    }

    #[test]
    fn grid_scan_of_the_constant() {
        for g in 1..=20 {
            let (edge, _) = feasibility_region(g).unwrap();
            let mut prev = 0.0;
            for i in 1..1000 {
                let eps = edge * i as f64 / 1000.0;
                let c = theorem1_constant(eps, g).unwrap().expect("inside region");
                assert!(c >= 2.0 && c.is_finite());
                assert!(c > prev, "constant must increase in epsilon");
                prev = c;
            }
            let near = theorem1_constant(edge * (1.0 - 1e-9), g).unwrap().unwrap();
            assert!(near > 1e8);
            for i in 0..100 {
                let eps = edge + (0.5 - edge) * (i as f64 + 0.5) / 100.0;
                assert_eq!(theorem1_constant(eps, g).unwrap(), None);
            }
        }
    }

    #[test]
    fn g1_reduces_to_plain_constant() {
        for i in 1..1000 {
            let eps = i as f64 / 1000.0 / 6.0;
            let a = theorem1_constant(eps, 1).unwrap().unwrap();
            let b = naive_l1_constant(eps, 1).unwrap().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_factor_relation() {
        // C1 = 2 / (1 − 2·factor)
        for g in [1, 3, 10] {
            let eps = feasibility_region(g).unwrap().0 / 2.0;
            let f = kernel_lemma_factor(eps, g).unwrap();
            let c = theorem1_constant(eps, g).unwrap().unwrap();
            assert!((c - 2.0 / (1.0 - 2.0 * f)).abs() < 1e-12 * c);
        }
        assert_eq!(kernel_lemma_factor(0.5, 1), None);
        assert_eq!(kernel_lemma_factor(0.0, 5), Some(0.0));
    }
}
