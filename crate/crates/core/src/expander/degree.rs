//! Left-degree and measurement-count formulas.
//!
//! The absolute constants of the sampling-complexity argument are not known,
//! so the theoretical forms take the constant as a parameter. Natural
//! logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub enum DegreeRule {
    /// `d = ⌈22·ln(M)/g⌉`, the rule used by the benchmark experiments.
    #[default]
    Experimental,
    /// `d = ⌈C·ln(k·M/η)/(g·ε)⌉`.
    Refined { constant: f64 },
    /// `d = ⌈C·ln(k·M)/(g·η·ε)⌉`.
    Headline { constant: f64 },
}


/// Ceiling that does not bump values sitting on an integer up to rounding.
fn ceil_count(value: f64) -> usize {
    let nearest = value.round();
    if (value - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as usize
    } else {
        value.ceil() as usize
    }
}

pub fn required_degree(
    rule: DegreeRule,
    m: usize,
    k: usize,
    g: usize,
    epsilon: f64,
    eta: f64,
) -> Result<usize> {
    if m < 2 || g == 0 {
        return Err(Error::Domain(format!(
            "degree rule needs M >= 2 and g >= 1 (M = {m}, g = {g})"
        )));
    }
    let raw = match rule {
        DegreeRule::Experimental => 22.0 * (m as f64).ln() / g as f64,
        DegreeRule::Refined { constant } | DegreeRule::Headline { constant } => {
            if k == 0 || k > m {
                return Err(Error::Domain(format!("k = {k} outside 1..=M = {m}")));
            }
            if !(epsilon > 0.0 && epsilon < 0.5) {
                return Err(Error::Domain(format!(
                    "epsilon = {epsilon} outside (0, 1/2)"
                )));
            }
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::Domain(format!("eta = {eta} outside (0, 1)")));
            }
            if !(constant > 0.0 && constant.is_finite()) {
                return Err(Error::Domain(format!(
                    "constant = {constant} must be positive"
                )));
            }
            let km = (k * m) as f64;
            match rule {
                DegreeRule::Refined { .. } => constant * (km / eta).ln() / (g as f64 * epsilon),
                _ => constant * km.ln() / (g as f64 * eta * epsilon),
            }
        }
    };
    Ok(ceil_count(raw).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementCount {
    pub n: usize,
    /// The formula asked for at least `p` rows and `n` was clamped to `p`.
    pub clamped: bool,
}

/// `n = ⌈C₂·d·k·g/ε⌉`, clamped to `p` when given.
pub fn required_measurements(
    d: usize,
    k: usize,
    g: usize,
    epsilon: f64,
    constant: f64,
    p: Option<usize>,
) -> Result<MeasurementCount> {
    if d == 0 || k == 0 || g == 0 {
        return Err(Error::Domain(format!(
            "d, k, g must be positive (d = {d}, k = {k}, g = {g})"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} outside (0, 1/2)"
        )));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::Domain(format!(
            "constant = {constant} must be positive"
        )));
    }
    let n = ceil_count(constant * (d * k * g) as f64 / epsilon);
    Ok(match p {
        Some(p) if n >= p => MeasurementCount {
            n: p,
            clamped: true,
        },
        _ => MeasurementCount { n, clamped: false },
    })
}
