use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{feasibility_region, naive_l1_constant, theorem1_constant};

/// Fixed parameters of `ψ(d, t, ε)` for a grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub t: usize,
    pub mu: f64,
}

impl Default for PsiParams {
    fn default() -> Self {
        Self {
            m: 100,
            d: 11,
            n: 400,
            t: 1,
            mu: 1.0,
        }
    }
}

fn entropy(x: f64) -> f64 {
    let h = |v: f64| if v <= 0.0 { 0.0 } else { -v * v.ln() };
    h(x) + h(1.0 - x)
}

/// `M·H(t/M) − εdtg·log(μεn/(dtg))`; the union bound on the failure
/// probability for `t`-block sets is `exp(ψ)`.
pub fn psi(params: &PsiParams, g: usize, epsilon: f64) -> f64 {
    let s = (params.d * params.t * g) as f64;
    params.m as f64 * entropy(params.t as f64 / params.m as f64)
        - epsilon * s * (params.mu * epsilon * params.n as f64 / s).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRow {
    pub epsilon: f64,
    pub g: usize,
    pub ours_feasible: bool,
    pub c1: Option<f64>,
    pub naive_c: Option<f64>,
    pub psi_value: f64,
}

/// Both error-bound constants and `ψ` over an `(ε, g)` grid.
pub fn feasibility_grid(
    epsilons: &[f64],
    gs: &[usize],
    psi_params: &PsiParams,
) -> Result<Vec<FeasibilityRow>> {
    if psi_params.m == 0 || psi_params.t == 0 || psi_params.t > psi_params.m || psi_params.d == 0 {
        return Err(Error::Domain("psi needs M >= t >= 1 and d >= 1".into()));
    }
    let mut rows = Vec::with_capacity(epsilons.len() * gs.len());
    for &g in gs {
        let (edge, _) = feasibility_region(g)?;
        for &epsilon in epsilons {
            if !(epsilon > 0.0 && epsilon < 0.5) {
                return Err(Error::Domain(format!(
                    "grid epsilon {epsilon} outside (0, 1/2)"
                )));
            }
            rows.push(FeasibilityRow {
                epsilon,
                g,
                ours_feasible: epsilon < edge,
                c1: theorem1_constant(epsilon, g)?,
                naive_c: naive_l1_constant(epsilon, g)?,
                psi_value: psi(psi_params, g, epsilon),
            });
        }
    }
    Ok(rows)
}

/// CSV with columns `epsilon,g,ours_feasible,c1,naive_c,psi_value`;
/// missing constants are written as `inf`.
pub fn write_feasibility_csv<W: Write>(rows: &[FeasibilityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epsilon",
        "g",
        "ours_feasible",
        "c1",
        "naive_c",
        "psi_value",
    ])?;
    let fmt = |c: Option<f64>| c.map_or_else(|| "inf".to_string(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.g.to_string(),
            r.ours_feasible.to_string(),
            fmt(r.c1),
            fmt(r.naive_c),
            r.psi_value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
