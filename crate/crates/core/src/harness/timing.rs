use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::block_model::GroupModel;
use crate::error::{Error, Result};
use crate::seed;

use super::{
    build_operator, median, plant_signal, run_trial, sort_records, Experiment, ExperimentConfig,
    MatrixKind, TrialRecord, TrialSpec, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummaryRow {
    pub schema: u32,
    pub p: usize,
    pub n: usize,
    pub d: usize,
    pub g: usize,
    pub k: usize,
    pub kg: usize,
    pub repeats: usize,
    pub median_time_expander_ms: Option<f64>,
    pub median_time_gaussian_ms: Option<f64>,
    /// Gaussian over expander median wall time.
    pub speedup: Option<f64>,
    pub median_err_expander: Option<f64>,
    pub median_err_gaussian: Option<f64>,
    pub converged_expander: Option<bool>,
    pub converged_gaussian: Option<bool>,
    /// Dense over sparse time for one apply plus one adjoint.
    pub matvec_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<TimingSummaryRow>,
}

/// Wall time of `reps` apply+adjoint pairs with a dense Gaussian `n×p`
/// matrix divided by the same for a degree-`d` expander.
pub fn matvec_cost_ratio(
    p: usize,
    n: usize,
    d: usize,
    reps: usize,
    seed: u64,
    max_dense_entries: usize,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let sparse = build_operator(MatrixKind::Expander, p, n, d, seed, max_dense_entries)?;
    let dense = build_operator(MatrixKind::Gaussian, p, n, d, seed, max_dense_entries)?;
    let x = vec![1.0; p];
    let v = vec![1.0; n];
    let mut out_n = vec![0.0; n];
    let mut out_p = vec![0.0; p];
    let mut time = |op: &dyn crate::solver::LinearOperator, reps: usize| {
        let start = Instant::now();
        for _ in 0..reps {
            op.apply_into(&x, &mut out_n);
            op.adjoint_into(&v, &mut out_p);
        }
        start.elapsed().as_secs_f64()
    };
    let dense_time = time(dense.as_ref(), reps);
    // The sparse products are far cheaper; repeat them more for resolution.
    let sparse_reps = reps * 20;
    let sparse_time = time(sparse.as_ref(), sparse_reps) / 20.0;
    Ok(dense_time / sparse_time.max(f64::MIN_POSITIVE))
}

/// Median solve time and final error per matrix kind, `n = ⌈0.4·p⌉` by
/// default. Runs sequentially so wall times are not perturbed by other
/// trials.
pub fn run_timing(config: &ExperimentConfig) -> Result<TimingOutput> {
    if config.experiment != Experiment::Timing {
        return Err(Error::Config(format!(
            "run_timing called with a {} configuration",
            config.experiment.as_str()
        )));
    }
    config.validate()?;
    let ps = if config.p_grid.is_empty() {
        vec![config.p]
    } else {
        config.p_grid.clone()
    };
    let kinds = config.matrix_kind.kinds();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &p in &ps {
        let m = p / config.g;
        let model = GroupModel::consecutive(p, config.g)?;
        let d = config.degree(m)?;
        for n in config.n_grid.resolve(p) {
            if d > n {
                return Err(Error::Config(format!("degree d = {d} exceeds n = {n}")));
            }
            if kinds.contains(&MatrixKind::Gaussian)
                && n.saturating_mul(p) > config.max_dense_entries
            {
                return Err(Error::Resource(format!(
                    "dense {n} x {p} gaussian needs {} entries, budget is {}; lower p or raise --max-dense-entries",
                    n.saturating_mul(p),
                    config.max_dense_entries
                )));
            }
            let point_seed = seed::derive(
                config.master_seed,
                seed::stream::TRIAL,
                (p as u64) << 32 | n as u64,
            );
            let mut point = Vec::new();
            for trial in 0..config.monte_carlo {
                let seed = seed::derive(point_seed, seed::stream::TRIAL, trial as u64);
                let (beta, _) = plant_signal(&model, config.k, config.signal, seed)?;
                let solver = config.solver_config(seed::derive(seed, seed::stream::POWER, 0));
                for (mi, &kind) in kinds.iter().enumerate() {
                    let op = build_operator(
                        kind,
                        p,
                        n,
                        d,
                        seed::derive(seed, seed::stream::MATRIX, mi as u64),
                        config.max_dense_entries,
                    )?;
                    for objective in config.objective.objectives() {
                        let spec = TrialSpec {
                            experiment: Experiment::Timing,
                            trial,
                            seed,
                            model: &model,
                            k: config.k,
                            matrix: kind,
                            objective,
                        };
                        point.push(run_trial(&spec, op.as_ref(), &beta, &solver)?);
                    }
                }
            }
            let stat = |kind: MatrixKind, f: &dyn Fn(&TrialRecord) -> f64| -> Option<f64> {
                let mut v: Vec<f64> = point
                    .iter()
                    .filter(|r| r.matrix == kind.as_str())
                    .map(f)
                    .collect();
                (!v.is_empty()).then(|| median(&mut v))
            };
            let converged = |kind: MatrixKind| -> Option<bool> {
                let v: Vec<bool> = point
                    .iter()
                    .filter(|r| r.matrix == kind.as_str())
                    .map(|r| r.converged)
                    .collect();
                (!v.is_empty()).then(|| v.iter().all(|&c| c))
            };
            let te = stat(MatrixKind::Expander, &|r| r.time_ms);
            let tg = stat(MatrixKind::Gaussian, &|r| r.time_ms);
            let matvec_ratio = if kinds.len() == 2 {
                Some(matvec_cost_ratio(
                    p,
                    n,
                    d,
                    3,
                    point_seed,
                    config.max_dense_entries,
                )?)
            } else {
                None
            };
            summary.push(TimingSummaryRow {
                schema: SCHEMA_VERSION,
                p,
                n,
                d,
                g: config.g,
                k: config.k,
                kg: config.k * config.g,
                repeats: config.monte_carlo,
                median_time_expander_ms: te,
                median_time_gaussian_ms: tg,
                speedup: te.zip(tg).map(|(e, g)| g / e),
                median_err_expander: stat(MatrixKind::Expander, &|r| r.err_l2),
                median_err_gaussian: stat(MatrixKind::Gaussian, &|r| r.err_l2),
                converged_expander: converged(MatrixKind::Expander),
                converged_gaussian: converged(MatrixKind::Gaussian),
                matvec_ratio,
            });
            records.extend(point);
        }
    }
    sort_records(&mut records);
    Ok(TimingOutput { records, summary })
}
