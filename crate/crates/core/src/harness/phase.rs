use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_model::GroupModel;
use crate::error::{Error, Result};
use crate::seed;

use super::{
    build_operator, plant_signal, run_trial, sort_records, summarize, Experiment, ExperimentConfig,
    SummaryRow, TrialRecord, TrialSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Seed of trial `trial` at measurement count `n`.
pub(crate) fn instance_seed(master: u64, n: usize, trial: usize) -> u64 {
    seed::derive(
        seed::derive(master, seed::stream::TRIAL, n as u64),
        seed::stream::TRIAL,
        trial as u64,
    )
}

/// Success rate versus `n` for every matrix kind and objective.
///
/// Within a trial all methods see the same `β*` and the same matrix, so the
/// curves are paired comparisons.
pub fn run_phase(config: &ExperimentConfig) -> Result<PhaseOutput> {
    if config.experiment != Experiment::Phase {
        return Err(Error::Config(format!(
            "run_phase called with a {} configuration",
            config.experiment.as_str()
        )));
    }
    config.validate()?;
    let model = GroupModel::consecutive(config.p, config.g)?;
    let d = config.degree(config.m)?;
    let grid = config.n_grid.resolve(config.p);
    if let Some(&n) = grid.iter().find(|&&n| d > n) {
        return Err(Error::Config(format!("degree d = {d} exceeds n = {n}")));
    }
    let items: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&n| (0..config.monte_carlo).map(move |t| (n, t)))
        .collect();
    let nested: Vec<Vec<TrialRecord>> = items
        .par_iter()
        .map(|&(n, trial)| -> Result<Vec<TrialRecord>> {
            let seed = instance_seed(config.master_seed, n, trial);
            let (beta, _) = plant_signal(&model, config.k, config.signal, seed)?;
            let solver = config.solver_config(seed::derive(seed, seed::stream::POWER, 0));
            let mut out = Vec::new();
            for (mi, kind) in config.matrix_kind.kinds().into_iter().enumerate() {
                let op = build_operator(
                    kind,
                    config.p,
                    n,
                    d,
                    seed::derive(seed, seed::stream::MATRIX, mi as u64),
                    config.max_dense_entries,
                )?;
                for objective in config.objective.objectives() {
                    let spec = TrialSpec {
                        experiment: Experiment::Phase,
                        trial,
                        seed,
                        model: &model,
                        k: config.k,
                        matrix: kind,
                        objective,
                    };
                    out.push(run_trial(&spec, op.as_ref(), &beta, &solver)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<TrialRecord> = nested.into_iter().flatten().collect();
    sort_records(&mut records);
    let summary = summarize(&records);
    Ok(PhaseOutput { records, summary })
}
