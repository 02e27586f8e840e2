//! Experiment drivers, result persistence and the command line.
//!
//! Every trial is a pure function of its derived seed, so experiments can be
//! run on a thread pool and still produce identical files once the rows are
//! sorted by key. Only the `time_ms` style columns vary between runs.

mod cli;
mod cov;
mod image;
mod phase;
mod theory;
mod timing;

pub use cli::{cli_main, parse_n_grid, EXIT_VIOLATION};
pub use cov::{run_cov_sketch, CovSketchConfig, CovSketchReport};
pub use image::{synthetic_block_image, BlockImage, BlockImageConfig};
pub use phase::{run_phase, PhaseOutput};
pub use theory::{
    run_verify_theory, verify_supplied_matrix, InstanceSummary, KernelInstance, Replay,
    SuppliedMatrixReport, TheoryBundle, TheoryConfig, Violation, ViolationKind,
};
pub use timing::{matvec_cost_ratio, run_timing, TimingOutput, TimingSummaryRow};

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_model::{l2_norm, BlockSupport, GroupModel};
use crate::error::{Error, Result};
use crate::expander::{required_degree, BipartiteExpander, DegreeRule};
use crate::seed;
use crate::solver::{
    make_gaussian, solve, Constraint, LinearOperator, RecoveryProblem, Scaled, SolverConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// `‖β̂ − β*‖₂` at or below this counts as exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-5;

/// Default budget for dense Gaussian operators, in matrix entries (1.6 GB).
pub const DEFAULT_MAX_DENSE_ENTRIES: usize = 200_000_000;

/// Columns that hold wall-clock measurements.
pub const TIMING_COLUMNS: &[&str] = &[
    "time_ms",
    "median_time_ms",
    "median_time_expander_ms",
    "median_time_gaussian_ms",
    "speedup",
    "matvec_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Phase,
    Timing,
    CovSketch,
    VerifyTheory,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Phase => "phase",
            Experiment::Timing => "timing",
            Experiment::CovSketch => "cov-sketch",
            Experiment::VerifyTheory => "verify-theory",
        }
    }
}

/// Measurement counts, either explicit or as fractions of `p` (rounded up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NGrid {
    Counts(Vec<usize>),
    Fractions(Vec<f64>),
}

impl NGrid {
    /// `⌈{0.10, 0.15, …, 0.50}·p⌉`.
    pub fn default_phase() -> Self {
        NGrid::Fractions((0..9).map(|i| (10 + 5 * i) as f64 / 100.0).collect())
    }

    pub fn resolve(&self, p: usize) -> Vec<usize> {
        match self {
            NGrid::Counts(c) => c.clone(),
            NGrid::Fractions(f) => f.iter().map(|&x| ceil_fraction(x, p)).collect(),
        }
    }
}

/// `⌈x·p⌉`, ignoring rounding noise in the product.
pub fn ceil_fraction(x: f64, p: usize) -> usize {
    let v = x * p as f64;
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Expander,
    Gaussian,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Expander => "expander",
            MatrixKind::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixChoice {
    Expander,
    Gaussian,
    Both,
}

impl MatrixChoice {
    pub fn kinds(self) -> Vec<MatrixKind> {
        match self {
            MatrixChoice::Expander => vec![MatrixKind::Expander],
            MatrixChoice::Gaussian => vec![MatrixKind::Gaussian],
            MatrixChoice::Both => vec![MatrixKind::Expander, MatrixKind::Gaussian],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    L1,
    L21,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::L1 => "l1",
            Objective::L21 => "l21",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveChoice {
    L1,
    L21,
    Both,
}

impl ObjectiveChoice {
    pub fn objectives(self) -> Vec<Objective> {
        match self {
            ObjectiveChoice::L1 => vec![Objective::L1],
            ObjectiveChoice::L21 => vec![Objective::L21],
            ObjectiveChoice::Both => vec![Objective::L1, Objective::L21],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeChoice {
    Explicit(usize),
    /// `⌈22·ln(M)/g⌉`
    Experimental,
}

/// Distribution of the nonzero entries of the planted signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Gaussian,
    /// Independent ±1 entries.
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub g: usize,
    pub k: usize,
    pub n_grid: NGrid,
    /// True when `n_grid` was not given explicitly.
    pub n_grid_is_default: bool,
    /// Ambient dimensions for the timing experiment; `M = p/g` per entry.
    pub p_grid: Vec<usize>,
    pub matrix_kind: MatrixChoice,
    pub objective: ObjectiveChoice,
    pub d_rule: DegreeChoice,
    pub signal: SignalKind,
    pub monte_carlo: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
    /// Per-solve wall-clock budget in seconds; timed-out solves are failures.
    pub wall_clock_cap: Option<f64>,
    pub max_dense_entries: usize,
}

impl ExperimentConfig {
    /// p = 1000, M = 100, g = 10, k = 8, d = ⌈22·ln M/g⌉ = 11, both objectives
    /// on expanders, `n ∈ ⌈{0.10, …, 0.50}·p⌉`, 10 trials per point.
    pub fn phase_default() -> Self {
        Self {
            experiment: Experiment::Phase,
            p: 1000,
            m: 100,
            g: 10,
            k: 8,
            n_grid: NGrid::default_phase(),
            n_grid_is_default: true,
            p_grid: Vec::new(),
            matrix_kind: MatrixChoice::Expander,
            objective: ObjectiveChoice::Both,
            d_rule: DegreeChoice::Experimental,
            signal: SignalKind::Gaussian,
            monte_carlo: 10,
            master_seed: 0,
            solver: SolverConfig::default(),
            wall_clock_cap: None,
            max_dense_entries: DEFAULT_MAX_DENSE_ENTRIES,
        }
    }

    /// p ∈ {10⁴, 2·10⁴}, g = 10, k = 30 (k·g = 300), `n = ⌈0.4·p⌉`, l2,1
    /// objective on both matrix kinds.
    pub fn timing_default() -> Self {
        Self {
            experiment: Experiment::Timing,
            p: 10_000,
            m: 1000,
            g: 10,
            k: 30,
            n_grid: NGrid::Fractions(vec![0.4]),
            n_grid_is_default: true,
            p_grid: vec![10_000, 20_000],
            matrix_kind: MatrixChoice::Both,
            objective: ObjectiveChoice::L21,
            d_rule: DegreeChoice::Experimental,
            signal: SignalKind::Gaussian,
            monte_carlo: 3,
            master_seed: 0,
            solver: SolverConfig::default(),
            wall_clock_cap: None,
            max_dense_entries: DEFAULT_MAX_DENSE_ENTRIES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.monte_carlo == 0 {
            return Err(Error::Config("monte_carlo must be >= 1".into()));
        }
        if let NGrid::Fractions(f) = &self.n_grid {
            if let Some(x) = f.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                return Err(Error::Config(format!("n-grid fraction {x} outside (0, 1]")));
            }
        }
        let ps: Vec<usize> = if self.experiment == Experiment::Timing && !self.p_grid.is_empty() {
            self.p_grid.clone()
        } else {
            vec![self.p]
        };
        for &p in &ps {
            if p == 0 || self.g == 0 || p % self.g != 0 {
                return Err(Error::Config(format!(
                    "p = {p} must be a positive multiple of g = {}",
                    self.g
                )));
            }
            let m = p / self.g;
            if self.k == 0 || self.k > m {
                return Err(Error::Config(format!("k = {} must lie in 1..={m}", self.k)));
            }
            let grid = self.n_grid.resolve(p);
            if grid.is_empty() {
                return Err(Error::Config("n-grid is empty".into()));
            }
            if let Some(n) = grid.iter().find(|&&n| n == 0 || n > p) {
                return Err(Error::Config(format!(
                    "n-grid entry {n} outside 1..=p = {p}"
                )));
            }
        }
        if self.experiment != Experiment::Timing && self.m * self.g != self.p {
            return Err(Error::Config(format!(
                "M·g = {}·{} does not equal p = {}",
                self.m, self.g, self.p
            )));
        }
        if let DegreeChoice::Explicit(0) = self.d_rule {
            return Err(Error::Config("degree must be >= 1".into()));
        }
        if let Some(cap) = self.wall_clock_cap {
            if !(cap > 0.0) {
                return Err(Error::Config(format!(
                    "wall-clock cap {cap} must be positive"
                )));
            }
        }
        self.solver.validate()
    }

    pub fn degree(&self, m: usize) -> Result<usize> {
        match self.d_rule {
            DegreeChoice::Explicit(d) => Ok(d),
            DegreeChoice::Experimental => {
                required_degree(DegreeRule::Experimental, m, self.k, self.g, 0.0, 0.0)
            }
        }
    }

    pub(crate) fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            seed,
            time_limit_secs: self.wall_clock_cap.or(self.solver.time_limit_secs),
            ..self.solver.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema: u32,
    pub experiment: String,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub g: usize,
    pub k: usize,
    pub method: String,
    pub matrix: String,
    pub success: bool,
    pub err_l2: f64,
    pub err_l21: f64,
    pub residual_l1: f64,
    pub time_ms: f64,
    pub iters: usize,
    pub converged: bool,
}

impl TrialRecord {
    fn sort_key(&self) -> (usize, usize, String, String, usize) {
        (
            self.p,
            self.n,
            self.method.clone(),
            self.matrix.clone(),
            self.trial,
        )
    }
}

/// Rows that break `success ⟺ err_l2 ≤ 1e-5`. A success above the threshold
/// is always an error; a failure below it is allowed only for unconverged
/// (timed-out) solves.
pub fn inconsistent_records(records: &[TrialRecord]) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let below = r.err_l2 <= SUCCESS_THRESHOLD;
            (r.success && !below) || (!r.success && below && r.converged)
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema: u32,
    pub experiment: String,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub g: usize,
    pub k: usize,
    pub method: String,
    pub matrix: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_err_l2: f64,
    pub median_err_l2: f64,
    pub median_iters: f64,
    pub median_time_ms: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// One row per `(p, n, method, matrix)`, in sorted order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = Vec::new();
    for chunk in
        sorted.chunk_by(|a, b| (a.p, a.n, &a.method, &a.matrix) == (b.p, b.n, &b.method, &b.matrix))
    {
        let first = chunk[0];
        let trials = chunk.len();
        let successes = chunk.iter().filter(|r| r.success).count();
        let mut errs: Vec<f64> = chunk.iter().map(|r| r.err_l2).collect();
        let mut iters: Vec<f64> = chunk.iter().map(|r| r.iters as f64).collect();
        let mut times: Vec<f64> = chunk.iter().map(|r| r.time_ms).collect();
        out.push(SummaryRow {
            schema: SCHEMA_VERSION,
            experiment: first.experiment.clone(),
            n: first.n,
            p: first.p,
            m: first.m,
            g: first.g,
            k: first.k,
            method: first.method.clone(),
            matrix: first.matrix.clone(),
            trials,
            successes,
            success_rate: successes as f64 / trials as f64,
            mean_err_l2: errs.iter().sum::<f64>() / trials as f64,
            median_err_l2: median(&mut errs),
            median_iters: median(&mut iters),
            median_time_ms: median(&mut times),
        });
    }
    out
}

/// `‖β*‖₂ = 1` signal supported on `k` uniformly chosen groups.
pub fn plant_signal(
    model: &GroupModel,
    k: usize,
    kind: SignalKind,
    seed: u64,
) -> Result<(Vec<f64>, BlockSupport)> {
    let mut rng = seed::rng(seed::derive(seed, seed::stream::SUPPORT, 0));
    let groups = sample(&mut rng, model.num_groups(), k).into_vec();
    let support = BlockSupport::new(groups, model.num_groups())?;
    let mut rng = seed::rng(seed::derive(seed, seed::stream::SIGNAL, 0));
    let mut beta = vec![0.0; model.p()];
    for c in model.columns_of(&support) {
        beta[c] = match kind {
            SignalKind::Gaussian => StandardNormal.sample(&mut rng),
            SignalKind::Sign => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }
    let norm = l2_norm(&beta);
    beta.iter_mut().for_each(|b| *b /= norm);
    Ok((beta, support))
}

/// `X/d` for expanders, `N(0, 1/n)` entries for the Gaussian baseline.
pub fn build_operator(
    kind: MatrixKind,
    p: usize,
    n: usize,
    d: usize,
    seed: u64,
    max_dense_entries: usize,
) -> Result<Box<dyn LinearOperator>> {
    Ok(match kind {
        MatrixKind::Expander => {
            let x = BipartiteExpander::construct_random(p, n, d, seed)?;
            Box::new(Scaled::new(x, 1.0 / d as f64))
        }
        MatrixKind::Gaussian => Box::new(make_gaussian(n, p, seed, max_dense_entries)?),
    })
}

/// Measurement-free description of one trial, shared by the drivers.
pub(crate) struct TrialSpec<'a> {
    pub experiment: Experiment,
    pub trial: usize,
    pub seed: u64,
    pub model: &'a GroupModel,
    pub k: usize,
    pub matrix: MatrixKind,
    pub objective: Objective,
}

pub(crate) fn run_trial(
    spec: &TrialSpec<'_>,
    op: &dyn LinearOperator,
    beta_star: &[f64],
    solver: &SolverConfig,
) -> Result<TrialRecord> {
    let y = op.apply(beta_star)?;
    let model = match spec.objective {
        Objective::L1 => None,
        Objective::L21 => Some(spec.model),
    };
    let problem = RecoveryProblem::new(op, y, model, Constraint::Equality)?;
    let start = Instant::now();
    let report = solve(&problem, solver)?;
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let diff: Vec<f64> = report
        .beta_hat
        .iter()
        .zip(beta_star)
        .map(|(a, b)| a - b)
        .collect();
    let err_l2 = l2_norm(&diff);
    Ok(TrialRecord {
        schema: SCHEMA_VERSION,
        experiment: spec.experiment.as_str().into(),
        trial: spec.trial,
        seed: spec.seed,
        n: op.n_rows(),
        p: op.n_cols(),
        m: spec.model.num_groups(),
        g: spec.model.group_size(),
        k: spec.k,
        method: spec.objective.as_str().into(),
        matrix: spec.matrix.as_str().into(),
        success: err_l2 <= SUCCESS_THRESHOLD && !report.timed_out,
        err_l2,
        err_l21: spec.model.l21_norm(&diff)?,
        residual_l1: report.residual_l1,
        time_ms,
        iters: report.iterations,
        converged: report.converged,
    })
}

pub(crate) fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by_key(|r| r.sort_key());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Rows of any serializable type as CSV (header from field names).
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON counterpart of [`strip_csv_columns`]: removes the named keys at any
/// depth and re-serializes.
pub fn strip_json_fields(text: &str, fields: &[&str]) -> Result<String> {
    fn strip(v: &mut serde_json::Value, fields: &[&str]) {
        match v {
            serde_json::Value::Object(map) => {
                map.retain(|k, _| !fields.contains(&k.as_str()));
                map.values_mut().for_each(|x| strip(x, fields));
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(|x| strip(x, fields)),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(text)?;
    strip(&mut v, fields);
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Write `<stem>.csv|json` into `dir`, creating it if needed.
pub fn write_rows<T: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    format: OutputFormat,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (path, text) = match format {
        OutputFormat::Csv => (dir.join(format!("{stem}.csv")), rows_to_csv(rows)?),
        OutputFormat::Json => (
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(rows)?,
        ),
    };
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Drop the named columns from CSV text; used to compare runs while
/// ignoring wall-clock measurements.
pub fn strip_csv_columns(text: &str, columns: &[&str]) -> Result<String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !columns.contains(&&headers[i]))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in r.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
