use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::block_model::GroupModel;
use crate::error::{Error, Result};
use crate::expander::{check_expansion, BipartiteExpander, ExpansionMode, DEFAULT_EXHAUSTIVE_CAP};
use crate::seed;
use crate::solver::{solve, Constraint, RecoveryProblem, SolverConfig, DEFAULT_STEP_RATIO};

use super::{
    run_cov_sketch, run_phase, run_timing, run_verify_theory, verify_supplied_matrix, write_json,
    write_rows, CovSketchConfig, CovSketchReport, DegreeChoice, Experiment, ExperimentConfig,
    MatrixChoice, NGrid, ObjectiveChoice, OutputFormat, SignalKind, TheoryConfig, SCHEMA_VERSION,
};

/// Exit status for a bound or claim violation.
pub const EXIT_VIOLATION: i32 = 2;

const THREADS_ENV: &str = "EXPANDER_BP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "expander-bp",
    version,
    about = "Block-sparse recovery with sparse expander sketches"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (for `gen`, the matrix file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Worker threads; EXPANDER_BP_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatrixArg {
    Expander,
    Gaussian,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    L1,
    L21,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SignalArg {
    Gaussian,
    Sign,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Equality,
    L1Ball,
    L2Ball,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random left-d-regular expander and save it.
    Gen {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
    /// Measure the expansion constant of a saved matrix.
    CheckExpansion {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        g: usize,
        /// Number of blocks per set.
        #[arg(long)]
        k: usize,
        /// Random sets instead of exhaustive enumeration.
        #[arg(long)]
        sampled: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_CAP)]
        cap: u128,
    },
    /// Recover a signal from a saved matrix and observations.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        /// Observations: JSON array or whitespace/comma separated numbers.
        #[arg(long)]
        y: PathBuf,
        /// Group size for the l2,1 objective; omit for plain l1.
        #[arg(long)]
        g: Option<usize>,
        #[arg(long, value_enum, default_value_t = ConstraintArg::Equality)]
        constraint: ConstraintArg,
        /// Radius of the l1 or l2 ball constraint.
        #[arg(long, default_value_t = 0.0)]
        radius: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Success rate versus number of measurements.
    Phase(PhaseArgs),
    /// Expander versus dense Gaussian wall time.
    Timing(TimingArgs),
    /// Covariance recovery from sketched samples.
    CovSketch(CovArgs),
    /// Check the error bounds on certified small instances, or validate a
    /// supplied matrix.
    VerifyTheory(TheoryArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    /// Relative step-change stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Primal/dual step balance r: τ = r/L, σ = 1/(rL).
    #[arg(long, default_value_t = DEFAULT_STEP_RATIO)]
    step_ratio: f64,
    /// Per-solve wall-clock budget in seconds.
    #[arg(long)]
    wall_clock_cap: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            rel_tol: self.tol,
            step_ratio: self.step_ratio,
            time_limit_secs: self.wall_clock_cap,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct PhaseArgs {
    #[arg(long, default_value_t = 1000)]
    p: usize,
    /// Number of groups; defaults to p/g.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Group size; defaults to p/M, or 10 when neither is given.
    #[arg(long)]
    g: Option<usize>,
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// `a:b:step` or a comma list; entries below 1 are fractions of p.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    mc: usize,
    #[arg(long, value_enum, default_value_t = MatrixArg::Expander)]
    matrix: MatrixArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Both)]
    objective: ObjectiveArg,
    /// Explicit column degree; defaults to ⌈22·ln(M)/g⌉.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum, default_value_t = SignalArg::Gaussian)]
    signal: SignalArg,
    #[arg(long)]
    max_dense_entries: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct TimingArgs {
    /// Comma list of ambient dimensions.
    #[arg(long, default_value = "10000,20000")]
    p_grid: String,
    #[arg(long, default_value_t = 10)]
    g: usize,
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long, default_value_t = 3)]
    mc: usize,
    #[arg(long, value_enum, default_value_t = MatrixArg::Both)]
    matrix: MatrixArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::L21)]
    objective: ObjectiveArg,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    max_dense_entries: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct CovArgs {
    #[arg(long, default_value_t = 32)]
    sqrt_p: usize,
    #[arg(long, default_value_t = 16)]
    sqrt_n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 5000)]
    q: usize,
    /// Number of active covariates.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Group size on vec(Σ); defaults to √p.
    #[arg(long)]
    group_size: Option<usize>,
    /// Use the identity as the sketch.
    #[arg(long)]
    identity: bool,
    /// Independent repetitions.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// Validate this saved matrix instead of running the bundle.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Group size of the supplied matrix.
    #[arg(long, default_value_t = 3)]
    g: usize,
    /// Comma list of block counts.
    #[arg(long, default_value = "1,2,3")]
    k: String,
    /// Expansion constant claimed for the supplied matrix.
    #[arg(long)]
    claimed_epsilon: Option<f64>,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 60)]
    p: usize,
    #[arg(long, default_value_t = 3200)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 1e-4)]
    noise: f64,
    #[arg(long, default_value_t = 1000)]
    kernel_samples: usize,
}

/// Parse `a:b:step` (inclusive) or `a,b,c`. Any non-integer entry makes
/// the whole grid a list of fractions of `p`.
pub fn parse_n_grid(text: &str) -> std::result::Result<NGrid, String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad n-grid entry {s:?}: {e}"))
    };
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range {text:?} must be start:stop:step"));
        }
        let (a, b, s) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(s > 0.0) || b < a {
            return Err(format!("range {text:?} needs step > 0 and stop >= start"));
        }
        let count = ((b - a) / s + 1e-9).floor() as usize + 1;
        (0..count).map(|i| a + i as f64 * s).collect()
    } else {
        text.split(',')
            .map(parse)
            .collect::<std::result::Result<_, _>>()?
    };
    if values.is_empty() {
        return Err("n-grid is empty".into());
    }
    if values.iter().all(|v| v.fract() == 0.0 && *v >= 1.0) {
        Ok(NGrid::Counts(values.iter().map(|&v| v as usize).collect()))
    } else {
        Ok(NGrid::Fractions(values))
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad {what} entry {s:?}: {e}")))
        })
        .collect()
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| Error::Input(format!("bad number {s:?} in {}: {e}", path.display())))
        })
        .collect()
}

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    schema: u32,
    experiment: &'a str,
    version: &'a str,
    master_seed: u64,
    config: &'a C,
    notes: Vec<String>,
}

fn write_metadata<C: Serialize>(
    dir: &Path,
    experiment: Experiment,
    seed: u64,
    config: &C,
    notes: Vec<String>,
) -> Result<()> {
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            schema: SCHEMA_VERSION,
            experiment: experiment.as_str(),
            version: env!("CARGO_PKG_VERSION"),
            master_seed: seed,
            config,
            notes,
        },
    )
}

fn experiment_config(
    base: ExperimentConfig,
    n_grid: Option<&str>,
    d: Option<usize>,
    solver: &SolverArgs,
    seed: u64,
) -> Result<ExperimentConfig> {
    let mut cfg = base;
    if let Some(text) = n_grid {
        cfg.n_grid = parse_n_grid(text).map_err(Error::Config)?;
        cfg.n_grid_is_default = false;
    }
    if let Some(d) = d {
        cfg.d_rule = DegreeChoice::Explicit(d);
    }
    cfg.solver = solver.config();
    cfg.wall_clock_cap = solver.wall_clock_cap;
    cfg.master_seed = seed;
    Ok(cfg)
}

fn matrix_choice(m: MatrixArg) -> MatrixChoice {
    match m {
        MatrixArg::Expander => MatrixChoice::Expander,
        MatrixArg::Gaussian => MatrixChoice::Gaussian,
        MatrixArg::Both => MatrixChoice::Both,
    }
}

fn objective_choice(o: ObjectiveArg) -> ObjectiveChoice {
    match o {
        ObjectiveArg::L1 => ObjectiveChoice::L1,
        ObjectiveArg::L21 => ObjectiveChoice::L21,
        ObjectiveArg::Both => ObjectiveChoice::Both,
    }
}

fn grid_notes(cfg: &ExperimentConfig) -> Vec<String> {
    if cfg.n_grid_is_default {
        vec!["n-grid is the default ceil({0.10, 0.15, ..., 0.50}·p), a design choice".into()]
    } else {
        Vec::new()
    }
}

/// Flat per-repetition row for the covariance experiment.
#[derive(Serialize)]
struct CovRow {
    schema: u32,
    rep: usize,
    seed: u64,
    sqrt_p: usize,
    sqrt_n: usize,
    d: usize,
    q: usize,
    precision: f64,
    recall: f64,
    err_l2: f64,
    rel_err: f64,
    sketch_consistency: f64,
    diagonal_boost: f64,
    iters: usize,
    converged: bool,
}

#[derive(Serialize)]
struct CovSummary {
    schema: u32,
    reps: usize,
    mean_precision: f64,
    mean_recall: f64,
    mean_rel_err: f64,
}

fn run(cli: Cli) -> Result<i32> {
    let out = cli.out.clone();
    let out_dir = || out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let format: OutputFormat = cli.format.into();
    match cli.command {
        Command::Gen { p, n, d } => {
            let path = out.ok_or_else(|| Error::Config("gen needs --out <file>".into()))?;
            let x = BipartiteExpander::construct_random(p, n, d, cli.seed)?;
            x.save(&path)?;
            println!(
                "gen: wrote {n}x{p} expander with d = {d} ({} nonzeros) to {}",
                x.nnz(),
                path.display()
            );
            Ok(0)
        }
        Command::CheckExpansion {
            matrix,
            g,
            k,
            sampled,
            cap,
        } => {
            let x = BipartiteExpander::load(&matrix)?;
            let model = GroupModel::consecutive(x.n_cols(), g)?;
            let mode = match sampled {
                Some(trials) => ExpansionMode::Sampled {
                    trials,
                    seed: cli.seed,
                },
                None => ExpansionMode::Exhaustive { cap },
            };
            let report = check_expansion(&x, &model, k, mode)?;
            if let Some(dir) = &out {
                write_json(&dir.join("expansion.json"), &report)?;
            }
            println!(
                "check-expansion: epsilon = {:.6} over {} sets of {k} blocks ({})",
                report.epsilon,
                report.sets_checked,
                if report.exhaustive {
                    "exhaustive"
                } else {
                    "sampled"
                }
            );
            Ok(0)
        }
        Command::Solve {
            matrix,
            y,
            g,
            constraint,
            radius,
            solver,
        } => {
            let x = BipartiteExpander::load(&matrix)?;
            let y = read_vector(&y)?;
            let model = g
                .map(|g| GroupModel::consecutive(x.n_cols(), g))
                .transpose()?;
            let constraint = match constraint {
                ConstraintArg::Equality => Constraint::Equality,
                ConstraintArg::L1Ball => Constraint::L1Ball { gamma: radius },
                ConstraintArg::L2Ball => Constraint::L2Ball { sigma: radius },
            };
            let problem = RecoveryProblem::new(&x, y, model.as_ref(), constraint)?;
            let config = SolverConfig {
                seed: seed::derive(cli.seed, seed::stream::POWER, 0),
                ..solver.config()
            };
            let report = solve(&problem, &config)?;
            let dir = out_dir();
            match format {
                OutputFormat::Json => write_json(&dir.join("solution.json"), &report)?,
                OutputFormat::Csv => {
                    #[derive(Serialize)]
                    struct Entry {
                        index: usize,
                        value: f64,
                    }
                    let rows: Vec<Entry> = report
                        .beta_hat
                        .iter()
                        .enumerate()
                        .map(|(index, &value)| Entry { index, value })
                        .collect();
                    write_rows(&dir, "solution", &rows, format)?;
                }
            }
            println!(
                "solve: {} after {} iterations, objective {:.6e}, residual {:.3e}",
                if report.converged {
                    "converged"
                } else {
                    "stopped"
                },
                report.iterations,
                report.objective,
                report.residual_l2
            );
            Ok(0)
        }
        Command::Phase(a) => {
            let (m, g) = match (a.m, a.g) {
                (Some(m), Some(g)) => (m, g),
                (Some(m), None) if m > 0 && a.p % m == 0 => (m, a.p / m),
                (None, Some(g)) if g > 0 && a.p % g == 0 => (a.p / g, g),
                (None, None) if a.p % 10 == 0 => (a.p / 10, 10),
                _ => {
                    return Err(Error::Config(format!(
                        "cannot split p = {} into equal groups",
                        a.p
                    )))
                }
            };
            let mut cfg = experiment_config(
                ExperimentConfig {
                    p: a.p,
                    m,
                    g,
                    k: a.k,
                    monte_carlo: a.mc,
                    matrix_kind: matrix_choice(a.matrix),
                    objective: objective_choice(a.objective),
                    signal: match a.signal {
                        SignalArg::Gaussian => SignalKind::Gaussian,
                        SignalArg::Sign => SignalKind::Sign,
                    },
                    ..ExperimentConfig::phase_default()
                },
                a.n_grid.as_deref(),
                a.d,
                &a.solver,
                cli.seed,
            )?;
            if let Some(b) = a.max_dense_entries {
                cfg.max_dense_entries = b;
            }
            let result = run_phase(&cfg)?;
            let dir = out_dir();
            write_rows(&dir, "phase", &result.records, format)?;
            write_rows(&dir, "summary", &result.summary, format)?;
            write_metadata(&dir, Experiment::Phase, cli.seed, &cfg, grid_notes(&cfg))?;
            let successes = result.records.iter().filter(|r| r.success).count();
            println!(
                "phase: {} trials over {} grid points, {successes} successes; wrote {}",
                result.records.len(),
                cfg.n_grid.resolve(cfg.p).len(),
                dir.display()
            );
            Ok(0)
        }
        Command::Timing(a) => {
            let p_grid = parse_list(&a.p_grid, "p-grid")?;
            let first = *p_grid
                .first()
                .ok_or_else(|| Error::Config("p-grid is empty".into()))?;
            let mut cfg = experiment_config(
                ExperimentConfig {
                    p: first,
                    m: first / a.g.max(1),
                    g: a.g,
                    k: a.k,
                    p_grid,
                    monte_carlo: a.mc,
                    matrix_kind: matrix_choice(a.matrix),
                    objective: objective_choice(a.objective),
                    ..ExperimentConfig::timing_default()
                },
                a.n_grid.as_deref(),
                a.d,
                &a.solver,
                cli.seed,
            )?;
            if let Some(b) = a.max_dense_entries {
                cfg.max_dense_entries = b;
            }
            let result = run_timing(&cfg)?;
            let dir = out_dir();
            write_rows(&dir, "timing", &result.records, format)?;
            write_rows(&dir, "summary", &result.summary, format)?;
            write_metadata(&dir, Experiment::Timing, cli.seed, &cfg, Vec::new())?;
            let speedups: Vec<String> = result
                .summary
                .iter()
                .map(|s| match s.speedup {
                    Some(v) => format!("p={}: {v:.2}x", s.p),
                    None => format!("p={}: n/a", s.p),
                })
                .collect();
            println!(
                "timing: speedup {}; wrote {}",
                speedups.join(", "),
                dir.display()
            );
            Ok(0)
        }
        Command::CovSketch(a) => {
            if a.reps == 0 {
                return Err(Error::Config("reps must be >= 1".into()));
            }
            let base = CovSketchConfig {
                sqrt_p: a.sqrt_p,
                sqrt_n: a.sqrt_n,
                d: a.d,
                q: a.q,
                cov_group_g: a.group_size,
                k: a.k,
                rho: a.rho,
                identity_sketch: a.identity,
                solver: a.solver.config(),
                ..CovSketchConfig::default()
            };
            let mut reports: Vec<CovSketchReport> = Vec::new();
            let mut rows = Vec::new();
            for rep in 0..a.reps {
                let s = seed::derive(cli.seed, seed::stream::TRIAL, rep as u64);
                let r = run_cov_sketch(&CovSketchConfig {
                    seed: s,
                    ..base.clone()
                })?;
                rows.push(CovRow {
                    schema: SCHEMA_VERSION,
                    rep,
                    seed: s,
                    sqrt_p: r.sqrt_p,
                    sqrt_n: r.sqrt_n,
                    d: r.d,
                    q: r.q,
                    precision: r.precision,
                    recall: r.recall,
                    err_l2: r.err_l2,
                    rel_err: r.rel_err,
                    sketch_consistency: r.sketch_consistency,
                    diagonal_boost: r.diagonal_boost,
                    iters: r.iterations,
                    converged: r.converged,
                });
                reports.push(r);
            }
            let mean =
                |f: &dyn Fn(&CovRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
            let summary = CovSummary {
                schema: SCHEMA_VERSION,
                reps: rows.len(),
                mean_precision: mean(&|r| r.precision),
                mean_recall: mean(&|r| r.recall),
                mean_rel_err: mean(&|r| r.rel_err),
            };
            let dir = out_dir();
            match format {
                OutputFormat::Csv => write_rows(&dir, "cov-sketch", &rows, format)?,
                OutputFormat::Json => write_rows(&dir, "cov-sketch", &reports, format)?,
            }
            write_rows(&dir, "summary", std::slice::from_ref(&summary), format)?;
            write_metadata(&dir, Experiment::CovSketch, cli.seed, &base, Vec::new())?;
            println!(
                "cov-sketch: {} reps, mean precision {:.3}, mean recall {:.3}, mean relative error {:.3e}; wrote {}",
                summary.reps,
                summary.mean_precision,
                summary.mean_recall,
                summary.mean_rel_err,
                dir.display()
            );
            Ok(0)
        }
        Command::VerifyTheory(a) => {
            let ks = parse_list(&a.k, "k")?;
            let dir = out_dir();
            if let Some(path) = &a.matrix {
                let x = BipartiteExpander::load(path)?;
                let model = GroupModel::consecutive(x.n_cols(), a.g)?;
                let k = *ks
                    .first()
                    .ok_or_else(|| Error::Config("--k is empty".into()))?;
                let report = verify_supplied_matrix(
                    &x,
                    &model,
                    k,
                    a.claimed_epsilon,
                    a.kernel_samples,
                    cli.seed,
                )?;
                write_json(&dir.join("verify-theory.json"), &report)?;
                if !report.violations.is_empty() {
                    let replay = dir.join("replay.json");
                    write_json(&replay, &report.replays)?;
                    eprintln!(
                        "verify-theory: {} violations (first: {}); replay written to {}",
                        report.violations.len(),
                        report.violations[0].detail,
                        replay.display()
                    );
                    return Ok(EXIT_VIOLATION);
                }
                println!(
                    "verify-theory: matrix certified at epsilon = {:.6} (claim {:.6}); no violations",
                    report.certificate.epsilon, report.claimed_epsilon
                );
                return Ok(0);
            }
            if a.g == 0 || a.p % a.g != 0 {
                return Err(Error::Config(format!(
                    "g = {} does not divide p = {}",
                    a.g, a.p
                )));
            }
            let cfg = TheoryConfig {
                p: a.p,
                m: a.p / a.g,
                g: a.g,
                ks,
                instances: a.instances,
                n: a.n,
                d: a.d,
                noise_level: a.noise,
                seed: cli.seed,
                ..TheoryConfig::default()
            };
            let cfg = TheoryConfig {
                kernel: cfg.kernel.clone().map(|kc| super::theory::KernelInstance {
                    samples: a.kernel_samples,
                    ..kc
                }),
                ..cfg
            };
            let bundle = run_verify_theory(&cfg)?;
            write_json(&dir.join("verify-theory.json"), &bundle)?;
            write_metadata(
                &dir,
                Experiment::VerifyTheory,
                cli.seed,
                &cfg,
                bundle.warnings.clone(),
            )?;
            if !bundle.passed {
                let replay = dir.join("replay.json");
                write_json(&replay, &bundle.replays)?;
                eprintln!(
                    "verify-theory: {} violations, {} exact-recovery failures; replay written to {}",
                    bundle.violations.len(),
                    bundle.exact_recovery_failures,
                    replay.display()
                );
                return Ok(EXIT_VIOLATION);
            }
            let checked = bundle.instances.iter().filter(|s| s.feasible).count();
            println!(
                "verify-theory: {checked} certified instances, {} skipped, no violations{}; wrote {}",
                bundle.skipped_infeasible,
                if bundle.vacuous { " (vacuous)" } else { "" },
                dir.display()
            );
            Ok(0)
        }
    }
}

fn thread_count(flag: Option<usize>) -> std::result::Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| format!("{THREADS_ENV}={v:?} is not a thread count: {e}")),
        Err(_) => Ok(flag),
    }
}

/// Parse `args` (including the program name) and run the command.
///
/// Returns 0 on success, 1 on usage, validation or I/O errors and 2 when a
/// bound or claim violation was found.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
