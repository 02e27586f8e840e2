//! End-to-end checks of the error bounds on small, exhaustively certified
//! instances, plus a validator for user-supplied matrices.
//!
//! Every matrix used by a bound check carries an exhaustive expansion
//! certificate over all unions of up to `2k` blocks. Instances whose
//! certified `ε` falls outside the feasible region are redrawn a bounded
//! number of times and otherwise skipped; they are never counted as passes
//! or violations.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    certify_epsilon, estimate_expansion_probability, is_feasible, kernel_lemma_factor,
    kernel_mass_ratio, verify_kernel_lemma, verify_theorem1, BoundCertificate, EpsilonCertificate,
    ExpansionProbabilityEstimate, ExpansionProbabilityParams, KernelLemmaReport, ProbabilityMode,
    MAX_KERNEL_DIM,
};
use crate::block_model::{l1_norm, l2_norm, GroupModel};
use crate::error::{Error, Result};
use crate::expander::{BipartiteExpander, ExpansionMode, DEFAULT_EXHAUSTIVE_CAP};
use crate::seed;
use crate::solver::{solve, Constraint, RecoveryProblem, Scaled, SolverConfig};

use super::{plant_signal, SignalKind, SCHEMA_VERSION, SUCCESS_THRESHOLD};

/// Small instance used for the kernel inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelInstance {
    pub p: usize,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub samples: usize,
}

impl Default for KernelInstance {
    fn default() -> Self {
        Self {
            p: 40,
            n: 20,
            d: 4,
            m: 10,
            k: 2,
            samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub g: usize,
    pub ks: Vec<usize>,
    /// Instances per `k`.
    pub instances: usize,
    pub n: usize,
    pub d: usize,
    /// Matrix redraws per instance before giving up on a feasible `ε`.
    pub max_matrix_attempts: usize,
    /// Standard deviation of the additive noise in the noisy bundle.
    pub noise_level: f64,
    /// Primal/dual step ratio of the l1-ball solves; the dual variable of a
    /// thin l1 ball needs a much larger step than the primal one.
    pub noisy_step_ratio: f64,
    /// Entry scale of the dense tail added to every other instance.
    pub tail_level: f64,
    pub kernel: Option<KernelInstance>,
    pub probability: Vec<ExpansionProbabilityParams>,
    pub probability_trials: usize,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            p: 60,
            m: 20,
            g: 3,
            ks: vec![1, 2, 3],
            instances: 100,
            n: 3200,
            d: 8,
            max_matrix_attempts: 100,
            noise_level: 1e-4,
            noisy_step_ratio: 1e-3,
            tail_level: 0.01,
            kernel: Some(KernelInstance::default()),
            probability: [1, 2, 4, 8]
                .into_iter()
                .map(|d| ExpansionProbabilityParams {
                    m: 5,
                    k: 2,
                    g: 2,
                    d,
                    n: 512,
                    epsilon: 0.25,
                    eta: 0.05,
                })
                .collect(),
            probability_trials: 200,
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g == 0 || self.m * self.g != self.p {
            return Err(Error::Config(format!(
                "M·g = {}·{} does not equal p = {}",
                self.m, self.g, self.p
            )));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.m) {
            return Err(Error::Config(format!("k = {k} must lie in 1..={}", self.m)));
        }
        if self.d == 0 || self.d > self.n {
            return Err(Error::Config(format!(
                "need 1 <= d <= n (d = {}, n = {})",
                self.d, self.n
            )));
        }
        if self.max_matrix_attempts == 0 {
            return Err(Error::Config("max_matrix_attempts must be >= 1".into()));
        }
        if !(self.noisy_step_ratio > 0.0 && self.noisy_step_ratio.is_finite()) {
            return Err(Error::Config("noisy_step_ratio must be positive".into()));
        }
        if !(self.noise_level >= 0.0 && self.tail_level >= 0.0) {
            return Err(Error::Config("noise and tail levels must be >= 0".into()));
        }
        if let Some(kc) = &self.kernel {
            if kc.m == 0 || kc.p % kc.m != 0 || kc.k == 0 || kc.k > kc.m {
                return Err(Error::Config(
                    "kernel instance needs M | p and 1 <= k <= M".into(),
                ));
            }
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Equality-constrained recovery exceeded the certified bound.
    BoundEquality,
    /// Noise-aware recovery exceeded the certified bound.
    BoundNoisy,
    /// A kernel vector carries more top-`k` mass than the lemma allows.
    KernelLemma,
    /// A block-sparse vector whose image is shorter than the lower RIP-1
    /// bound at the claimed `ε`.
    ModelRip1,
    /// The certified `ε` exceeds the claimed one.
    ExpansionClaim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub k: usize,
    pub instance: Option<usize>,
    pub seed: Option<u64>,
    pub detail: String,
    pub bound: Option<BoundCertificate>,
}

/// Everything needed to rebuild and recheck one violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub violation: Violation,
    pub n_rows: usize,
    pub columns: Vec<Vec<u32>>,
    pub g: usize,
    pub beta_star: Option<Vec<f64>>,
    pub beta_hat: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub probe: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub k: usize,
    pub instance: usize,
    pub seed: u64,
    pub matrix_attempts: usize,
    pub epsilon: EpsilonCertificate,
    pub feasible: bool,
    pub exactly_sparse: bool,
    /// `‖β̂ − β*‖₂` of the equality-constrained solve.
    pub err_l2: Option<f64>,
    pub equality: Option<BoundCertificate>,
    pub noisy: Option<BoundCertificate>,
    /// Solver iterations (equality, noisy) and whether each converged.
    pub iterations: Option<(usize, usize)>,
    pub converged: Option<(bool, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBundle {
    pub schema: u32,
    pub config: TheoryConfig,
    pub instances: Vec<InstanceSummary>,
    pub skipped_infeasible: usize,
    pub kernel: Option<KernelLemmaReport>,
    pub probability: Vec<ExpansionProbabilityEstimate>,
    pub violations: Vec<Violation>,
    /// Exactly sparse, feasible instances whose equality solve missed `β*`
    /// by more than the success threshold.
    pub exact_recovery_failures: usize,
    pub warnings: Vec<String>,
    pub vacuous: bool,
    pub passed: bool,
    #[serde(skip)]
    pub replays: Vec<Replay>,
}

/// Planted `k`-block signal, optionally with a dense tail on all other
/// coordinates.
fn compressible_signal(
    model: &GroupModel,
    k: usize,
    tail_level: f64,
    exact: bool,
    seed: u64,
) -> Result<Vec<f64>> {
    let (mut beta, support) = plant_signal(model, k, SignalKind::Gaussian, seed)?;
    if !exact && tail_level > 0.0 {
        let mut rng = seed::rng(seed::derive(seed, seed::stream::SIGNAL, 1));
        let off = support.complement(model.num_groups());
        for c in model.columns_of(&off) {
            let z: f64 = StandardNormal.sample(&mut rng);
            beta[c] = tail_level * z;
        }
    }
    Ok(beta)
}

struct InstanceOutcome {
    summary: InstanceSummary,
    violations: Vec<(Violation, Replay)>,
}

fn run_instance(
    config: &TheoryConfig,
    model: &GroupModel,
    k: usize,
    instance: usize,
) -> Result<InstanceOutcome> {
    let inst_seed = seed::derive(
        config.seed,
        seed::stream::TRIAL,
        (k as u64) << 32 | instance as u64,
    );
    let mut attempts = 0;
    let (x, cert) = loop {
        let x = BipartiteExpander::construct_random(
            config.p,
            config.n,
            config.d,
            seed::derive(inst_seed, seed::stream::MATRIX, attempts as u64),
        )?;
        let cert = certify_epsilon(&x, model, k, ExpansionMode::exhaustive())?;
        attempts += 1;
        if is_feasible(cert.epsilon, config.g) || attempts >= config.max_matrix_attempts {
            break (x, cert);
        }
    };
    let feasible = is_feasible(cert.epsilon, config.g);
    let exact = instance.is_multiple_of(2);
    let mut summary = InstanceSummary {
        k,
        instance,
        seed: inst_seed,
        matrix_attempts: attempts,
        epsilon: cert.clone(),
        feasible,
        exactly_sparse: exact,
        err_l2: None,
        equality: None,
        noisy: None,
        iterations: None,
        converged: None,
    };
    if !feasible {
        return Ok(InstanceOutcome {
            summary,
            violations: Vec::new(),
        });
    }

    let beta_star = compressible_signal(model, k, config.tail_level, exact, inst_seed)?;
    let d = config.d as f64;
    let op = Scaled::new(&x, 1.0 / d);
    let solver = SolverConfig {
        seed: seed::derive(inst_seed, seed::stream::POWER, 0),
        ..config.solver.clone()
    };
    let mut violations = Vec::new();
    let mut record =
        |kind: ViolationKind, bound: &BoundCertificate, beta_hat: &[f64], y: Vec<f64>| {
            let violation = Violation {
                kind,
                k,
                instance: Some(instance),
                seed: Some(inst_seed),
                detail: format!(
                    "measured {:.6e} > predicted {:.6e}",
                    bound.measured_error,
                    bound.predicted_error.unwrap_or(f64::NAN)
                ),
                bound: Some(bound.clone()),
            };
            let replay = Replay {
                violation: violation.clone(),
                n_rows: x.n_rows(),
                columns: x.columns().to_vec(),
                g: config.g,
                beta_star: Some(beta_star.clone()),
                beta_hat: Some(beta_hat.to_vec()),
                y: Some(y),
                probe: None,
            };
            violations.push((violation, replay));
        };

    // Equality-constrained recovery.
    let y = x.matvec(&beta_star)?;
    let y_scaled: Vec<f64> = y.iter().map(|v| v / d).collect();
    let problem = RecoveryProblem::new(&op, y_scaled, Some(model), Constraint::Equality)?;
    let report = solve(&problem, &solver)?;
    let eq_run = (report.iterations, report.converged);
    let bound = verify_theorem1(&x, model, k, &cert, &beta_star, &report.beta_hat)?;
    let diff: Vec<f64> = report
        .beta_hat
        .iter()
        .zip(&beta_star)
        .map(|(a, b)| a - b)
        .collect();
    summary.err_l2 = Some(l2_norm(&diff));
    if bound.is_violation() {
        record(
            ViolationKind::BoundEquality,
            &bound,
            &report.beta_hat,
            y.clone(),
        );
    }
    summary.equality = Some(bound);

    // Noise-aware recovery with the realized noise level as the radius.
    let mut rng = seed::rng(seed::derive(inst_seed, seed::stream::NOISE, 0));
    let normal = Normal::new(0.0, config.noise_level).map_err(|e| Error::Config(e.to_string()))?;
    let noise: Vec<f64> = (0..config.n).map(|_| normal.sample(&mut rng)).collect();
    let y_noisy: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let problem = RecoveryProblem::new(
        &op,
        y_noisy.iter().map(|v| v / d).collect(),
        Some(model),
        Constraint::L1Ball {
            gamma: l1_norm(&noise) / d,
        },
    )?;
    let noisy_solver = SolverConfig {
        step_ratio: config.noisy_step_ratio,
        ..solver.clone()
    };
    let report = solve(&problem, &noisy_solver)?;
    let bound = verify_theorem1(&x, model, k, &cert, &beta_star, &report.beta_hat)?;
    if bound.is_violation() {
        record(ViolationKind::BoundNoisy, &bound, &report.beta_hat, y_noisy);
    }
    summary.noisy = Some(bound);
    summary.iterations = Some((eq_run.0, report.iterations));
    summary.converged = Some((eq_run.1, report.converged));
    Ok(InstanceOutcome {
        summary,
        violations,
    })
}

fn run_kernel_check(
    kc: &KernelInstance,
    seed: u64,
) -> Result<(KernelLemmaReport, Vec<(Violation, Replay)>)> {
    let g = kc.p / kc.m;
    let model = GroupModel::consecutive(kc.p, g)?;
    let x = BipartiteExpander::construct_random(
        kc.p,
        kc.n,
        kc.d,
        seed::derive(seed, seed::stream::KERNEL, 0),
    )?;
    let cert = certify_epsilon(&x, &model, kc.k, ExpansionMode::exhaustive())?;
    let report = verify_kernel_lemma(
        &x,
        &model,
        kc.k,
        &cert,
        kc.samples,
        seed::derive(seed, seed::stream::KERNEL, 1),
    )?;
    let mut violations = Vec::new();
    if report.certified && report.violations > 0 {
        let violation = Violation {
            kind: ViolationKind::KernelLemma,
            k: kc.k,
            instance: None,
            seed: Some(seed),
            detail: format!(
                "{} of {} kernel samples exceed the factor {:?} (max ratio {:.6})",
                report.violations, report.samples, report.bound_factor, report.max_ratio
            ),
            bound: None,
        };
        let replay = Replay {
            violation: violation.clone(),
            n_rows: x.n_rows(),
            columns: x.columns().to_vec(),
            g,
            beta_star: None,
            beta_hat: None,
            y: None,
            probe: None,
        };
        violations.push((violation, replay));
    }
    Ok((report, violations))
}

/// Run every bound check in `config` and bundle the certificates.
pub fn run_verify_theory(config: &TheoryConfig) -> Result<TheoryBundle> {
    config.validate()?;
    let model = GroupModel::consecutive(config.p, config.g)?;
    let mut warnings = Vec::new();
    let items: Vec<(usize, usize)> = config
        .ks
        .iter()
        .flat_map(|&k| (0..config.instances).map(move |i| (k, i)))
        .collect();
    if items.is_empty() {
        let w = "no bound instances requested; the bound checks pass vacuously".to_string();
        log::warn!("{w}");
        warnings.push(w);
    }
    let outcomes: Vec<InstanceOutcome> = items
        .par_iter()
        .map(|&(k, i)| run_instance(config, &model, k, i))
        .collect::<Result<_>>()?;

    let mut instances = Vec::with_capacity(outcomes.len());
    let mut violations = Vec::new();
    let mut replays = Vec::new();
    for o in outcomes {
        instances.push(o.summary);
        for (v, r) in o.violations {
            violations.push(v);
            replays.push(r);
        }
    }
    let skipped_infeasible = instances.iter().filter(|s| !s.feasible).count();
    if skipped_infeasible > 0 {
        let w = format!(
            "{skipped_infeasible} instances found no feasible certified epsilon in {} draws and were skipped",
            config.max_matrix_attempts
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    let exact_recovery_failures = instances
        .iter()
        .filter(|s| {
            s.feasible && s.exactly_sparse && s.err_l2.is_some_and(|e| e > SUCCESS_THRESHOLD)
        })
        .count();
    let unconverged = instances
        .iter()
        .filter(|s| s.converged.is_some_and(|(a, b)| !(a && b)))
        .count();
    if unconverged > 0 {
        // The bound holds for any estimate, so these still count.
        let w = format!(
            "{unconverged} instances hit the iteration cap in at least one solve; their bounds were checked on the last iterate"
        );
        log::warn!("{w}");
        warnings.push(w);
    }

    let kernel = match &config.kernel {
        Some(kc) => {
            let (report, kv) = run_kernel_check(kc, config.seed)?;
            if report.vacuous {
                warnings.push(format!(
                    "kernel check is vacuous (factor {:?}, kernel dimension {})",
                    report.bound_factor, report.kernel_dim
                ));
            }
            for (v, r) in kv {
                violations.push(v);
                replays.push(r);
            }
            Some(report)
        }
        None => None,
    };

    let probability = config
        .probability
        .iter()
        .enumerate()
        .map(|(i, params)| {
            estimate_expansion_probability(
                *params,
                config.probability_trials,
                seed::derive(config.seed, seed::stream::SAMPLES, i as u64),
                ProbabilityMode::PerMatrixExhaustive {
                    cap: DEFAULT_EXHAUSTIVE_CAP,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let vacuous = instances.iter().all(|s| !s.feasible);
    let passed = violations.is_empty() && exact_recovery_failures == 0;
    Ok(TheoryBundle {
        schema: SCHEMA_VERSION,
        config: config.clone(),
        instances,
        skipped_infeasible,
        kernel,
        probability,
        violations,
        exact_recovery_failures,
        warnings,
        vacuous,
        passed,
        replays,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppliedMatrixReport {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub g: usize,
    pub k: usize,
    pub claimed_epsilon: f64,
    /// True when no claim was given and the feasibility edge was used.
    pub claim_is_default: bool,
    pub certificate: EpsilonCertificate,
    /// Column pairs in different groups with identical neighborhoods.
    pub duplicate_pairs: usize,
    /// Smallest `‖Xz‖₁/(d‖z‖₁)` over the duplicate probes.
    pub min_probe_ratio: Option<f64>,
    pub kernel: Option<KernelLemmaReport>,
    pub violations: Vec<Violation>,
    #[serde(skip)]
    pub replays: Vec<Replay>,
}

/// Check a supplied matrix against a claimed expansion constant.
///
/// Without a claim the matrix is held to the feasibility edge
/// `ε < 1/(2(1+2g))`. Column pairs from different groups that share their
/// whole neighborhood give kernel vectors `e_a − e_b` that are tested
/// directly against the RIP-1 lower bound and the kernel inequality.
pub fn verify_supplied_matrix(
    x: &BipartiteExpander,
    model: &GroupModel,
    k: usize,
    claimed_epsilon: Option<f64>,
    kernel_samples: usize,
    seed: u64,
) -> Result<SuppliedMatrixReport> {
    if x.n_cols() != model.p() {
        return Err(Error::ShapeMismatch {
            expected: x.n_cols(),
            actual: model.p(),
        });
    }
    let g = model.group_size();
    let (edge, _) = crate::analysis::feasibility_region(g)?;
    if let Some(c) = claimed_epsilon {
        if !(c > 0.0 && c < 0.5) {
            return Err(Error::Domain(format!(
                "claimed epsilon {c} outside (0, 1/2)"
            )));
        }
    }
    let claim = claimed_epsilon.unwrap_or(edge);
    let cert = certify_epsilon(x, model, k, ExpansionMode::exhaustive())?;
    let d = x.degree() as f64;
    let mut violations = Vec::new();
    let mut replays = Vec::new();
    let mut push = |violation: Violation, probe: Option<Vec<f64>>| {
        replays.push(Replay {
            violation: violation.clone(),
            n_rows: x.n_rows(),
            columns: x.columns().to_vec(),
            g,
            beta_star: None,
            beta_hat: None,
            y: None,
            probe,
        });
        violations.push(violation);
    };

    let exceeds = if claimed_epsilon.is_some() {
        cert.epsilon > claim
    } else {
        !is_feasible(cert.epsilon, g)
    };
    if exceeds {
        push(
            Violation {
                kind: ViolationKind::ExpansionClaim,
                k,
                instance: None,
                seed: None,
                detail: format!(
                    "certified epsilon {:.6} over unions of up to {} blocks exceeds the claim {:.6}",
                    cert.epsilon, cert.max_blocks, claim
                ),
                bound: None,
            },
            None,
        );
    }

    let mut group_of = vec![0usize; model.p()];
    for (gi, cols) in model.groups().iter().enumerate() {
        for &c in cols {
            group_of[c] = gi;
        }
    }
    let mut by_neighborhood: HashMap<&[u32], Vec<usize>> = HashMap::new();
    for c in 0..x.n_cols() {
        by_neighborhood.entry(x.column(c)).or_default().push(c);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for cols in by_neighborhood.values() {
        for (i, &a) in cols.iter().enumerate() {
            for &b in &cols[i + 1..] {
                if group_of[a] != group_of[b] {
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    pairs.sort_unstable();
    let factor = kernel_lemma_factor(claim, g);
    let mut min_probe_ratio: Option<f64> = None;
    for &(a, b) in &pairs {
        let mut z = vec![0.0; model.p()];
        z[a] = 1.0;
        z[b] = -1.0;
        let ratio = l1_norm(&x.matvec(&z)?) / (d * l1_norm(&z));
        min_probe_ratio = Some(min_probe_ratio.map_or(ratio, |m| m.min(ratio)));
        // e_a − e_b spans two blocks, inside the 2k-block range for any k.
        if ratio < 1.0 - 2.0 * claim {
            push(
                Violation {
                    kind: ViolationKind::ModelRip1,
                    k,
                    instance: None,
                    seed: None,
                    detail: format!(
                        "columns {a} and {b} share all rows: ||Xz||_1/(d||z||_1) = {ratio} < 1 - 2*{claim:.6}"
                    ),
                    bound: None,
                },
                Some(z.clone()),
            );
        }
        let mass = kernel_mass_ratio(model, &z, k)?;
        if factor.is_none_or(|f| mass > f) {
            push(
                Violation {
                    kind: ViolationKind::KernelLemma,
                    k,
                    instance: None,
                    seed: None,
                    detail: format!(
                        "kernel vector e_{a} - e_{b} has top-{k} mass ratio {mass} above the factor {factor:?}"
                    ),
                    bound: None,
                },
                Some(z),
            );
        }
    }

    let kernel =
        if x.n_rows() <= MAX_KERNEL_DIM && x.n_cols() <= MAX_KERNEL_DIM && kernel_samples > 0 {
            let claimed_cert = EpsilonCertificate {
                epsilon: claim,
                ..cert.clone()
            };
            let report = verify_kernel_lemma(x, model, k, &claimed_cert, kernel_samples, seed)?;
            if report.violations > 0 {
                push(
                    Violation {
                        kind: ViolationKind::KernelLemma,
                        k,
                        instance: None,
                        seed: Some(seed),
                        detail: format!(
                        "{} of {} random kernel samples exceed the factor at the claimed epsilon",
                        report.violations, report.samples
                    ),
                        bound: None,
                    },
                    None,
                );
            }
            Some(report)
        } else {
            None
        };

    Ok(SuppliedMatrixReport {
        n: x.n_rows(),
        p: x.n_cols(),
        d: x.degree(),
        g,
        k,
        claimed_epsilon: claim,
        claim_is_default: claimed_epsilon.is_none(),
        certificate: cert,
        duplicate_pairs: pairs.len(),
        min_probe_ratio,
        kernel,
        violations,
        replays,
    })
}
