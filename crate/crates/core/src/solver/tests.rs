use super::*;
use crate::block_model::BlockSupport;
use crate::expander::BipartiteExpander;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Douglas–Rachford on `min ‖β‖_{2,1} + ι{Xβ = y}` with an exact affine
/// projection through the pseudo-inverse. Shares nothing with the
/// primal-dual path except the group prox formula, which is re-derived here.
fn douglas_rachford(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[Vec<usize>]) -> Vec<f64> {
    let pinv = x.clone().pseudo_inverse(1e-12).unwrap();
    let project = |z: &DVector<f64>| -> DVector<f64> { z - &pinv * (x * z - y) };
    let prox = |z: &DVector<f64>, t: f64| -> DVector<f64> {
        let mut out = z.clone();
        for grp in groups {
            let norm = grp.iter().map(|&i| z[i] * z[i]).sum::<f64>().sqrt();
            let factor = if norm <= t { 0.0 } else { 1.0 - t / norm };
            for &i in grp {
                out[i] = z[i] * factor;
            }
        }
        out
    };
    let t = 0.05;
    let mut z = DVector::zeros(x.ncols());
    let mut prev = DVector::zeros(x.ncols());
    for it in 0..400_000 {
        let a = prox(&z, t);
        let b = project(&(2.0 * &a - &z));
        z += &b - &a;
        if it % 100 == 99 {
            if (&a - &prev).norm() < 1e-15 {
                break;
            }
            prev = a;
        }
    }
    project(&prox(&z, t)).iter().copied().collect()
}

fn dense(x: &BipartiteExpander) -> DMatrix<f64> {
    let rows = x.to_dense();
    DMatrix::from_fn(x.n_rows(), x.n_cols(), |i, j| rows[i][j])
}

fn planted(model: &GroupModel, k: usize, seed_: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_);
    let groups = rand::seq::index::sample(&mut rng, model.num_groups(), k).into_vec();
    let support = BlockSupport::new(groups, model.num_groups()).unwrap();
    let mut beta = vec![0.0; model.p()];
    for c in model.columns_of(&support) {
        beta[c] = StandardNormal.sample(&mut rng);
    }
    beta
}

fn tight() -> SolverConfig {
    SolverConfig {
        rel_tol: 1e-12,
        feas_tol: 1e-12,
        max_iter: 200_000,
        ..SolverConfig::default()
    }
}

#[test]
fn zero_observations_give_zero_quickly() {
    let x = BipartiteExpander::construct_random(30, 20, 5, 1).unwrap();
    let model = GroupModel::consecutive(30, 3).unwrap();
    let problem =
        RecoveryProblem::new(&x, vec![0.0; 20], Some(&model), Constraint::Equality).unwrap();
    let report = solve(&problem, &SolverConfig::default()).unwrap();
    assert!(report.converged);
    assert!(report.iterations <= 3);
    assert_eq!(report.beta_hat, vec![0.0; 30]);
}

#[test]
fn identity_operator_returns_observations() {
    let id = DenseMatrix::identity(8);
    let y = vec![1.0, -2.0, 0.0, 0.5, 3.0, -0.25, 0.0, 1e-3];
    let problem = RecoveryProblem::new(&id, y.clone(), None, Constraint::Equality).unwrap();
    let report = solve(&problem, &tight()).unwrap();
    assert!(report.converged);
    for (a, b) in report.beta_hat.iter().zip(&y) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn opnorm_examples() {
    assert!((estimate_opnorm(&DenseMatrix::identity(5), 100, 0) - 1.0).abs() < 1e-6);
    let diag = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!((estimate_opnorm(&diag, 100, 3) - 2.0).abs() < 1e-6);
    for seed_ in 0..5 {
        let x = BipartiteExpander::construct_random(200, 60, 7, seed_).unwrap();
        let bound = (7 * x.row_counts().into_iter().max().unwrap()) as f64;
        let est = estimate_opnorm(&x, 100, seed_);
        assert!(est * est <= bound * (1.0 + 1e-12));
        assert!(est > 0.0);
    }
}

#[test]
fn matches_douglas_rachford_oracle() {
    for inst in 0..4u64 {
        let x = BipartiteExpander::construct_random(30, 20, 5, 100 + inst).unwrap();
        let model = GroupModel::consecutive(30, 3).unwrap();
        let beta_star = planted(&model, 2, 200 + inst);
        let y = x.matvec(&beta_star).unwrap();
        let problem =
            RecoveryProblem::new(&x, y.clone(), Some(&model), Constraint::Equality).unwrap();
        let report = solve(&problem, &tight()).unwrap();
        let oracle = douglas_rachford(&dense(&x), &DVector::from_vec(y), model.groups());
        let gap = report
            .beta_hat
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(gap <= 1e-5, "instance {inst}: gap {gap}");
    }
}

#[test]
fn scaling_the_operator_keeps_the_minimizer() {
    let x = BipartiteExpander::construct_random(30, 20, 5, 7).unwrap();
    let model = GroupModel::consecutive(30, 3).unwrap();
    let beta_star = planted(&model, 2, 8);
    let y = x.matvec(&beta_star).unwrap();
    let scaled = Scaled::new(x.clone(), 1.0 / 5.0);
    let y_scaled: Vec<f64> = y.iter().map(|v| v / 5.0).collect();
    let a = solve(
        &RecoveryProblem::new(&x, y, Some(&model), Constraint::Equality).unwrap(),
        &tight(),
    )
    .unwrap();
    let b = solve(
        &RecoveryProblem::new(&scaled, y_scaled, Some(&model), Constraint::Equality).unwrap(),
        &tight(),
    )
    .unwrap();
    for (u, v) in a.beta_hat.iter().zip(&b.beta_hat) {
        assert!((u - v).abs() < 1e-7);
    }
}

#[test]
fn l1_mode_equals_g1_group_mode() {
    let x = BipartiteExpander::construct_random(40, 24, 4, 3).unwrap();
    let g1 = GroupModel::consecutive(40, 1).unwrap();
    let mut rng = seed::rng(4);
    let mut beta_star = vec![0.0; 40];
    for c in rand::seq::index::sample(&mut rng, 40, 4) {
        beta_star[c] = rng.gen_range(-1.0..1.0);
    }
    let y = x.matvec(&beta_star).unwrap();
    let cfg = tight();
    let a = solve(
        &RecoveryProblem::new(&x, y.clone(), None, Constraint::Equality).unwrap(),
        &cfg,
    )
    .unwrap();
    let b = solve(
        &RecoveryProblem::new(&x, y, Some(&g1), Constraint::Equality).unwrap(),
        &cfg,
    )
    .unwrap();
    for (u, v) in a.beta_hat.iter().zip(&b.beta_hat) {
        assert!((u - v).abs() <= 1e-8);
    }
}

#[test]
fn deterministic_output_bytes() {
    let x = BipartiteExpander::construct_random(60, 30, 4, 5).unwrap();
    let model = GroupModel::consecutive(60, 3).unwrap();
    let y = x.matvec(&planted(&model, 3, 6)).unwrap();
    let problem = RecoveryProblem::new(&x, y, Some(&model), Constraint::Equality).unwrap();
    let a = solve(&problem, &SolverConfig::default()).unwrap();
    let b = solve(&problem, &SolverConfig::default()).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.beta_hat), bits(&b.beta_hat));
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn optimality_certificate_and_norm_ordering() {
    let x = BipartiteExpander::construct_random(60, 30, 4, 9).unwrap();
    let model = GroupModel::consecutive(60, 3).unwrap();
    let beta_star = planted(&model, 3, 10);
    let y = x.matvec(&beta_star).unwrap();
    let problem = RecoveryProblem::new(&x, y, Some(&model), Constraint::Equality).unwrap();
    let mut cfg = tight();
    cfg.record_trace = true;
    let report = solve(&problem, &cfg).unwrap();
    assert!(report.converged);
    let star = model.l21_norm(&beta_star).unwrap();
    assert!(report.objective <= star * (1.0 + 1e-8));
    let trace = report.trace.as_ref().unwrap();
    assert!(
        trace.last().unwrap().objective <= trace.first().unwrap().objective.max(report.objective)
    );

    // -Xᵀv must be a subgradient of ‖·‖_{2,1} at β̂.
    let g = x.adjoint_matvec(&report.dual).unwrap();
    let norms = model.group_norms(&report.beta_hat).unwrap();
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for (gi, grp) in model.groups().iter().enumerate() {
        let sub: Vec<f64> = grp.iter().map(|&i| -g[i]).collect();
        let sub_norm = l2_norm(&sub);
        if norms[gi] > 1e-8 {
            for (s, &i) in sub.iter().zip(grp) {
                let want = report.beta_hat[i] / norms[gi];
                assert!((s - want).abs() <= 1e-4 * scale, "group {gi}");
            }
        } else {
            assert!(sub_norm <= 1.0 + 1e-4 * scale, "group {gi}: {sub_norm}");
        }
    }
}

#[test]
fn ball_constraints_hold_and_beat_the_truth() {
    let x = BipartiteExpander::construct_random(60, 40, 5, 12).unwrap();
    let model = GroupModel::consecutive(60, 3).unwrap();
    let beta_star = planted(&model, 3, 13);
    let mut rng = seed::rng(14);
    let clean = x.matvec(&beta_star).unwrap();
    let noise: Vec<f64> = (0..40).map(|_| 0.01 * rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let star = model.l21_norm(&beta_star).unwrap();
    for constraint in [
        Constraint::L1Ball {
            gamma: l1_norm(&noise),
        },
        Constraint::L2Ball {
            sigma: l2_norm(&noise),
        },
    ] {
        let problem = RecoveryProblem::new(&x, y.clone(), Some(&model), constraint).unwrap();
        let report = solve(&problem, &tight()).unwrap();
        assert!(report.converged, "{constraint:?}");
        match constraint {
            Constraint::L1Ball { gamma } => assert!(report.residual_l1 <= gamma * (1.0 + 1e-6)),
            Constraint::L2Ball { sigma } => assert!(report.residual_l2 <= sigma * (1.0 + 1e-6)),
            Constraint::Equality => unreachable!(),
        }
        assert!(report.objective <= star * (1.0 + 1e-8));
    }
}

#[test]
fn residual_examples() {
    let x = BipartiteExpander::construct_random(20, 10, 3, 2).unwrap();
    let beta: Vec<f64> = (0..20).map(|i| i as f64 / 7.0 - 1.0).collect();
    let y = x.matvec(&beta).unwrap();
    let problem = RecoveryProblem::new(&x, y.clone(), None, Constraint::Equality).unwrap();
    assert_eq!(residuals(&problem, &beta).unwrap(), (0.0, 0.0));
    let (l1, l2) = residuals(&problem, &[0.0; 20]).unwrap();
    assert_eq!(l1, l1_norm(&y));
    assert_eq!(l2, l2_norm(&y));
    assert!(l2 <= l1);
    assert!(residuals(&problem, &[0.0; 3]).is_err());
}

#[test]
fn rejects_bad_inputs() {
    let x = BipartiteExpander::construct_random(20, 10, 3, 2).unwrap();
    let mut y = vec![0.0; 10];
    assert!(RecoveryProblem::new(&x, vec![0.0; 9], None, Constraint::Equality).is_err());
    y[3] = f64::NAN;
    assert!(matches!(
        RecoveryProblem::new(&x, y, None, Constraint::Equality),
        Err(Error::Input(_))
    ));
    assert!(
        RecoveryProblem::new(&x, vec![0.0; 10], None, Constraint::L1Ball { gamma: -1.0 }).is_err()
    );
    let wrong = GroupModel::consecutive(21, 3).unwrap();
    assert!(RecoveryProblem::new(&x, vec![0.0; 10], Some(&wrong), Constraint::Equality).is_err());
    let bad = SolverConfig {
        max_iter: 0,
        ..SolverConfig::default()
    };
    let problem = RecoveryProblem::new(&x, vec![0.0; 10], None, Constraint::Equality).unwrap();
    assert!(solve(&problem, &bad).is_err());
}

#[test]
fn infeasible_equality_reports_instead_of_failing() {
    // two identical columns, y outside the range
    let x = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let problem = RecoveryProblem::new(&x, vec![1.0, -1.0], None, Constraint::Equality).unwrap();
    let cfg = SolverConfig {
        max_iter: 2000,
        ..SolverConfig::default()
    };
    let report = solve(&problem, &cfg).unwrap();
    assert!(!report.converged || report.residual_l2 > 1.0);
}
