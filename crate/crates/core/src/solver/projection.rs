//! Euclidean projections onto norm balls centered at the origin.

/// Projection onto `{x : ‖x‖₁ ≤ radius}`.
///
/// The soft threshold is found by Michelot's fixed point: start from the
/// mean excess over all magnitudes and repeatedly drop magnitudes at or
/// below the current threshold. The threshold only grows and stops at the
/// exact value after a few linear passes.
pub fn project_l1_ball(w: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = w.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return w.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; w.len()];
    }
    let mut active: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let mut theta = (l1 - radius) / active.len() as f64;
    loop {
        let before = active.len();
        active.retain(|&u| u > theta);
        if active.len() == before {
            break;
        }
        theta = (active.iter().sum::<f64>() - radius) / active.len() as f64;
    }
    w.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Projection onto `{x : ‖x‖₂ ≤ radius}`.
pub fn project_l2_ball(w: &[f64], radius: f64) -> Vec<f64> {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= radius {
        return w.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; w.len()];
    }
    let s = radius / norm;
    w.iter().map(|x| x * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn l1_examples() {
        assert_eq!(project_l1_ball(&[0.5, -0.25], 1.0), vec![0.5, -0.25]);
        assert_eq!(project_l1_ball(&[3.0, -1.0], 0.0), vec![0.0, 0.0]);
        // onto the simplex edge: [2, 0] -> [1, 0]
        assert_eq!(project_l1_ball(&[2.0, 0.0], 1.0), vec![1.0, 0.0]);
        let p = project_l1_ball(&[1.0, 1.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    /// Sort-based threshold search.
    fn l1_threshold_by_sorting(w: &[f64], radius: f64) -> f64 {
        let mut mags: Vec<f64> = w.iter().map(|x| x.abs()).collect();
        mags.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut cumsum = 0.0;
        let mut theta = 0.0;
        for (j, &u) in mags.iter().enumerate() {
            cumsum += u;
            let t = (cumsum - radius) / (j + 1) as f64;
            if u - t > 0.0 {
                theta = t;
            } else {
                break;
            }
        }
        theta
    }

    proptest! {
        #[test]
        fn l1_projection_matches_sorting(
            w in proptest::collection::vec(-5.0f64..5.0, 1..200),
            radius in 0.01f64..4.0,
        ) {
            prop_assume!(w.iter().map(|x| x.abs()).sum::<f64>() > radius);
            let theta = l1_threshold_by_sorting(&w, radius);
            let p = project_l1_ball(&w, radius);
            for (pi, wi) in p.iter().zip(&w) {
                let want = wi.signum() * (wi.abs() - theta).max(0.0);
                prop_assert!((pi - want).abs() <= 1e-12 * (1.0 + wi.abs()));
            }
        }

        #[test]
        fn l1_projection_is_feasible_and_closest(
            w in proptest::collection::vec(-5.0f64..5.0, 1..12),
            radius in 0.0f64..4.0,
            probes in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 12), 20),
        ) {
            let p = project_l1_ball(&w, radius);
            let l1: f64 = p.iter().map(|x| x.abs()).sum();
            prop_assert!(l1 <= radius * (1.0 + 1e-12) + 1e-12);
            let best = dist2(&w, &p);
            // random feasible points are never closer
            for probe in &probes {
                let q: Vec<f64> = probe[..w.len()].to_vec();
                let ql1: f64 = q.iter().map(|x| x.abs()).sum();
                let q: Vec<f64> = if ql1 > radius && ql1 > 0.0 {
                    q.iter().map(|x| x * radius / ql1).collect()
                } else { q };
                prop_assert!(dist2(&w, &q) >= best - 1e-9);
            }
        }

        #[test]
        fn l2_projection_is_radial(w in proptest::collection::vec(-5.0f64..5.0, 1..12), radius in 0.0f64..4.0) {
            let p = project_l2_ball(&w, radius);
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm <= radius + 1e-12 || p == w);
        }
    }
}
