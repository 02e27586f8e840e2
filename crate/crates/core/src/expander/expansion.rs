//! Model-expansion certification.
//!
//! For a set `S` of `k` groups (so `|S| = k·g` columns) the expansion ratio is
//! `|Γ(S)| / (d·|S|)` where `Γ(S)` is the union of the rows touched by the
//! columns of `S`. The reported `epsilon` is `1 −` the worst ratio seen.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_model::GroupModel;
use crate::error::{Error, Result};
use crate::seed;

use super::BipartiteExpander;

pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 1_000_000;

const SHARD_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    /// Every k-subset of groups, refusing if there are more than `cap`.
    Exhaustive { cap: u128 },
    /// `trials` uniformly random k-subsets.
    Sampled { trials: usize, seed: u64 },
}

impl ExpansionMode {
    pub fn exhaustive() -> Self {
        ExpansionMode::Exhaustive {
            cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub set_size: usize,
    pub epsilon: f64,
    pub sets_checked: u128,
    pub exhaustive: bool,
    pub worst_set: Vec<usize>,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Lexicographic k-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let k = self.current.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] < self.n - k + i {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Counts `|Γ(S)|` for group sets without reallocating between queries.
pub struct NeighborhoodCounter<'a> {
    matrix: &'a BipartiteExpander,
    model: &'a GroupModel,
    stamp: Vec<u32>,
    epoch: u32,
}

impl<'a> NeighborhoodCounter<'a> {
    pub fn new(matrix: &'a BipartiteExpander, model: &'a GroupModel) -> Self {
        Self {
            matrix,
            model,
            stamp: vec![0; matrix.n_rows()],
            epoch: 0,
        }
    }

    pub fn count(&mut self, groups: &[usize]) -> usize {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let mut size = 0;
        for &gi in groups {
            for &c in self.model.group(gi) {
                for &r in self.matrix.column(c) {
                    let s = &mut self.stamp[r as usize];
                    if *s != self.epoch {
                        *s = self.epoch;
                        size += 1;
                    }
                }
            }
        }
        size
    }
}

pub fn check_expansion(
    matrix: &BipartiteExpander,
    model: &GroupModel,
    k: usize,
    mode: ExpansionMode,
) -> Result<ExpansionReport> {
    if model.p() != matrix.n_cols() {
        return Err(Error::ShapeMismatch {
            expected: matrix.n_cols(),
            actual: model.p(),
        });
    }
    let m = model.num_groups();
    if k > m {
        return Err(Error::Domain(format!("k = {k} exceeds M = {m}")));
    }
    let set_size = k * model.group_size();
    let edges = (matrix.degree() * set_size) as f64;
    if k == 0 {
        return Ok(ExpansionReport {
            set_size,
            epsilon: 0.0,
            sets_checked: 1,
            exhaustive: true,
            worst_set: Vec::new(),
        });
    }
    match mode {
        ExpansionMode::Exhaustive { cap } => {
            let count = binomial(m, k);
            if count > cap {
                return Err(Error::CapExceeded { count, cap });
            }
            let mut counter = NeighborhoodCounter::new(matrix, model);
            let mut worst = (usize::MAX, Vec::new());
            for set in Combinations::new(m, k) {
                let gamma = counter.count(&set);
                if gamma < worst.0 {
                    worst = (gamma, set);
                }
            }
            Ok(ExpansionReport {
                set_size,
                epsilon: 1.0 - worst.0 as f64 / edges,
                sets_checked: count,
                exhaustive: true,
                worst_set: worst.1,
            })
        }
        ExpansionMode::Sampled { trials, seed } => {
            if trials == 0 {
                return Err(Error::Domain(
                    "sampled expansion check needs trials >= 1".into(),
                ));
            }
            let shards = trials.div_ceil(SHARD_SIZE);
            // (gamma, shard, set); min over the tuple is independent of
            // how rayon splits the shards.
            let worst = (0..shards)
                .into_par_iter()
                .map(|shard| {
                    let mut rng = seed::rng(seed::derive(seed, seed::stream::SHARD, shard as u64));
                    let mut counter = NeighborhoodCounter::new(matrix, model);
                    let len = SHARD_SIZE.min(trials - shard * SHARD_SIZE);
                    let mut best = (usize::MAX, shard, Vec::new());
                    for _ in 0..len {
                        let mut set = sample(&mut rng, m, k).into_vec();
                        set.sort_unstable();
                        let gamma = counter.count(&set);
                        if gamma < best.0 {
                            best = (gamma, shard, set);
                        }
                    }
                    best
                })
                .min()
                .expect("at least one shard");
            Ok(ExpansionReport {
                set_size,
                epsilon: 1.0 - worst.0 as f64 / edges,
                sets_checked: trials as u128,
                exhaustive: false,
                worst_set: worst.2,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(20, 3), 1140);
        assert_eq!(binomial(4, 5), 0);
        assert_eq!(binomial(100, 8), 186_087_894_300);
        assert_eq!(binomial(7, 0), 1);
    }

    #[test]
    fn combinations_enumerate_in_order() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(6, 3).count(), 20);
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn disjoint_neighborhoods_give_zero_epsilon() {
        let x =
            BipartiteExpander::from_columns(4, vec![vec![0], vec![1], vec![2], vec![3]]).unwrap();
        let model = GroupModel::consecutive(4, 4).unwrap();
        let r = check_expansion(&x, &model, 1, ExpansionMode::exhaustive()).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert!(r.exhaustive);
        assert_eq!(r.sets_checked, 1);
    }

    #[test]
    fn duplicated_column_gives_half() {
        let x = BipartiteExpander::from_columns(3, vec![vec![0, 1], vec![0, 1]]).unwrap();
        let model = GroupModel::consecutive(2, 2).unwrap();
        let r = check_expansion(&x, &model, 1, ExpansionMode::exhaustive()).unwrap();
        assert_eq!(r.epsilon, 0.5);
        assert_eq!(r.worst_set, vec![0]);
    }

    /// Brute force straight from the definition: materialize the matrix,
    /// enumerate subsets by bitmask, count nonzero rows of the submatrix.
    fn brute_epsilon(x: &BipartiteExpander, model: &GroupModel, k: usize) -> f64 {
        let dense = x.to_dense();
        let m = model.num_groups();
        let mut worst = f64::INFINITY;
        for mask in 0u64..(1 << m) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let cols: Vec<usize> = (0..m)
                .filter(|i| mask >> i & 1 == 1)
                .flat_map(|gi| model.group(gi).to_vec())
                .collect();
            let touched = dense
                .iter()
                .filter(|row| cols.iter().any(|&c| row[c] != 0.0))
                .count();
            worst = worst.min(touched as f64 / (x.degree() * cols.len()) as f64);
        }
        1.0 - worst
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let x = BipartiteExpander::construct_random(10, 8, 2, 3).unwrap();
        let model = GroupModel::consecutive(10, 2).unwrap();
        let r = check_expansion(&x, &model, 2, ExpansionMode::exhaustive()).unwrap();
        assert_eq!(r.sets_checked, 10);
        assert!((r.epsilon - brute_epsilon(&x, &model, 2)).abs() < 1e-15);
        for seed in 0..20 {
            let x = BipartiteExpander::construct_random(24, 10, 3, seed).unwrap();
            let model = GroupModel::consecutive(24, 3).unwrap();
            for k in 1..=3 {
                let r = check_expansion(&x, &model, k, ExpansionMode::exhaustive()).unwrap();
                assert!((r.epsilon - brute_epsilon(&x, &model, k)).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&r.epsilon));
            }
        }
    }

    #[test]
    fn sampled_never_exceeds_exhaustive_and_is_deterministic() {
        let x = BipartiteExpander::construct_random(40, 24, 4, 8).unwrap();
        let model = GroupModel::consecutive(40, 4).unwrap();
        let exact = check_expansion(&x, &model, 2, ExpansionMode::exhaustive()).unwrap();
        let mode = ExpansionMode::Sampled {
            trials: 3000,
            seed: 5,
        };
        let a = check_expansion(&x, &model, 2, mode).unwrap();
        let b = check_expansion(&x, &model, 2, mode).unwrap();
        assert_eq!(a, b);
        assert!(!a.exhaustive);
        assert!(a.epsilon <= exact.epsilon);
    }

    #[test]
    fn cap_and_domain_errors() {
        let x = BipartiteExpander::construct_random(40, 24, 4, 8).unwrap();
        let model = GroupModel::consecutive(40, 4).unwrap();
        let err =
            check_expansion(&x, &model, 5, ExpansionMode::Exhaustive { cap: 100 }).unwrap_err();
        assert!(matches!(
            err,
            Error::CapExceeded {
                count: 252,
                cap: 100
            }
        ));
        assert!(matches!(
            check_expansion(&x, &model, 11, ExpansionMode::exhaustive()),
            Err(Error::Domain(_))
        ));
    }
}
