//! Non-overlapping block-sparse model and the l2,1 geometry built on it.
//!
//! A [`GroupModel`] partitions the coordinates `0..p` into `M` disjoint
//! groups of equal size `g`. The l2,1 norm is the (weighted) sum of group
//! Euclidean norms; its proximal operator is block soft-thresholding.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    p: usize,
    g: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

/// Sorted, duplicate-free set of group indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BlockSupport {
    group_indices: Vec<usize>,
}

impl BlockSupport {
    pub fn new(mut group_indices: Vec<usize>, num_groups: usize) -> Result<Self> {
        group_indices.sort_unstable();
        group_indices.dedup();
        if let Some(&bad) = group_indices.iter().find(|&&i| i >= num_groups) {
            return Err(Error::Domain(format!(
                "group index {bad} out of range for M = {num_groups}"
            )));
        }
        Ok(Self { group_indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.group_indices
    }

    pub fn len(&self) -> usize {
        self.group_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_indices.is_empty()
    }

    pub fn contains(&self, group: usize) -> bool {
        self.group_indices.binary_search(&group).is_ok()
    }

    /// Groups of `0..num_groups` not in this support.
    pub fn complement(&self, num_groups: usize) -> Self {
        Self {
            group_indices: (0..num_groups).filter(|&i| !self.contains(i)).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    p: usize,
    g: usize,
    #[serde(rename = "M")]
    m: usize,
    groups: Vec<Vec<usize>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl GroupModel {
    /// Build a model from explicit index lists with unit weights.
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let m = groups.len();
        Self::with_weights(p, groups, vec![1.0; m])
    }

    pub fn with_weights(p: usize, groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if p == 0 || groups.is_empty() {
            return Err(Error::Model(
                "model needs p >= 1 and at least one group".into(),
            ));
        }
        if weights.len() != groups.len() {
            return Err(Error::Model(format!(
                "{} weights for {} groups",
                weights.len(),
                groups.len()
            )));
        }
        let g = groups[0].len();
        if g == 0 {
            return Err(Error::Model("group 0 is empty".into()));
        }
        let mut seen = vec![false; p];
        for (gi, group) in groups.iter().enumerate() {
            if group.len() != g {
                return Err(Error::Model(format!(
                    "group {gi} has size {} but group 0 has size {g}; equal group sizes are required",
                    group.len()
                )));
            }
            for &idx in group {
                if idx >= p {
                    return Err(Error::Model(format!(
                        "group {gi} contains index {idx} >= p = {p}"
                    )));
                }
                if seen[idx] {
                    return Err(Error::Model(format!(
                        "index {idx} appears twice (second time in group {gi})"
                    )));
                }
                seen[idx] = true;
            }
        }
        if groups.len() * g != p {
            return Err(Error::Model(format!(
                "groups cover {} of p = {p} coordinates",
                groups.len() * g
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Model(format!(
                "weight {i} = {w} is not strictly positive"
            )));
        }
        Ok(Self {
            p,
            g,
            groups,
            weights,
        })
    }

    /// `p / g` consecutive blocks `[0, g), [g, 2g), ...`.
    pub fn consecutive(p: usize, g: usize) -> Result<Self> {
        if g == 0 || p == 0 || !p.is_multiple_of(g) {
            return Err(Error::Model(format!(
                "consecutive blocks need g >= 1 dividing p (p = {p}, g = {g})"
            )));
        }
        let groups = (0..p / g).map(|i| (i * g..(i + 1) * g).collect()).collect();
        Self::new(p, groups)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn group_size(&self) -> usize {
        self.g
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.m != file.groups.len() {
            return Err(Error::Model(format!(
                "M = {} but {} groups listed",
                file.m,
                file.groups.len()
            )));
        }
        let model = match file.weights {
            Some(w) => Self::with_weights(file.p, file.groups, w)?,
            None => Self::new(file.p, file.groups)?,
        };
        if model.g != file.g {
            return Err(Error::Model(format!(
                "g = {} but groups have size {}",
                file.g, model.g
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            p: self.p,
            g: self.g,
            m: self.groups.len(),
            groups: self.groups.clone(),
            weights: Some(self.weights.clone()),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Unweighted Euclidean norm of every group restriction.
    pub fn group_norms(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.p, beta.len())?;
        Ok(self
            .groups
            .iter()
            .map(|grp| grp.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt())
            .collect())
    }

    pub fn l21_norm(&self, beta: &[f64]) -> Result<f64> {
        let norms = self.group_norms(beta)?;
        Ok(norms.iter().zip(&self.weights).map(|(n, w)| n * w).sum())
    }

    /// The `k` groups of largest weighted norm; ties go to the lower index.
    pub fn best_k_block_support(&self, beta: &[f64], k: usize) -> Result<BlockSupport> {
        self.check_k(k)?;
        let norms = self.group_norms(beta)?;
        let mut order: Vec<usize> = (0..self.num_groups()).collect();
        // stable sort keeps lower indices first among equal keys
        order.sort_by(|&a, &b| {
            let wa = norms[a] * self.weights[a];
            let wb = norms[b] * self.weights[b];
            wb.total_cmp(&wa)
        });
        order.truncate(k);
        BlockSupport::new(order, self.num_groups())
    }

    pub fn restrict(&self, beta: &[f64], support: &BlockSupport) -> Result<Vec<f64>> {
        check_len(self.p, beta.len())?;
        self.check_support(support)?;
        let mut out = vec![0.0; self.p];
        for &gi in support.indices() {
            for &i in &self.groups[gi] {
                out[i] = beta[i];
            }
        }
        Ok(out)
    }

    /// `‖β − β_S‖_{2,1}` for the best k-block support `S`.
    pub fn tail_l21(&self, beta: &[f64], k: usize) -> Result<f64> {
        let support = self.best_k_block_support(beta, k)?;
        let norms = self.group_norms(beta)?;
        Ok((0..self.num_groups())
            .filter(|gi| !support.contains(*gi))
            .map(|gi| norms[gi] * self.weights[gi])
            .sum())
    }

    /// Proximal operator of `tau · ‖·‖_{2,1}`.
    pub fn group_soft_threshold(&self, beta: &[f64], tau: f64) -> Result<Vec<f64>> {
        let mut out = beta.to_vec();
        self.group_soft_threshold_in_place(&mut out, tau)?;
        Ok(out)
    }

    pub fn group_soft_threshold_in_place(&self, beta: &mut [f64], tau: f64) -> Result<()> {
        check_len(self.p, beta.len())?;
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("threshold tau = {tau} must be >= 0")));
        }
        for (grp, &w) in self.groups.iter().zip(&self.weights) {
            let norm = grp.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt();
            let t = tau * w;
            if norm <= t {
                for &i in grp {
                    beta[i] = 0.0;
                }
            } else {
                let shrink = 1.0 - t / norm;
                for &i in grp {
                    beta[i] *= shrink;
                }
            }
        }
        Ok(())
    }

    /// Groups containing at least one nonzero entry.
    pub fn active_groups(&self, beta: &[f64]) -> Result<BlockSupport> {
        check_len(self.p, beta.len())?;
        let active = self
            .groups
            .iter()
            .enumerate()
            .filter(|(_, grp)| grp.iter().any(|&i| beta[i] != 0.0))
            .map(|(gi, _)| gi)
            .collect();
        BlockSupport::new(active, self.num_groups())
    }

    pub fn is_k_block_sparse(&self, beta: &[f64], k: usize) -> Result<bool> {
        self.check_k(k)?;
        Ok(self.active_groups(beta)?.len() <= k)
    }

    /// Column indices covered by the groups of `support`, in group order.
    pub fn columns_of(&self, support: &BlockSupport) -> Vec<usize> {
        support
            .indices()
            .iter()
            .flat_map(|&gi| self.groups[gi].iter().copied())
            .collect()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.num_groups() {
            return Err(Error::Domain(format!(
                "k = {k} exceeds the number of groups M = {}",
                self.num_groups()
            )));
        }
        Ok(())
    }

    fn check_support(&self, support: &BlockSupport) -> Result<()> {
        match support.indices().last() {
            Some(&last) if last >= self.num_groups() => Err(Error::Domain(format!(
                "support references group {last} but M = {}",
                self.num_groups()
            ))),
            _ => Ok(()),
        }
    }
}

/// Scalar soft-thresholding, the g = 1 case of the group prox.
pub fn soft_threshold_in_place(beta: &mut [f64], tau: f64) {
    for b in beta.iter_mut() {
        let mag = b.abs();
        *b = if mag <= tau {
            0.0
        } else {
            *b * (1.0 - tau / mag)
        };
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
