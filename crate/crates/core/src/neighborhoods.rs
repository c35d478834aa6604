//! Euclidean k-nearest-neighbor neighborhoods.
//!
//! Each sample's neighborhood lists the sample itself followed by its `k`
//! nearest other samples. Ties in distance go to the lower sample index, so
//! construction is fully deterministic.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::{squared_distance, FeatureMatrix};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodIndex {
    center: usize,
    members: Vec<usize>,
}

impl NeighborhoodIndex {
    /// `members[0]` must be `center` and members must be distinct.
    pub fn new(center: usize, members: Vec<usize>) -> Result<Self> {
        if members.first() != Some(&center) {
            return Err(invalid("neighborhood must list its center first"));
        }
        let mut seen = members.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != members.len() {
            return Err(invalid(format!("neighborhood of {center} has repeated members")));
        }
        Ok(NeighborhoodIndex { center, members })
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Number of samples in the neighborhood, `k + 1`.
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    k: usize,
    entries: Vec<NeighborhoodIndex>,
}

impl NeighborhoodSet {
    /// Entry `i` must be centered on sample `i`.
    pub fn new(k: usize, entries: Vec<NeighborhoodIndex>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.center != i {
                return Err(invalid(format!("entry {i} is centered on {}", e.center)));
            }
            if e.size() != k + 1 {
                return Err(invalid(format!("entry {i} has {} members, expected {}", e.size(), k + 1)));
            }
        }
        Ok(NeighborhoodSet { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &NeighborhoodIndex {
        &self.entries[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NeighborhoodIndex> {
        self.entries.iter()
    }
}

fn nearest_others(x: &FeatureMatrix, i: usize, k: usize) -> Vec<usize> {
    let xi = x.sample(i);
    let mut cand: Vec<(f64, usize)> =
        (0..x.len()).filter(|&j| j != i).map(|j| (squared_distance(xi, x.sample(j)), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Builds one neighborhood of size `k + 1` per sample.
pub fn build_neighborhoods(x: &FeatureMatrix, k: usize) -> Result<NeighborhoodSet> {
    let n = x.len();
    if n == 0 {
        return Err(invalid("cannot build neighborhoods of an empty sample set"));
    }
    if k == 0 || k >= n {
        return Err(invalid(format!("neighborhood size k={k} must satisfy 1 <= k <= N-1 (N={n})")));
    }
    let entries = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut members = Vec::with_capacity(k + 1);
            members.push(i);
            members.extend(nearest_others(x, i, k));
            NeighborhoodIndex { center: i, members }
        })
        .collect();
    Ok(NeighborhoodSet { k, entries })
}

/// Materializes `X_i = X S_i`: the member samples as columns, in member order.
pub fn gather(x: &FeatureMatrix, nbr: &NeighborhoodIndex) -> Result<Matrix> {
    let n = x.len();
    if let Some(&bad) = nbr.members.iter().find(|&&m| m >= n) {
        return Err(invalid(format!("member index {bad} out of range for {n} samples")));
    }
    let mut out = Matrix::zeros((x.dim(), nbr.size()));
    for (col, &m) in nbr.members.iter().enumerate() {
        out.column_mut(col).assign(&x.sample(m));
    }
    Ok(out)
}

/// Index of the sample closest to `query`; ties go to the lowest index.
pub fn nearest_sample(x: &FeatureMatrix, query: ArrayView1<'_, f64>) -> Result<usize> {
    if x.is_empty() {
        return Err(invalid("no samples to search"));
    }
    if query.len() != x.dim() {
        return Err(invalid(format!("query has dimension {}, expected {}", query.len(), x.dim())));
    }
    let mut best = (f64::INFINITY, 0usize);
    for j in 0..x.len() {
        let d = squared_distance(query, x.sample(j));
        if d < best.0 {
            best = (d, j);
        }
    }
    Ok(best.1)
}
