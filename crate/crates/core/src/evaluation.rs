//! Embedding quality measures and reference reductions.

use std::collections::HashMap;
use std::hash::Hash;

use ndarray::{ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::GlobalEmbedding;
use crate::error::{invalid, Result};
use crate::features::{squared_distance, FeatureMatrix};
use crate::neighborhoods::{gather, NeighborhoodSet};
use crate::numerics::{pseudoinverse, symmetric_eigen, thin_svd, Matrix, Vector, DEFAULT_PINV_TOL};
use crate::scae::LocalFeatureBlock;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_RESTARTS: usize = 10;

/// Points (`d x N`) with one class label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub points: Matrix,
    pub labels: Vec<String>,
}

impl LabeledEmbedding {
    pub fn new(points: Matrix, labels: Vec<String>) -> Result<Self> {
        if points.ncols() != labels.len() {
            return Err(invalid(format!("{} points but {} labels", points.ncols(), labels.len())));
        }
        Ok(LabeledEmbedding { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignment: Vec<usize>,
    /// `d x n_clusters`.
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn nearest_centroid(p: ArrayView1<'_, f64>, centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, col) in centroids.columns().into_iter().enumerate() {
        let d = squared_distance(p, col);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Farthest-point seeding from a random first center.
fn seed_centroids(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.ncols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut min_d: Vec<f64> = (0..n).map(|j| squared_distance(points.column(j), points.column(chosen[0]))).collect();
    while chosen.len() < k {
        let mut far = 0;
        for j in 1..n {
            if min_d[j] > min_d[far] {
                far = j;
            }
        }
        chosen.push(far);
        for j in 0..n {
            min_d[j] = min_d[j].min(squared_distance(points.column(j), points.column(far)));
        }
    }
    let mut c = Matrix::zeros((points.nrows(), k));
    for (col, &j) in chosen.iter().enumerate() {
        c.column_mut(col).assign(&points.column(j));
    }
    c
}

fn lloyd(points: &Matrix, mut centroids: Matrix) -> ClusteringResult {
    let n = points.ncols();
    let k = centroids.ncols();
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut inertia = 0.0;
        for j in 0..n {
            let (c, d) = nearest_centroid(points.column(j), &centroids);
            inertia += d;
            if assignment[j] != c {
                assignment[j] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for j in 0..n {
            let c = assignment[j];
            counts[c] += 1;
            let mut col = sums.column_mut(c);
            col += &points.column(j);
        }
        for c in 0..k {
            // empty clusters keep their previous centroid
            if counts[c] > 0 {
                centroids.column_mut(c).assign(&(&sums.column(c) / counts[c] as f64));
            }
        }
    }
    let inertia = (0..n).map(|j| squared_distance(points.column(j), centroids.column(assignment[j]))).sum();
    ClusteringResult { assignment, centroids, inertia, history }
}

/// Best of `restarts` Lloyd runs (lowest inertia, ties to the earliest restart).
pub fn kmeans(points: &Matrix, n_clusters: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    let n = points.ncols();
    if n_clusters == 0 || n_clusters > n {
        return Err(invalid(format!("cannot form {n_clusters} clusters from {n} points")));
    }
    let mut best: Option<ClusteringResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let run = lloyd(points, seed_centroids(points, n_clusters, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Fraction of samples that belong to the majority class of their cluster.
pub fn purity<C: Eq + Hash, L: Eq + Hash>(assignment: &[C], labels: &[L]) -> Result<f64> {
    if assignment.is_empty() {
        return Err(invalid("purity of an empty clustering"));
    }
    if assignment.len() != labels.len() {
        return Err(invalid(format!("{} assignments but {} labels", assignment.len(), labels.len())));
    }
    let mut table: HashMap<&C, HashMap<&L, usize>> = HashMap::new();
    for (c, l) in assignment.iter().zip(labels) {
        *table.entry(c).or_default().entry(l).or_default() += 1;
    }
    let correct: usize = table.values().map(|row| row.values().copied().max().unwrap_or(0)).sum();
    Ok(correct as f64 / assignment.len() as f64)
}

/// 1-NN accuracy of `test` against `train` (Euclidean, ties to the lowest index).
pub fn knn_classify(train: &LabeledEmbedding, test: &LabeledEmbedding) -> Result<f64> {
    if train.is_empty() {
        return Err(invalid("1-NN needs at least one training point"));
    }
    if test.is_empty() {
        return Err(invalid("1-NN needs at least one test point"));
    }
    if train.points.nrows() != test.points.nrows() {
        return Err(invalid(format!(
            "train points have dimension {}, test points {}",
            train.points.nrows(),
            test.points.nrows()
        )));
    }
    let hits = test
        .points
        .columns()
        .into_iter()
        .zip(&test.labels)
        .filter(|(q, label)| {
            let mut best = (f64::INFINITY, 0);
            for (j, col) in train.points.columns().into_iter().enumerate() {
                let d = squared_distance(*q, col);
                if d < best.0 {
                    best = (d, j);
                }
            }
            &train.labels[best.1] == *label
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Principal axes of a sample set, usable on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vector,
    /// `d x D`, orthonormal rows.
    pub components: Matrix,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.mean.len() {
            return Err(invalid(format!("data has dimension {}, expected {}", x.nrows(), self.mean.len())));
        }
        let centered = x - &self.mean.view().insert_axis(Axis(1));
        Ok(self.components.dot(&centered))
    }
}

pub fn fit_pca(x: &FeatureMatrix, d: usize) -> Result<PcaModel> {
    let (dim, n) = (x.dim(), x.len());
    if d == 0 || d > dim.min(n) {
        return Err(invalid(format!("PCA dimension {d} must be in 1..={}", dim.min(n))));
    }
    let mean = x.matrix().mean_axis(Axis(1)).expect("n >= 1");
    let centered = x.matrix() - &mean.view().insert_axis(Axis(1));
    let svd = thin_svd(&centered);
    let denom = (n.max(2) - 1) as f64;
    let mut components = Matrix::zeros((d, dim));
    let mut variances = Vec::with_capacity(d);
    for r in 0..d {
        let col = svd.u.column(r);
        let pivot = col.iter().cloned().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            components[[r, i]] = sign * col[i];
        }
        variances.push(svd.s[r].powi(2) / denom);
    }
    Ok(PcaModel { mean, components, variances })
}

/// Scores of the top `d` principal components, one row per component.
pub fn pca_project(x: &FeatureMatrix, d: usize) -> Result<GlobalEmbedding> {
    let model = fit_pca(x, d)?;
    Ok(GlobalEmbedding::from_matrix(model.project(x.matrix())?))
}

/// Local PCA coordinates of every centered neighborhood, packaged like
/// stacked-encoder features. Feeding them to the alignment stage is classical
/// local tangent space alignment.
pub fn ltsa_mode_features(x: &FeatureMatrix, nbrs: &NeighborhoodSet, d_local: usize) -> Result<Vec<LocalFeatureBlock>> {
    if d_local == 0 || d_local > nbrs.k() {
        return Err(invalid(format!("local dimension {d_local} must be in 1..={}", nbrs.k())));
    }
    nbrs.iter()
        .map(|nbr| {
            let local = gather(x, nbr)?;
            let mean = local.mean_axis(Axis(1)).expect("non-empty");
            let centered = &local - &mean.view().insert_axis(Axis(1));
            let gram = centered.t().dot(&centered);
            let spec = symmetric_eigen(&gram)?;
            let size = nbr.size();
            let top = spec.eigenvalues[size - 1].max(0.0);
            let mut coords = Matrix::zeros((d_local, size));
            for r in 0..d_local {
                let k = size - 1 - r;
                let lam = spec.eigenvalues[k];
                if lam <= DEFAULT_PINV_TOL * top || lam <= 0.0 {
                    continue;
                }
                let s = lam.sqrt();
                for c in 0..size {
                    coords[[r, c]] = s * spec.eigenvectors[[c, k]];
                }
            }
            let degenerate = !(top > 0.0);
            Ok(LocalFeatureBlock { neighborhood: nbr.clone(), features: coords, degenerate })
        })
        .collect()
}

/// `||Y - B [H; 1]||_F / ||Y - mean(Y)||_F` for the least-squares affine `B`.
pub fn affine_fit_residual(embedding: &Matrix, truth: &Matrix) -> Result<f64> {
    let n = embedding.ncols();
    if truth.ncols() != n || n == 0 {
        return Err(invalid("embedding and reference must have the same nonzero sample count"));
    }
    let mut design = Matrix::ones((embedding.nrows() + 1, n));
    design.slice_mut(ndarray::s![..embedding.nrows(), ..]).assign(embedding);
    let b = truth.dot(&pseudoinverse(&design, DEFAULT_PINV_TOL));
    let resid = truth - &b.dot(&design);
    let mean = truth.mean_axis(Axis(1)).expect("n >= 1");
    let spread = truth - &mean.view().insert_axis(Axis(1));
    let num: f64 = resid.iter().map(|v| v * v).sum();
    let den: f64 = spread.iter().map(|v| v * v).sum();
    Ok((num / den).sqrt())
}
