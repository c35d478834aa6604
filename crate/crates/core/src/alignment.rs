//! Global alignment of local features.
//!
//! For each neighborhood the local codes `H_i^L` define
//! `M_i = T (I - pinv(H_i^L) H_i^L)` with `T` the centering projector. The
//! Gram blocks `M_i M_i^T` are scattered into the global `N x N` matrix `Phi`,
//! and the embedding is read off the eigenvectors of `Phi` with the smallest
//! eigenvalues, skipping the constant null vector.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::neighborhoods::NeighborhoodIndex;
use crate::numerics::{centering_matrix, pseudoinverse, smallest_eigenvectors, symmetry_residual, Matrix};
use crate::scae::LocalFeatureBlock;

/// Spectral gaps below this are reported as degenerate.
pub const SPECTRAL_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentBlock {
    pub neighborhood: NeighborhoodIndex,
    /// `(k + 1) x (k + 1)`.
    pub m: Matrix,
}

/// Symmetric positive semidefinite `N x N` alignment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAlignment {
    phi: Matrix,
}

impl GlobalAlignment {
    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.nrows() == 0
    }
}

/// `d x N` embedding; column `i` represents sample `i`. Rows are orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEmbedding {
    pub h: Matrix,
    /// Eigenvalues belonging to the rows of `h`.
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
    /// Set when the spectrum does not single out a unique subspace.
    #[serde(default)]
    pub warning: Option<String>,
}

impl GlobalEmbedding {
    pub fn from_matrix(h: Matrix) -> Self {
        GlobalEmbedding { h, eigenvalues: Vec::new(), warning: None }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn len(&self) -> usize {
        self.h.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.h.ncols() == 0
    }
}

/// `M_i = T_{k+1} (I - pinv(H_i^L) H_i^L)`.
pub fn local_alignment_matrix(block: &LocalFeatureBlock, tol: f64) -> AlignmentBlock {
    let f = &block.features;
    let size = f.ncols();
    let mut complement = pseudoinverse(f, tol).dot(f);
    complement.mapv_inplace(|v| -v);
    for i in 0..size {
        complement[[i, i]] += 1.0;
    }
    let t = centering_matrix(size.max(1)).expect("size >= 1");
    AlignmentBlock { neighborhood: block.neighborhood.clone(), m: t.dot(&complement) }
}

/// Least-squares affine map `A_i = H_i T pinv(H_i^L)` from local codes to the
/// centered global coordinates of the neighborhood.
pub fn optimal_affine(h_global_block: &Matrix, block: &LocalFeatureBlock, tol: f64) -> Result<Matrix> {
    let size = block.features.ncols();
    if h_global_block.ncols() != size {
        return Err(invalid(format!(
            "global block has {} columns, neighborhood has {size}",
            h_global_block.ncols()
        )));
    }
    let t = centering_matrix(size)?;
    Ok(h_global_block.dot(&t).dot(&pseudoinverse(&block.features, tol)))
}

/// `||H_i T - A H_i^L||_F^2` for a given affine map `A`.
pub fn alignment_error(h_global_block: &Matrix, block: &LocalFeatureBlock, a: &Matrix) -> Result<f64> {
    let size = block.features.ncols();
    if h_global_block.ncols() != size || a.ncols() != block.features.nrows() || a.nrows() != h_global_block.nrows() {
        return Err(invalid("shape mismatch in alignment error"));
    }
    let t = centering_matrix(size)?;
    let r = h_global_block.dot(&t) - a.dot(&block.features);
    Ok(r.iter().map(|v| v * v).sum())
}

/// `Phi = sum_i S_i M_i M_i^T S_i^T`, accumulated in block order.
pub fn assemble_phi(blocks: &[AlignmentBlock], n: usize) -> Result<GlobalAlignment> {
    let mut phi = Matrix::zeros((n, n));
    for blk in blocks {
        let members = blk.neighborhood.members();
        if blk.m.nrows() != members.len() {
            return Err(invalid(format!(
                "alignment block of size {} for {} members",
                blk.m.nrows(),
                members.len()
            )));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= n) {
            return Err(invalid(format!("member index {bad} out of range for {n} samples")));
        }
        let gram = blk.m.dot(&blk.m.t());
        for (a, &ga) in members.iter().enumerate() {
            for (b, &gb) in members.iter().enumerate() {
                phi[[ga, gb]] += gram[[a, b]];
            }
        }
    }
    Ok(GlobalAlignment { phi })
}

/// Rows of the result are the eigenvectors of `Phi` with the 2nd through
/// `(d+1)`-th smallest eigenvalues. Each row's largest-magnitude entry is
/// made positive.
pub fn solve_embedding(g: &GlobalAlignment, d: usize) -> Result<GlobalEmbedding> {
    let n = g.len();
    if d == 0 {
        return Err(invalid("embedding dimension must be >= 1"));
    }
    if d >= n {
        return Err(invalid(format!("embedding dimension {d} must be below the sample count {n}")));
    }
    let spec = smallest_eigenvectors(&g.phi, d + 1, 0)?;
    let mut h = spec.eigenvectors.slice(ndarray::s![.., 1..]).t().to_owned();
    for mut row in h.rows_mut() {
        let pivot = row.iter().cloned().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    let scale = g.phi.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let gap = spec.eigenvalues[1] - spec.eigenvalues[0];
    let warning = if scale < SPECTRAL_GAP_TOL {
        Some("alignment matrix is identically zero; every local block has full column rank".to_string())
    } else if gap < SPECTRAL_GAP_TOL {
        Some(format!(
            "spectral gap {gap:e} between the null vector and the selected band; the embedding subspace is not unique"
        ))
    } else {
        None
    };
    Ok(GlobalEmbedding { h, eigenvalues: spec.eigenvalues[1..].to_vec(), warning })
}

/// Convenience: all stages from feature blocks to the embedding.
pub fn align(blocks: &[LocalFeatureBlock], n: usize, d: usize, tol: f64) -> Result<GlobalEmbedding> {
    let mats: Vec<AlignmentBlock> = blocks.iter().map(|b| local_alignment_matrix(b, tol)).collect();
    let g = assemble_phi(&mats, n)?;
    debug_assert!(symmetry_residual(g.phi()) < 1e-9);
    solve_embedding(&g, d)
}
