use ndarray::{ArrayView1, ShapeBuilder};

use crate::error::{invalid, Result};
use crate::numerics::Matrix;

/// Dense `D x N` sample matrix; column `i` is sample `x_i`.
///
/// Storage is column-major so each sample is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Matrix,
}

impl FeatureMatrix {
    /// Wraps a `D x N` matrix whose columns are samples.
    pub fn from_columns(m: Matrix) -> Self {
        let (d, n) = m.dim();
        let mut data = Matrix::zeros((d, n).f());
        data.assign(&m);
        FeatureMatrix { data }
    }

    /// Builds from a list of samples of equal length.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map_or(0, Vec::len);
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(invalid(format!("sample {i} has {} values, expected {dim}", s.len())));
        }
        let flat: Vec<f64> = samples.iter().flatten().copied().collect();
        let data = Matrix::from_shape_vec((dim, samples.len()).f(), flat)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(FeatureMatrix { data })
    }

    /// Builds from row-major `N x D` data (one sample per row).
    pub fn from_rows(rows: &Matrix) -> Self {
        Self::from_columns(rows.t().to_owned())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.column(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }
}

pub(crate) fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}
