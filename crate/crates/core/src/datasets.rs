//! Seeded synthetic data: Swiss roll and Gaussian blobs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::numerics::Matrix;

const ROLL_T0: f64 = 1.5 * std::f64::consts::PI;
const ROLL_T1: f64 = 4.5 * std::f64::consts::PI;

/// Arc length of the spiral `(t cos t, t sin t)` from 0 to `t`.
pub fn spiral_arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

fn spiral_parameter(s: f64) -> f64 {
    let mut t = (2.0 * s).sqrt().max(ROLL_T0);
    for _ in 0..50 {
        let step = (spiral_arc_length(t) - s) / (1.0 + t * t).sqrt();
        t -= step;
        if step.abs() < 1e-14 * t {
            break;
        }
    }
    t
}

/// `n` points on a Swiss roll sampled uniformly in (arc length, height).
///
/// Returns the `3 x n` samples and the `2 x n` generating coordinates.
pub fn swiss_roll(n: usize, height: f64, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s0, s1) = (spiral_arc_length(ROLL_T0), spiral_arc_length(ROLL_T1));
    let mut x = Matrix::zeros((3, n));
    let mut truth = Matrix::zeros((2, n));
    for j in 0..n {
        let s = rng.random_range(s0..s1);
        let h = rng.random_range(0.0..height);
        let t = spiral_parameter(s);
        x[[0, j]] = t * t.cos();
        x[[1, j]] = h;
        x[[2, j]] = t * t.sin();
        truth[[0, j]] = s;
        truth[[1, j]] = h;
    }
    (x, truth)
}

/// Centers `distance * e_c` for `c < n_classes` in `dim` dimensions.
pub fn axis_centers(n_classes: usize, dim: usize, distance: f64) -> Result<Matrix> {
    if n_classes > dim {
        return Err(invalid(format!("{n_classes} axis centers need at least {n_classes} dimensions, got {dim}")));
    }
    let mut c = Matrix::zeros((dim, n_classes));
    for k in 0..n_classes {
        c[[k, k]] = distance;
    }
    Ok(c)
}

/// `per_class` isotropic Gaussian samples around each column of `centers`,
/// class by class. Labels are the center indices.
pub fn gaussian_blobs(centers: &Matrix, per_class: usize, sigma: f64, seed: u64) -> Result<(Matrix, Vec<String>)> {
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, n_classes) = centers.dim();
    let mut x = Matrix::zeros((dim, n_classes * per_class));
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        for p in 0..per_class {
            let j = c * per_class + p;
            for i in 0..dim {
                x[[i, j]] = centers[[i, c]] + normal.sample(&mut rng);
            }
            labels.push(c.to_string());
        }
    }
    Ok((x, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_length_inverse() {
        for s in [12.0, 40.0, 99.0] {
            let t = spiral_parameter(s);
            assert!((spiral_arc_length(t) - s).abs() < 1e-10);
        }
    }

    #[test]
    fn arc_length_matches_quadrature() {
        let (a, b) = (ROLL_T0, ROLL_T1);
        let steps = 20_000;
        let h = (b - a) / steps as f64;
        let simpson: f64 = (0..=steps)
            .map(|i| {
                let t = a + i as f64 * h;
                let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * (1.0 + t * t).sqrt()
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((spiral_arc_length(b) - spiral_arc_length(a) - simpson).abs() < 1e-8);
    }

    #[test]
    fn roll_points_lie_on_the_surface() {
        let (x, truth) = swiss_roll(50, 10.0, 1);
        for j in 0..50 {
            let t = (x[[0, j]].powi(2) + x[[2, j]].powi(2)).sqrt();
            assert!((spiral_arc_length(t) - truth[[0, j]]).abs() < 1e-9);
            assert_eq!(x[[1, j]], truth[[1, j]]);
        }
    }

    #[test]
    fn blobs_are_seeded_and_centered() {
        let c = axis_centers(3, 4, 5.0).unwrap();
        let (x, labels) = gaussian_blobs(&c, 400, 0.5, 2).unwrap();
        assert_eq!(gaussian_blobs(&c, 400, 0.5, 2).unwrap().0, x);
        assert_eq!(labels[0], "0");
        assert_eq!(labels[1199], "2");
        let mean = x.slice(ndarray::s![.., 400..800]).mean_axis(ndarray::Axis(1)).unwrap();
        assert!((mean[1] - 5.0).abs() < 0.1 && mean[0].abs() < 0.1);
        assert!(axis_centers(5, 4, 1.0).is_err());
    }
}
