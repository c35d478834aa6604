//! Single contractive auto-encoder layer with tied weights.
//!
//! Encoder `H = g(W X + b)`, decoder `X~ = g(W^T H + c)`, with the objective
//!
//! ```text
//! ||X - X~||_F^2 + lambda * trace(W^T A A^T W),   A = H .* (1 - H)
//! ```
//!
//! `H` is always the encoder output, so the code-matching term vanishes. The
//! penalty is kept in its matrix form, which couples samples through `A A^T`.

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{sigmoid_derivative_factor, sigmoid_inplace, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeParams {
    /// Encoder weight, `d_out x d_in`. The decoder uses its transpose.
    pub w: Matrix,
    /// Encoder bias, length `d_out`.
    pub b: Vector,
    /// Decoder bias, length `d_in`.
    pub c: Vector,
}

impl CaeParams {
    pub fn new(w: Matrix, b: Vector, c: Vector) -> Result<Self> {
        let (d_out, d_in) = w.dim();
        if b.len() != d_out || c.len() != d_in {
            return Err(invalid(format!(
                "bias lengths ({}, {}) do not match weight shape {d_out}x{d_in}",
                b.len(),
                c.len()
            )));
        }
        if w.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("CAE parameters must be finite"));
        }
        Ok(CaeParams { w, b, c })
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        CaeParams { w: Matrix::zeros((d_out, d_in)), b: Vector::zeros(d_out), c: Vector::zeros(d_in) }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn random(d_in: usize, d_out: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let w = Matrix::from_shape_fn((d_out, d_in), |_| rng.random_range(-scale..=scale));
        CaeParams { w, b: Vector::zeros(d_out), c: Vector::zeros(d_in) }
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub(crate) fn step(&mut self, g: &CaeGradient, lr: f64) {
        self.w.scaled_add(-lr, &g.w);
        self.b.scaled_add(-lr, &g.b);
        self.c.scaled_add(-lr, &g.c);
    }
}

/// Partial derivatives of a loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeGradient {
    pub w: Matrix,
    pub b: Vector,
    pub c: Vector,
}

impl CaeGradient {
    pub fn norm(&self) -> f64 {
        self.w.iter().chain(self.b.iter()).chain(self.c.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Optimizer settings shared by every gradient-descent stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lambda: 0.1, learning_rate: 0.1, epochs: 200, seed: 0, init_scale: 0.05 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be finite and > 0, got {}", self.learning_rate)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(invalid(format!("init scale must be > 0, got {}", self.init_scale)));
        }
        Ok(())
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        TrainConfig { epochs, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Trained parameters together with the loss before the first step and
/// after every epoch (`epochs + 1` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct Trained<P> {
    pub params: P,
    pub losses: Vec<f64>,
}

fn check_rows(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(invalid(format!("{what} has {got} rows, expected {expected}")));
    }
    Ok(())
}

pub(crate) fn affine_sigmoid(w: &Matrix, bias: &Vector, x: &Matrix) -> Matrix {
    let mut z = w.dot(x);
    z += &bias.view().insert_axis(Axis(1));
    sigmoid_inplace(&mut z);
    z
}

fn decode_unchecked(p: &CaeParams, h: &Matrix) -> Matrix {
    let mut y = p.w.t().dot(h);
    y += &p.c.view().insert_axis(Axis(1));
    sigmoid_inplace(&mut y);
    y
}

pub fn encode(p: &CaeParams, x: &Matrix) -> Result<Matrix> {
    check_rows("input", x.nrows(), p.d_in())?;
    Ok(affine_sigmoid(&p.w, &p.b, x))
}

pub fn decode(p: &CaeParams, h: &Matrix) -> Result<Matrix> {
    check_rows("code", h.nrows(), p.d_out())?;
    Ok(decode_unchecked(p, h))
}

/// Loss terms of one layer, evaluated on the encoder output.
pub(crate) fn loss_terms(p: &CaeParams, x: &Matrix, h: &Matrix) -> (f64, f64) {
    let r = decode_unchecked(p, h);
    let rec: f64 = r.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let a = sigmoid_derivative_factor(h);
    let pen: f64 = a.t().dot(&p.w).iter().map(|v| v * v).sum();
    (rec, pen)
}

pub fn cae_loss(p: &CaeParams, x: &Matrix, lambda: f64) -> Result<f64> {
    check_rows("input", x.nrows(), p.d_in())?;
    let h = affine_sigmoid(&p.w, &p.b, x);
    let (rec, pen) = loss_terms(p, x, &h);
    Ok(rec + lambda * pen)
}

pub(crate) struct LayerPass {
    pub loss: f64,
    pub grad: CaeGradient,
    /// Gradient with respect to the layer input, if requested.
    pub dx: Option<Matrix>,
}

/// Forward and backward pass of one layer given its precomputed code `h`.
///
/// `upstream_dh` is an extra gradient arriving at `H` from layers stacked on
/// top (where `H` is their input).
pub(crate) fn layer_backward(
    p: &CaeParams,
    x: &Matrix,
    h: &Matrix,
    lambda: f64,
    upstream_dh: Option<&Matrix>,
    want_dx: bool,
) -> LayerPass {
    let r = decode_unchecked(p, h);
    let e = &r - x;
    let rec: f64 = e.iter().map(|v| v * v).sum();

    let a = sigmoid_derivative_factor(h);
    let ba = a.t().dot(&p.w); // n x d_in
    let pen: f64 = ba.iter().map(|v| v * v).sum();

    // decoder side
    let mut dy = e.clone();
    ndarray::Zip::from(&mut dy).and(&r).for_each(|d, &rv| *d *= 2.0 * rv * (1.0 - rv));
    let mut gw = h.dot(&dy.t());
    let gc = dy.sum_axis(Axis(1));
    let mut dh = p.w.dot(&dy);

    if lambda != 0.0 {
        gw.scaled_add(2.0 * lambda, &a.dot(&ba));
        let da = p.w.dot(&ba.t());
        ndarray::Zip::from(&mut dh)
            .and(&da)
            .and(h)
            .for_each(|g, &d, &hv| *g += 2.0 * lambda * d * (1.0 - 2.0 * hv));
    }
    if let Some(up) = upstream_dh {
        dh += up;
    }

    let dz = dh * &a;
    gw += &dz.dot(&x.t());
    let gb = dz.sum_axis(Axis(1));

    let dx = want_dx.then(|| {
        let mut dx = p.w.t().dot(&dz);
        dx.scaled_add(-2.0, &e);
        dx
    });

    LayerPass { loss: rec + lambda * pen, grad: CaeGradient { w: gw, b: gb, c: gc }, dx }
}

/// Analytic gradient of [`cae_loss`] with respect to `(W, b, c)`.
pub fn cae_gradient(p: &CaeParams, x: &Matrix, lambda: f64) -> Result<CaeGradient> {
    check_rows("input", x.nrows(), p.d_in())?;
    let h = affine_sigmoid(&p.w, &p.b, x);
    Ok(layer_backward(p, x, &h, lambda, None, false).grad)
}

pub(crate) fn check_unit_interval(x: &Matrix) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("training data must lie in [0, 1], found {v}")));
    }
    Ok(())
}

/// Full-batch gradient descent on one layer from a seeded random start.
pub fn train_cae(x: &Matrix, d_out: usize, cfg: &TrainConfig) -> Result<Trained<CaeParams>> {
    cfg.validate()?;
    if x.ncols() == 0 {
        return Err(invalid("cannot train on zero samples"));
    }
    if d_out == 0 {
        return Err(invalid("layer width must be >= 1"));
    }
    check_unit_interval(x)?;
    let mut rng = cfg.rng();
    let params = CaeParams::random(x.nrows(), d_out, cfg.init_scale, &mut rng);
    Ok(descend_cae(params, x, cfg))
}

pub(crate) fn descend_cae(mut params: CaeParams, x: &Matrix, cfg: &TrainConfig) -> Trained<CaeParams> {
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let h = affine_sigmoid(&params.w, &params.b, x);
        let pass = layer_backward(&params, x, &h, cfg.lambda, None, false);
        losses.push(pass.loss);
        params.step(&pass.grad, cfg.learning_rate);
    }
    let h = affine_sigmoid(&params.w, &params.b, x);
    let (rec, pen) = loss_terms(&params, x, &h);
    losses.push(rec + cfg.lambda * pen);
    Trained { params, losses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;
    use crate::numerics::tests::random_matrix;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn random_params(d_in: usize, d_out: usize, seed: u64) -> CaeParams {
        let w = random_matrix(d_out, d_in, seed);
        let b = random_matrix(d_out, 1, seed + 100).column(0).to_owned();
        let c = random_matrix(d_in, 1, seed + 200).column(0).to_owned();
        CaeParams::new(w, b, c).unwrap()
    }

    fn unit_data(rows: usize, cols: usize, seed: u64) -> Matrix {
        random_matrix(rows, cols, seed).mapv(|v| 0.5 * (v + 1.0))
    }

    /// Scalar-loop evaluation of every term, independent of the matrix path.
    fn scalar_loss(p: &CaeParams, x: &Matrix, lambda: f64) -> f64 {
        let (d_out, d_in) = p.w.dim();
        let n = x.ncols();
        let mut h = vec![vec![0.0; n]; d_out];
        for s in 0..n {
            for o in 0..d_out {
                let mut z = p.b[o];
                for i in 0..d_in {
                    z += p.w[[o, i]] * x[[i, s]];
                }
                h[o][s] = 1.0 / (1.0 + (-z).exp());
            }
        }
        let mut rec = 0.0;
        for s in 0..n {
            for i in 0..d_in {
                let mut y = p.c[i];
                for o in 0..d_out {
                    y += p.w[[o, i]] * h[o][s];
                }
                let r = 1.0 / (1.0 + (-y).exp());
                rec += (x[[i, s]] - r).powi(2);
            }
        }
        // trace(W^T A A^T W) = sum_{i,j} W_{:,i}^T A A^T W_{:,j} delta_ij
        let mut pen = 0.0;
        for i in 0..d_in {
            for s in 0..n {
                let mut v = 0.0;
                for o in 0..d_out {
                    v += h[o][s] * (1.0 - h[o][s]) * p.w[[o, i]];
                }
                pen += v * v;
            }
        }
        rec + lambda * pen
    }

    #[test]
    fn encode_decode_reference_values() {
        let p = CaeParams::zeros(3, 2);
        let x = unit_data(3, 4, 1);
        assert!(encode(&p, &x).unwrap().iter().all(|&v| v == 0.5));
        assert!(decode(&p, &Matrix::from_elem((2, 4), 0.3)).unwrap().iter().all(|&v| v == 0.5));

        let p1 = CaeParams::new(array![[3f64.ln()]], array![0.0], array![0.0]).unwrap();
        assert_abs_diff_eq!(encode(&p1, &array![[1.0]]).unwrap()[[0, 0]], 0.75, epsilon = 1e-15);
        assert!(encode(&p1, &Matrix::zeros((2, 1))).is_err());
        assert!(decode(&p1, &Matrix::zeros((3, 1))).is_err());
    }

    #[test]
    fn encode_matches_scalar_recomputation() {
        let p = random_params(5, 3, 7);
        let x = unit_data(5, 6, 8);
        let h = encode(&p, &x).unwrap();
        for o in 0..3 {
            for s in 0..6 {
                let z: f64 = p.b[o] + (0..5).map(|i| p.w[[o, i]] * x[[i, s]]).sum::<f64>();
                assert_abs_diff_eq!(h[[o, s]], sigmoid(z), epsilon = 1e-14);
            }
        }
        let r = decode(&p, &h).unwrap();
        for i in 0..5 {
            for s in 0..6 {
                let y: f64 = p.c[i] + (0..3).map(|o| p.w[[o, i]] * h[[o, s]]).sum::<f64>();
                assert_abs_diff_eq!(r[[i, s]], sigmoid(y), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn decode_saturates_toward_binary_input() {
        let scale = 50.0;
        let w = Matrix::eye(3) * scale;
        // biases at -scale/2 put the sigmoid threshold midway between 0 and 1
        let bias = Vector::from_elem(3, -scale / 2.0);
        let p = CaeParams::new(w, bias.clone(), bias).unwrap();
        let x = array![[0.99, 0.01], [0.01, 0.99], [0.99, 0.99]];
        let r = decode(&p, &encode(&p, &x).unwrap()).unwrap();
        for (a, b) in r.iter().zip(x.iter()) {
            assert!((a - b).abs() < 0.011);
        }
    }

    #[test]
    fn loss_reference_values() {
        let p = CaeParams::zeros(2, 3);
        assert_eq!(cae_loss(&p, &Matrix::from_elem((2, 5), 0.5), 0.7).unwrap(), 0.0);
        let p1 = CaeParams::zeros(1, 1);
        assert_abs_diff_eq!(cae_loss(&p1, &array![[1.0]], 0.0).unwrap(), 0.25, epsilon = 1e-15);
        for seed in 0..5 {
            let p = random_params(4, 3, seed);
            let x = unit_data(4, 5, seed + 9);
            let got = cae_loss(&p, &x, 0.1).unwrap();
            assert_abs_diff_eq!(got, scalar_loss(&p, &x, 0.1), epsilon = 1e-12);
            assert!(got >= 0.0);
        }
    }

    fn fd_check(p: &CaeParams, x: &Matrix, lambda: f64) -> f64 {
        let g = cae_gradient(p, x, lambda).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = |get: &dyn Fn(&CaeParams) -> f64, set: &dyn Fn(&mut CaeParams, f64), analytic: f64| {
            let base = get(p);
            let mut q = p.clone();
            set(&mut q, base + h);
            let up = scalar_loss(&q, x, lambda);
            set(&mut q, base - h);
            let down = scalar_loss(&q, x, lambda);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        };
        for o in 0..p.d_out() {
            for i in 0..p.d_in() {
                probe(&|q| q.w[[o, i]], &|q, v| q.w[[o, i]] = v, g.w[[o, i]]);
            }
            probe(&|q| q.b[o], &|q, v| q.b[o] = v, g.b[o]);
        }
        for i in 0..p.d_in() {
            probe(&|q| q.c[i], &|q, v| q.c[i] = v, g.c[i]);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_params(4, 3, seed * 3);
            let x = unit_data(4, 5, seed * 3 + 1);
            let worst = fd_check(&p, &x, 0.1);
            assert!(worst < 1e-5, "seed {seed}: relative error {worst}");
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_reconstruction() {
        let p = CaeParams::zeros(3, 2);
        let g = cae_gradient(&p, &Matrix::from_elem((3, 4), 0.5), 0.0).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn gradient_small_after_long_training() {
        let x = unit_data(3, 6, 4);
        let cfg = TrainConfig { epochs: 200_000, learning_rate: 0.2, lambda: 0.1, ..Default::default() };
        let t = train_cae(&x, 2, &cfg).unwrap();
        let g = cae_gradient(&t.params, &x, 0.1).unwrap();
        assert!(g.norm() < 1e-4, "gradient norm {}", g.norm());
    }

    #[test]
    fn training_decreases_loss_and_is_deterministic() {
        let x = unit_data(10, 20, 3);
        let cfg = TrainConfig { epochs: 500, ..Default::default() };
        let a = train_cae(&x, 4, &cfg).unwrap();
        assert_eq!(a.losses.len(), 501);
        assert!(a.losses.last().unwrap() < &a.losses[0]);
        let b = train_cae(&x, 4, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_half_data_stays_near_zero_loss() {
        let x = Matrix::from_elem((4, 6), 0.5);
        let t = train_cae(&x, 2, &TrainConfig::default()).unwrap();
        assert!(t.losses.last().unwrap() <= &t.losses[0]);
        assert_eq!(cae_loss(&CaeParams::zeros(4, 2), &x, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn training_rejects_out_of_range_input() {
        let x = array![[0.2, 1.5]];
        assert!(train_cae(&x, 1, &TrainConfig::default()).is_err());
    }
}
