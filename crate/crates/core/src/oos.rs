//! Out-of-sample embedding.
//!
//! Each neighborhood gets a one-layer sigmoid network mapping its local codes
//! to its (rescaled) global coordinates. Stacking that network on the
//! neighborhood's encoder gives a uniform feed-forward net that is fine-tuned
//! end to end. A new sample is embedded by the net of its nearest training
//! sample.

use ndarray::{ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::GlobalEmbedding;
use crate::cae::{affine_sigmoid, TrainConfig, Trained};
use crate::error::{invalid, Result};
use crate::features::FeatureMatrix;
use crate::neighborhoods::{nearest_sample, NeighborhoodSet};
use crate::numerics::{Matrix, Vector};
use crate::scae::{LocalFeatureBlock, ScaeModel};

/// Per-row affine map from raw embedding coordinates into `[margin, 1 - margin]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScale {
    /// Raw value mapped to `target_lo`, per row.
    pub lo: Vec<f64>,
    pub gain: Vec<f64>,
    pub target_lo: Vec<f64>,
    /// Rows that were constant; mapped to 0.5 with unit gain.
    pub degenerate: Vec<bool>,
}

impl EmbeddingScale {
    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    /// Raw `d x n` coordinates to the scaled space.
    pub fn apply(&self, h: &Matrix) -> Matrix {
        let mut out = h.clone();
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            let (lo, g, t) = (self.lo[r], self.gain[r], self.target_lo[r]);
            row.mapv_inplace(|v| t + (v - lo) * g);
        }
        out
    }

    /// Scaled `d x n` coordinates back to the raw embedding space.
    pub fn invert(&self, s: &Matrix) -> Matrix {
        let mut out = s.clone();
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            let (lo, g, t) = (self.lo[r], self.gain[r], self.target_lo[r]);
            row.mapv_inplace(|v| lo + (v - t) / g);
        }
        out
    }

    pub fn invert_vector(&self, s: ArrayView1<'_, f64>) -> Vector {
        Vector::from_shape_fn(s.len(), |r| self.lo[r] + (s[r] - self.target_lo[r]) / self.gain[r])
    }
}

pub fn fit_embedding_scale(h: &GlobalEmbedding, margin: f64) -> Result<EmbeddingScale> {
    if !(margin > 0.0 && margin < 0.5) {
        return Err(invalid(format!("margin must lie in (0, 0.5), got {margin}")));
    }
    let d = h.dim();
    let mut scale = EmbeddingScale {
        lo: Vec::with_capacity(d),
        gain: Vec::with_capacity(d),
        target_lo: Vec::with_capacity(d),
        degenerate: Vec::with_capacity(d),
    };
    for row in h.h.rows() {
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            let lo = if lo.is_finite() { lo } else { 0.0 };
            scale.lo.push(lo);
            scale.gain.push(1.0);
            scale.target_lo.push(0.5);
            scale.degenerate.push(true);
        } else {
            scale.lo.push(lo);
            scale.gain.push((1.0 - 2.0 * margin) / (hi - lo));
            scale.target_lo.push(margin);
            scale.degenerate.push(false);
        }
    }
    Ok(scale)
}

/// Fully connected sigmoid layer `g(Q a + v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub q: Matrix,
    pub v: Vector,
}

impl DenseLayer {
    fn d_in(&self) -> usize {
        self.q.ncols()
    }
}

/// One-layer net from local codes to scaled global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignNet {
    /// `d x d_L`.
    pub theta: Matrix,
    pub u: Vector,
}

impl AlignNet {
    pub fn random(d_local: usize, d: usize, scale: f64, rng: &mut impl Rng) -> Self {
        AlignNet {
            theta: Matrix::from_shape_fn((d, d_local), |_| rng.random_range(-scale..=scale)),
            u: Vector::zeros(d),
        }
    }

    fn as_layer(&self) -> DenseLayer {
        DenseLayer { q: self.theta.clone(), v: self.u.clone() }
    }
}

/// Encoder layers of a stack followed by an alignment layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformNet {
    layers: Vec<DenseLayer>,
}

impl UniformNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("a uniform net needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.v.len() != layer.q.nrows() {
                return Err(invalid(format!("layer {l} bias length does not match its weight")));
            }
        }
        if let Some(l) = layers.windows(2).position(|w| w[0].q.nrows() != w[1].d_in()) {
            return Err(invalid(format!("layer {} output width does not match layer {} input", l, l + 1)));
        }
        Ok(UniformNet { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].q.nrows()
    }

    /// Scaled-space output for a `D x n` input.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.input_dim() {
            return Err(invalid(format!("input has {} rows, net expects {}", x.nrows(), self.input_dim())));
        }
        Ok(dense_forward(&self.layers, x).pop().expect("non-empty"))
    }
}

fn dense_forward(layers: &[DenseLayer], x: &Matrix) -> Vec<Matrix> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for l in layers {
        let next = affine_sigmoid(&l.q, &l.v, acts.last().expect("non-empty"));
        acts.push(next);
    }
    acts
}

fn squared_error(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Loss and per-layer `(dQ, dv)` of `||T - net(X)||_F^2`.
fn dense_backward(layers: &[DenseLayer], x: &Matrix, targets: &Matrix) -> (f64, Vec<(Matrix, Vector)>) {
    let acts = dense_forward(layers, x);
    let out = acts.last().expect("non-empty");
    let loss = squared_error(out, targets);
    let mut delta = out - targets;
    ndarray::Zip::from(&mut delta).and(out).for_each(|d, &o| *d *= 2.0 * o * (1.0 - o));
    let mut grads = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let input = &acts[l];
        grads.push((delta.dot(&input.t()), delta.sum_axis(Axis(1))));
        if l > 0 {
            let mut back = layers[l].q.t().dot(&delta);
            ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| *d *= a * (1.0 - a));
            delta = back;
        }
    }
    grads.reverse();
    (loss, grads)
}

fn descend(layers: &mut [DenseLayer], x: &Matrix, targets: &Matrix, cfg: &TrainConfig) -> Vec<f64> {
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, grads) = dense_backward(layers, x, targets);
        losses.push(loss);
        for (layer, (gq, gv)) in layers.iter_mut().zip(&grads) {
            layer.q.scaled_add(-cfg.learning_rate, gq);
            layer.v.scaled_add(-cfg.learning_rate, gv);
        }
    }
    let acts = dense_forward(layers, x);
    losses.push(squared_error(acts.last().expect("non-empty"), targets));
    losses
}

fn check_targets(targets: &Matrix, cols: usize) -> Result<()> {
    if targets.ncols() != cols {
        return Err(invalid(format!("targets have {} columns, expected {cols}", targets.ncols())));
    }
    if let Some(v) = targets.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(invalid(format!("targets must lie in (0, 1), found {v}")));
    }
    Ok(())
}

pub fn align_loss(net: &AlignNet, features: &Matrix, targets: &Matrix) -> Result<f64> {
    if features.nrows() != net.theta.ncols() || targets.nrows() != net.theta.nrows() || targets.ncols() != features.ncols() {
        return Err(invalid("shape mismatch in alignment-net loss"));
    }
    Ok(squared_error(&affine_sigmoid(&net.theta, &net.u, features), targets))
}

/// `(dTheta, du)` of [`align_loss`].
pub fn align_gradient(net: &AlignNet, features: &Matrix, targets: &Matrix) -> Result<(Matrix, Vector)> {
    align_loss(net, features, targets)?;
    let (_, mut grads) = dense_backward(&[net.as_layer()], features, targets);
    Ok(grads.pop().expect("one layer"))
}

/// Seeded gradient descent on `||targets - g(Theta H^L + u e^T)||_F^2`.
pub fn train_align_net(block: &LocalFeatureBlock, targets: &Matrix, cfg: &TrainConfig) -> Result<Trained<AlignNet>> {
    cfg.validate()?;
    check_targets(targets, block.features.ncols())?;
    let mut rng = cfg.rng();
    let init = AlignNet::random(block.features.nrows(), targets.nrows(), cfg.init_scale, &mut rng);
    let mut layers = [init.as_layer()];
    let losses = descend(&mut layers, &block.features, targets, cfg);
    let [layer] = layers;
    Ok(Trained { params: AlignNet { theta: layer.q, u: layer.v }, losses })
}

/// Encoder layers `(W, b)` of the stack followed by `(Theta, u)`.
pub fn build_uniform_net(m: &ScaeModel, a: &AlignNet) -> Result<UniformNet> {
    if m.output_dim() != a.theta.ncols() {
        return Err(invalid(format!(
            "stack outputs {} features but the alignment net expects {}",
            m.output_dim(),
            a.theta.ncols()
        )));
    }
    let mut layers: Vec<DenseLayer> = m.layers().iter().map(|p| DenseLayer { q: p.w.clone(), v: p.b.clone() }).collect();
    layers.push(a.as_layer());
    UniformNet::new(layers)
}

pub fn uniform_loss(net: &UniformNet, x: &Matrix, targets: &Matrix) -> Result<f64> {
    let out = net.forward(x)?;
    if out.dim() != targets.dim() {
        return Err(invalid("targets do not match the net output shape"));
    }
    Ok(squared_error(&out, targets))
}

/// Per-layer `(dQ, dv)` of [`uniform_loss`].
pub fn uniform_gradient(net: &UniformNet, x: &Matrix, targets: &Matrix) -> Result<Vec<(Matrix, Vector)>> {
    uniform_loss(net, x, targets)?;
    Ok(dense_backward(&net.layers, x, targets).1)
}

/// Back-propagation through every layer. If the loss ends above its starting
/// value the input net is returned unchanged.
pub fn finetune_uniform_net(net: &UniformNet, x_block: &Matrix, targets: &Matrix, cfg: &TrainConfig) -> Result<Trained<UniformNet>> {
    cfg.validate()?;
    check_targets(targets, x_block.ncols())?;
    uniform_loss(net, x_block, targets)?;
    let mut layers = net.layers.clone();
    let losses = descend(&mut layers, x_block, targets, cfg);
    let improved = losses.last().expect("non-empty") <= &losses[0];
    let params = if improved { UniformNet { layers } } else { net.clone() };
    Ok(Trained { params, losses })
}

/// Embeds one new sample with the net of its nearest training sample and
/// returns raw embedding coordinates.
pub fn embed_new(
    x_new: ArrayView1<'_, f64>,
    training: &FeatureMatrix,
    nbrs: &NeighborhoodSet,
    nets: &[UniformNet],
    scale: &EmbeddingScale,
) -> Result<Vector> {
    if x_new.len() != training.dim() {
        return Err(invalid(format!("sample has dimension {}, expected {}", x_new.len(), training.dim())));
    }
    if nets.len() != nbrs.len() || nets.len() != training.len() {
        return Err(invalid(format!(
            "{} nets for {} neighborhoods and {} training samples",
            nets.len(),
            nbrs.len(),
            training.len()
        )));
    }
    let j = nearest_sample(training, x_new)?;
    let net = &nets[nbrs.get(j).center()];
    let col = x_new.to_owned().insert_axis(Axis(1));
    let scaled = net.forward(&col)?;
    if scaled.nrows() != scale.dim() {
        return Err(invalid("net output width does not match the embedding scale"));
    }
    Ok(scale.invert_vector(scaled.column(0)))
}
