//! Stacked contractive auto-encoders.
//!
//! Layers are pretrained greedily, each on the code of the layer below, then
//! fine-tuned jointly on the sum of per-layer CAE objectives evaluated on the
//! composed forward activations (`H^l = X^{l+1}`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cae::{affine_sigmoid, check_unit_interval, descend_cae, layer_backward, CaeGradient, CaeParams, TrainConfig, Trained};
use crate::error::{invalid, Result};
use crate::features::FeatureMatrix;
use crate::neighborhoods::{gather, NeighborhoodIndex, NeighborhoodSet};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaeModel {
    layers: Vec<CaeParams>,
}

impl ScaeModel {
    /// Layer `l` must consume the width produced by layer `l - 1`.
    pub fn new(layers: Vec<CaeParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("a stacked model needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(invalid(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    l,
                    pair[0].d_out(),
                    l + 1,
                    pair[1].d_in()
                )));
            }
        }
        Ok(ScaeModel { layers })
    }

    pub fn layers(&self) -> &[CaeParams] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[D, d_1, ..., d_L]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].d_in()).chain(self.layers.iter().map(CaeParams::d_out)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out()
    }
}

/// Top-layer codes of one neighborhood, columns in member order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFeatureBlock {
    pub neighborhood: NeighborhoodIndex,
    pub features: Matrix,
    /// Set when the features carry no local variation (e.g. identical samples).
    #[serde(default)]
    pub degenerate: bool,
}

impl LocalFeatureBlock {
    pub fn new(neighborhood: NeighborhoodIndex, features: Matrix) -> Result<Self> {
        if features.ncols() != neighborhood.size() {
            return Err(invalid(format!(
                "feature block has {} columns for a neighborhood of {}",
                features.ncols(),
                neighborhood.size()
            )));
        }
        Ok(LocalFeatureBlock { neighborhood, features, degenerate: false })
    }
}

fn check_dims(x: &Matrix, dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(invalid("layer widths need an input width and at least one layer"));
    }
    if dims[0] != x.nrows() {
        return Err(invalid(format!("input width {} does not match data dimension {}", dims[0], x.nrows())));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(invalid("layer widths must be >= 1"));
    }
    Ok(())
}

/// Result of greedy pretraining: the model plus each layer's loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub model: ScaeModel,
    pub layer_losses: Vec<Vec<f64>>,
}

/// Greedy layer-wise pretraining. All layers draw their initial weights from
/// one RNG stream seeded by `cfg.seed`, so a one-layer stack equals
/// [`crate::cae::train_cae`].
pub fn pretrain(x: &Matrix, dims: &[usize], cfg: &TrainConfig) -> Result<Pretrained> {
    cfg.validate()?;
    check_dims(x, dims)?;
    if x.ncols() == 0 {
        return Err(invalid("cannot train on zero samples"));
    }
    check_unit_interval(x)?;
    let mut rng = cfg.rng();
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut layer_losses = Vec::with_capacity(dims.len() - 1);
    let mut input = x.clone();
    for w in dims.windows(2) {
        let init = CaeParams::random(w[0], w[1], cfg.init_scale, &mut rng);
        let trained = descend_cae(init, &input, cfg);
        input = affine_sigmoid(&trained.params.w, &trained.params.b, &input);
        layers.push(trained.params);
        layer_losses.push(trained.losses);
    }
    Ok(Pretrained { model: ScaeModel { layers }, layer_losses })
}

/// Forward activations `[X^1, H^1, ..., H^L]`.
fn forward(m: &ScaeModel, x: &Matrix) -> Vec<Matrix> {
    let mut acts = Vec::with_capacity(m.depth() + 1);
    acts.push(x.clone());
    for p in &m.layers {
        let next = affine_sigmoid(&p.w, &p.b, acts.last().expect("non-empty"));
        acts.push(next);
    }
    acts
}

fn check_input(m: &ScaeModel, x: &Matrix) -> Result<()> {
    if x.nrows() != m.input_dim() {
        return Err(invalid(format!("input has {} rows, model expects {}", x.nrows(), m.input_dim())));
    }
    Ok(())
}

pub fn encode_deep(m: &ScaeModel, x: &Matrix) -> Result<Matrix> {
    check_input(m, x)?;
    let mut h = x.clone();
    for p in &m.layers {
        h = affine_sigmoid(&p.w, &p.b, &h);
    }
    Ok(h)
}

fn stacked_pass(m: &ScaeModel, x: &Matrix, lambda: f64) -> (f64, Vec<CaeGradient>) {
    let acts = forward(m, x);
    let depth = m.depth();
    let mut grads = Vec::with_capacity(depth);
    let mut upstream: Option<Matrix> = None;
    let mut loss = 0.0;
    for l in (0..depth).rev() {
        let pass = layer_backward(&m.layers[l], &acts[l], &acts[l + 1], lambda, upstream.as_ref(), l > 0);
        loss += pass.loss;
        grads.push(pass.grad);
        upstream = pass.dx;
    }
    grads.reverse();
    (loss, grads)
}

/// Sum over layers of each layer's CAE objective on the composed activations.
pub fn stacked_loss(m: &ScaeModel, x: &Matrix, lambda: f64) -> Result<f64> {
    check_input(m, x)?;
    let acts = forward(m, x);
    let mut total = 0.0;
    for (l, p) in m.layers.iter().enumerate() {
        let (rec, pen) = crate::cae::loss_terms(p, &acts[l], &acts[l + 1]);
        total += rec + lambda * pen;
    }
    Ok(total)
}

/// Gradient of [`stacked_loss`] for every layer, back-propagated through the
/// whole composition.
pub fn stacked_gradient(m: &ScaeModel, x: &Matrix, lambda: f64) -> Result<Vec<CaeGradient>> {
    check_input(m, x)?;
    Ok(stacked_pass(m, x, lambda).1)
}

/// Joint gradient descent on [`stacked_loss`]. If the loss ends above its
/// starting value the input model is returned unchanged.
pub fn finetune(m: &ScaeModel, x: &Matrix, cfg: &TrainConfig) -> Result<Trained<ScaeModel>> {
    cfg.validate()?;
    check_input(m, x)?;
    let mut model = m.clone();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, grads) = stacked_pass(&model, x, cfg.lambda);
        losses.push(loss);
        for (p, g) in model.layers.iter_mut().zip(&grads) {
            p.step(g, cfg.learning_rate);
        }
    }
    let final_loss = stacked_loss(&model, x, cfg.lambda)?;
    losses.push(final_loss);
    if cfg.epochs > 0 && !(final_loss <= losses[0]) {
        return Ok(Trained { params: m.clone(), losses });
    }
    Ok(Trained { params: model, losses })
}

/// Per-neighborhood training schedule: `train` drives pretraining; fine-tuning
/// reuses it with `finetune_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTraining {
    pub train: TrainConfig,
    pub finetune_epochs: usize,
}

/// Seed used for neighborhood `i`.
pub fn neighborhood_seed(seed: u64, i: usize) -> u64 {
    seed ^ i as u64
}

/// Pretrains and fine-tunes one stack on a single sample block.
pub fn train_scae(x: &Matrix, dims: &[usize], schedule: &LocalTraining) -> Result<ScaeModel> {
    let pre = pretrain(x, dims, &schedule.train)?;
    let tuned = finetune(&pre.model, x, &schedule.train.with_epochs(schedule.finetune_epochs))?;
    Ok(tuned.params)
}

fn train_one(
    x: &FeatureMatrix,
    nbr: &NeighborhoodIndex,
    dims: &[usize],
    schedule: &LocalTraining,
) -> Result<(ScaeModel, LocalFeatureBlock)> {
    let local = gather(x, nbr)?;
    let seeded = LocalTraining {
        train: schedule.train.with_seed(neighborhood_seed(schedule.train.seed, nbr.center())),
        ..*schedule
    };
    let model = train_scae(&local, dims, &seeded)?;
    let features = encode_deep(&model, &local)?;
    Ok((model, LocalFeatureBlock { neighborhood: nbr.clone(), features, degenerate: false }))
}

/// One independently trained stack per neighborhood, in neighborhood order.
pub fn train_local_scaes(
    x: &FeatureMatrix,
    nbrs: &NeighborhoodSet,
    dims: &[usize],
    schedule: &LocalTraining,
) -> Result<Vec<(ScaeModel, LocalFeatureBlock)>> {
    nbrs.iter().collect::<Vec<_>>().into_par_iter().map(|nbr| train_one(x, nbr, dims, schedule)).collect()
}

/// Like [`train_local_scaes`] but drops each model once its features are
/// computed.
pub fn local_scae_features(
    x: &FeatureMatrix,
    nbrs: &NeighborhoodSet,
    dims: &[usize],
    schedule: &LocalTraining,
) -> Result<Vec<LocalFeatureBlock>> {
    nbrs.iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|nbr| train_one(x, nbr, dims, schedule).map(|(_, block)| block))
        .collect()
}

#[cfg(test)]
pub(crate) fn random_model(dims: &[usize], scale: f64, rng: &mut impl rand::Rng) -> ScaeModel {
    let layers = dims.windows(2).map(|w| CaeParams::random(w[0], w[1], scale, rng)).collect();
    ScaeModel { layers }
}
