//! End-to-end fit / transform / evaluate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{align, GlobalEmbedding};
use crate::config::{Mode, PipelineConfig};
use crate::data::{Dataset, Normalization};
use crate::error::{invalid, LdfaError, Result};
use crate::evaluation::{fit_pca, kmeans, knn_classify, ltsa_mode_features, purity, LabeledEmbedding, PcaModel, KMEANS_RESTARTS};
use crate::features::FeatureMatrix;
use crate::neighborhoods::{build_neighborhoods, gather, NeighborhoodSet};
use crate::numerics::{Matrix, DEFAULT_PINV_TOL};
use crate::oos::{build_uniform_net, embed_new, finetune_uniform_net, fit_embedding_scale, train_align_net, AlignNet, EmbeddingScale, UniformNet};
use crate::scae::{local_scae_features, neighborhood_seed, train_local_scaes, LocalFeatureBlock, ScaeModel};

/// Nets needed to embed unseen samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OosModel {
    pub scaes: Vec<ScaeModel>,
    pub align_nets: Vec<AlignNet>,
    pub uniform_nets: Vec<UniformNet>,
    pub scale: EmbeddingScale,
}

/// Everything produced by [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub config: PipelineConfig,
    pub normalization: Normalization,
    /// Normalized training samples.
    pub training: FeatureMatrix,
    pub neighborhoods: Option<NeighborhoodSet>,
    pub embedding: GlobalEmbedding,
    pub pca: Option<PcaModel>,
    pub oos: Option<OosModel>,
}

impl ModelArchive {
    pub fn input_dim(&self) -> usize {
        self.training.dim()
    }
}

fn train_oos(
    cfg: &PipelineConfig,
    x: &FeatureMatrix,
    nbrs: &NeighborhoodSet,
    scaes: Vec<ScaeModel>,
    blocks: &[LocalFeatureBlock],
    emb: &GlobalEmbedding,
) -> Result<OosModel> {
    let scale = fit_embedding_scale(emb, cfg.margin)?;
    let targets = scale.apply(&emb.h);
    let nets: Vec<(AlignNet, UniformNet)> = (0..nbrs.len())
        .into_par_iter()
        .map(|i| {
            let nbr = nbrs.get(i);
            let t = targets.select(ndarray::Axis(1), nbr.members());
            let seed = neighborhood_seed(cfg.seed, nbr.center());
            let a = train_align_net(&blocks[i], &t, &cfg.align_training().with_seed(seed))?.params;
            let u = build_uniform_net(&scaes[i], &a)?;
            let local = gather(x, nbr)?;
            let tuned = finetune_uniform_net(&u, &local, &t, &cfg.uniform_training().with_seed(seed))?.params;
            Ok((a, tuned))
        })
        .collect::<Result<_>>()?;
    let (align_nets, uniform_nets) = nets.into_iter().unzip();
    Ok(OosModel { scaes, align_nets, uniform_nets, scale })
}

/// Fits the configured reduction to `data` and returns the full model.
pub fn fit(cfg: &PipelineConfig, data: &Dataset) -> Result<ModelArchive> {
    let x = &data.features;
    cfg.validate(x.dim(), x.len())?;
    let mut archive = ModelArchive {
        config: cfg.clone(),
        normalization: data.normalization.clone(),
        training: x.clone(),
        neighborhoods: None,
        embedding: GlobalEmbedding::from_matrix(Matrix::zeros((cfg.d, 0))),
        pca: None,
        oos: None,
    };
    match cfg.mode {
        Mode::Pca => {
            let pca = fit_pca(x, cfg.d)?;
            archive.embedding = GlobalEmbedding::from_matrix(pca.project(x.matrix())?);
            archive.pca = Some(pca);
        }
        Mode::Ltsa => {
            let nbrs = build_neighborhoods(x, cfg.k)?;
            let blocks = ltsa_mode_features(x, &nbrs, cfg.d)?;
            archive.embedding = align(&blocks, x.len(), cfg.d, DEFAULT_PINV_TOL)?;
            archive.neighborhoods = Some(nbrs);
        }
        Mode::Ldfa => {
            let nbrs = build_neighborhoods(x, cfg.k)?;
            let dims = cfg.layer_widths(x.dim());
            let schedule = cfg.local_training();
            if cfg.oos {
                let (scaes, blocks): (Vec<_>, Vec<_>) = train_local_scaes(x, &nbrs, &dims, &schedule)?.into_iter().unzip();
                archive.embedding = align(&blocks, x.len(), cfg.d, DEFAULT_PINV_TOL)?;
                archive.oos = Some(train_oos(cfg, x, &nbrs, scaes, &blocks, &archive.embedding)?);
            } else {
                let blocks = local_scae_features(x, &nbrs, &dims, &schedule)?;
                archive.embedding = align(&blocks, x.len(), cfg.d, DEFAULT_PINV_TOL)?;
            }
            archive.neighborhoods = Some(nbrs);
        }
    }
    Ok(archive)
}

/// Embeds raw (unnormalized, `D x M`) samples with a fitted model.
pub fn transform(archive: &ModelArchive, raw: &Matrix) -> Result<Matrix> {
    let d = archive.config.d;
    if raw.ncols() == 0 {
        return Ok(Matrix::zeros((d, 0)));
    }
    if raw.nrows() != archive.input_dim() {
        return Err(invalid(format!("input has dimension {}, the model expects {}", raw.nrows(), archive.input_dim())));
    }
    let x = archive.normalization.apply(raw)?;
    match archive.config.mode {
        Mode::Pca => archive.pca.as_ref().ok_or_else(|| LdfaError::Archive("pca model missing".into()))?.project(x.matrix()),
        Mode::Ltsa => Err(invalid("ltsa mode has no out-of-sample model; refit in ldfa mode")),
        Mode::Ldfa => {
            let oos = archive.oos.as_ref().ok_or_else(|| invalid("model was fitted with oos=false; refit with oos=true"))?;
            let nbrs = archive.neighborhoods.as_ref().ok_or_else(|| LdfaError::Archive("neighborhoods missing".into()))?;
            let cols: Vec<_> = (0..x.len())
                .into_par_iter()
                .map(|j| embed_new(x.sample(j), &archive.training, nbrs, &oos.uniform_nets, &oos.scale))
                .collect::<Result<_>>()?;
            let mut out = Matrix::zeros((d, cols.len()));
            for (j, c) in cols.iter().enumerate() {
                out.column_mut(j).assign(c);
            }
            Ok(out)
        }
    }
}

/// One `(name, value, seed)` metric record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub seed: u64,
}

impl MetricRow {
    pub const HEADER: &'static str = "metric,value,seed";

    pub fn to_line(&self) -> String {
        format!("{},{},{}", self.name, self.value, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Cluster,
    Classify,
}

impl std::str::FromStr for Task {
    type Err = LdfaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Task::Cluster),
            "classify" => Ok(Task::Classify),
            _ => Err(invalid(format!("unknown task {s:?} (expected cluster or classify)"))),
        }
    }
}

pub const TRAIN_FRACTION: f64 = 0.7;

/// k-means purity with as many clusters as classes, once per seed.
pub fn cluster_metrics(points: &Matrix, labels: &[String], seeds: &[u64]) -> Result<Vec<MetricRow>> {
    let n_classes = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    seeds
        .iter()
        .map(|&seed| {
            let c = kmeans(points, n_classes, KMEANS_RESTARTS, seed)?;
            Ok(MetricRow { name: "purity".into(), value: purity(&c.assignment, labels)?, seed })
        })
        .collect()
}

/// Per-class shuffled split: `round(fraction * n_c)` samples of each class
/// train, the rest test.
pub fn stratified_split(labels: &[String], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n_train = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn subset(points: &Matrix, labels: &[String], idx: &[usize]) -> Result<LabeledEmbedding> {
    LabeledEmbedding::new(points.select(ndarray::Axis(1), idx), idx.iter().map(|&i| labels[i].clone()).collect())
}

/// 1-NN accuracy on a stratified 70/30 split, once per seed.
pub fn classify_metrics(points: &Matrix, labels: &[String], seeds: &[u64]) -> Result<Vec<MetricRow>> {
    seeds
        .iter()
        .map(|&seed| {
            let (train, test) = stratified_split(labels, TRAIN_FRACTION, seed);
            let acc = knn_classify(&subset(points, labels, &train)?, &subset(points, labels, &test)?)?;
            Ok(MetricRow { name: "knn_accuracy".into(), value: acc, seed })
        })
        .collect()
}

pub fn evaluate(points: &Matrix, labels: &[String], task: Task, seeds: &[u64]) -> Result<Vec<MetricRow>> {
    if points.ncols() != labels.len() {
        return Err(invalid(format!("{} embedded samples but {} labels", points.ncols(), labels.len())));
    }
    match task {
        Task::Cluster => cluster_metrics(points, labels, seeds),
        Task::Classify => classify_metrics(points, labels, seeds),
    }
}
