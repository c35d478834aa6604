//! Model archive: a text header, a JSON manifest, then the little-endian
//! `f64` payload of every declared array in order.
//!
//! ```text
//! LDFA-ARCHIVE 1
//! manifest-bytes <n>
//! <n bytes of JSON>
//! <payload>
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::GlobalEmbedding;
use crate::cae::CaeParams;
use crate::config::PipelineConfig;
use crate::data::Normalization;
use crate::error::{LdfaError, Result};
use crate::evaluation::PcaModel;
use crate::features::FeatureMatrix;
use crate::neighborhoods::{NeighborhoodIndex, NeighborhoodSet};
use crate::numerics::{Matrix, Vector};
use crate::oos::{AlignNet, DenseLayer, EmbeddingScale, UniformNet};
use crate::pipeline::{ModelArchive, OosModel};
use crate::scae::ScaeModel;

pub const MAGIC: &str = "LDFA-ARCHIVE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: PipelineConfig,
    input_dim: usize,
    n: usize,
    d: usize,
    warning: Option<String>,
    has_neighborhoods: bool,
    has_pca: bool,
    /// Layer count of each neighborhood's stack; empty without out-of-sample nets.
    scae_depths: Vec<usize>,
    scale_degenerate: Vec<bool>,
    arrays: Vec<ArraySpec>,
}

fn err(msg: impl Into<String>) -> LdfaError {
    LdfaError::Archive(msg.into())
}

#[derive(Default)]
struct Writer {
    specs: Vec<ArraySpec>,
    data: Vec<f64>,
}

impl Writer {
    fn matrix(&mut self, name: String, m: &Matrix) {
        self.specs.push(ArraySpec { name, shape: [m.nrows(), m.ncols()] });
        self.data.extend(m.iter());
    }

    fn vector(&mut self, name: String, v: &[f64]) {
        self.specs.push(ArraySpec { name, shape: [1, v.len()] });
        self.data.extend_from_slice(v);
    }
}

struct Reader<'a> {
    specs: std::slice::Iter<'a, ArraySpec>,
    data: &'a [f64],
}

impl Reader<'_> {
    fn raw(&mut self, name: &str) -> Result<([usize; 2], &[f64])> {
        let spec = self.specs.next().ok_or_else(|| err(format!("missing array {name}")))?;
        if spec.name != name {
            return Err(err(format!("expected array {name}, found {}", spec.name)));
        }
        let len = spec.shape[0] * spec.shape[1];
        if self.data.len() < len {
            return Err(err(format!("payload ends inside array {name}")));
        }
        let (head, rest) = self.data.split_at(len);
        self.data = rest;
        Ok((spec.shape, head))
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (shape, vals) = self.raw(name)?;
        Matrix::from_shape_vec((shape[0], shape[1]), vals.to_vec()).map_err(|e| err(e.to_string()))
    }

    fn vec(&mut self, name: &str) -> Result<Vec<f64>> {
        Ok(self.raw(name)?.1.to_vec())
    }

    fn vector(&mut self, name: &str) -> Result<Vector> {
        Ok(Vector::from(self.vec(name)?))
    }
}

fn index_to_f64(i: usize) -> f64 {
    i as f64
}

fn f64_to_index(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 9.007_199_254_740_992e15 {
        Ok(v as usize)
    } else {
        Err(err(format!("bad index {v}")))
    }
}

/// Serializes a model.
pub fn to_bytes(m: &ModelArchive) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.vector("normalization.offset".into(), &m.normalization.offset);
    w.vector("normalization.scale".into(), &m.normalization.scale);
    w.vector("normalization.base".into(), &m.normalization.base);
    w.matrix("training".into(), m.training.matrix());
    w.matrix("embedding".into(), &m.embedding.h);
    w.vector("eigenvalues".into(), &m.embedding.eigenvalues);
    if let Some(nbrs) = &m.neighborhoods {
        let rows = nbrs.len();
        let width = nbrs.k() + 1;
        let mut idx = Matrix::zeros((rows, width));
        for (r, nbr) in nbrs.iter().enumerate() {
            for (c, &j) in nbr.members().iter().enumerate() {
                idx[[r, c]] = index_to_f64(j);
            }
        }
        w.matrix("neighborhoods".into(), &idx);
    }
    if let Some(p) = &m.pca {
        w.vector("pca.mean".into(), p.mean.as_slice().expect("contiguous"));
        w.matrix("pca.components".into(), &p.components);
        w.vector("pca.variances".into(), &p.variances);
    }
    let mut scae_depths = Vec::new();
    let mut scale_degenerate = Vec::new();
    if let Some(o) = &m.oos {
        for (i, s) in o.scaes.iter().enumerate() {
            scae_depths.push(s.depth());
            for (l, p) in s.layers().iter().enumerate() {
                w.matrix(format!("scae.{i}.{l}.w"), &p.w);
                w.vector(format!("scae.{i}.{l}.b"), p.b.as_slice().expect("contiguous"));
                w.vector(format!("scae.{i}.{l}.c"), p.c.as_slice().expect("contiguous"));
            }
        }
        for (i, a) in o.align_nets.iter().enumerate() {
            w.matrix(format!("align.{i}.theta"), &a.theta);
            w.vector(format!("align.{i}.u"), a.u.as_slice().expect("contiguous"));
        }
        for (i, u) in o.uniform_nets.iter().enumerate() {
            for (l, layer) in u.layers().iter().enumerate() {
                w.matrix(format!("uniform.{i}.{l}.q"), &layer.q);
                w.vector(format!("uniform.{i}.{l}.v"), layer.v.as_slice().expect("contiguous"));
            }
        }
        w.vector("scale.lo".into(), &o.scale.lo);
        w.vector("scale.gain".into(), &o.scale.gain);
        w.vector("scale.target_lo".into(), &o.scale.target_lo);
        scale_degenerate = o.scale.degenerate.clone();
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        config: m.config.clone(),
        input_dim: m.training.dim(),
        n: m.training.len(),
        d: m.embedding.h.nrows(),
        warning: m.embedding.warning.clone(),
        has_neighborhoods: m.neighborhoods.is_some(),
        has_pca: m.pca.is_some(),
        scae_depths,
        scale_degenerate,
        arrays: w.specs,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 64 + 8 * w.data.len());
    write!(out, "{MAGIC} {FORMAT_VERSION}\nmanifest-bytes {}\n{json}", json.len())?;
    for v in &w.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take_line<'a>(bytes: &mut &'a [u8]) -> Result<&'a str> {
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| err("truncated header"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| err("header is not UTF-8"))?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

/// Parses bytes written by [`to_bytes`].
pub fn from_bytes(mut bytes: &[u8]) -> Result<ModelArchive> {
    let header = take_line(&mut bytes)?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| err("not a model archive"))?
        .parse::<u32>()
        .map_err(|_| err("bad format version"))?;
    if version != FORMAT_VERSION {
        return Err(err(format!("unsupported format version {version}")));
    }
    let len = take_line(&mut bytes)?
        .strip_prefix("manifest-bytes ")
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| err("bad manifest length line"))?;
    if bytes.len() < len {
        return Err(err("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[..len]).map_err(|e| err(e.to_string()))?;
    let payload = &bytes[len..];
    if payload.len() % 8 != 0 {
        return Err(err("payload length is not a multiple of 8"));
    }
    let data: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let declared: usize = manifest.arrays.iter().map(|a| a.shape[0] * a.shape[1]).sum();
    if declared != data.len() {
        return Err(err(format!("manifest declares {declared} values, payload holds {}", data.len())));
    }
    let mut r = Reader { specs: manifest.arrays.iter(), data: &data };

    let normalization = Normalization { offset: r.vec("normalization.offset")?, scale: r.vec("normalization.scale")?, base: r.vec("normalization.base")? };
    let training = FeatureMatrix::from_columns(r.matrix("training")?);
    let embedding = GlobalEmbedding { h: r.matrix("embedding")?, eigenvalues: r.vec("eigenvalues")?, warning: manifest.warning.clone() };
    let neighborhoods = if manifest.has_neighborhoods {
        let idx = r.matrix("neighborhoods")?;
        let entries = idx
            .rows()
            .into_iter()
            .map(|row| {
                let members = row.iter().map(|&v| f64_to_index(v)).collect::<Result<Vec<_>>>()?;
                NeighborhoodIndex::new(members[0], members)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(NeighborhoodSet::new(idx.ncols().saturating_sub(1), entries)?)
    } else {
        None
    };
    let pca = if manifest.has_pca {
        Some(PcaModel { mean: r.vector("pca.mean")?, components: r.matrix("pca.components")?, variances: r.vec("pca.variances")? })
    } else {
        None
    };
    let oos = if manifest.scae_depths.is_empty() {
        None
    } else {
        let n_nets = manifest.scae_depths.len();
        let mut scaes = Vec::with_capacity(n_nets);
        for (i, &depth) in manifest.scae_depths.iter().enumerate() {
            let layers = (0..depth)
                .map(|l| CaeParams::new(r.matrix(&format!("scae.{i}.{l}.w"))?, r.vector(&format!("scae.{i}.{l}.b"))?, r.vector(&format!("scae.{i}.{l}.c"))?))
                .collect::<Result<Vec<_>>>()?;
            scaes.push(ScaeModel::new(layers)?);
        }
        let align_nets = (0..n_nets)
            .map(|i| Ok(AlignNet { theta: r.matrix(&format!("align.{i}.theta"))?, u: r.vector(&format!("align.{i}.u"))? }))
            .collect::<Result<Vec<_>>>()?;
        let uniform_nets = manifest
            .scae_depths
            .iter()
            .enumerate()
            .map(|(i, &depth)| {
                let layers = (0..=depth)
                    .map(|l| Ok(DenseLayer { q: r.matrix(&format!("uniform.{i}.{l}.q"))?, v: r.vector(&format!("uniform.{i}.{l}.v"))? }))
                    .collect::<Result<Vec<_>>>()?;
                UniformNet::new(layers)
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = EmbeddingScale {
            lo: r.vec("scale.lo")?,
            gain: r.vec("scale.gain")?,
            target_lo: r.vec("scale.target_lo")?,
            degenerate: manifest.scale_degenerate.clone(),
        };
        Some(OosModel { scaes, align_nets, uniform_nets, scale })
    };
    if r.specs.next().is_some() {
        return Err(err("manifest declares arrays that were not consumed"));
    }
    let archive = ModelArchive { config: manifest.config, normalization, training, neighborhoods, embedding, pca, oos };
    if archive.training.dim() != manifest.input_dim || archive.training.len() != manifest.n || archive.embedding.h.nrows() != manifest.d {
        return Err(err("manifest dimensions do not match the payload"));
    }
    Ok(archive)
}

pub fn save(m: &ModelArchive, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(m)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArchive> {
    from_bytes(&std::fs::read(path)?)
}
