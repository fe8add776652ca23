use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Conv2d, Layer, LayerKind, Linear, NetGraph, Tensor};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub label: String,
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<usize>,
}

/// Layer table with byte offsets into `weights.bin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    pub taps: Vec<String>,
    pub parameter_count: usize,
    pub weight_bytes: usize,
    pub config: serde_json::Value,
}

/// On-disk form of a network: manifest plus little-endian f64 weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub manifest: Manifest,
    pub weights: Vec<f64>,
}

impl WeightBundle {
    pub fn from_net(net: &NetGraph, config: serde_json::Value) -> Self {
        let mut weights = Vec::with_capacity(net.parameter_count());
        let mut layers = Vec::with_capacity(net.len());
        for (layer, label) in net.layers().iter().zip(net.labels()) {
            let mut rec = LayerRecord {
                label: label.clone(),
                kind: layer.kind(),
                weight_shape: None,
                weight_offset: None,
                bias_offset: None,
                stride: None,
                skip: None,
            };
            let mut put = |w: &Tensor, b: &Tensor, rec: &mut LayerRecord| {
                rec.weight_shape = Some(w.shape().to_vec());
                rec.weight_offset = Some(weights.len() * 8);
                weights.extend_from_slice(w.data());
                rec.bias_offset = Some(weights.len() * 8);
                weights.extend_from_slice(b.data());
            };
            match layer {
                Layer::Conv2d(c) => {
                    put(c.weight(), c.bias(), &mut rec);
                    rec.stride = Some([c.stride().0, c.stride().1]);
                }
                Layer::Linear(l) => put(l.weight(), l.bias(), &mut rec),
                Layer::Add { skip } => rec.skip = Some(*skip),
                Layer::Relu | Layer::Softmax | Layer::Flatten => {}
            }
            layers.push(rec);
        }
        WeightBundle {
            manifest: Manifest {
                format_version: BUNDLE_FORMAT_VERSION,
                input_shape: net.input_shape().to_vec(),
                layers,
                taps: net.labels().to_vec(),
                parameter_count: net.parameter_count(),
                weight_bytes: weights.len() * 8,
                config,
            },
            weights,
        }
    }

    /// Validates offsets and shapes and rebuilds the network.
    pub fn to_net(&self) -> Result<NetGraph> {
        let m = &self.manifest;
        if m.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported bundle format version {}",
                m.format_version
            )));
        }
        if m.weight_bytes != self.weights.len() * 8 {
            return Err(Error::Config(format!(
                "manifest declares {} weight bytes, blob holds {}",
                m.weight_bytes,
                self.weights.len() * 8
            )));
        }
        let mut cursor = 0usize;
        let mut take = |offset: Option<usize>, len: usize, what: &str, label: &str| -> Result<Vec<f64>> {
            let off = offset.ok_or_else(|| Error::Config(format!("{label}: missing {what} offset")))?;
            if off != cursor || off % 8 != 0 {
                return Err(Error::Config(format!(
                    "{label}: {what} offset {off} does not continue the blob at {cursor}"
                )));
            }
            let start = off / 8;
            let slice = self
                .weights
                .get(start..start + len)
                .ok_or_else(|| Error::Config(format!("{label}: {what} runs past the end of the blob")))?;
            cursor += len * 8;
            Ok(slice.to_vec())
        };
        let mut layers = Vec::with_capacity(m.layers.len());
        for rec in &m.layers {
            let label = rec.label.as_str();
            let layer = match rec.kind {
                LayerKind::Conv2d | LayerKind::Linear => {
                    let shape = rec
                        .weight_shape
                        .clone()
                        .ok_or_else(|| Error::Config(format!("{label}: missing weight shape")))?;
                    let n: usize = shape.iter().product();
                    let w = take(rec.weight_offset, n, "weight", label)?;
                    let b = take(rec.bias_offset, shape[0], "bias", label)?;
                    let w = Tensor::new(shape, w)?;
                    let b = Tensor::vector(b);
                    if rec.kind == LayerKind::Conv2d {
                        let [sh, sw] = rec
                            .stride
                            .ok_or_else(|| Error::Config(format!("{label}: missing stride")))?;
                        Layer::Conv2d(Conv2d::new(w, b, (sh, sw))?)
                    } else {
                        Layer::Linear(Linear::new(w, b)?)
                    }
                }
                LayerKind::Relu => Layer::Relu,
                LayerKind::Softmax => Layer::Softmax,
                LayerKind::Flatten => Layer::Flatten,
                LayerKind::Add => Layer::Add {
                    skip: rec
                        .skip
                        .ok_or_else(|| Error::Config(format!("{label}: missing skip index")))?,
                },
            };
            layers.push((rec.label.clone(), layer));
        }
        if cursor != m.weight_bytes {
            return Err(Error::Config(format!(
                "layer table covers {cursor} of {} weight bytes",
                m.weight_bytes
            )));
        }
        NetGraph::new(m.input_shape.clone(), layers)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&self.manifest)?)?;
        let mut bytes = Vec::with_capacity(self.weights.len() * 8);
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        fs::write(dir.join(WEIGHTS), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let raw = fs::read(&mpath).map_err(|e| Error::load(&mpath, e))?;
        let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| Error::load(&mpath, e))?;
        let wpath = dir.join(WEIGHTS);
        let bytes = fs::read(&wpath).map_err(|e| Error::load(&wpath, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::load(&wpath, "length is not a multiple of 8 bytes"));
        }
        let weights = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bundle = WeightBundle { manifest, weights };
        bundle.to_net().map_err(|e| Error::load(dir, e))?;
        Ok(bundle)
    }
}
