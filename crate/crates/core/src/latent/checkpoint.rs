//! Single-file model container.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, UTF-8 JSON
//! header, then every tensor as little-endian `f64` in header order. The
//! header records specs, tensor shapes and offsets, normalization stats and
//! whatever hyperparameters the caller attaches.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::linalg::LatentBasis;
use super::model::{Bottleneck, EncDecModel, ExtendedModel, ExtendedWeights, LossWeights, RraeModel, TrainedModel};
use super::network::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::profile::Standardizer;

const MAGIC: &[u8; 8] = b"TAPELAB1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorRef {
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetEntry {
    spec: NetworkSpec,
    tensors: Vec<Vec<TensorRef>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BasisEntry {
    modes: TensorRef,
    singular_values: TensorRef,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BottleneckEntry {
    Svd { k_max: usize, basis: Option<BasisEntry> },
    Linear { down: NetEntry, up: NetEntry },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RraeEntry {
    encoder: NetEntry,
    bottleneck: BottleneckEntry,
    decoder: NetEntry,
    classifier: Option<NetEntry>,
    dic_head: Option<NetEntry>,
    weights: LossWeights,
    stats: Option<Standardizer>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
enum ModelEntry {
    Rrae { model: RraeEntry },
    Ae { model: RraeEntry },
    Extended { m1: RraeEntry, m2: RraeEntry, weights: ExtendedWeights },
    Encdec { net: NetEntry, stats: Option<Standardizer> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: String,
    model: ModelEntry,
    hyperparameters: serde_json::Value,
    blob_values: usize,
}

/// A model with the settings it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub hyperparameters: serde_json::Value,
}

#[derive(Default)]
struct BlobWriter {
    values: Vec<f64>,
}

impl BlobWriter {
    fn push<'a>(&mut self, shape: &[usize], data: impl IntoIterator<Item = &'a f64>) -> TensorRef {
        let offset = self.values.len();
        self.values.extend(data);
        TensorRef {
            shape: shape.to_vec(),
            offset,
        }
    }

    fn net(&mut self, n: &Network) -> NetEntry {
        NetEntry {
            spec: n.spec.clone(),
            tensors: n
                .params
                .iter()
                .map(|layer| layer.iter().map(|p| self.push(p.shape(), p.iter())).collect())
                .collect(),
        }
    }

    fn rrae(&mut self, m: &RraeModel) -> RraeEntry {
        let encoder = self.net(&m.encoder);
        let bottleneck = match &m.bottleneck {
            Bottleneck::Svd { k_max, basis } => BottleneckEntry::Svd {
                k_max: *k_max,
                basis: basis.as_ref().map(|b| BasisEntry {
                    modes: self.push(b.modes.shape(), b.modes.iter()),
                    singular_values: self.push(&[b.singular_values.len()], &b.singular_values),
                }),
            },
            Bottleneck::Linear { down, up } => BottleneckEntry::Linear {
                down: self.net(down),
                up: self.net(up),
            },
        };
        RraeEntry {
            encoder,
            bottleneck,
            decoder: self.net(&m.decoder),
            classifier: m.classifier.as_ref().map(|n| self.net(n)),
            dic_head: m.dic_head.as_ref().map(|n| self.net(n)),
            weights: m.weights,
            stats: m.stats,
        }
    }
}

struct BlobReader<'a> {
    values: &'a [f64],
}

impl BlobReader<'_> {
    fn tensor(&self, t: &TensorRef) -> Result<ArrayD<f64>> {
        let n: usize = t.shape.iter().product();
        let data = self
            .values
            .get(t.offset..t.offset + n)
            .ok_or_else(|| Error::InvalidData("checkpoint tensor lies outside the blob".into()))?;
        ArrayD::from_shape_vec(IxDyn(&t.shape), data.to_vec())
            .map_err(|e| Error::InvalidData(format!("checkpoint tensor: {e}")))
    }

    fn net(&self, e: &NetEntry) -> Result<Network> {
        let mut n = Network::zeros(e.spec.clone())?;
        if n.params.len() != e.tensors.len() {
            return Err(Error::InvalidData("checkpoint layer count disagrees with its spec".into()));
        }
        for (layer, refs) in n.params.iter_mut().zip(&e.tensors) {
            if layer.len() != refs.len() {
                return Err(Error::InvalidData("checkpoint tensor count disagrees with its spec".into()));
            }
            for (p, r) in layer.iter_mut().zip(refs) {
                let t = self.tensor(r)?;
                if t.shape() != p.shape() {
                    return Err(Error::InvalidData(format!(
                        "checkpoint tensor shape {:?}, spec expects {:?}",
                        t.shape(),
                        p.shape()
                    )));
                }
                *p = t;
            }
        }
        Ok(n)
    }

    fn rrae(&self, e: &RraeEntry) -> Result<RraeModel> {
        let bottleneck = match &e.bottleneck {
            BottleneckEntry::Svd { k_max, basis } => Bottleneck::Svd {
                k_max: *k_max,
                basis: match basis {
                    Some(b) => {
                        let modes = self
                            .tensor(&b.modes)?
                            .into_dimensionality::<ndarray::Ix2>()
                            .map_err(|e| Error::InvalidData(format!("checkpoint basis: {e}")))?;
                        let s = self.tensor(&b.singular_values)?.iter().copied().collect();
                        Some(LatentBasis {
                            modes: Array2::from(modes),
                            singular_values: s,
                        })
                    }
                    None => None,
                },
            },
            BottleneckEntry::Linear { down, up } => Bottleneck::Linear {
                down: self.net(down)?,
                up: self.net(up)?,
            },
        };
        let mut m = RraeModel::from_parts(
            self.net(&e.encoder)?,
            bottleneck,
            self.net(&e.decoder)?,
            e.classifier.as_ref().map(|n| self.net(n)).transpose()?,
            e.dic_head.as_ref().map(|n| self.net(n)).transpose()?,
        )?;
        m.weights = e.weights;
        m.stats = e.stats;
        Ok(m)
    }
}

impl Checkpoint {
    pub fn new(model: TrainedModel, hyperparameters: serde_json::Value) -> Self {
        Checkpoint {
            model,
            hyperparameters,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob = BlobWriter::default();
        let model = match &self.model {
            TrainedModel::Rrae(m) => ModelEntry::Rrae { model: blob.rrae(m) },
            TrainedModel::Ae(m) => ModelEntry::Ae { model: blob.rrae(m) },
            TrainedModel::Extended(m) => ModelEntry::Extended {
                m1: blob.rrae(&m.m1),
                m2: blob.rrae(&m.m2),
                weights: m.weights,
            },
            TrainedModel::EncDec(m) => ModelEntry::Encdec {
                net: blob.net(&m.net),
                stats: m.stats,
            },
        };
        let header = Header {
            version: env!("CARGO_PKG_VERSION").to_string(),
            model,
            hyperparameters: self.hyperparameters.clone(),
            blob_values: blob.values.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * blob.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &blob.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::InvalidData("not a tape-lab checkpoint".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes
            .get(16..16 + len)
            .ok_or_else(|| Error::InvalidData("truncated checkpoint header".into()))?;
        let header: Header = serde_json::from_slice(json)?;
        let rest = &bytes[16 + len..];
        if rest.len() != 8 * header.blob_values {
            return Err(Error::InvalidData(format!(
                "checkpoint blob holds {} bytes, header announces {} values",
                rest.len(),
                header.blob_values
            )));
        }
        let values: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let r = BlobReader { values: &values };
        let model = match &header.model {
            ModelEntry::Rrae { model } => TrainedModel::Rrae(r.rrae(model)?),
            ModelEntry::Ae { model } => TrainedModel::Ae(r.rrae(model)?),
            ModelEntry::Extended { m1, m2, weights } => TrainedModel::Extended(ExtendedModel {
                m1: r.rrae(m1)?,
                m2: r.rrae(m2)?,
                weights: *weights,
            }),
            ModelEntry::Encdec { net, stats } => TrainedModel::EncDec(EncDecModel {
                net: r.net(net)?,
                stats: *stats,
            }),
        };
        Ok(Checkpoint {
            model,
            hyperparameters: header.hyperparameters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
