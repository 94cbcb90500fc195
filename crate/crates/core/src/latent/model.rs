//! Rank-reduction autoencoder with classification and DIC heads, its
//! classical linear-bottleneck twin, the decoupled extended model and the
//! supervised encoder-decoder baseline.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use super::linalg::{basis_of_rows, LatentBasis};
use super::loss::argmax_rows;
use super::network::{Network, NetworkSpec, Params, Tape};
use crate::error::{Error, Result};
use crate::profile::Standardizer;

/// Sizes shared by the encoder, decoder and heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub latent_dim: usize,
    /// Filters of the two convolution blocks.
    pub filters: [usize; 2],
    /// Max-pooling width of each block.
    pub pool: usize,
    pub classes: usize,
    pub horizon: usize,
    pub head_width: usize,
    pub head_layers: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_len: 500,
            latent_dim: 64,
            filters: [8, 16],
            pool: 2,
            classes: 12,
            horizon: crate::compaction::DEFAULT_HORIZON,
            head_width: 64,
            head_layers: 6,
        }
    }
}

impl Architecture {
    /// The full-size network: 1000-point profiles, 200-dimensional latent
    /// space, 16/32 filters.
    pub fn full_scale() -> Self {
        Architecture {
            input_len: 1000,
            latent_dim: 200,
            filters: [16, 32],
            pool: 2,
            head_width: 200,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        let q = self.pool * self.pool;
        if self.pool < 1 || self.input_len % q != 0 || self.input_len < 2 * q {
            return Err(Error::InvalidArgument(format!(
                "profile length {} must be a multiple of {q} (two pooling stages of {})",
                self.input_len, self.pool
            )));
        }
        if self.latent_dim == 0 || self.classes == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("empty architecture dimension".into()));
        }
        Ok(())
    }

    /// Two convolution blocks that each divide the resolution by `pool`,
    /// then a dense projection to the latent space.
    pub fn encoder(&self) -> Result<NetworkSpec> {
        self.check()?;
        let [f1, f2] = self.filters;
        NetworkSpec::new(
            (1, self.input_len),
            vec![
                LayerSpec::conv(f1, 5, 1, 2),
                LayerSpec::relu(),
                LayerSpec::MaxPool1d { size: self.pool },
                LayerSpec::conv(f2, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::MaxPool1d { size: self.pool },
                LayerSpec::dense(self.latent_dim),
            ],
        )
    }

    /// Mirror of the encoder with transposed convolutions.
    pub fn decoder(&self) -> Result<NetworkSpec> {
        self.check()?;
        let [f1, f2] = self.filters;
        let d = self.latent_dim;
        NetworkSpec::new(
            (d, 1),
            vec![
                LayerSpec::dense(d),
                LayerSpec::relu(),
                LayerSpec::dense(f2 * self.input_len / (self.pool * self.pool)),
                LayerSpec::relu(),
                LayerSpec::Reshape { channels: f2 },
                LayerSpec::conv_t(f1, self.pool, self.pool, 0),
                LayerSpec::relu(),
                LayerSpec::conv_t(1, self.pool, self.pool, 0),
            ],
        )
    }

    pub fn classifier(&self) -> Result<NetworkSpec> {
        NetworkSpec::mlp(
            self.latent_dim,
            self.head_width,
            self.head_layers,
            self.classes,
            None,
        )
    }

    pub fn dic_head(&self) -> Result<NetworkSpec> {
        NetworkSpec::mlp(
            self.latent_dim,
            self.head_width,
            self.head_layers,
            self.horizon,
            Some(LayerSpec::sigmoid()),
        )
    }

    /// Linear head producing modal coefficients.
    pub fn beta_head(&self, r_max: usize) -> Result<NetworkSpec> {
        NetworkSpec::mlp(
            self.latent_dim,
            self.head_width,
            self.head_layers,
            r_max,
            None,
        )
    }
}

/// How the latent matrix is reduced before decoding.
#[derive(Clone, Debug, PartialEq)]
pub enum Bottleneck {
    /// Truncated SVD of the batch latent matrix. `basis` holds the frozen
    /// modes once training has finished.
    Svd {
        k_max: usize,
        basis: Option<LatentBasis>,
    },
    /// Learned bias-free maps `d -> k -> d`.
    Linear { down: Network, up: Network },
}

impl Bottleneck {
    pub fn rank(&self) -> usize {
        match self {
            Bottleneck::Svd { k_max, .. } => *k_max,
            Bottleneck::Linear { down, .. } => down.spec.output_len(),
        }
    }
}

/// Loss weights `(reconstruction, class, dic)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub class: f64,
    pub dic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            class: 1.0,
            dic: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RraeModel {
    pub encoder: Network,
    pub bottleneck: Bottleneck,
    pub decoder: Network,
    pub classifier: Option<Network>,
    pub dic_head: Option<Network>,
    pub weights: LossWeights,
    pub stats: Option<Standardizer>,
}

/// Batch outputs, batch-major.
#[derive(Clone, Debug)]
pub struct Outputs {
    pub latent: Array2<f64>,
    pub reduced: Array2<f64>,
    /// Coefficients on the modes (SVD bottleneck) or the code (linear).
    pub coefficients: Array2<f64>,
    pub recon: Array2<f64>,
    pub scores: Option<Array2<f64>>,
    pub dic: Option<Array2<f64>>,
    /// Basis used for this pass (SVD bottleneck only).
    pub basis: Option<LatentBasis>,
}

pub struct RraeTape {
    encoder: Tape,
    down: Option<Tape>,
    up: Option<Tape>,
    decoder: Tape,
    classifier: Option<Tape>,
    dic_head: Option<Tape>,
    basis: Option<LatentBasis>,
}

/// Gradients in [`RraeModel::groups`] order.
pub type Grads = Vec<Params>;

/// Upstream gradients on the model outputs.
pub struct OutputGrads<'a> {
    pub recon: Option<&'a Array2<f64>>,
    pub scores: Option<&'a Array2<f64>>,
    pub dic: Option<&'a Array2<f64>>,
}

impl RraeModel {
    /// RRAE with both heads, seeded initialisation.
    pub fn rrae(arch: &Architecture, k_max: usize, seed: u64) -> Result<Self> {
        Self::build(arch, SvdOrLinear::Svd(k_max), true, Some(arch.dic_head()?), seed)
    }

    /// Classical autoencoder: the truncation replaced by two linear maps.
    pub fn classical(arch: &Architecture, k_max: usize, seed: u64) -> Result<Self> {
        Self::build(arch, SvdOrLinear::Linear(k_max), true, Some(arch.dic_head()?), seed)
    }

    /// Classification-only RRAE.
    pub fn classifier_only(arch: &Architecture, k_max: usize, seed: u64) -> Result<Self> {
        Self::build(arch, SvdOrLinear::Svd(k_max), true, None, seed)
    }

    fn build(
        arch: &Architecture,
        kind: SvdOrLinear,
        classifier: bool,
        dic_head: Option<NetworkSpec>,
        seed: u64,
    ) -> Result<Self> {
        let d = arch.latent_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Network::init(arch.encoder()?, &mut rng)?;
        let bottleneck = match kind {
            SvdOrLinear::Svd(k) => {
                check_rank(k, d)?;
                Bottleneck::Svd {
                    k_max: k,
                    basis: None,
                }
            }
            SvdOrLinear::Linear(k) => {
                check_rank(k, d)?;
                Bottleneck::Linear {
                    down: Network::init(NetworkSpec::new((d, 1), vec![LayerSpec::linear(k)])?, &mut rng)?,
                    up: Network::init(NetworkSpec::new((k, 1), vec![LayerSpec::linear(d)])?, &mut rng)?,
                }
            }
        };
        let decoder = Network::init(arch.decoder()?, &mut rng)?;
        let classifier = if classifier {
            Some(Network::init(arch.classifier()?, &mut rng)?)
        } else {
            None
        };
        let dic_head = match dic_head {
            Some(spec) => Some(Network::init(spec, &mut rng)?),
            None => None,
        };
        Ok(RraeModel {
            encoder,
            bottleneck,
            decoder,
            classifier,
            dic_head,
            weights: LossWeights::default(),
            stats: None,
        })
    }

    /// Assembles a model from explicit networks.
    pub fn from_parts(
        encoder: Network,
        bottleneck: Bottleneck,
        decoder: Network,
        classifier: Option<Network>,
        dic_head: Option<Network>,
    ) -> Result<Self> {
        let d = encoder.spec.output_len();
        if decoder.spec.input_len() != d {
            return Err(Error::Shape(format!(
                "decoder takes {} values, encoder gives {d}",
                decoder.spec.input_len()
            )));
        }
        for head in classifier.iter().chain(dic_head.iter()) {
            if head.spec.input_len() != d {
                return Err(Error::Shape(format!(
                    "head takes {} values, latent size is {d}",
                    head.spec.input_len()
                )));
            }
        }
        match &bottleneck {
            Bottleneck::Svd { k_max, .. } => check_rank(*k_max, d)?,
            Bottleneck::Linear { down, up } => {
                if down.spec.input_len() != d || up.spec.output_len() != d {
                    return Err(Error::Shape("linear bottleneck does not match latent size".into()));
                }
            }
        }
        Ok(RraeModel {
            encoder,
            bottleneck,
            decoder,
            classifier,
            dic_head,
            weights: LossWeights::default(),
            stats: None,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec.output_len()
    }

    pub fn input_len(&self) -> usize {
        self.encoder.spec.input_len()
    }

    pub fn k_max(&self) -> usize {
        self.bottleneck.rank()
    }

    pub fn basis(&self) -> Option<&LatentBasis> {
        match &self.bottleneck {
            Bottleneck::Svd { basis, .. } => basis.as_ref(),
            Bottleneck::Linear { .. } => None,
        }
    }

    /// Trainable parameter groups in a fixed order.
    pub fn groups(&self) -> Vec<&Params> {
        let mut g = vec![&self.encoder.params];
        if let Bottleneck::Linear { down, up } = &self.bottleneck {
            g.push(&down.params);
            g.push(&up.params);
        }
        g.push(&self.decoder.params);
        g.extend(self.classifier.iter().map(|n| &n.params));
        g.extend(self.dic_head.iter().map(|n| &n.params));
        g
    }

    pub fn groups_mut(&mut self) -> Vec<&mut Params> {
        let mut g = vec![&mut self.encoder.params];
        if let Bottleneck::Linear { down, up } = &mut self.bottleneck {
            g.push(&mut down.params);
            g.push(&mut up.params);
        }
        g.push(&mut self.decoder.params);
        g.extend(self.classifier.iter_mut().map(|n| &mut n.params));
        g.extend(self.dic_head.iter_mut().map(|n| &mut n.params));
        g
    }

    pub fn param_count(&self) -> usize {
        self.groups()
            .iter()
            .flat_map(|p| p.iter().flatten())
            .map(|a| a.len())
            .sum()
    }

    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.groups().iter().flat_map(|p| p.iter().flatten()).flat_map(|a| a.iter()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        if let Some(b) = self.basis() {
            for v in b.modes.iter() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Latent matrix, batch-major (batch x latent_dim).
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.encoder.apply(x)
    }

    /// Forward pass recording a tape. With `fresh_basis` the SVD modes are
    /// recomputed from this batch; otherwise the frozen modes are used.
    pub fn forward_tape(&self, x: &Array2<f64>, fresh_basis: bool) -> Result<(Outputs, RraeTape)> {
        let (latent, enc_tape) = self.encoder.forward(x, None)?;
        let mut down_tape = None;
        let mut up_tape = None;
        let mut used_basis = None;
        let (reduced, coefficients) = match &self.bottleneck {
            Bottleneck::Svd { k_max, basis } => {
                let b = if fresh_basis {
                    basis_of_rows(latent.view(), *k_max)?
                } else {
                    basis
                        .clone()
                        .ok_or_else(|| Error::InvalidArgument("model has no frozen basis".into()))?
                };
                let alphas = b.coefficients(latent.view());
                let reduced = b.expand(alphas.view());
                used_basis = Some(b);
                (reduced, alphas)
            }
            Bottleneck::Linear { down, up } => {
                let (z, dt) = down.forward(&latent, None)?;
                let (r, ut) = up.forward(&z, None)?;
                down_tape = Some(dt);
                up_tape = Some(ut);
                (r, z)
            }
        };
        let (recon, dec_tape) = self.decoder.forward(&reduced, None)?;
        let (scores, cls_tape) = match &self.classifier {
            Some(n) => {
                let (s, t) = n.forward(&reduced, None)?;
                (Some(s), Some(t))
            }
            None => (None, None),
        };
        let (dic, dic_tape) = match &self.dic_head {
            Some(n) => {
                let (s, t) = n.forward(&reduced, None)?;
                (Some(s), Some(t))
            }
            None => (None, None),
        };
        Ok((
            Outputs {
                latent,
                reduced,
                coefficients,
                recon,
                scores,
                dic,
                basis: used_basis.clone(),
            },
            RraeTape {
                encoder: enc_tape,
                down: down_tape,
                up: up_tape,
                decoder: dec_tape,
                classifier: cls_tape,
                dic_head: dic_tape,
                basis: used_basis,
            },
        ))
    }

    /// Inference with the frozen modes.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Outputs> {
        Ok(self.forward_tape(x, false)?.0)
    }

    /// Reverse pass. The modes are treated as constants, so the latent
    /// gradient is the reduced gradient projected onto their span.
    pub fn backward(&self, tape: &RraeTape, g: &OutputGrads) -> Grads {
        let d = self.latent_dim();
        let mut g_reduced: Option<Array2<f64>> = None;
        let add = |acc: &mut Option<Array2<f64>>, v: Array2<f64>| match acc {
            Some(a) => *a += &v,
            None => *acc = Some(v),
        };
        let mut dec_grads = Vec::new();
        if let Some(gr) = g.recon {
            let (gx, gp) = self.decoder.backward(&tape.decoder, gr);
            add(&mut g_reduced, gx);
            dec_grads = gp;
        } else {
            dec_grads.extend(zero_grads(&self.decoder.params));
        }
        let cls_grads = match (&self.classifier, &tape.classifier) {
            (Some(n), Some(t)) => match g.scores {
                Some(gs) => {
                    let (gx, gp) = n.backward(t, gs);
                    add(&mut g_reduced, gx);
                    Some(gp)
                }
                None => Some(zero_grads(&n.params)),
            },
            _ => None,
        };
        let dic_grads = match (&self.dic_head, &tape.dic_head) {
            (Some(n), Some(t)) => match g.dic {
                Some(gd) => {
                    let (gx, gp) = n.backward(t, gd);
                    add(&mut g_reduced, gx);
                    Some(gp)
                }
                None => Some(zero_grads(&n.params)),
            },
            _ => None,
        };
        let batch = tape.encoder_batch();
        let g_reduced = g_reduced.unwrap_or_else(|| Array2::zeros((batch, d)));
        let mut out: Grads = Vec::new();
        let mut lin = Vec::new();
        let g_latent = match &self.bottleneck {
            Bottleneck::Svd { .. } => {
                let b = tape.basis.as_ref().expect("svd tape has a basis");
                b.project(g_reduced.view())
            }
            Bottleneck::Linear { down, up } => {
                let (gz, gup) = up.backward(tape.up.as_ref().unwrap(), &g_reduced);
                let (gy, gdown) = down.backward(tape.down.as_ref().unwrap(), &gz);
                lin.push(gdown);
                lin.push(gup);
                gy
            }
        };
        let (_, enc_grads) = self.encoder.backward(&tape.encoder, &g_latent);
        out.push(enc_grads);
        out.extend(lin);
        out.push(dec_grads);
        out.extend(cls_grads);
        out.extend(dic_grads);
        out
    }

    /// Replaces the frozen modes with those of `x`'s latent matrix.
    pub fn freeze_basis(&mut self, x: &Array2<f64>) -> Result<()> {
        if let Bottleneck::Svd { k_max, .. } = self.bottleneck {
            let y = self.encode(x)?;
            let b = basis_of_rows(y.view(), k_max)?;
            self.bottleneck = Bottleneck::Svd {
                k_max,
                basis: Some(b),
            };
        }
        Ok(())
    }

    /// Class (1-based), DIC curve and reconstruction for standardized inputs.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        let o = self.forward(x)?;
        Ok(Prediction {
            classes: o.scores.as_ref().map(|s| argmax_rows(s.view())),
            dic: o.dic,
            recon: Some(o.recon),
        })
    }
}

enum SvdOrLinear {
    Svd(usize),
    Linear(usize),
}

fn check_rank(k: usize, d: usize) -> Result<()> {
    if k < 1 || k > d {
        return Err(Error::InvalidArgument(format!(
            "rank {k} must lie in [1, {d}]"
        )));
    }
    Ok(())
}

pub(crate) fn zero_grads(p: &Params) -> Params {
    p.iter()
        .map(|l| l.iter().map(|a| ndarray::ArrayD::zeros(a.raw_dim())).collect())
        .collect()
}

impl RraeTape {
    fn encoder_batch(&self) -> usize {
        self.encoder.batch()
    }
}

/// Model outputs for a batch of standardized profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub classes: Option<Vec<usize>>,
    pub dic: Option<Array2<f64>>,
    pub recon: Option<Array2<f64>>,
}

/// Weights of the four terms of the extended model: class, profile
/// reconstruction, DIC autoencoding, DIC from predicted coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedWeights(pub [f64; 4]);

impl Default for ExtendedWeights {
    fn default() -> Self {
        ExtendedWeights([2.0, 1.0, 1.0, 2.0])
    }
}

/// Roughness model `m1` predicting modal coefficients, and DIC autoencoder
/// `m2` whose modes `V` are frozen after its own training.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedModel {
    pub m1: RraeModel,
    pub m2: RraeModel,
    pub weights: ExtendedWeights,
}

/// Dense DIC autoencoder: `horizon -> width -> width -> latent` and back,
/// sigmoid output.
pub fn dic_autoencoder(
    horizon: usize,
    width: usize,
    latent: usize,
    r_max: usize,
    seed: u64,
) -> Result<RraeModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = NetworkSpec::mlp(horizon, width, 2, latent, None)?;
    let dec = NetworkSpec::mlp(latent, width, 2, horizon, Some(LayerSpec::sigmoid()))?;
    check_rank(r_max, latent)?;
    RraeModel::from_parts(
        Network::init(enc, &mut rng)?,
        Bottleneck::Svd {
            k_max: r_max,
            basis: None,
        },
        Network::init(dec, &mut rng)?,
        None,
        None,
    )
}

impl ExtendedModel {
    pub fn new(arch: &Architecture, k_max: usize, r_max: usize, seed: u64) -> Result<Self> {
        let m1 = RraeModel::build(
            arch,
            SvdOrLinear::Svd(k_max),
            true,
            Some(arch.beta_head(r_max)?),
            seed,
        )?;
        let m2 = dic_autoencoder(
            arch.horizon,
            arch.head_width,
            arch.latent_dim.min(32).max(r_max),
            r_max,
            seed.wrapping_add(0x5eed),
        )?;
        Ok(ExtendedModel {
            m1,
            m2,
            weights: ExtendedWeights::default(),
        })
    }

    pub fn r_max(&self) -> usize {
        self.m2.k_max()
    }

    /// Frozen DIC modes `V`.
    pub fn v(&self) -> Option<&LatentBasis> {
        self.m2.basis()
    }

    /// DIC curves decoded from predicted coefficients `beta` (batch x r_max).
    pub fn decode_beta(&self, beta: &Array2<f64>) -> Result<Array2<f64>> {
        let v = self
            .v()
            .ok_or_else(|| Error::InvalidArgument("DIC modes not fixed yet".into()))?;
        self.m2.decoder.apply(&v.expand(beta.view()))
    }

    /// Inference needs only the profiles.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        let o = self.m1.forward(x)?;
        let beta = o.dic.expect("m1 carries a coefficient head");
        Ok(Prediction {
            classes: o.scores.as_ref().map(|s| argmax_rows(s.view())),
            dic: Some(self.decode_beta(&beta)?),
            recon: Some(o.recon),
        })
    }

    pub fn param_count(&self) -> usize {
        self.m1.param_count() + self.m2.param_count()
    }
}

/// Direct profile-to-DIC regression network.
#[derive(Clone, Debug, PartialEq)]
pub struct EncDecModel {
    pub net: Network,
    pub stats: Option<Standardizer>,
}

/// Sizes of the supervised encoder-decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncDecArchitecture {
    pub input_len: usize,
    pub horizon: usize,
    pub filters: [usize; 2],
    pub latent_dim: usize,
    pub gamma: usize,
    pub dropout: f64,
}

impl Default for EncDecArchitecture {
    fn default() -> Self {
        EncDecArchitecture {
            input_len: 500,
            horizon: crate::compaction::DEFAULT_HORIZON,
            filters: [8, 16],
            latent_dim: 64,
            gamma: 6,
            dropout: 0.1,
        }
    }
}

impl EncDecArchitecture {
    pub fn spec(&self) -> Result<NetworkSpec> {
        if self.horizon % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be a multiple of 4 (two upsampling stages)",
                self.horizon
            )));
        }
        let [f1, f2] = self.filters;
        let drop = LayerSpec::Dropout { rate: self.dropout };
        NetworkSpec::new(
            (1, self.input_len),
            vec![
                LayerSpec::conv(f1, 9, 3, 0),
                LayerSpec::relu(),
                LayerSpec::MaxPool1d { size: 2 },
                drop.clone(),
                LayerSpec::conv(f2, 9, 3, 0),
                LayerSpec::relu(),
                LayerSpec::MaxPool1d { size: 2 },
                drop.clone(),
                LayerSpec::dense(self.latent_dim),
                LayerSpec::relu(),
                drop,
                LayerSpec::dense(self.gamma),
                // 4 channels of horizon / 4, upsampled twice
                LayerSpec::dense(self.horizon),
                LayerSpec::relu(),
                LayerSpec::Reshape { channels: 4 },
                LayerSpec::conv_t(4, 2, 2, 0),
                LayerSpec::relu(),
                LayerSpec::conv_t(1, 2, 2, 0),
                LayerSpec::sigmoid(),
            ],
        )
    }
}

impl EncDecModel {
    pub fn new(arch: &EncDecArchitecture, seed: u64) -> Result<Self> {
        Ok(EncDecModel {
            net: Network::seeded(arch.spec()?, seed)?,
            stats: None,
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        Ok(Prediction {
            classes: None,
            dic: Some(self.net.apply(x)?),
            recon: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

/// Any trained model.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Rrae(RraeModel),
    Ae(RraeModel),
    Extended(ExtendedModel),
    EncDec(EncDecModel),
}

impl TrainedModel {
    pub fn arch_name(&self) -> &'static str {
        match self {
            TrainedModel::Rrae(_) => "rrae",
            TrainedModel::Ae(_) => "ae",
            TrainedModel::Extended(_) => "extended",
            TrainedModel::EncDec(_) => "encdec",
        }
    }

    pub fn stats(&self) -> Option<&Standardizer> {
        match self {
            TrainedModel::Rrae(m) | TrainedModel::Ae(m) => m.stats.as_ref(),
            TrainedModel::Extended(m) => m.m1.stats.as_ref(),
            TrainedModel::EncDec(m) => m.stats.as_ref(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            TrainedModel::Rrae(m) | TrainedModel::Ae(m) => m.input_len(),
            TrainedModel::Extended(m) => m.m1.input_len(),
            TrainedModel::EncDec(m) => m.net.spec.input_len(),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        if x.ncols() != self.input_len() {
            return Err(Error::Shape(format!(
                "model expects {} points per profile, got {}",
                self.input_len(),
                x.ncols()
            )));
        }
        match self {
            TrainedModel::Rrae(m) | TrainedModel::Ae(m) => m.predict(x),
            TrainedModel::Extended(m) => m.predict(x),
            TrainedModel::EncDec(m) => m.predict(x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            TrainedModel::Rrae(m) | TrainedModel::Ae(m) => m.param_count(),
            TrainedModel::Extended(m) => m.param_count(),
            TrainedModel::EncDec(m) => m.param_count(),
        }
    }
}
