//! Sequential networks built from [`LayerSpec`]s.

use ndarray::{Array2, Array3, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Cache, LayerSpec, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Activation shape before every layer, plus the final output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.0 == 0 || self.input.1 == 0 {
            return Err(Error::Shape("empty network input".into()));
        }
        let mut shapes = vec![self.input];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(*shapes.last().unwrap())
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output(&self) -> Shape {
        *self.shapes().expect("validated spec").last().unwrap()
    }

    pub fn output_len(&self) -> usize {
        let (c, l) = self.output();
        c * l
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1
    }

    pub fn param_count(&self) -> usize {
        let shapes = self.shapes().expect("validated spec");
        self.layers
            .iter()
            .zip(&shapes)
            .flat_map(|(l, &s)| l.param_shapes(s))
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Multi-layer perceptron: `hidden` relu layers of `width`, then a dense
    /// output layer and an optional output activation.
    pub fn mlp(
        input: usize,
        width: usize,
        hidden: usize,
        output: usize,
        last: Option<LayerSpec>,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for _ in 0..hidden {
            layers.push(LayerSpec::dense(width));
            layers.push(LayerSpec::relu());
        }
        layers.push(LayerSpec::dense(output));
        layers.extend(last);
        NetworkSpec::new((input, 1), layers)
    }
}

/// Trainable tensors of a whole network, one list per layer.
pub type Params = Vec<Vec<ArrayD<f64>>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Params,
}

/// Everything the reverse pass needs.
pub struct Tape {
    caches: Vec<Cache>,
    batch: usize,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Network {
    pub fn init(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| layers::init_params(l, s, rng))
            .collect();
        Ok(Network { spec, params })
    }

    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self> {
        Self::init(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Every parameter set to zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| {
                l.param_shapes(s)
                    .into_iter()
                    .map(ArrayD::zeros)
                    .collect()
            })
            .collect();
        Ok(Network { spec, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.len()).sum()
    }

    /// Forward pass on batch-major rows (batch x input_len); returns batch x
    /// output_len.
    pub fn forward(&self, x: &Array2<f64>, rng: Option<&mut ChaCha8Rng>) -> Result<(Array2<f64>, Tape)> {
        let (b, n) = x.dim();
        if n != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "network expects {} inputs per sample, got {n}",
                self.spec.input_len()
            )));
        }
        let (c, l) = self.spec.input;
        let mut a: Array3<f64> = x
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((b, c, l))
            .expect("contiguous");
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut rng = rng;
        for (layer, p) in self.spec.layers.iter().zip(&self.params) {
            let (next, cache) = layers::forward(layer, p, a, rng.as_deref_mut());
            a = next;
            caches.push(cache);
        }
        let out = standard(a)
            .into_shape_with_order((b, self.spec.output_len()))
            .expect("contiguous");
        Ok((out, Tape { caches, batch: b }))
    }

    /// Inference without recording a tape.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, None)?.0)
    }

    /// Reverse pass: gradient w.r.t. the input rows and the parameters.
    pub fn backward(&self, tape: &Tape, grad: &Array2<f64>) -> (Array2<f64>, Params) {
        let shapes = self.spec.shapes().expect("validated spec");
        let (oc, ol) = *shapes.last().unwrap();
        let mut g: Array3<f64> = grad
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((tape.batch, oc, ol))
            .expect("contiguous");
        let mut grads: Params = vec![Vec::new(); self.spec.layers.len()];
        for i in (0..self.spec.layers.len()).rev() {
            let (dx, dp) = layers::backward(
                &self.spec.layers[i],
                &self.params[i],
                shapes[i],
                &tape.caches[i],
                standard(g),
            );
            grads[i] = dp;
            g = dx;
        }
        let b = tape.batch;
        let n = self.spec.input_len();
        let dx = standard(g)
            .into_shape_with_order((b, n))
            .expect("contiguous");
        (dx, grads)
    }

    /// Order-sensitive checksum of every parameter bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.params.iter().flatten().flat_map(|p| p.iter()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

fn standard(a: Array3<f64>) -> Array3<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}
