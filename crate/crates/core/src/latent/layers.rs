//! Layer kernels with hand-written reverse passes. Activations are
//! `(batch, channels, length)`.

use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix1, Ix2, Ix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose1d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        units: usize,
        bias: bool,
    },
    MaxPool1d {
        size: usize,
    },
    Activation {
        function: Activation,
    },
    /// Reinterprets the flattened activation as `channels` rows.
    Reshape {
        channels: usize,
    },
    /// Inverted dropout, active only in training mode.
    Dropout {
        rate: f64,
    },
}

/// `(channels, length)` of one sample.
pub type Shape = (usize, usize);

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv1d {
            filters,
            kernel,
            stride,
            padding,
        }
    }

    pub fn conv_t(filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::ConvTranspose1d {
            filters,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, bias: true }
    }

    pub fn linear(units: usize) -> Self {
        LayerSpec::Dense { units, bias: false }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation {
            function: Activation::Relu,
        }
    }

    pub fn sigmoid() -> Self {
        LayerSpec::Activation {
            function: Activation::Sigmoid,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let (c, l) = input;
        let bad = |msg: String| Err(Error::Shape(msg));
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad("conv1d needs positive filters, kernel and stride".into());
                }
                if l + 2 * padding < kernel {
                    return bad(format!(
                        "conv1d kernel {kernel} longer than padded input {}",
                        l + 2 * padding
                    ));
                }
                Ok((filters, (l + 2 * padding - kernel) / stride + 1))
            }
            LayerSpec::ConvTranspose1d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad("transposed conv needs positive filters, kernel and stride".into());
                }
                let full = (l - 1) * stride + kernel;
                if full <= 2 * padding {
                    return bad("transposed conv padding removes the whole output".into());
                }
                Ok((filters, full - 2 * padding))
            }
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return bad("dense layer with zero units".into());
                }
                Ok((units, 1))
            }
            LayerSpec::MaxPool1d { size } => {
                if size == 0 || l < size {
                    return bad(format!("max-pool of size {size} on length {l}"));
                }
                Ok((c, l / size))
            }
            LayerSpec::Activation { .. } => Ok(input),
            LayerSpec::Reshape { channels } => {
                if channels == 0 || (c * l) % channels != 0 {
                    return bad(format!("cannot reshape {c}x{l} into {channels} channels"));
                }
                Ok((channels, c * l / channels))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input)
            }
        }
    }

    /// Shapes of the trainable tensors, weights first.
    pub fn param_shapes(&self, input: Shape) -> Vec<Vec<usize>> {
        let (c, l) = input;
        match *self {
            LayerSpec::Conv1d {
                filters, kernel, ..
            } => vec![vec![filters, c, kernel], vec![filters]],
            LayerSpec::ConvTranspose1d {
                filters, kernel, ..
            } => vec![vec![c, filters, kernel], vec![filters]],
            LayerSpec::Dense { units, bias } => {
                let mut v = vec![vec![units, c * l]];
                if bias {
                    v.push(vec![units]);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Fan-in used to scale the uniform initialisation.
    pub fn fan_in(&self, input: Shape) -> usize {
        let (c, l) = input;
        match *self {
            LayerSpec::Conv1d { kernel, .. } => c * kernel,
            LayerSpec::ConvTranspose1d { kernel, stride, .. } => (c * kernel).div_ceil(stride),
            LayerSpec::Dense { .. } => c * l,
            _ => 1,
        }
    }
}

/// Forward state kept for the reverse pass.
#[derive(Clone, Debug)]
pub enum Cache {
    None,
    Columns(Array2<f64>),
    Pool(Vec<usize>),
    Output(Array3<f64>),
    Mask(Array3<f64>),
}

/// Output positions `o` whose tap `k` lands inside the unpadded signal.
fn valid_range(k: usize, stride: usize, padding: usize, len: usize, out_len: usize) -> (usize, usize) {
    // o * stride + k - padding in [0, len)
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi = if len + padding > k {
        ((len + padding - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Unfolds `x` into `(c * kernel, batch * out_len)` columns.
pub fn im2col(
    x: ArrayView3<f64>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
) -> Array2<f64> {
    let (b, c, l) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let width = b * out_len;
    let mut cols = vec![0.0; c * kernel * width];
    for k in 0..kernel {
        let (lo, hi) = valid_range(k, stride, padding, l, out_len);
        for ci in 0..c {
            let row = &mut cols[(ci * kernel + k) * width..(ci * kernel + k + 1) * width];
            for bi in 0..b {
                let src = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let dst = &mut row[bi * out_len..(bi + 1) * out_len];
                if stride == 1 {
                    let start = lo + k - padding;
                    dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                } else {
                    for o in lo..hi {
                        dst[o] = src[o * stride + k - padding];
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * kernel, width), cols).expect("sized buffer")
}

/// Adjoint of [`im2col`]: scatters columns back onto a `(batch, c, len)` signal.
pub fn col2im(
    cols: ArrayView2<f64>,
    batch: usize,
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
) -> Array3<f64> {
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let width = batch * out_len;
    let mut x = vec![0.0; batch * channels * len];
    for k in 0..kernel {
        let (lo, hi) = valid_range(k, stride, padding, len, out_len);
        for ci in 0..channels {
            let row = &cs[(ci * kernel + k) * width..(ci * kernel + k + 1) * width];
            for bi in 0..batch {
                let dst = &mut x[(bi * channels + ci) * len..(bi * channels + ci + 1) * len];
                let src = &row[bi * out_len..(bi + 1) * out_len];
                for o in lo..hi {
                    dst[o * stride + k - padding] += src[o];
                }
            }
        }
    }
    Array3::from_shape_vec((batch, channels, len), x).expect("sized buffer")
}

/// `(channels, batch * len)` view of a `(batch, channels, len)` tensor.
fn channels_major(x: ArrayView3<f64>) -> Array2<f64> {
    let (b, c, l) = x.dim();
    let mut out = Array2::<f64>::zeros((c, b * l));
    for bi in 0..b {
        out.slice_mut(ndarray::s![.., bi * l..(bi + 1) * l])
            .assign(&x.index_axis(Axis(0), bi));
    }
    out
}

fn batch_major(m: ArrayView2<f64>, batch: usize) -> Array3<f64> {
    let (c, bl) = m.dim();
    let l = bl / batch;
    let mut out = Array3::<f64>::zeros((batch, c, l));
    for bi in 0..batch {
        out.index_axis_mut(Axis(0), bi)
            .assign(&m.slice(ndarray::s![.., bi * l..(bi + 1) * l]));
    }
    out
}

pub(crate) fn flatten(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (b, c, l) = x.dim();
    x.view()
        .into_shape_with_order((b, c * l))
        .expect("standard layout")
}

fn as2(p: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    p.view().into_dimensionality::<Ix2>().expect("rank-2 parameter")
}

fn as1(p: &ArrayD<f64>) -> ndarray::ArrayView1<'_, f64> {
    p.view().into_dimensionality::<Ix1>().expect("rank-1 parameter")
}

fn kernel_matrix(w: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    let w3 = w.view().into_dimensionality::<Ix3>().expect("rank-3 kernel");
    let (a, b, k) = w3.dim();
    w3.into_shape_with_order((a, b * k)).expect("standard layout")
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Runs one layer forward. `rng` switches dropout on.
pub fn forward(
    spec: &LayerSpec,
    params: &[ArrayD<f64>],
    x: Array3<f64>,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array3<f64>, Cache) {
    let (b, c, l) = x.dim();
    match *spec {
        LayerSpec::Conv1d {
            filters,
            kernel,
            stride,
            padding,
        } => {
            let out_len = (l + 2 * padding - kernel) / stride + 1;
            let cols = im2col(x.view(), kernel, stride, padding, out_len);
            let mut y = kernel_matrix(&params[0]).dot(&cols);
            let bias = as1(&params[1]);
            for (mut row, &bv) in y.rows_mut().into_iter().zip(bias.iter()) {
                row += bv;
            }
            let _ = filters;
            (batch_major(y.view(), b), Cache::Columns(cols))
        }
        LayerSpec::ConvTranspose1d {
            filters,
            kernel,
            stride,
            padding,
        } => {
            let out_len = (l - 1) * stride + kernel - 2 * padding;
            // weights (c_in, c_out * k): columns = W^T x
            let xm = channels_major(x.view());
            let cols = kernel_matrix(&params[0]).t().dot(&xm);
            let mut y = col2im(cols.view(), b, filters, out_len, kernel, stride, padding, l);
            let bias = as1(&params[1]);
            for mut sample in y.outer_iter_mut() {
                for (mut row, &bv) in sample.outer_iter_mut().zip(bias.iter()) {
                    row += bv;
                }
            }
            (y, Cache::Columns(xm))
        }
        LayerSpec::Dense { units, bias } => {
            let xf = flatten(&x).to_owned();
            let mut y = xf.dot(&as2(&params[0]).t());
            if bias {
                y += &as1(&params[1]);
            }
            let y = y.into_shape_with_order((b, units, 1)).expect("contiguous");
            (y, Cache::Columns(xf))
        }
        LayerSpec::MaxPool1d { size } => {
            let out_len = l / size;
            let xs = x.as_slice().expect("standard layout");
            let mut y = vec![0.0; b * c * out_len];
            let mut idx = Vec::with_capacity(b * c * out_len);
            for (row, out) in xs.chunks_exact(l).zip(y.chunks_exact_mut(out_len)) {
                for (o, v) in out.iter_mut().enumerate() {
                    let mut best = o * size;
                    for j in o * size + 1..(o + 1) * size {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    *v = row[best];
                    idx.push(best);
                }
            }
            let y = Array3::from_shape_vec((b, c, out_len), y).expect("sized buffer");
            (y, Cache::Pool(idx))
        }
        LayerSpec::Activation { function } => match function {
            Activation::Relu => {
                let mut y = x;
                y.mapv_inplace(|v| v.max(0.0));
                (y.clone(), Cache::Output(y))
            }
            Activation::Sigmoid => {
                let y = x.mapv(sigmoid);
                (y.clone(), Cache::Output(y))
            }
            Activation::None => (x, Cache::None),
        },
        LayerSpec::Reshape { channels } => {
            let y = x
                .into_shape_with_order((b, channels, c * l / channels))
                .expect("contiguous");
            (y, Cache::None)
        }
        LayerSpec::Dropout { rate } => match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask = Array3::from_shape_simple_fn((b, c, l), || {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&x * &mask, Cache::Mask(mask))
            }
            _ => (x, Cache::None),
        },
    }
}

/// Reverse pass of one layer. Returns the input gradient and the parameter
/// gradients in [`LayerSpec::param_shapes`] order.
pub fn backward(
    spec: &LayerSpec,
    params: &[ArrayD<f64>],
    input: Shape,
    cache: &Cache,
    grad: Array3<f64>,
) -> (Array3<f64>, Vec<ArrayD<f64>>) {
    let b = grad.dim().0;
    let (c, l) = input;
    match (spec, cache) {
        (
            &LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
                padding,
            },
            Cache::Columns(cols),
        ) => {
            let out_len = grad.dim().2;
            let g = channels_major(grad.view());
            let dw = g.dot(&cols.t());
            let db = g.sum_axis(Axis(1));
            let dcols = kernel_matrix(&params[0]).t().dot(&g);
            let dx = col2im(dcols.view(), b, c, l, kernel, stride, padding, out_len);
            let dw = dw
                .into_shape_with_order((filters, c, kernel))
                .expect("contiguous")
                .into_dyn();
            (dx, vec![dw, db.into_dyn()])
        }
        (
            &LayerSpec::ConvTranspose1d {
                filters,
                kernel,
                stride,
                padding,
            },
            Cache::Columns(xm),
        ) => {
            let gcols = im2col(grad.view(), kernel, stride, padding, l);
            let w = kernel_matrix(&params[0]);
            let dx = batch_major(w.dot(&gcols).view(), b);
            let dw = xm
                .dot(&gcols.t())
                .into_shape_with_order((c, filters, kernel))
                .expect("contiguous")
                .into_dyn();
            let db = grad.sum_axis(Axis(2)).sum_axis(Axis(0));
            (dx, vec![dw, db.into_dyn()])
        }
        (&LayerSpec::Dense { bias, .. }, Cache::Columns(xf)) => {
            let g = flatten(&grad);
            let dw = g.t().dot(xf).into_dyn();
            let dx = g
                .dot(&as2(&params[0]))
                .into_shape_with_order((b, c, l))
                .expect("contiguous");
            let mut grads = vec![dw];
            if bias {
                grads.push(g.sum_axis(Axis(0)).into_dyn());
            }
            (dx, grads)
        }
        (&LayerSpec::MaxPool1d { .. }, Cache::Pool(idx)) => {
            let out_len = grad.dim().2;
            let g = grad.as_standard_layout();
            let gs = g.as_slice().expect("standard layout");
            let mut dx = vec![0.0; b * c * l];
            for ((row, gr), ir) in dx
                .chunks_exact_mut(l)
                .zip(gs.chunks_exact(out_len))
                .zip(idx.chunks_exact(out_len))
            {
                for (&j, &v) in ir.iter().zip(gr) {
                    row[j] += v;
                }
            }
            (
                Array3::from_shape_vec((b, c, l), dx).expect("sized buffer"),
                Vec::new(),
            )
        }
        (LayerSpec::Activation { function }, _) => match (function, cache) {
            (Activation::Relu, Cache::Output(y)) => {
                let mut g = grad;
                ndarray::Zip::from(&mut g).and(y).for_each(|g, &y| {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                });
                (g, Vec::new())
            }
            (Activation::Sigmoid, Cache::Output(y)) => {
                let mut g = grad;
                ndarray::Zip::from(&mut g)
                    .and(y)
                    .for_each(|g, &y| *g *= y * (1.0 - y));
                (g, Vec::new())
            }
            _ => (grad, Vec::new()),
        },
        (LayerSpec::Reshape { .. }, _) => (
            grad.into_shape_with_order((b, c, l)).expect("contiguous"),
            Vec::new(),
        ),
        (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => (grad * mask, Vec::new()),
        (LayerSpec::Dropout { .. }, _) => (grad, Vec::new()),
        _ => unreachable!("cache does not belong to layer"),
    }
}

/// Uniform fan-in initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_params(spec: &LayerSpec, input: Shape, rng: &mut ChaCha8Rng) -> Vec<ArrayD<f64>> {
    let bound = 1.0 / (spec.fan_in(input) as f64).sqrt();
    spec.param_shapes(input)
        .into_iter()
        .map(|shape| ArrayD::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound)))
        .collect()
}
