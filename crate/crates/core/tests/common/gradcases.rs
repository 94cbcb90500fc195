//! Gradient cases shared by the gradient tests and the acceptance suite.
//! Each case returns `(name, worst relative error)` for every quantity it
//! checks against central finite differences.

use super::fd::{check_input, check_params};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tape_lab::latent::layers::LayerSpec;
use tape_lab::latent::linalg::basis_of_rows;
use tape_lab::latent::model::dic_autoencoder;
use tape_lab::latent::network::Params;
use tape_lab::latent::train::{autoencoder_loss, extended_loss};
use tape_lab::latent::{
    relative_l2, Activation, Bottleneck, ExtendedModel, ExtendedWeights, LossWeights, Network,
    NetworkSpec, RraeModel, Samples,
};

pub const TOL: f64 = 1e-4;

pub type Worst = Vec<(String, f64)>;

pub fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn net_groups(n: &mut Network) -> Vec<&mut Params> {
    vec![&mut n.params]
}

/// Gradient of `|net(x) - t| / |t|` w.r.t. parameters and input.
fn network(name: &str, spec: NetworkSpec, batch: usize, seed: u64) -> Worst {
    let net = Network::seeded(spec, seed).unwrap();
    assert!(net.param_count() <= 1000);
    let x = random(batch, net.spec.input_len(), seed + 1);
    let t = random(batch, net.spec.output_len(), seed + 2);
    let (y, tape) = net.forward(&x, None).unwrap();
    let l = relative_l2(y.view(), t.view()).unwrap();
    let (dx, dp) = net.backward(&tape, &l.grad);
    let loss = |n: &Network, x: &Array2<f64>| {
        relative_l2(n.apply(x).unwrap().view(), t.view()).unwrap().value
    };
    vec![
        (format!("{name} params"), check_params(&net, net_groups, |n| loss(n, &x), &[dp])),
        (format!("{name} input"), check_input(&x, |x| loss(&net, x), &dx)),
    ]
}

pub fn dense() -> Worst {
    let mut w = network("dense", NetworkSpec::new((3, 4), vec![LayerSpec::dense(5)]).unwrap(), 3, 1);
    w.extend(network("linear", NetworkSpec::new((6, 1), vec![LayerSpec::linear(4)]).unwrap(), 4, 2));
    w
}

pub fn conv1d() -> Worst {
    let mut w = network("conv s2 p1", NetworkSpec::new((2, 11), vec![LayerSpec::conv(3, 3, 2, 1)]).unwrap(), 2, 3);
    w.extend(network("conv k5 p2", NetworkSpec::new((1, 12), vec![LayerSpec::conv(4, 5, 1, 2)]).unwrap(), 3, 4));
    w
}

pub fn conv_transpose() -> Worst {
    let mut w = network("conv_t k3 s2 p1", NetworkSpec::new((3, 5), vec![LayerSpec::conv_t(2, 3, 2, 1)]).unwrap(), 2, 5);
    w.extend(network("conv_t k2 s2", NetworkSpec::new((4, 6), vec![LayerSpec::conv_t(2, 2, 2, 0)]).unwrap(), 3, 6));
    w
}

pub fn pool_and_activations() -> Worst {
    let mut w = Vec::new();
    for (name, act) in [
        ("relu", LayerSpec::relu()),
        ("sigmoid", LayerSpec::sigmoid()),
        ("identity", LayerSpec::Activation { function: Activation::None }),
    ] {
        let spec = NetworkSpec::new(
            (2, 8),
            vec![
                LayerSpec::conv(3, 3, 1, 1),
                act,
                LayerSpec::MaxPool1d { size: 2 },
                LayerSpec::dense(3),
            ],
        )
        .unwrap();
        w.extend(network(&format!("{name} + maxpool"), spec, 3, 7));
    }
    w
}

pub fn reshape() -> Worst {
    let spec = NetworkSpec::new(
        (5, 1),
        vec![
            LayerSpec::dense(12),
            LayerSpec::Reshape { channels: 3 },
            LayerSpec::conv_t(2, 2, 2, 0),
            LayerSpec::sigmoid(),
        ],
    )
    .unwrap();
    network("reshape", spec, 2, 8)
}

/// Dropout with the mask fixed by replaying the same generator.
pub fn dropout() -> Worst {
    let spec = NetworkSpec::new(
        (6, 1),
        vec![
            LayerSpec::dense(8),
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::dense(3),
        ],
    )
    .unwrap();
    let net = Network::seeded(spec, 9).unwrap();
    let x = random(4, 6, 10);
    let t = random(4, 3, 11);
    let rng = ChaCha8Rng::seed_from_u64(12);
    let (y, tape) = net.forward(&x, Some(&mut rng.clone())).unwrap();
    let l = relative_l2(y.view(), t.view()).unwrap();
    let (dx, dp) = net.backward(&tape, &l.grad);
    let loss = |n: &Network, x: &Array2<f64>| {
        let y = n.forward(x, Some(&mut rng.clone())).unwrap().0;
        relative_l2(y.view(), t.view()).unwrap().value
    };
    vec![
        ("dropout params".into(), check_params(&net, net_groups, |n| loss(n, &x), &[dp])),
        ("dropout input".into(), check_input(&x, |x| loss(&net, x), &dx)),
    ]
}

pub fn relative_l2_loss() -> Worst {
    let p = random(3, 7, 13);
    let t = random(3, 7, 14);
    let l = relative_l2(p.view(), t.view()).unwrap();
    let w = check_input(&p, |p| relative_l2(p.view(), t.view()).unwrap().value, &l.grad);
    vec![("relative L2".into(), w)]
}

pub fn tiny_data(batch: usize, n: usize, horizon: usize, classes: usize, seed: u64) -> Samples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((batch, n), |_| rng.gen_range(-0.5..0.5));
    let dic = Array2::from_shape_fn((batch, horizon), |_| rng.gen_range(0.1..0.9));
    let labels = (0..batch).map(|i| i % classes + 1).collect();
    let ids = (0..batch).map(|i| format!("s{i}")).collect();
    Samples::new(ids, x, labels, dic).unwrap()
}

fn tiny_parts(seed: u64, beta: Option<usize>) -> (Network, Network, Network, Network) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = NetworkSpec::new(
        (1, 8),
        vec![
            LayerSpec::conv(2, 3, 1, 1),
            LayerSpec::relu(),
            LayerSpec::MaxPool1d { size: 2 },
            LayerSpec::dense(4),
        ],
    )
    .unwrap();
    let dec = NetworkSpec::new(
        (4, 1),
        vec![
            LayerSpec::dense(8),
            LayerSpec::Reshape { channels: 2 },
            LayerSpec::conv_t(1, 2, 2, 0),
        ],
    )
    .unwrap();
    let cls = NetworkSpec::mlp(4, 4, 1, 3, None).unwrap();
    let head = match beta {
        Some(r) => NetworkSpec::mlp(4, 4, 1, r, None).unwrap(),
        None => NetworkSpec::mlp(4, 4, 1, 6, Some(LayerSpec::sigmoid())).unwrap(),
    };
    (
        Network::init(enc, &mut rng).unwrap(),
        Network::init(dec, &mut rng).unwrap(),
        Network::init(cls, &mut rng).unwrap(),
        Network::init(head, &mut rng).unwrap(),
    )
}

pub fn tiny_rrae(seed: u64) -> RraeModel {
    let (e, d, c, h) = tiny_parts(seed, None);
    RraeModel::from_parts(
        e,
        Bottleneck::Svd {
            k_max: 2,
            basis: None,
        },
        d,
        Some(c),
        Some(h),
    )
    .unwrap()
}

fn rrae_groups(m: &mut RraeModel) -> Vec<&mut Params> {
    m.groups_mut()
}

/// Freezes the modes of the current latent matrix, so that the loss seen by
/// finite differences is the constant-basis forward pass.
pub fn with_frozen_basis(m: &RraeModel, data: &Samples) -> RraeModel {
    let mut f = m.clone();
    if let Bottleneck::Svd { k_max, .. } = f.bottleneck {
        let y = f.encode(&data.x).unwrap();
        f.bottleneck = Bottleneck::Svd {
            k_max,
            basis: Some(basis_of_rows(y.view(), k_max).unwrap()),
        };
    }
    f
}

/// Each RRAE loss term alone, modes held constant.
pub fn rrae_terms() -> Worst {
    let data = tiny_data(6, 8, 6, 3, 20);
    let mut out = Vec::new();
    for (name, weights) in [
        ("rrae recon", LossWeights { recon: 1.0, class: 0.0, dic: 0.0 }),
        ("rrae class", LossWeights { recon: 0.0, class: 1.0, dic: 0.0 }),
        ("rrae dic", LossWeights { recon: 0.0, class: 0.0, dic: 1.0 }),
    ] {
        let mut m = tiny_rrae(21);
        m.weights = weights;
        assert!(m.param_count() <= 1000);
        let frozen = with_frozen_basis(&m, &data);
        let (_, _, grads) = autoencoder_loss(&m, &data, true).unwrap();
        let w = check_params(
            &frozen,
            rrae_groups,
            |f| autoencoder_loss(f, &data, false).unwrap().0,
            &grads,
        );
        out.push((name.to_string(), w));
    }
    out
}

pub fn linear_bottleneck() -> Worst {
    let data = tiny_data(5, 8, 6, 3, 24);
    let (e, d, c, h) = tiny_parts(25, None);
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let down = Network::init(NetworkSpec::new((4, 1), vec![LayerSpec::linear(2)]).unwrap(), &mut rng).unwrap();
    let up = Network::init(NetworkSpec::new((2, 1), vec![LayerSpec::linear(4)]).unwrap(), &mut rng).unwrap();
    let m = RraeModel::from_parts(e, Bottleneck::Linear { down, up }, d, Some(c), Some(h)).unwrap();
    let (_, _, grads) = autoencoder_loss(&m, &data, true).unwrap();
    let w = check_params(&m, rrae_groups, |f| autoencoder_loss(f, &data, false).unwrap().0, &grads);
    vec![("classical AE bottleneck".into(), w)]
}

pub fn tiny_extended(seed: u64, data: &Samples, weights: [f64; 4]) -> ExtendedModel {
    let (e, d, c, h) = tiny_parts(seed, Some(2));
    let m1 = RraeModel::from_parts(
        e,
        Bottleneck::Svd {
            k_max: 2,
            basis: None,
        },
        d,
        Some(c),
        Some(h),
    )
    .unwrap();
    let mut m2 = dic_autoencoder(6, 5, 3, 2, seed + 1).unwrap();
    m2.freeze_basis(&data.dic).unwrap();
    ExtendedModel {
        m1,
        m2,
        weights: ExtendedWeights(weights),
    }
}

/// The four extended-model terms, each alone, for both sub-models.
pub fn extended_terms() -> Worst {
    let data = tiny_data(6, 8, 6, 3, 27);
    let mut out = Vec::new();
    for i in 0..4 {
        let mut w = [0.0; 4];
        w[i] = 1.0;
        let m = tiny_extended(28, &data, w);
        assert!(m.param_count() <= 1000);
        let (_, _, g1, g2) = extended_loss(&m, &data, true).unwrap();
        let mut frozen = m.clone();
        frozen.m1 = with_frozen_basis(&m.m1, &data);
        let w1 = check_params(
            &frozen,
            |m: &mut ExtendedModel| m.m1.groups_mut(),
            |f| extended_loss(f, &data, false).unwrap().0,
            &g1,
        );
        let w2 = check_params(
            &frozen,
            |m: &mut ExtendedModel| m.m2.groups_mut(),
            |f| extended_loss(f, &data, false).unwrap().0,
            &g2,
        );
        out.push((format!("extended term {} (m1)", i + 1), w1));
        out.push((format!("extended term {} (m2)", i + 1), w2));
    }
    out
}

pub fn all() -> Worst {
    [
        dense(),
        conv1d(),
        conv_transpose(),
        pool_and_activations(),
        reshape(),
        dropout(),
        relative_l2_loss(),
        rrae_terms(),
        linear_bottleneck(),
        extended_terms(),
    ]
    .concat()
}
