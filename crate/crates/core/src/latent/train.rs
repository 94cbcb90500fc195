//! Full-batch training loops.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{one_hot, relative_l2};
use super::model::{
    Architecture, EncDecArchitecture, EncDecModel, ExtendedModel, Grads, OutputGrads, RraeModel,
};
use super::network::Params;
use super::optim::{Optimizer, OptimizerState, Schedule};
use crate::error::{Error, Result};

/// Standardized profiles with their labels and DIC targets, batch-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub ids: Vec<String>,
    pub x: Array2<f64>,
    /// 1-based class labels.
    pub labels: Vec<usize>,
    pub dic: Array2<f64>,
}

impl Samples {
    pub fn new(ids: Vec<String>, x: Array2<f64>, labels: Vec<usize>, dic: Array2<f64>) -> Result<Self> {
        let b = x.nrows();
        if ids.len() != b || labels.len() != b || dic.nrows() != b {
            return Err(Error::Shape(format!(
                "{} ids, {b} profiles, {} labels, {} DIC curves",
                ids.len(),
                labels.len(),
                dic.nrows()
            )));
        }
        if b == 0 {
            return Err(Error::InvalidData("empty sample set".into()));
        }
        Ok(Samples { ids, x, labels, dic })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Samples {
        Samples {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            x: self.x.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dic: self.dic.select(ndarray::Axis(0), idx),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: Schedule,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl TrainConfig {
    /// Decade learning-rate drops at every third of the run.
    pub fn new(epochs: usize, lr: f64, optimizer: Optimizer, seed: u64) -> Self {
        TrainConfig {
            epochs,
            schedule: Schedule {
                lr,
                drop_every: (epochs / 3).max(1),
                factor: 0.1,
            },
            optimizer,
            seed,
        }
    }
}

/// Per-epoch loss values; `terms` follow `names`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub names: Vec<String>,
    pub total: Vec<f64>,
    pub terms: Vec<Vec<f64>>,
}

impl History {
    fn new(names: &[&str]) -> Self {
        History {
            names: names.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    fn push(&mut self, epoch: usize, total: f64, terms: Vec<f64>) -> Result<()> {
        for (name, v) in self.names.iter().zip(&terms) {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    term: name.clone(),
                });
            }
        }
        self.total.push(total);
        self.terms.push(terms);
        Ok(())
    }

    pub fn last_total(&self) -> Option<f64> {
        self.total.last().copied()
    }

    /// Mean total loss over consecutive windows of `width` epochs.
    pub fn window_means(&self, width: usize) -> Vec<f64> {
        self.total
            .chunks(width.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn step(state: &mut OptimizerState, groups: Vec<&mut Params>, grads: &Grads, lr: f64) {
    for (i, (p, g)) in groups.into_iter().zip(grads).enumerate() {
        state.update(i, p, g, lr);
    }
}

fn scaled(g: &Array2<f64>, w: f64) -> Array2<f64> {
    g * w
}

/// Loss terms `(recon, class, dic)`, weighted total and parameter gradients
/// of an autoencoder on a full batch. `fresh_basis` recomputes the SVD modes
/// from this batch.
pub fn autoencoder_loss(
    model: &RraeModel,
    data: &Samples,
    fresh_basis: bool,
) -> Result<(f64, Vec<f64>, Grads)> {
    let classes = model
        .classifier
        .as_ref()
        .map(|c| c.spec.output_len())
        .unwrap_or(0);
    let w = model.weights;
    let (o, tape) = model.forward_tape(&data.x, fresh_basis)?;
    let lr_ = relative_l2(o.recon.view(), data.x.view())?;
    let lc = match &o.scores {
        Some(s) => Some(relative_l2(s.view(), one_hot(&data.labels, classes)?.view())?),
        None => None,
    };
    let ld = match &o.dic {
        Some(d) => Some(relative_l2(d.view(), data.dic.view())?),
        None => None,
    };
    let terms = vec![
        lr_.value,
        lc.as_ref().map_or(0.0, |l| l.value),
        ld.as_ref().map_or(0.0, |l| l.value),
    ];
    let total = w.recon * terms[0] + w.class * terms[1] + w.dic * terms[2];
    let gr = scaled(&lr_.grad, w.recon);
    let gc = lc.map(|l| scaled(&l.grad, w.class));
    let gd = ld.map(|l| scaled(&l.grad, w.dic));
    let grads = model.backward(
        &tape,
        &OutputGrads {
            recon: Some(&gr),
            scores: gc.as_ref(),
            dic: gd.as_ref(),
        },
    );
    Ok((total, terms, grads))
}

/// Trains an RRAE or classical autoencoder in place. The SVD modes are
/// recomputed from every epoch's latent matrix and frozen at the end from
/// the trained encoder.
pub fn fit_autoencoder(model: &mut RraeModel, data: &Samples, cfg: &TrainConfig) -> Result<History> {
    let mut hist = History::new(&["recon", "class", "dic"]);
    let mut state = OptimizerState::new(cfg.optimizer, &model.groups());
    for epoch in 0..cfg.epochs {
        let (total, terms, grads) = autoencoder_loss(model, data, true)?;
        hist.push(epoch, total, terms)?;
        state.tick();
        step(&mut state, model.groups_mut(), &grads, cfg.schedule.rate(epoch));
    }
    model.freeze_basis(&data.x)?;
    Ok(hist)
}

/// RRAE with classification and DIC heads.
pub fn train_rrae(
    arch: &Architecture,
    k_max: usize,
    data: &Samples,
    cfg: &TrainConfig,
) -> Result<(RraeModel, History)> {
    check_batch(data, k_max)?;
    let mut m = RraeModel::rrae(arch, k_max, cfg.seed)?;
    let h = fit_autoencoder(&mut m, data, cfg)?;
    Ok((m, h))
}

/// Same pipeline with the truncation replaced by learned linear maps.
pub fn train_classical_ae(
    arch: &Architecture,
    k_max: usize,
    data: &Samples,
    cfg: &TrainConfig,
) -> Result<(RraeModel, History)> {
    let mut m = RraeModel::classical(arch, k_max, cfg.seed)?;
    let h = fit_autoencoder(&mut m, data, cfg)?;
    Ok((m, h))
}

fn check_batch(data: &Samples, k: usize) -> Result<()> {
    if data.len() < k {
        return Err(Error::InvalidArgument(format!(
            "batch of {} is smaller than rank {k}",
            data.len()
        )));
    }
    Ok(())
}

/// Trains the DIC autoencoder alone and fixes its modes.
pub fn fit_dic_autoencoder(m2: &mut RraeModel, dic: &Array2<f64>, cfg: &TrainConfig) -> Result<History> {
    let mut hist = History::new(&["dic_recon"]);
    let mut state = OptimizerState::new(cfg.optimizer, &m2.groups());
    for epoch in 0..cfg.epochs {
        let (o, tape) = m2.forward_tape(dic, true)?;
        let l = relative_l2(o.recon.view(), dic.view())?;
        hist.push(epoch, l.value, vec![l.value])?;
        let grads = m2.backward(
            &tape,
            &OutputGrads {
                recon: Some(&l.grad),
                scores: None,
                dic: None,
            },
        );
        state.tick();
        step(&mut state, m2.groups_mut(), &grads, cfg.schedule.rate(epoch));
    }
    m2.freeze_basis(dic)?;
    Ok(hist)
}

/// Four-term loss of the extended model with `V` fixed. Gradients are
/// returned as `(m1 groups, m2 groups)`.
pub fn extended_loss(
    model: &ExtendedModel,
    data: &Samples,
    fresh_basis: bool,
) -> Result<(f64, Vec<f64>, Grads, Grads)> {
    let v = model
        .v()
        .ok_or_else(|| Error::InvalidArgument("DIC modes not fixed yet".into()))?;
    let classes = model
        .m1
        .classifier
        .as_ref()
        .map(|c| c.spec.output_len())
        .unwrap_or(0);
    let onehot = one_hot(&data.labels, classes)?;
    let [w1, w2, w3, w4] = model.weights.0;
    let (o1, t1) = model.m1.forward_tape(&data.x, fresh_basis)?;
    let (o2, t2) = model.m2.forward_tape(&data.dic, false)?;
    let beta = o1.dic.as_ref().expect("coefficient head");
    let z = v.expand(beta.view());
    let (dic_hat, t_hat) = model.m2.decoder.forward(&z, None)?;
    let scores = o1.scores.as_ref().expect("classifier head");
    let l1 = relative_l2(scores.view(), onehot.view())?;
    let l2 = relative_l2(o1.recon.view(), data.x.view())?;
    let l3 = relative_l2(o2.recon.view(), data.dic.view())?;
    let l4 = relative_l2(dic_hat.view(), data.dic.view())?;
    let terms = vec![l1.value, l2.value, l3.value, l4.value];
    let total = w1 * terms[0] + w2 * terms[1] + w3 * terms[2] + w4 * terms[3];

    // the last term flows through the M2 decoder into the coefficients
    let (gz, g_dec_hat) = model.m2.decoder.backward(&t_hat, &scaled(&l4.grad, w4));
    let g_beta = v.coefficients(gz.view());
    let gs = scaled(&l1.grad, w1);
    let gr = scaled(&l2.grad, w2);
    let g1 = model.m1.backward(
        &t1,
        &OutputGrads {
            recon: Some(&gr),
            scores: Some(&gs),
            dic: Some(&g_beta),
        },
    );
    let g3 = scaled(&l3.grad, w3);
    let mut g2 = model.m2.backward(
        &t2,
        &OutputGrads {
            recon: Some(&g3),
            scores: None,
            dic: None,
        },
    );
    // m2 groups: encoder, decoder
    add_params(&mut g2[1], &g_dec_hat);
    Ok((total, terms, g1, g2))
}

/// Two-stage training: `m2` alone, then both models with the four-term loss
/// while `V` stays fixed.
pub fn fit_extended(
    model: &mut ExtendedModel,
    data: &Samples,
    pre: &TrainConfig,
    joint: &TrainConfig,
) -> Result<(History, History)> {
    let h2 = fit_dic_autoencoder(&mut model.m2, &data.dic, pre)?;
    let mut hist = History::new(&["class", "recon", "dic_star", "dic_hat"]);
    let mut groups: Vec<&Params> = model.m1.groups();
    groups.extend(model.m2.groups());
    let n1 = model.m1.groups().len();
    let mut state = OptimizerState::new(joint.optimizer, &groups);
    for epoch in 0..joint.epochs {
        let (total, terms, g1, g2) = extended_loss(model, data, true)?;
        hist.push(epoch, total, terms)?;
        state.tick();
        let lr = joint.schedule.rate(epoch);
        for (i, (p, g)) in model.m1.groups_mut().into_iter().zip(&g1).enumerate() {
            state.update(i, p, g, lr);
        }
        for (i, (p, g)) in model.m2.groups_mut().into_iter().zip(&g2).enumerate() {
            state.update(n1 + i, p, g, lr);
        }
    }
    model.m1.freeze_basis(&data.x)?;
    Ok((h2, hist))
}

fn add_params(acc: &mut Params, other: &Params) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

pub fn train_extended(
    arch: &Architecture,
    k_max: usize,
    r_max: usize,
    data: &Samples,
    pre: &TrainConfig,
    joint: &TrainConfig,
) -> Result<(ExtendedModel, History, History)> {
    check_batch(data, k_max.max(r_max))?;
    let mut m = ExtendedModel::new(arch, k_max, r_max, joint.seed)?;
    let (h2, h) = fit_extended(&mut m, data, pre, joint)?;
    Ok((m, h2, h))
}

/// Supervised profile-to-DIC regression with dropout during training.
pub fn fit_encdec(model: &mut EncDecModel, data: &Samples, cfg: &TrainConfig) -> Result<History> {
    let mut hist = History::new(&["dic"]);
    let mut state = OptimizerState::new(cfg.optimizer, &[&model.net.params]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0d0d_0d0d);
    for epoch in 0..cfg.epochs {
        let (pred, tape) = model.net.forward(&data.x, Some(&mut rng))?;
        let l = relative_l2(pred.view(), data.dic.view())?;
        hist.push(epoch, l.value, vec![l.value])?;
        let (_, g) = model.net.backward(&tape, &l.grad);
        state.tick();
        state.update(0, &mut model.net.params, &g, cfg.schedule.rate(epoch));
    }
    Ok(hist)
}

pub fn train_supervised_encdec(
    arch: &EncDecArchitecture,
    data: &Samples,
    cfg: &TrainConfig,
) -> Result<(EncDecModel, History)> {
    let mut m = EncDecModel::new(arch, cfg.seed)?;
    let h = fit_encdec(&mut m, data, cfg)?;
    Ok((m, h))
}

/// Stratified split: from every class, `round(n_c * test_fraction)` (at
/// least one when the class has two or more members) samples go to the
/// test set, chosen by a seeded shuffle. Returns sorted `(train, test)`.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let mut n_test = (members.len() as f64 * test_fraction).round() as usize;
        if test_fraction > 0.0 && n_test == 0 && members.len() >= 2 {
            n_test = 1;
        }
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
