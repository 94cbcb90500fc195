//! Gradient-descent variants with a step-decay learning rate.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::network::Params;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Gd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gd" => Some(Optimizer::Gd),
            "momentum" => Some(Optimizer::Momentum { beta: 0.9 }),
            "adam" => Some(Self::adam()),
            _ => None,
        }
    }
}

/// `lr * factor^(epoch / every)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub drop_every: usize,
    pub factor: f64,
}

impl Schedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        if self.drop_every == 0 {
            return self.lr;
        }
        self.lr * self.factor.powi((epoch / self.drop_every) as i32)
    }
}

/// Optimiser state shaped like the parameter lists it updates.
pub struct OptimizerState {
    kind: Optimizer,
    first: Vec<Params>,
    second: Vec<Params>,
    t: i32,
}

fn zeros_like(p: &Params) -> Params {
    p.iter()
        .map(|l| l.iter().map(|a| ArrayD::zeros(a.raw_dim())).collect())
        .collect()
}

impl OptimizerState {
    /// One slot per parameter group (network).
    pub fn new(kind: Optimizer, groups: &[&Params]) -> Self {
        let first = groups.iter().map(|p| zeros_like(p)).collect();
        let second = match kind {
            Optimizer::Adam { .. } => groups.iter().map(|p| zeros_like(p)).collect(),
            _ => Vec::new(),
        };
        OptimizerState {
            kind,
            first,
            second,
            t: 0,
        }
    }

    /// Starts a new iteration; call once before the group updates.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, group: usize, params: &mut Params, grads: &Params, lr: f64) {
        let t = self.t.max(1);
        for (li, (lp, lg)) in params.iter_mut().zip(grads).enumerate() {
            for (pi, (p, g)) in lp.iter_mut().zip(lg).enumerate() {
                match self.kind {
                    Optimizer::Gd => p.scaled_add(-lr, g),
                    Optimizer::Momentum { beta } => {
                        let v = &mut self.first[group][li][pi];
                        v.zip_mut_with(g, |v, &g| *v = beta * *v + g);
                        p.scaled_add(-lr, v);
                    }
                    Optimizer::Adam { beta1, beta2, eps } => {
                        let m = &mut self.first[group][li][pi];
                        let v = &mut self.second[group][li][pi];
                        let c1 = 1.0 - beta1.powi(t);
                        let c2 = 1.0 - beta2.powi(t);
                        ndarray::Zip::from(p)
                            .and(m)
                            .and(v)
                            .and(g)
                            .for_each(|p, m, v, &g| {
                                *m = beta1 * *m + (1.0 - beta1) * g;
                                *v = beta2 * *v + (1.0 - beta2) * g * g;
                                let mh = *m / c1;
                                let vh = *v / c2;
                                *p -= lr * mh / (vh.sqrt() + eps);
                            });
                    }
                }
            }
        }
    }
}
