//! Truncation layer measured against nalgebra's dense SVD.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tape_lab::latent::linalg::{frobenius, truncate};

#[derive(Clone, Copy, Debug)]
pub struct Measures {
    /// Largest entry of `U^T U - I`.
    pub orthonormality: f64,
    /// Frobenius norm of `P(P(Y)) - P(Y)` relative to `|Y|`.
    pub idempotence: f64,
    /// Relative gap between the truncation residual and the optimal one.
    pub optimality: f64,
    /// Largest relative singular value disagreement.
    pub singular_values: f64,
}

/// A random `m x n` matrix, some of them with a decaying or repeated spectrum
/// so near-degenerate cases are covered.
pub fn matrix(seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..40);
    let n = rng.gen_range(2..40);
    let a = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
    match seed % 3 {
        0 => a,
        1 => {
            let r = rng.gen_range(1..=m.min(n));
            let b = Array2::from_shape_fn((m, r), |_| rng.gen_range(-1.0..1.0));
            let c = Array2::from_shape_fn((r, n), |_| rng.gen_range(-1.0..1.0));
            b.dot(&c)
        }
        _ => Array2::from_shape_fn((m, n), |(i, j)| a[[i, j]] * 0.5f64.powi(j as i32)),
    }
}

pub fn measure(y: &Array2<f64>, k: usize) -> Measures {
    let t = truncate(y.view(), k).unwrap();
    let again = truncate(t.reduced.view(), k).unwrap();
    let scale = frobenius(y.view()).max(f64::MIN_POSITIVE);
    let idempotence = frobenius((&again.reduced - &t.reduced).view()) / scale;

    let dense = DMatrix::from_row_iterator(y.nrows(), y.ncols(), y.iter().copied());
    let mut sigma: Vec<f64> = dense.singular_values().iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let optimal = sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
    let residual = frobenius((y - &t.reduced).view());
    let optimality = (residual - optimal).abs() / scale;
    let singular_values = t
        .basis
        .singular_values
        .iter()
        .zip(&sigma)
        .map(|(a, b)| (a - b).abs() / sigma[0].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Measures {
        orthonormality: t.basis.orthonormality_defect(),
        idempotence,
        optimality,
        singular_values,
    }
}

/// Worst measures over `count` random matrices at random ranks.
pub fn worst(count: u64) -> Measures {
    let mut w = Measures {
        orthonormality: 0.0,
        idempotence: 0.0,
        optimality: 0.0,
        singular_values: 0.0,
    };
    for seed in 0..count {
        let y = matrix(seed);
        let k = 1 + (seed as usize * 7) % y.nrows().min(y.ncols());
        let m = measure(&y, k);
        w.orthonormality = w.orthonormality.max(m.orthonormality);
        w.idempotence = w.idempotence.max(m.idempotence);
        w.optimality = w.optimality.max(m.optimality);
        w.singular_values = w.singular_values.max(m.singular_values);
    }
    w
}
