//! Central finite differences over parameter groups.

use ndarray::Array2;
use tape_lab::latent::network::Params;

pub const STEP: f64 = 1e-5;

/// Largest relative disagreement between analytic and central-difference
/// derivatives. Entries where both are below `floor` compare absolutely.
pub fn worst_relative(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

/// Checks every parameter of every group of `model`.
pub fn check_params<M: Clone>(
    model: &M,
    groups: fn(&mut M) -> Vec<&mut Params>,
    loss: impl Fn(&M) -> f64,
    analytic: &[Params],
) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    let n_groups = groups(&mut probe).len();
    assert_eq!(n_groups, analytic.len(), "gradient group count");
    for g in 0..n_groups {
        for l in 0..analytic[g].len() {
            for t in 0..analytic[g][l].len() {
                let n = analytic[g][l][t].len();
                for e in 0..n {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    {
                        let p = &mut groups(&mut plus)[g][l][t];
                        p.as_slice_mut().unwrap()[e] += STEP;
                    }
                    {
                        let p = &mut groups(&mut minus)[g][l][t];
                        p.as_slice_mut().unwrap()[e] -= STEP;
                    }
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
                    let a = analytic[g][l][t].as_slice().unwrap()[e];
                    worst = worst.max(worst_relative(a, numeric, 1e-6));
                }
            }
        }
    }
    worst
}

/// Checks the gradient with respect to an input matrix.
pub fn check_input(x: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64, analytic: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus.as_slice_mut().unwrap()[i] += STEP;
        minus.as_slice_mut().unwrap()[i] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        worst = worst.max(worst_relative(analytic.as_slice().unwrap()[i], numeric, 1e-6));
    }
    worst
}
