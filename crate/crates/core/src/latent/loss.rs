//! Relative L2 losses, summed over the batch.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RelativeL2 {
    /// Sum over the batch of `|p - t| / |t|`.
    pub value: f64,
    pub per_sample: Array1<f64>,
    /// d value / d prediction.
    pub grad: Array2<f64>,
}

/// Row-wise relative L2 error of `pred` against `target` (batch x features).
pub fn relative_l2(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<RelativeL2> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let b = pred.nrows();
    let mut per_sample = Array1::<f64>::zeros(b);
    let mut grad = Array2::<f64>::zeros(pred.dim());
    for i in 0..b {
        let t = target.row(i);
        let tn = t.dot(&t).sqrt();
        if tn == 0.0 {
            return Err(Error::Degenerate(format!(
                "target row {i} has zero norm"
            )));
        }
        let diff = &pred.row(i) - &t;
        let dn = diff.dot(&diff).sqrt();
        per_sample[i] = dn / tn;
        if dn > 0.0 {
            grad.row_mut(i).assign(&(diff / (dn * tn)));
        }
    }
    Ok(RelativeL2 {
        value: per_sample.sum(),
        per_sample,
        grad,
    })
}

/// One-hot rows for 1-based labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Array2<f64>> {
    let mut m = Array2::<f64>::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > classes {
            return Err(Error::InvalidData(format!(
                "label {l} outside 1..={classes}"
            )));
        }
        m[[i, l - 1]] = 1.0;
    }
    Ok(m)
}

/// 1-based argmax of every row; ties resolve to the lower class.
pub fn argmax_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}
