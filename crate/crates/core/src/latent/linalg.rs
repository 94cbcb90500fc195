//! Thin SVD by one-sided Jacobi rotations and the rank-reduction layer built
//! on it.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// `a = u * diag(s) * vt`, singular values non-increasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on the columns of `a` (rows >= cols). Returns the rotated
/// matrix (orthogonal columns) and the accumulated right rotation.
fn jacobi_columns(mut a: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = a.ncols();
    let mut v = Array2::<f64>::eye(n);
    let tol = f64::EPSILON * (a.nrows() as f64).sqrt();
    // columns as contiguous rows for cache-friendly dot products
    let mut at = a.t().to_owned();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = at.row(p);
                    let cq = at.row(q);
                    (cp.dot(&cp), cq.dot(&cq), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_rows(&mut at, p, q, c, sn);
                rotate_rows_t(&mut v, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    a.assign(&at.t());
    (a, v)
}

fn rotate_rows(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let (mut rp, mut rq) = m.multi_slice_mut((s![p, ..], s![q, ..]));
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn rotate_rows_t(v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let (mut cp, mut cq) = v.multi_slice_mut((s![.., p], s![.., q]));
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Householder QR of a tall matrix; returns `(q, r)` with `q` m x n.
fn qr(a: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    let mut r = a.to_owned();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = r.slice(s![k.., k]).to_owned();
        let norm = x.dot(&x).sqrt();
        if norm == 0.0 {
            reflectors.push(Array1::zeros(m - k));
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        x[0] -= alpha;
        let vnorm = x.dot(&x).sqrt();
        x /= vnorm;
        let mut sub = r.slice_mut(s![k.., k..]);
        let proj = x.dot(&sub);
        for (i, xi) in x.iter().enumerate() {
            let mut row = sub.row_mut(i);
            row.scaled_add(-2.0 * xi, &proj);
        }
        reflectors.push(x);
    }
    let mut q = Array2::<f64>::zeros((m, n));
    for i in 0..n {
        q[[i, i]] = 1.0;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        let mut sub = q.slice_mut(s![k.., ..]);
        let proj = v.dot(&sub);
        for (i, vi) in v.iter().enumerate() {
            sub.row_mut(i).scaled_add(-2.0 * vi, &proj);
        }
    }
    let r = r.slice(s![..n, ..]).to_owned();
    (q, r)
}

/// Thin SVD of any real matrix.
pub fn svd(a: ArrayView2<f64>) -> Svd {
    let (m, n) = a.dim();
    if m < n {
        let t = svd(a.t());
        return Svd {
            u: t.vt.t().to_owned(),
            s: t.s,
            vt: t.u.t().to_owned(),
        };
    }
    let (q, r) = if m > n {
        qr(a)
    } else {
        (Array2::eye(m), a.to_owned())
    };
    let (w, v) = jacobi_columns(r);
    let norms: Vec<f64> = w.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let mut ur = Array2::<f64>::zeros((n, n));
    let mut s_out = Array1::<f64>::zeros(n);
    let mut vt = Array2::<f64>::zeros((n, n));
    for (k, &j) in order.iter().enumerate() {
        s_out[k] = norms[j];
        vt.row_mut(k).assign(&v.column(j));
        if norms[j] > scale * 1e-300 && norms[j] > 0.0 {
            ur.column_mut(k).assign(&(&w.column(j) / norms[j]));
        }
    }
    complete_orthonormal(&mut ur, &s_out, scale);
    let mut u = q.dot(&ur);
    // sign convention: largest-magnitude entry of every right vector positive
    for k in 0..n {
        let row = vt.row(k);
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            vt.row_mut(k).mapv_inplace(|x| -x);
            u.column_mut(k).mapv_inplace(|x| -x);
        }
    }
    Svd { u, s: s_out, vt }
}

/// Replaces columns belonging to negligible singular values by an
/// orthonormal completion (Gram-Schmidt against the unit vectors).
fn complete_orthonormal(u: &mut Array2<f64>, s: &Array1<f64>, scale: f64) {
    let n = u.ncols();
    let tiny = scale * f64::EPSILON * n as f64;
    let mut candidate = 0;
    for k in 0..n {
        if s[k] > tiny && s[k] > 0.0 {
            continue;
        }
        loop {
            let mut e = Array1::<f64>::zeros(u.nrows());
            e[candidate % u.nrows()] = 1.0;
            candidate += 1;
            for j in 0..n {
                if j == k || (s[j] <= tiny && j > k) {
                    continue;
                }
                let col = u.column(j).to_owned();
                let d = col.dot(&e);
                e.scaled_add(-d, &col);
            }
            let norm = e.dot(&e).sqrt();
            if norm > 1e-6 {
                u.column_mut(k).assign(&(e / norm));
                break;
            }
        }
    }
}

/// Orthonormal latent modes with their singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBasis {
    /// `latent_dim x k`, orthonormal columns.
    pub modes: Array2<f64>,
    pub singular_values: Vec<f64>,
}

impl LatentBasis {
    pub fn k(&self) -> usize {
        self.modes.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.modes.nrows()
    }

    /// Coefficients of batch-major latents `y` (batch x latent_dim) on the
    /// modes: batch x k.
    pub fn coefficients(&self, y: ArrayView2<f64>) -> Array2<f64> {
        y.dot(&self.modes)
    }

    /// Batch-major latents from coefficients (batch x k).
    pub fn expand(&self, alphas: ArrayView2<f64>) -> Array2<f64> {
        alphas.dot(&self.modes.t())
    }

    /// Orthogonal projection of batch-major latents onto the span of the modes.
    pub fn project(&self, y: ArrayView2<f64>) -> Array2<f64> {
        self.expand(self.coefficients(y).view())
    }

    /// Largest absolute entry of `U^T U - I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.modes.t().dot(&self.modes);
        let mut worst = 0.0f64;
        for ((i, j), v) in g.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }
}

/// Output of the rank-reduction layer, in the column convention: the latent
/// matrix has one column per sample.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub basis: LatentBasis,
    /// `k x batch`.
    pub alphas: Array2<f64>,
    /// `latent_dim x batch`, rank at most `k`.
    pub reduced: Array2<f64>,
}

/// Best rank-`k_max` approximation of the latent matrix `y` (latent_dim x batch).
pub fn truncate(y: ArrayView2<f64>, k_max: usize) -> Result<Truncation> {
    let (d, b) = y.dim();
    if k_max < 1 || k_max > d.min(b) {
        return Err(Error::InvalidArgument(format!(
            "k_max = {k_max} must lie in [1, {}]",
            d.min(b)
        )));
    }
    let basis = basis_of_columns(y, k_max);
    let alphas = basis.modes.t().dot(&y);
    let reduced = basis.modes.dot(&alphas);
    Ok(Truncation {
        basis,
        alphas,
        reduced,
    })
}

/// Leading left singular vectors of `y` (latent_dim x batch).
pub fn basis_of_columns(y: ArrayView2<f64>, k: usize) -> LatentBasis {
    let f = svd(y);
    LatentBasis {
        modes: f.u.slice(s![.., ..k]).to_owned(),
        singular_values: f.s.iter().take(k).copied().collect(),
    }
}

/// Leading modes of batch-major latents (batch x latent_dim).
pub fn basis_of_rows(y: ArrayView2<f64>, k: usize) -> Result<LatentBasis> {
    let (b, d) = y.dim();
    if k < 1 || k > d.min(b) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} must lie in [1, {}]",
            d.min(b)
        )));
    }
    let f = svd(y);
    Ok(LatentBasis {
        modes: f.vt.slice(s![..k, ..]).t().to_owned(),
        singular_values: f.s.iter().take(k).copied().collect(),
    })
}

/// Number of singular values above `tol * s_max`.
pub fn numerical_rank(a: ArrayView2<f64>, tol: f64) -> usize {
    let f = svd(a);
    let smax = f.s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    f.s.iter().filter(|&&s| s > tol * smax).count()
}

/// Frobenius norm.
pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
