use crate::error::{Error, Result};

/// Default cutoff wavelength separating macro from micro roughness (μm).
pub const DEFAULT_CUTOFF_UM: f64 = 800.0;

/// `sqrt(ln 2 / pi)`: puts the 50 % transmission point at the cutoff wavelength.
const ALPHA: f64 = 0.469_718_639_349_825_9;

/// Zero-phase Gaussian low-pass with mirrored boundaries.
///
/// Weights are `exp(-pi (x / (alpha * cutoff))^2)` on the sample grid,
/// truncated at one cutoff wavelength on each side and renormalized to unit
/// sum. The amplitude transmission of a sinusoid of wavelength `lambda` is
/// `exp(-pi (alpha * cutoff / lambda)^2)`.
#[derive(Clone, Debug)]
pub struct GaussianFilter {
    weights: Vec<f64>,
    cutoff: f64,
}

impl GaussianFilter {
    pub fn new(cutoff_um: f64, spacing_um: f64) -> Result<Self> {
        if !(spacing_um.is_finite() && spacing_um > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing_um}"
            )));
        }
        if !(cutoff_um.is_finite() && cutoff_um >= 2.0 * spacing_um) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {cutoff_um} μm is below twice the sample spacing {spacing_um} μm"
            )));
        }
        let half = (cutoff_um / spacing_um).ceil() as usize;
        let width = ALPHA * cutoff_um;
        let mut weights: Vec<f64> = (0..=half)
            .map(|k| {
                let x = k as f64 * spacing_um / width;
                (-std::f64::consts::PI * x * x).exp()
            })
            .collect();
        let total = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(GaussianFilter {
            weights,
            cutoff: cutoff_um,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Amplitude gain of the continuous kernel at `wavelength`.
    pub fn transmission(&self, wavelength: f64) -> f64 {
        let r = ALPHA * self.cutoff / wavelength;
        (-std::f64::consts::PI * r * r).exp()
    }

    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        let n = signal.len();
        if n == 0 {
            return Vec::new();
        }
        (0..n)
            .map(|i| {
                let mut acc = self.weights[0] * signal[i];
                for (k, w) in self.weights.iter().enumerate().skip(1) {
                    let left = reflect(i as isize - k as isize, n);
                    let right = reflect(i as isize + k as isize, n);
                    acc += w * (signal[left] + signal[right]);
                }
                acc
            })
            .collect()
    }
}

/// Whole-sample symmetric reflection, repeated as often as needed.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}
