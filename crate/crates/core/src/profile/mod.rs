//! Roughness profiles: representation, macro/micro separation and the two-stage
//! normalization used to feed the autoencoders.

mod filter;
pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{GaussianFilter, DEFAULT_CUTOFF_UM};

/// Height samples along the tape width, uniformly spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughnessProfile {
    pub id: String,
    /// Heights in micrometres.
    pub heights: Vec<f64>,
    /// Sample spacing in micrometres.
    pub spacing: f64,
    /// Class index, 1-based.
    pub label: Option<usize>,
}

impl RoughnessProfile {
    pub fn new(
        id: impl Into<String>,
        heights: Vec<f64>,
        spacing: f64,
        label: Option<usize>,
    ) -> Result<Self> {
        let id = id.into();
        if heights.len() < 2 {
            return Err(Error::InvalidData(format!(
                "profile `{id}` has {} samples, need at least 2",
                heights.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidData(format!(
                "profile `{id}` has non-positive spacing {spacing}"
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidData(format!(
                "profile `{id}` has a non-finite height at sample {i}"
            )));
        }
        if label == Some(0) {
            return Err(Error::InvalidData(format!(
                "profile `{id}` has class label 0; labels are 1-based"
            )));
        }
        Ok(RoughnessProfile {
            id,
            heights,
            spacing,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// Tape width covered by the samples, `(N - 1) * spacing`.
    pub fn width(&self) -> f64 {
        (self.heights.len() - 1) as f64 * self.spacing
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A profile with its long-wavelength component removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroProfile {
    /// The residual heights; id, spacing and label carry over from the source.
    pub micro: RoughnessProfile,
    /// The removed macro component, same length as `micro.heights`.
    pub macro_heights: Vec<f64>,
}

impl MicroProfile {
    /// Sum of the two components, i.e. the source heights.
    pub fn recompose(&self) -> Vec<f64> {
        self.micro
            .heights
            .iter()
            .zip(&self.macro_heights)
            .map(|(m, a)| m + a)
            .collect()
    }
}

/// Splits a profile into macro (low-pass) and micro (residual) parts.
pub fn decompose(profile: &RoughnessProfile, cutoff_um: f64) -> Result<MicroProfile> {
    if let Some(i) = profile.heights.iter().position(|h| !h.is_finite()) {
        return Err(Error::InvalidData(format!(
            "profile `{}` has a non-finite height at sample {i}",
            profile.id
        )));
    }
    let filter = GaussianFilter::new(cutoff_um, profile.spacing)?;
    let macro_heights = filter.apply(&profile.heights);
    let micro = profile
        .heights
        .iter()
        .zip(&macro_heights)
        .map(|(h, m)| h - m)
        .collect();
    Ok(MicroProfile {
        micro: RoughnessProfile {
            id: profile.id.clone(),
            heights: micro,
            spacing: profile.spacing,
            label: profile.label,
        },
        macro_heights,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormStage {
    /// Values in `[0, 1]` after per-profile min/max scaling.
    MinMax,
    /// `(minmax - mean) / (6 * sigma)` with population statistics.
    Standardized { mean: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProfile {
    pub values: Vec<f64>,
    /// Minimum of the source heights (μm).
    pub min: f64,
    /// Maximum of the source heights (μm).
    pub max: f64,
    pub stage: NormStage,
}

/// Per-profile min/max scaling onto `[0, 1]`.
pub fn normalize_minmax(heights: &[f64]) -> Result<NormalizedProfile> {
    if heights.is_empty() {
        return Err(Error::Degenerate("empty profile".into()));
    }
    let min = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let max = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidData("non-finite height".into()));
    }
    if max <= min {
        return Err(Error::Degenerate(format!(
            "flat profile (min = max = {min}); min/max scaling is undefined"
        )));
    }
    let range = max - min;
    let values = heights
        .iter()
        .map(|&h| {
            // pin the extremes so both bounds are attained exactly
            if h == min {
                0.0
            } else if h == max {
                1.0
            } else {
                ((h - min) / range).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(NormalizedProfile {
        values,
        min,
        max,
        stage: NormStage::MinMax,
    })
}

/// Population statistics of min/max-scaled profiles. Fitted once on the
/// training split and reused for every later transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sigma: f64,
}

impl Standardizer {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "standardization sigma must be positive, got {sigma}"
            )));
        }
        if !mean.is_finite() {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        Ok(Standardizer { mean, sigma })
    }

    /// Mean and (population) standard deviation over every value of every profile.
    pub fn fit(population: &[NormalizedProfile]) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        for p in population {
            if p.stage != NormStage::MinMax {
                return Err(Error::InvalidArgument(
                    "standardizer must be fitted on min/max-scaled profiles".into(),
                ));
            }
            n += p.values.len();
            sum += p.values.iter().sum::<f64>();
        }
        if n == 0 {
            return Err(Error::Degenerate("empty population".into()));
        }
        let mean = sum / n as f64;
        let var = population
            .iter()
            .flat_map(|p| p.values.iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        Standardizer::new(mean, var.sqrt())
    }

    pub fn apply(&self, norm: &NormalizedProfile) -> Result<NormalizedProfile> {
        standardize(norm, self.mean, self.sigma)
    }
}

/// `(v - mean) / (6 sigma)` applied to a min/max-scaled profile.
pub fn standardize(norm: &NormalizedProfile, mean: f64, sigma: f64) -> Result<NormalizedProfile> {
    if norm.stage != NormStage::MinMax {
        return Err(Error::InvalidArgument(
            "standardize expects a min/max-scaled profile".into(),
        ));
    }
    let s = Standardizer::new(mean, sigma)?;
    let scale = 6.0 * s.sigma;
    Ok(NormalizedProfile {
        values: norm.values.iter().map(|v| (v - s.mean) / scale).collect(),
        min: norm.min,
        max: norm.max,
        stage: NormStage::Standardized {
            mean: s.mean,
            sigma: s.sigma,
        },
    })
}

impl NormalizedProfile {
    /// Undo standardization, returning the min/max-scaled profile.
    pub fn to_minmax(&self) -> NormalizedProfile {
        match self.stage {
            NormStage::MinMax => self.clone(),
            NormStage::Standardized { mean, sigma } => NormalizedProfile {
                values: self.values.iter().map(|v| v * 6.0 * sigma + mean).collect(),
                min: self.min,
                max: self.max,
                stage: NormStage::MinMax,
            },
        }
    }

    /// Heights in micrometres.
    pub fn to_heights(&self) -> Vec<f64> {
        let mm = self.to_minmax();
        let range = self.max - self.min;
        mm.values.iter().map(|v| v * range + self.min).collect()
    }
}

/// Micro-profile to model input: min/max scaling followed by standardization.
pub fn prepare(heights: &[f64], stats: &Standardizer) -> Result<NormalizedProfile> {
    stats.apply(&normalize_minmax(heights)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(h: Vec<f64>) -> RoughnessProfile {
        RoughnessProfile::new("p", h, 3.0, None).unwrap()
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(RoughnessProfile::new("a", vec![1.0], 3.0, None).is_err());
        assert!(RoughnessProfile::new("a", vec![1.0, 2.0], 0.0, None).is_err());
        assert!(RoughnessProfile::new("a", vec![1.0, f64::NAN], 1.0, None).is_err());
        assert!(RoughnessProfile::new("a", vec![1.0, 2.0], 1.0, Some(0)).is_err());
        let p = profile(vec![0.0; 11]);
        assert_eq!(p.width(), 30.0);
    }

    #[test]
    fn minmax_small_example() {
        let n = normalize_minmax(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn minmax_maps_measured_range_to_unit_interval() {
        let h = [-32.0, 1.5, 0.0, 35.0, -3.2];
        let n = normalize_minmax(&h).unwrap();
        assert_eq!(n.values[0], 0.0);
        assert_eq!(n.values[3], 1.0);
        assert_eq!((n.min, n.max), (-32.0, 35.0));
    }

    #[test]
    fn flat_profile_is_degenerate() {
        assert!(matches!(
            normalize_minmax(&[3.0; 8]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn standardize_known_values() {
        let norm = NormalizedProfile {
            values: vec![0.4, 0.4 + 0.018],
            min: 0.0,
            max: 1.0,
            stage: NormStage::MinMax,
        };
        let s = standardize(&norm, 0.4, 0.018).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert!((s.values[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!(standardize(&norm, 0.4, 0.0).is_err());
        assert!(standardize(&norm, 0.4, -1.0).is_err());
        assert!(standardize(&s, 0.4, 0.1).is_err());
    }

    #[test]
    fn population_statistics_center_the_data() {
        let pop: Vec<_> = [
            vec![0.0, 0.2, 1.0, 0.5],
            vec![1.0, 0.3, 0.0, 0.9],
            vec![0.0, 0.6, 0.7, 1.0],
        ]
        .iter()
        .map(|h| normalize_minmax(h).unwrap())
        .collect();
        let st = Standardizer::fit(&pop).unwrap();
        let total: f64 = pop
            .iter()
            .map(|p| st.apply(p).unwrap().values.iter().sum::<f64>())
            .sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn decompose_constant_profile() {
        let p = profile(vec![5.0; 200]);
        let m = decompose(&p, 60.0).unwrap();
        for (a, b) in m.micro.heights.iter().zip(&m.macro_heights) {
            assert!(a.abs() < 1e-12);
            assert!((b - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_rejects_cutoff_below_resolution() {
        let p = profile(vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(decompose(&p, 5.9), Err(Error::InvalidArgument(_))));
        assert!(decompose(&p, 6.0).is_ok());
    }

    #[test]
    fn decompose_rejects_non_finite_heights() {
        let p = RoughnessProfile {
            id: "x".into(),
            heights: vec![0.0, f64::INFINITY, 1.0],
            spacing: 1.0,
            label: None,
        };
        assert!(matches!(decompose(&p, 10.0), Err(Error::InvalidData(_))));
    }

    #[test]
    fn micro_mean_vanishes_for_symmetric_stationary_input() {
        // cos(pi m i / (n - 1)) with odd m: the mirrored extension is exactly
        // periodic and the sample mean of the cosine is zero
        let n = 1001;
        let m = 201.0;
        let h: Vec<f64> = (0..n)
            .map(|i| 4.0 + (std::f64::consts::PI * m * i as f64 / (n - 1) as f64).cos())
            .collect();
        let sigma = {
            let m = h.iter().sum::<f64>() / n as f64;
            (h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let m = decompose(&profile(h), 800.0).unwrap();
        let mean = m.micro.heights.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 1e-6 * sigma, "mean {mean}");
    }

    proptest! {
        #[test]
        fn decompose_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            p in proptest::collection::vec(-10.0f64..10.0, 64),
            q in proptest::collection::vec(-10.0f64..10.0, 64),
        ) {
            let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
            let dm = decompose(&profile(mix), 40.0).unwrap();
            let dp = decompose(&profile(p), 40.0).unwrap();
            let dq = decompose(&profile(q), 40.0).unwrap();
            for i in 0..64 {
                let expect = a * dp.micro.heights[i] + b * dq.micro.heights[i];
                prop_assert!((dm.micro.heights[i] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn micro_plus_macro_reconstructs(p in proptest::collection::vec(-40.0f64..40.0, 2..200)) {
            let src = profile(p);
            let d = decompose(&src, 30.0).unwrap();
            for (r, h) in d.recompose().iter().zip(&src.heights) {
                prop_assert!((r - h).abs() < 1e-9);
            }
        }

        #[test]
        fn minmax_is_shift_invariant_and_hits_bounds(
            p in proptest::collection::vec(-40.0f64..40.0, 2..100),
            shift in -100.0f64..100.0,
        ) {
            prop_assume!(p.iter().any(|v| *v != p[0]));
            let a = normalize_minmax(&p).unwrap();
            let shifted: Vec<f64> = p.iter().map(|v| v + shift).collect();
            let b = normalize_minmax(&shifted).unwrap();
            prop_assert!(a.values.iter().any(|v| *v == 0.0));
            prop_assert!(a.values.iter().any(|v| *v == 1.0));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn normalization_chain_inverts(
            p in proptest::collection::vec(-40.0f64..40.0, 2..100),
            mean in 0.0f64..1.0,
            sigma in 0.001f64..1.0,
        ) {
            prop_assume!(p.iter().any(|v| *v != p[0]));
            let s = standardize(&normalize_minmax(&p).unwrap(), mean, sigma).unwrap();
            for (r, h) in s.to_heights().iter().zip(&p) {
                prop_assert!((r - h).abs() < 1e-9);
            }
        }
    }
}
