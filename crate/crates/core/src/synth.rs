//! Labelled synthetic roughness profiles: long-wavelength sinusoids on top of
//! spectrally shaped Gaussian noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RoughnessProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroComponent {
    pub amplitude_um: f64,
    pub wavelength_um: f64,
    /// Phase drawn uniformly from `[0, phase_jitter)` radians.
    pub phase_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroSpec {
    pub rms_um: f64,
    pub correlation_um: f64,
    /// Power-law decay of the amplitude spectrum,
    /// `(1 + (2 pi f l)^2)^(-exponent / 4)`.
    pub exponent: f64,
}

/// Relative per-sample spread of the recipe parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub rms: f64,
    pub correlation: f64,
    pub amplitude: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            rms: 0.05,
            correlation: 0.05,
            amplitude: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRecipe {
    pub class_id: usize,
    #[serde(rename = "macro")]
    pub macro_components: Vec<MacroComponent>,
    pub micro: MicroSpec,
    #[serde(default)]
    pub jitter: Jitter,
}

impl ClassRecipe {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("class {}: {m}", self.class_id)));
        if self.class_id == 0 {
            return bad("class ids are 1-based".into());
        }
        let m = &self.micro;
        if m.rms_um == 0.0 && self.macro_components.is_empty() {
            return bad("zero rms and no macro component".into());
        }
        if !(m.rms_um > 0.0 && m.correlation_um > 0.0 && m.exponent > 0.0) {
            return bad("micro rms, correlation length and exponent must be positive".into());
        }
        for c in &self.macro_components {
            if !(c.amplitude_um > 0.0 && c.wavelength_um > 0.0 && c.phase_jitter >= 0.0) {
                return bad("macro amplitudes and wavelengths must be positive".into());
            }
        }
        let j = &self.jitter;
        for v in [j.rms, j.correlation, j.amplitude] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("jitter {v} outside [0, 1)"));
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = vec![self.micro.rms_um, self.micro.correlation_um, self.micro.exponent];
        for c in &self.macro_components {
            p.push(c.amplitude_um);
            p.push(c.wavelength_um);
        }
        p
    }

    /// True when some parameter differs by at least `rel` (relative to the
    /// larger value), or the macro structure differs.
    pub fn differs_from(&self, other: &ClassRecipe, rel: f64) -> bool {
        let (a, b) = (self.parameters(), other.parameters());
        if a.len() != b.len() {
            return true;
        }
        a.iter()
            .zip(&b)
            .any(|(x, y)| (x - y).abs() >= rel * x.abs().max(y.abs()))
    }
}

/// Twelve classes: four correlation lengths times three spectral exponents.
/// The rms levels are shared between classes so that amplitude statistics
/// alone cannot separate them.
pub fn default_recipes() -> Vec<ClassRecipe> {
    let correlations = [3.0, 9.0, 27.0, 81.0];
    let exponents = [1.5, 3.0, 5.0];
    let rms_levels = [1.1, 1.3, 1.5];
    let mut out = Vec::new();
    for (i, &l) in correlations.iter().enumerate() {
        for (j, &e) in exponents.iter().enumerate() {
            let id = out.len() + 1;
            out.push(ClassRecipe {
                class_id: id,
                macro_components: vec![
                    MacroComponent {
                        amplitude_um: 3.0 + 1.5 * j as f64,
                        wavelength_um: 4000.0 + 1000.0 * i as f64,
                        phase_jitter: 2.0 * PI,
                    },
                    MacroComponent {
                        amplitude_um: 8.0 - 1.5 * i as f64,
                        wavelength_um: 9000.0 + 2000.0 * j as f64,
                        phase_jitter: 2.0 * PI,
                    },
                ],
                micro: MicroSpec {
                    rms_um: rms_levels[(i + j) % 3],
                    correlation_um: l,
                    exponent: e,
                },
                jitter: Jitter {
                    correlation: 0.03,
                    ..Jitter::default()
                },
            });
        }
    }
    out
}

pub fn load_recipes(path: &Path) -> Result<Vec<ClassRecipe>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let recipes: Vec<ClassRecipe> = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    Ok(recipes)
}

pub fn save_recipes(path: &Path, recipes: &[ClassRecipe]) -> Result<()> {
    let text = serde_json::to_string_pretty(recipes)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Correlated Gaussian noise with the recipe spectrum, zero mean and exact
/// rms `rms`.
pub fn correlated_noise(
    n: usize,
    eps_x: f64,
    rms: f64,
    correlation: f64,
    exponent: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if k <= len / 2 { k } else { len - k };
        let f = kk as f64 / (len as f64 * eps_x);
        let a = (1.0 + (2.0 * PI * f * correlation).powi(2)).powf(-exponent / 4.0);
        *c *= if k == 0 { 0.0 } else { a };
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut v: Vec<f64> = buf[..n].iter().map(|c| c.re).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let s = (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x *= rms / s);
    }
    v
}

fn jittered(rng: &mut ChaCha8Rng, value: f64, rel: f64) -> f64 {
    if rel == 0.0 {
        value
    } else {
        value * (1.0 + rng.gen_range(-rel..rel))
    }
}

/// One profile of `recipe`; the micro part is returned separately.
fn realise(
    recipe: &ClassRecipe,
    n: usize,
    eps_x: f64,
    jitter_scale: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let j = &recipe.jitter;
    let scale = |v: f64| (v * jitter_scale).min(0.95);
    let rms = jittered(rng, recipe.micro.rms_um, scale(j.rms));
    let corr = jittered(rng, recipe.micro.correlation_um, scale(j.correlation));
    let micro = correlated_noise(n, eps_x, rms, corr, recipe.micro.exponent, rng);
    let mut heights = micro.clone();
    for c in &recipe.macro_components {
        let amp = jittered(rng, c.amplitude_um, scale(j.amplitude));
        let phase = if c.phase_jitter > 0.0 {
            rng.gen_range(0.0..c.phase_jitter)
        } else {
            0.0
        };
        for (i, h) in heights.iter_mut().enumerate() {
            *h += amp * (2.0 * PI * i as f64 * eps_x / c.wavelength_um + phase).sin();
        }
    }
    (heights, micro)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub profiles: usize,
    /// Population standard deviation of every micro sample.
    pub micro_sigma: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Nearest-centroid accuracy on standardized (rms, skewness).
    pub centroid_accuracy: f64,
    /// Multiplier applied to the recipe jitter.
    pub jitter_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub profiles: Vec<RoughnessProfile>,
    pub stats: PopulationStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub per_class: usize,
    pub n_points: usize,
    pub eps_x: f64,
    pub seed: u64,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            per_class: 30,
            n_points: 500,
            eps_x: 3.0,
            seed: 1,
        }
    }
}

const MAX_REGENERATIONS: usize = 8;

/// Generates `per_class` profiles per recipe. Every profile draws from its
/// own stream of the seeded generator, so output does not depend on
/// evaluation order. If (rms, skewness) alone separate every class the
/// dataset is regenerated with doubled jitter.
pub fn generate(recipes: &[ClassRecipe], params: &GenerateParams) -> Result<Dataset> {
    if params.per_class < 1 {
        return Err(Error::InvalidArgument("per_class must be at least 1".into()));
    }
    if params.n_points < 64 {
        return Err(Error::InvalidArgument(format!(
            "at least 64 points per profile required, got {}",
            params.n_points
        )));
    }
    if !(params.eps_x > 0.0 && params.eps_x.is_finite()) {
        return Err(Error::InvalidArgument("eps_x must be positive".into()));
    }
    if recipes.is_empty() {
        return Err(Error::InvalidArgument("no recipes".into()));
    }
    for r in recipes {
        r.validate()?;
    }
    let mut jitter_scale = 1.0;
    for _ in 0..MAX_REGENERATIONS {
        let d = generate_once(recipes, params, jitter_scale)?;
        if d.stats.centroid_accuracy < 1.0 || recipes.len() < 2 {
            return Ok(d);
        }
        jitter_scale *= 2.0;
    }
    Err(Error::InvalidArgument(
        "recipes stay separable by rms and skewness alone; add overlap".into(),
    ))
}

fn generate_once(recipes: &[ClassRecipe], params: &GenerateParams, jitter_scale: f64) -> Result<Dataset> {
    let mut profiles = Vec::new();
    let mut micros = Vec::new();
    let mut labels = Vec::new();
    let mut stream = 0u64;
    for r in recipes {
        for i in 0..params.per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(stream);
            stream += 1;
            let (heights, micro) = realise(r, params.n_points, params.eps_x, jitter_scale, &mut rng);
            let id = format!("c{:02}_{:03}", r.class_id, i);
            profiles.push(RoughnessProfile::new(id, heights, params.eps_x, Some(r.class_id))?);
            micros.push(micro);
            labels.push(r.class_id);
        }
    }
    let all: Vec<f64> = micros.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sigma = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
    let features: Vec<[f64; 2]> = micros.iter().map(|m| rms_skew(m)).collect();
    let stats = PopulationStats {
        profiles: profiles.len(),
        micro_sigma: sigma,
        min_height: profiles.iter().map(|p| p.min_height()).fold(f64::INFINITY, f64::min),
        max_height: profiles
            .iter()
            .map(|p| p.max_height())
            .fold(f64::NEG_INFINITY, f64::max),
        centroid_accuracy: nearest_centroid_accuracy(&features, &labels),
        jitter_scale,
    };
    Ok(Dataset { profiles, stats })
}

/// Root mean square about the mean and sample skewness.
pub fn rms_skew(v: &[f64]) -> [f64; 2] {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let rms = m2.sqrt();
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    [rms, skew]
}

/// Resubstitution accuracy of a nearest-centroid classifier on z-scored
/// features.
pub fn nearest_centroid_accuracy(features: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = features.len();
    if n == 0 {
        return 0.0;
    }
    let mut mean = [0.0; 2];
    let mut sd = [0.0; 2];
    for d in 0..2 {
        mean[d] = features.iter().map(|f| f[d]).sum::<f64>() / n as f64;
        sd[d] = (features.iter().map(|f| (f[d] - mean[d]).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd[d] == 0.0 {
            sd[d] = 1.0;
        }
    }
    let z: Vec<[f64; 2]> = features
        .iter()
        .map(|f| [(f[0] - mean[0]) / sd[0], (f[1] - mean[1]) / sd[1]])
        .collect();
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let centroids: Vec<[f64; 2]> = classes
        .iter()
        .map(|&c| {
            let members: Vec<&[f64; 2]> = z.iter().zip(labels).filter(|(_, &l)| l == c).map(|(f, _)| f).collect();
            let k = members.len() as f64;
            [
                members.iter().map(|f| f[0]).sum::<f64>() / k,
                members.iter().map(|f| f[1]).sum::<f64>() / k,
            ]
        })
        .collect();
    let correct = z
        .iter()
        .zip(labels)
        .filter(|(f, &l)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d = (f[0] - c[0]).powi(2) + (f[1] - c[1]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            classes[best] == l
        })
        .count();
    correct as f64 / n as f64
}
