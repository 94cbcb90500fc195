//! Cellular-automaton compaction of a rough profile under a rigid plate
//! moving at constant velocity (one cell row per time step), and the DIC
//! curves it produces.

mod grid;
pub mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RoughnessProfile;

pub use grid::{rasterize, CellGrid, CompactionConfig, Eligibility, Terminal};

/// Default number of time steps in a DIC curve.
pub const DEFAULT_HORIZON: usize = 352;
/// Default moving-average window.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveStage {
    Raw,
    Corrected,
    Smoothed,
}

impl CurveStage {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveStage::Raw => "raw",
            CurveStage::Corrected => "corrected",
            CurveStage::Smoothed => "smoothed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(CurveStage::Raw),
            "corrected" => Some(CurveStage::Corrected),
            "smoothed" => Some(CurveStage::Smoothed),
            _ => None,
        }
    }
}

/// Degree of intimate contact sampled once per time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicCurve {
    pub values: Vec<f64>,
    pub stage: CurveStage,
    /// Terminal plateau of the raw simulation, if the run hit one.
    pub artifact_value: Option<f64>,
}

impl DicCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of compacting one profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub raw: DicCurve,
    /// Steps actually executed before convergence or termination.
    pub steps: usize,
    pub terminal: Option<Terminal>,
    /// Full contact reached or the terminal state hit within the horizon.
    pub converged: bool,
    pub n_w: usize,
}

/// Runs the automaton, calling `observe` after construction and after every
/// completed step.
pub fn simulate_observed(
    profile: &RoughnessProfile,
    eps_z: f64,
    horizon: usize,
    config: &CompactionConfig,
    mut observe: impl FnMut(&CellGrid),
) -> Result<Simulation> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut grid = rasterize(profile, eps_z, config)?;
    observe(&grid);
    let n_w = grid.n_w();
    let mut values = Vec::with_capacity(horizon);
    let mut contact = grid.contact_count();
    values.push(contact as f64 / n_w as f64);
    let mut terminal = None;
    let mut steps = 0;
    while values.len() < horizon {
        if contact == n_w {
            values.push(1.0);
            continue;
        }
        if let Some(t) = terminal {
            values.push(Terminal::plateau(&t));
            continue;
        }
        match grid.step() {
            Ok(n) => {
                steps += 1;
                contact = n;
                observe(&grid);
                values.push(n as f64 / n_w as f64);
            }
            Err(t) => {
                terminal = Some(t);
                values.push(t.plateau());
            }
        }
    }
    let converged = contact == n_w || terminal.is_some();
    Ok(Simulation {
        raw: DicCurve {
            values,
            stage: CurveStage::Raw,
            artifact_value: terminal.map(|t| t.plateau()),
        },
        steps,
        terminal,
        converged,
        n_w,
    })
}

pub fn simulate(
    profile: &RoughnessProfile,
    eps_z: f64,
    horizon: usize,
    config: &CompactionConfig,
) -> Result<Simulation> {
    simulate_observed(profile, eps_z, horizon, config, |_| {})
}

/// Replaces the trailing artifact plateau by full contact.
pub fn correct(raw: &DicCurve) -> Result<DicCurve> {
    if raw.stage != CurveStage::Raw {
        return Err(Error::InvalidArgument(format!(
            "correct expects a raw curve, got {}",
            raw.stage.as_str()
        )));
    }
    let mut values = raw.values.clone();
    if let Some(a) = raw.artifact_value {
        for v in values.iter_mut().rev() {
            if *v != a {
                break;
            }
            *v = 1.0;
        }
    }
    Ok(DicCurve {
        values,
        stage: CurveStage::Corrected,
        artifact_value: raw.artifact_value,
    })
}

/// Centered moving average; windows are truncated at both ends.
pub fn smooth(corrected: &DicCurve, window: usize) -> Result<DicCurve> {
    if corrected.stage != CurveStage::Corrected {
        return Err(Error::InvalidArgument(format!(
            "smooth expects a corrected curve, got {}",
            corrected.stage.as_str()
        )));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "moving-average window must be odd and positive, got {window}"
        )));
    }
    let half = window / 2;
    let v = &corrected.values;
    let n = v.len();
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let s: f64 = v[lo..=hi].iter().sum();
            (s / (hi - lo + 1) as f64).clamp(0.0, 1.0)
        })
        .collect();
    Ok(DicCurve {
        values,
        stage: CurveStage::Smoothed,
        artifact_value: corrected.artifact_value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub eps_z: f64,
    pub horizon: usize,
    pub window: usize,
    pub config: CompactionConfig,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            eps_z: 0.1,
            horizon: DEFAULT_HORIZON,
            window: DEFAULT_WINDOW,
            config: CompactionConfig::default(),
        }
    }
}

/// Raw, corrected and smoothed curves of one profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedCurves {
    pub id: String,
    pub simulation: Simulation,
    pub corrected: DicCurve,
    pub smoothed: DicCurve,
}

pub fn process(profile: &RoughnessProfile, params: &SimulationParams) -> Result<ProcessedCurves> {
    let simulation = simulate(profile, params.eps_z, params.horizon, &params.config)?;
    let corrected = correct(&simulation.raw)?;
    let smoothed = smooth(&corrected, params.window)?;
    Ok(ProcessedCurves {
        id: profile.id.clone(),
        simulation,
        corrected,
        smoothed,
    })
}

/// Simulates a batch on `jobs` worker threads. Output order and content do
/// not depend on `jobs`.
pub fn process_batch(
    profiles: &[RoughnessProfile],
    params: &SimulationParams,
    jobs: usize,
) -> Result<Vec<ProcessedCurves>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| profiles.par_iter().map(|p| process(p, params)).collect())
}
