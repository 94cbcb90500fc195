//! Glue between profiles, DIC curves and the training sets.

use std::collections::HashMap;

use ndarray::Array2;

use crate::compaction::{process_batch, DicCurve, ProcessedCurves, SimulationParams};
use crate::error::{Error, Result};
use crate::latent::{stratified_split, Samples};
use crate::profile::{decompose, normalize_minmax, prepare, RoughnessProfile, Standardizer};

/// Micro-roughness parts, keeping ids, labels and spacing.
pub fn micro_parts(profiles: &[RoughnessProfile], cutoff_um: f64) -> Result<Vec<RoughnessProfile>> {
    profiles
        .iter()
        .map(|p| decompose(p, cutoff_um).map(|m| m.micro))
        .collect()
}

/// Compaction of every profile on `jobs` workers.
pub fn simulate_all(
    profiles: &[RoughnessProfile],
    params: &SimulationParams,
    jobs: usize,
) -> Result<Vec<ProcessedCurves>> {
    process_batch(profiles, params, jobs)
}

/// Standardization statistics of the min/max-scaled `profiles`.
pub fn fit_stats(profiles: &[&RoughnessProfile]) -> Result<Standardizer> {
    let norm = profiles
        .iter()
        .map(|p| normalize_minmax(&p.heights))
        .collect::<Result<Vec<_>>>()?;
    Standardizer::fit(&norm)
}

/// Standardized heights, one row per profile.
pub fn standardized_rows(profiles: &[&RoughnessProfile], stats: &Standardizer) -> Result<Array2<f64>> {
    let n = profiles.first().map_or(0, |p| p.len());
    let mut x = Array2::<f64>::zeros((profiles.len(), n));
    for (i, p) in profiles.iter().enumerate() {
        if p.len() != n {
            return Err(Error::InvalidData(format!(
                "profile {} has {} points, expected {n}",
                p.id,
                p.len()
            )));
        }
        let v = prepare(&p.heights, stats)?;
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&v.values));
    }
    Ok(x)
}

/// Train and test sets with statistics fitted on the training split only.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Samples,
    pub test: Samples,
    pub stats: Standardizer,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Pairs micro-profiles with their DIC curves by id, splits them by class
/// and standardizes both sides with the training statistics.
pub fn prepare_split(
    micro: &[RoughnessProfile],
    curves: &[(String, DicCurve)],
    test_fraction: f64,
    seed: u64,
) -> Result<Prepared> {
    let by_id: HashMap<&str, &DicCurve> = curves.iter().map(|(id, c)| (id.as_str(), c)).collect();
    let mut labels = Vec::with_capacity(micro.len());
    let mut dic_rows = Vec::with_capacity(micro.len());
    for p in micro {
        labels.push(p.label.ok_or_else(|| {
            Error::InvalidData(format!("profile {} has no class label", p.id))
        })?);
        let c = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::InvalidData(format!("no DIC curve for profile {}", p.id)))?;
        dic_rows.push(*c);
    }
    let horizon = dic_rows.first().map_or(0, |c| c.len());
    if dic_rows.iter().any(|c| c.len() != horizon) {
        return Err(Error::InvalidData("DIC curves of different lengths".into()));
    }
    let (train_idx, test_idx) = stratified_split(&labels, test_fraction, seed)?;
    if train_idx.is_empty() {
        return Err(Error::InvalidData("empty training split".into()));
    }
    let train_p: Vec<&RoughnessProfile> = train_idx.iter().map(|&i| &micro[i]).collect();
    let stats = fit_stats(&train_p)?;
    let make = |idx: &[usize]| -> Result<Samples> {
        let ps: Vec<&RoughnessProfile> = idx.iter().map(|&i| &micro[i]).collect();
        let x = standardized_rows(&ps, &stats)?;
        let mut dic = Array2::<f64>::zeros((idx.len(), horizon));
        for (r, &i) in idx.iter().enumerate() {
            dic.row_mut(r).assign(&ndarray::ArrayView1::from(&dic_rows[i].values));
        }
        Samples::new(
            ps.iter().map(|p| p.id.clone()).collect(),
            x,
            idx.iter().map(|&i| labels[i]).collect(),
            dic,
        )
    };
    let train = make(&train_idx)?;
    let test = if test_idx.is_empty() {
        train.select(&[])
    } else {
        make(&test_idx)?
    };
    Ok(Prepared {
        train,
        test,
        stats,
        train_idx,
        test_idx,
    })
}
