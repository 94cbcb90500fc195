//! Prediction quality: DIC area error, classification accuracy and the
//! per-split error report.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::compaction::DicCurve;
use crate::error::{Error, Result};

/// Trapezoidal integral over unit steps.
pub fn trapezoid(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Area between the curves over the area under the reference, in percent.
pub fn delta_dic_values(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "curves of length {} and {}",
            pred.len(),
            reference.len()
        )));
    }
    let area = trapezoid(reference);
    if !(area.abs() > 0.0) {
        return Err(Error::Degenerate("reference curve has zero area".into()));
    }
    let diff: Vec<f64> = pred.iter().zip(reference).map(|(p, r)| (p - r).abs()).collect();
    Ok(100.0 * trapezoid(&diff) / area)
}

pub fn delta_dic(pred: &DicCurve, reference: &DicCurve) -> Result<f64> {
    if pred.stage != reference.stage {
        return Err(Error::InvalidArgument(format!(
            "comparing {} curve against {} reference",
            pred.stage.as_str(),
            reference.stage.as_str()
        )));
    }
    delta_dic_values(&pred.values, &reference.values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    /// `(predicted, label)` per sample.
    pub pairs: Vec<(usize, usize)>,
    /// Classes in ascending order, indexing the confusion matrix.
    pub classes: Vec<usize>,
    /// `confusion[label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<Accuracy> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let mut classes: Vec<usize> = preds.iter().chain(labels).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let pos = |c: usize| classes.binary_search(&c).expect("collected class");
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    let mut hits = 0;
    for (&p, &l) in preds.iter().zip(labels) {
        confusion[pos(l)][pos(p)] += 1;
        if p == l {
            hits += 1;
        }
    }
    Ok(Accuracy {
        accuracy: hits as f64 / preds.len() as f64,
        pairs: preds.iter().copied().zip(labels.iter().copied()).collect(),
        classes,
        confusion,
    })
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    /// Percent.
    pub delta_dic: f64,
    /// Relative L2 reconstruction error in percent, when the model
    /// reconstructs.
    pub recon_err: Option<f64>,
    pub class_ok: Option<bool>,
    pub label: Option<usize>,
    pub predicted: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub cumulative: f64,
    pub outlier_threshold: f64,
    pub outliers: Vec<String>,
    pub mean_recon_err: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub split: String,
    pub per_sample: Vec<SampleError>,
    pub summary: Summary,
    pub confusion: Option<Accuracy>,
}

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 10.0;

/// Inputs of [`build_report`], one entry per sample.
pub struct ReportInput<'a> {
    pub ids: &'a [String],
    pub pred_dic: Vec<ArrayView1<'a, f64>>,
    pub ref_dic: Vec<ArrayView1<'a, f64>>,
    pub recon: Option<(Vec<ArrayView1<'a, f64>>, Vec<ArrayView1<'a, f64>>)>,
    pub classes: Option<(&'a [usize], &'a [usize])>,
}

pub fn build_report(split: &str, input: ReportInput, outlier_threshold: f64) -> Result<ErrorReport> {
    let n = input.ids.len();
    if input.pred_dic.len() != n || input.ref_dic.len() != n {
        return Err(Error::InvalidData(format!(
            "{n} samples but {} predicted and {} reference DIC curves",
            input.pred_dic.len(),
            input.ref_dic.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData("empty split".into()));
    }
    let mut per_sample = Vec::with_capacity(n);
    for i in 0..n {
        let p = input.pred_dic[i].to_vec();
        let r = input.ref_dic[i].to_vec();
        let d = delta_dic_values(&p, &r)
            .map_err(|e| Error::InvalidData(format!("sample {}: {e}", input.ids[i])))?;
        let recon_err = match &input.recon {
            Some((pred, target)) => {
                let t = target[i];
                let diff = &pred[i] - &t;
                let tn = t.dot(&t).sqrt();
                if tn == 0.0 {
                    return Err(Error::Degenerate(format!("sample {}: zero profile", input.ids[i])));
                }
                Some(100.0 * diff.dot(&diff).sqrt() / tn)
            }
            None => None,
        };
        let (label, predicted) = match input.classes {
            Some((pred, labels)) => (Some(labels[i]), Some(pred[i])),
            None => (None, None),
        };
        per_sample.push(SampleError {
            id: input.ids[i].clone(),
            delta_dic: d,
            recon_err,
            class_ok: predicted.zip(label).map(|(p, l)| p == l),
            label,
            predicted,
        });
    }
    let mut sorted: Vec<f64> = per_sample.iter().map(|s| s.delta_dic).collect();
    sorted.sort_by(f64::total_cmp);
    let cumulative: f64 = per_sample.iter().map(|s| s.delta_dic).sum();
    let recon: Vec<f64> = per_sample.iter().filter_map(|s| s.recon_err).collect();
    let confusion = match input.classes {
        Some((p, l)) => Some(accuracy(p, l)?),
        None => None,
    };
    let summary = Summary {
        count: n,
        mean: cumulative / n as f64,
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
        cumulative,
        outlier_threshold,
        outliers: per_sample
            .iter()
            .filter(|s| s.delta_dic > outlier_threshold)
            .map(|s| s.id.clone())
            .collect(),
        mean_recon_err: if recon.is_empty() {
            None
        } else {
            Some(recon.iter().sum::<f64>() / recon.len() as f64)
        },
        accuracy: confusion.as_ref().map(|a| a.accuracy),
    };
    Ok(ErrorReport {
        split: split.to_string(),
        per_sample,
        summary,
        confusion,
    })
}

/// Equal-width histogram of `values` over `[min, max]`: `(lo, hi, count)`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

impl ErrorReport {
    pub fn delta_values(&self) -> Vec<f64> {
        self.per_sample.iter().map(|s| s.delta_dic).collect()
    }

    /// `bin_lo,bin_hi,count`.
    pub fn write_histogram(&self, path: &Path, bins: usize) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "bin_lo,bin_hi,count").map_err(io)?;
        for (lo, hi, c) in histogram(&self.delta_values(), bins) {
            writeln!(w, "{lo:.10e},{hi:.10e},{c}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// `statistic,value`: five-number summary, 1.5 IQR whiskers and the
    /// individual points beyond them.
    pub fn write_boxplot(&self, path: &Path) -> Result<()> {
        let s = &self.summary;
        let iqr = s.q3 - s.q1;
        let mut values = self.delta_values();
        values.sort_by(f64::total_cmp);
        let lo_fence = s.q1 - 1.5 * iqr;
        let hi_fence = s.q3 + 1.5 * iqr;
        let whisker_lo = values.iter().copied().find(|&v| v >= lo_fence).unwrap_or(s.min);
        let whisker_hi = values.iter().rev().copied().find(|&v| v <= hi_fence).unwrap_or(s.max);
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "statistic,value").map_err(io)?;
        for (k, v) in [
            ("min", s.min),
            ("whisker_lo", whisker_lo),
            ("q1", s.q1),
            ("median", s.median),
            ("q3", s.q3),
            ("whisker_hi", whisker_hi),
            ("max", s.max),
            ("mean", s.mean),
        ] {
            writeln!(w, "{k},{v:.10e}").map_err(io)?;
        }
        for v in values.iter().filter(|&&v| v < lo_fence || v > hi_fence) {
            writeln!(w, "flier,{v:.10e}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// `id,delta_dic,cumulative,recon_err,label,predicted`.
    pub fn write_samples(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "id,delta_dic,cumulative,recon_err,label,predicted").map_err(io)?;
        let mut cum = 0.0;
        for s in &self.per_sample {
            cum += s.delta_dic;
            let opt = |v: Option<String>| v.unwrap_or_default();
            writeln!(
                w,
                "{},{:.10e},{:.10e},{},{},{}",
                s.id,
                s.delta_dic,
                cum,
                opt(s.recon_err.map(|v| format!("{v:.10e}"))),
                opt(s.label.map(|v| v.to_string())),
                opt(s.predicted.map(|v| v.to_string())),
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compaction::CurveStage;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn curve(v: Vec<f64>) -> DicCurve {
        DicCurve {
            values: v,
            stage: CurveStage::Smoothed,
            artifact_value: None,
        }
    }

    #[test]
    fn identical_curves_have_zero_error() {
        let c = curve(vec![0.2, 0.5, 0.9, 1.0]);
        assert_eq!(delta_dic(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_of_ten_percent() {
        let r = curve(vec![1.0; 50]);
        let p = curve(vec![0.9; 50]);
        assert!((delta_dic(&p, &r).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_and_stage_mismatch_rejected() {
        let z = curve(vec![0.0; 4]);
        assert!(matches!(delta_dic(&z, &z), Err(Error::Degenerate(_))));
        let mut raw = curve(vec![1.0; 4]);
        raw.stage = CurveStage::Raw;
        assert!(delta_dic(&raw, &curve(vec![1.0; 4])).is_err());
        assert!(delta_dic_values(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn trapezoid_of_a_ramp() {
        assert_eq!(trapezoid(&[0.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn accuracy_counts_and_confusion() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4 + 1).collect();
        let a = accuracy(&labels, &labels).unwrap();
        assert_eq!(a.accuracy, 1.0);
        let mut preds = labels.clone();
        preds[7] = if preds[7] == 1 { 2 } else { 1 };
        let b = accuracy(&preds, &labels).unwrap();
        assert!((b.accuracy - 0.99).abs() < 1e-15);
        let total: usize = b.confusion.iter().flatten().sum();
        assert_eq!(total, 100);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    fn perfect_report() -> ErrorReport {
        let ids: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
        let d = vec![Array1::from(vec![0.1, 0.5, 1.0]); 3];
        let x = vec![Array1::from(vec![0.3, -0.2]); 3];
        let labels = [1, 2, 3];
        build_report(
            "test",
            ReportInput {
                ids: &ids,
                pred_dic: d.iter().map(|a| a.view()).collect(),
                ref_dic: d.iter().map(|a| a.view()).collect(),
                recon: Some((x.iter().map(|a| a.view()).collect(), x.iter().map(|a| a.view()).collect())),
                classes: Some((&labels, &labels)),
            },
            DEFAULT_OUTLIER_THRESHOLD,
        )
        .unwrap()
    }

    #[test]
    fn perfect_model_gives_all_zero_report() {
        let r = perfect_report();
        assert_eq!(r.summary.cumulative, 0.0);
        assert_eq!(r.summary.mean_recon_err, Some(0.0));
        assert_eq!(r.summary.accuracy, Some(1.0));
        assert!(r.summary.outliers.is_empty());
        assert!(r.per_sample.iter().all(|s| s.delta_dic == 0.0 && s.class_ok == Some(true)));
    }

    #[test]
    fn report_csvs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let r = perfect_report();
        let mut bytes = Vec::new();
        for round in 0..2 {
            let h = dir.path().join(format!("h{round}.csv"));
            let b = dir.path().join(format!("b{round}.csv"));
            let s = dir.path().join(format!("s{round}.csv"));
            r.write_histogram(&h, 10).unwrap();
            r.write_boxplot(&b).unwrap();
            r.write_samples(&s).unwrap();
            bytes.push([std::fs::read(h).unwrap(), std::fs::read(b).unwrap(), std::fs::read(s).unwrap()]);
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    fn arb_curve(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n)
    }

    proptest! {
        #[test]
        fn triangle_style_bound(
            a in arb_curve(20), b in arb_curve(20), r in arb_curve(20)
        ) {
            let area_r = trapezoid(&r);
            let area_b = trapezoid(&b);
            prop_assume!(area_r > 1e-3 && area_b > 1e-3);
            let ar = delta_dic_values(&a, &r).unwrap();
            let ab = delta_dic_values(&a, &b).unwrap();
            let br = delta_dic_values(&b, &r).unwrap();
            prop_assert!(ar <= ab * area_b / area_r + br + 1e-9);
        }

        #[test]
        fn accuracy_invariant_under_relabelling(
            labels in proptest::collection::vec(1usize..6, 1..40),
            preds in proptest::collection::vec(1usize..6, 40),
            perm in Just([3usize, 5, 1, 2, 4]).prop_shuffle()
        ) {
            let preds = &preds[..labels.len()];
            let map = |v: &[usize]| v.iter().map(|&c| perm[c - 1]).collect::<Vec<_>>();
            let a = accuracy(preds, &labels).unwrap().accuracy;
            let b = accuracy(&map(preds), &map(&labels)).unwrap().accuracy;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cumulative_is_the_sum(
            curves in proptest::collection::vec((arb_curve(8), arb_curve(8)), 1..10)
        ) {
            let ids: Vec<String> = (0..curves.len()).map(|i| i.to_string()).collect();
            let p: Vec<Array1<f64>> = curves.iter().map(|c| Array1::from(c.0.clone())).collect();
            let r: Vec<Array1<f64>> = curves.iter().map(|c| Array1::from(c.1.iter().map(|v| v + 0.1).collect::<Vec<_>>())).collect();
            let rep = build_report("test", ReportInput {
                ids: &ids,
                pred_dic: p.iter().map(|a| a.view()).collect(),
                ref_dic: r.iter().map(|a| a.view()).collect(),
                recon: None,
                classes: None,
            }, 10.0).unwrap();
            let sum: f64 = rep.per_sample.iter().map(|s| s.delta_dic).sum();
            prop_assert!((rep.summary.cumulative - sum).abs() <= 1e-9);
            prop_assert!(rep.summary.q1 <= rep.summary.median && rep.summary.median <= rep.summary.q3);
        }
    }
}
