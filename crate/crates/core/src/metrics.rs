//! Peak matching and detection metrics.
//!
//! A detection at `t_pred` is a true positive if an annotation `t` satisfies
//! `|t − t_pred| < tol` (strict), each annotation matching at most one
//! detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::PeakList;

/// Default matching tolerance, seconds.
pub const DEFAULT_TOLERANCE_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn metrics(&self) -> Metrics {
        compute_metrics(self)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// One-to-one matching of detections against annotations.
///
/// Detections are visited in time order and each takes the earliest
/// still-unmatched annotation within tolerance. For points on a line with a
/// common tolerance this greedy order yields a maximum matching.
pub fn match_peaks(detected: &PeakList, annotated: &PeakList, tol_s: f64) -> Result<ConfusionCounts> {
    match_times(detected.times(), annotated.times(), tol_s)
}

/// [`match_peaks`] on raw slices; checks ordering itself.
pub fn match_times(detected: &[f64], annotated: &[f64], tol_s: f64) -> Result<ConfusionCounts> {
    if !(tol_s > 0.0 && tol_s.is_finite()) {
        return Err(Error::invalid("tol_s", format!("must be positive, got {tol_s}")));
    }
    check_sorted(detected)?;
    check_sorted(annotated)?;

    let mut tp = 0;
    let mut next = 0;
    for &d in detected {
        // annotations too early for `d` are too early for every later detection
        while next < annotated.len() && d - annotated[next] >= tol_s {
            next += 1;
        }
        if next < annotated.len() && annotated[next] - d < tol_s {
            tp += 1;
            next += 1;
        }
    }
    Ok(ConfusionCounts::new(tp, detected.len() - tp, annotated.len() - tp))
}

fn check_sorted(times: &[f64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[0] < w[1]) {
            return Err(Error::UnsortedPeaks { position: i + 1 });
        }
    }
    Ok(())
}

/// Precision, recall and their mean.
///
/// Empty denominators: with no detections, precision is 1 only if nothing
/// was missed; with no annotations, recall is 1 only if nothing was falsely
/// detected.
pub fn compute_metrics(c: &ConfusionCounts) -> Metrics {
    let precision = if c.tp + c.fp == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        if c.fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    Metrics {
        precision,
        recall,
        accuracy: (precision + recall) / 2.0,
    }
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("values", "cannot summarise an empty list"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std })
    }
}

/// Per-record metrics averaged with standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub accuracy: MeanStd,
    pub count: usize,
}

impl AveragedMetrics {
    pub fn from_metrics(items: &[Metrics]) -> Result<Self> {
        let pick = |f: fn(&Metrics) -> f64| items.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            precision: MeanStd::of(&pick(|m| m.precision))?,
            recall: MeanStd::of(&pick(|m| m.recall))?,
            accuracy: MeanStd::of(&pick(|m| m.accuracy))?,
            count: items.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// Counts summed over records, then converted.
    pub pooled: Metrics,
    pub pooled_counts: ConfusionCounts,
    /// Mean ± sample std of per-record metrics.
    pub averaged: AveragedMetrics,
}

pub fn aggregate_metrics(per_record: &[ConfusionCounts]) -> Result<AggregateMetrics> {
    if per_record.is_empty() {
        return Err(Error::invalid("per_record", "need at least one record"));
    }
    let pooled_counts: ConfusionCounts = per_record.iter().copied().sum();
    let metrics: Vec<Metrics> = per_record.iter().map(compute_metrics).collect();
    Ok(AggregateMetrics {
        pooled: compute_metrics(&pooled_counts),
        pooled_counts,
        averaged: AveragedMetrics::from_metrics(&metrics)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(v: &[f64]) -> PeakList {
        PeakList::new(v.to_vec()).unwrap()
    }

    #[test]
    fn matching_examples() {
        assert_eq!(match_peaks(&pl(&[2.0]), &pl(&[2.05]), 0.1).unwrap(), ConfusionCounts::new(1, 0, 0));
        assert_eq!(match_peaks(&pl(&[2.0]), &pl(&[2.1]), 0.1).unwrap(), ConfusionCounts::new(0, 1, 1));
        assert_eq!(
            match_peaks(&pl(&[2.0, 2.05]), &pl(&[2.05]), 0.1).unwrap(),
            ConfusionCounts::new(1, 1, 0)
        );
    }

    #[test]
    fn boundary_is_strict_on_both_sides() {
        // 0.1 s exactly, as produced by index/rate arithmetic at 200 Hz
        let a = 20.0 / 200.0;
        assert_eq!(match_times(&[0.0], &[a], 0.1).unwrap().tp, 0);
        assert_eq!(match_times(&[a], &[0.0], 0.1).unwrap().tp, 0);
        assert_eq!(match_times(&[0.0], &[19.0 / 200.0], 0.1).unwrap().tp, 1);
    }

    #[test]
    fn earliest_annotation_is_preferred() {
        // Taking the nearest annotation for 1.09 (1.15) would strand 1.2.
        let c = match_times(&[1.09, 1.2], &[1.0, 1.15], 0.1).unwrap();
        assert_eq!(c, ConfusionCounts::new(2, 0, 0));
    }

    #[test]
    fn matching_errors() {
        assert!(match_times(&[2.0, 1.0], &[1.0], 0.1).is_err());
        assert!(match_times(&[1.0], &[1.0, 1.0], 0.1).is_err());
        assert!(match_times(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&ConfusionCounts::new(99, 1, 0));
        assert!((m.precision - 0.99).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.accuracy - 0.995).abs() < 1e-15);

        let m = compute_metrics(&ConfusionCounts::new(0, 0, 0));
        assert_eq!((m.precision, m.recall, m.accuracy), (1.0, 1.0, 1.0));

        let m = compute_metrics(&ConfusionCounts::new(0, 5, 3));
        assert_eq!((m.precision, m.recall, m.accuracy), (0.0, 0.0, 0.0));

        let m = compute_metrics(&ConfusionCounts::new(0, 0, 4));
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        let m = compute_metrics(&ConfusionCounts::new(0, 2, 0));
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
    }

    #[test]
    fn aggregation_modes() {
        let both = aggregate_metrics(&[ConfusionCounts::new(10, 0, 0); 2]).unwrap();
        assert_eq!(both.pooled.precision, 1.0);

        // precision 0.9 and 1.0
        let a = ConfusionCounts::new(9, 1, 0);
        let b = ConfusionCounts::new(5, 0, 0);
        let agg = aggregate_metrics(&[a, b]).unwrap();
        assert!((agg.averaged.precision.mean - 0.95).abs() < 1e-15);
        assert!((agg.averaged.precision.std - (0.005f64).sqrt()).abs() < 1e-12);
        // pooled weights the larger record: 14/15
        assert!((agg.pooled.precision - 14.0 / 15.0).abs() < 1e-15);
        assert!(agg.pooled.precision != agg.averaged.precision.mean);

        assert!(aggregate_metrics(&[]).is_err());
    }
}
