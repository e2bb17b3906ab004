//! Smoothed recursive moving-average crossover (SRMAC) peak detector.
//!
//! Two EWMAs with different memory are subtracted, the difference is smoothed
//! by a third EWMA, and every run of samples where the smoothed difference
//! exceeds the threshold is a region of interest (ROI). The peak of each ROI
//! is the largest input sample inside it, reported when the ROI closes.
//!
//! ```text
//!        ┌── e_fast ──┐
//!   x ───┤            ├─(−)── e_cross ── > thr ? ──► ROI ──► argmax(x)
//!        └── e_slow ──┘
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_bandpass, BandpassSpec, Ewma};
use crate::signal::{index_to_time, PeakList, PpgRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrmacParams {
    pub alpha_fast: f64,
    pub alpha_slow: f64,
    pub alpha_cross: f64,
    pub threshold: f64,
}

impl SrmacParams {
    pub const NAMES: [&'static str; 4] = ["alpha_fast", "alpha_slow", "alpha_cross", "threshold"];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [alpha_fast, alpha_slow, alpha_cross, threshold] => Ok(Self {
                alpha_fast,
                alpha_slow,
                alpha_cross,
                threshold,
            }),
            _ => Err(Error::invalid("params", format!("SRMAC takes 4 parameters, got {}", v.len()))),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.alpha_fast, self.alpha_slow, self.alpha_cross, self.threshold]
    }

    /// Alphas must be valid EWMA weights and the threshold finite. The
    /// ordering of `alpha_fast` and `alpha_slow` is not checked.
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha_fast", self.alpha_fast),
            ("alpha_slow", self.alpha_slow),
            ("alpha_cross", self.alpha_cross),
        ] {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::invalid("params", format!("{name} must lie in [0, 1), got {a}")));
            }
        }
        if !self.threshold.is_finite() {
            return Err(Error::invalid("params", "threshold must be finite"));
        }
        Ok(())
    }
}

impl Default for SrmacParams {
    /// Reasonable starting values for 200 Hz, 0.5–8 Hz bandpassed PPG.
    fn default() -> Self {
        Self {
            alpha_fast: 0.85,
            alpha_slow: 0.96,
            alpha_cross: 0.8,
            threshold: 0.0,
        }
    }
}

/// A detected peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEvent {
    pub index: usize,
    pub time_s: f64,
    pub amplitude: f64,
    /// First sample of the ROI.
    pub roi_start: usize,
    /// One past the last sample of the ROI.
    pub roi_end: usize,
}

/// Intermediate filter outputs for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrmacTrace {
    pub input: f64,
    pub fast: f64,
    pub slow: f64,
    pub cross: f64,
}

#[derive(Debug, Clone, Copy)]
struct Roi {
    start: usize,
    best_index: usize,
    best_value: f64,
}

/// Sample-by-sample SRMAC state machine. O(1) time and memory per sample.
#[derive(Debug, Clone)]
pub struct SrmacDetector {
    params: SrmacParams,
    rate_hz: f64,
    fast: Ewma,
    slow: Ewma,
    cross: Ewma,
    roi: Option<Roi>,
    sample_counter: usize,
}

impl SrmacDetector {
    pub fn new(params: SrmacParams, rate_hz: f64) -> Result<Self> {
        params.validate()?;
        crate::signal::check_rate(rate_hz)?;
        Ok(Self {
            params,
            rate_hz,
            fast: Ewma::new(params.alpha_fast)?,
            slow: Ewma::new(params.alpha_slow)?,
            cross: Ewma::new(params.alpha_cross)?,
            roi: None,
            sample_counter: 0,
        })
    }

    pub fn params(&self) -> &SrmacParams {
        &self.params
    }

    pub fn sample_counter(&self) -> usize {
        self.sample_counter
    }

    pub fn in_roi(&self) -> bool {
        self.roi.is_some()
    }

    /// Outputs of the three EWMAs after the last pushed sample.
    pub fn last_trace(&self) -> (f64, f64, f64) {
        (self.fast.last_output(), self.slow.last_output(), self.cross.last_output())
    }

    /// Feeds one sample. The peak is located on `x` itself.
    pub fn push(&mut self, x: f64) -> Result<Option<PeakEvent>> {
        self.push_with_reference(x, x)
    }

    /// Feeds `x` to the crossover filters and tracks the ROI maximum on
    /// `reference` (for locating peaks on a different stage of the signal).
    pub fn push_with_reference(&mut self, x: f64, reference: f64) -> Result<Option<PeakEvent>> {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                index: self.sample_counter,
                value: x,
            });
        }
        if !reference.is_finite() {
            return Err(Error::NonFinite {
                index: self.sample_counter,
                value: reference,
            });
        }
        Ok(self.step(x, reference))
    }

    #[inline]
    fn step(&mut self, x: f64, reference: f64) -> Option<PeakEvent> {
        let index = self.sample_counter;
        self.sample_counter += 1;
        let d = self.fast.step_unchecked(x) - self.slow.step_unchecked(x);
        let c = self.cross.step_unchecked(d);
        if c > self.params.threshold {
            match &mut self.roi {
                None => {
                    self.roi = Some(Roi {
                        start: index,
                        best_index: index,
                        best_value: reference,
                    })
                }
                Some(roi) => {
                    if reference > roi.best_value {
                        roi.best_index = index;
                        roi.best_value = reference;
                    }
                }
            }
            None
        } else {
            self.close(index)
        }
    }

    fn close(&mut self, end: usize) -> Option<PeakEvent> {
        self.roi.take().map(|roi| PeakEvent {
            index: roi.best_index,
            time_s: index_to_time(roi.best_index, self.rate_hz),
            amplitude: roi.best_value,
            roi_start: roi.start,
            roi_end: end,
        })
    }

    /// Closes an ROI left open at end of stream.
    pub fn finish(&mut self) -> Option<PeakEvent> {
        self.close(self.sample_counter)
    }
}

/// Streams an already-filtered signal through a fresh detector.
pub fn detect_filtered(params: &SrmacParams, filtered: &[f64], rate_hz: f64) -> Result<Vec<PeakEvent>> {
    let mut det = SrmacDetector::new(*params, rate_hz)?;
    crate::signal::check_finite(filtered)?;
    let mut events: Vec<PeakEvent> = filtered.iter().filter_map(|&x| det.step(x, x)).collect();
    events.extend(det.finish());
    Ok(events)
}

/// Like [`detect_filtered`] but also returns per-sample filter outputs.
pub fn detect_traced(
    params: &SrmacParams,
    filtered: &[f64],
    rate_hz: f64,
) -> Result<(Vec<PeakEvent>, Vec<SrmacTrace>)> {
    let mut det = SrmacDetector::new(*params, rate_hz)?;
    let mut events = Vec::new();
    let mut trace = Vec::with_capacity(filtered.len());
    for &x in filtered {
        events.extend(det.push(x)?);
        let (fast, slow, cross) = det.last_trace();
        trace.push(SrmacTrace {
            input: x,
            fast,
            slow,
            cross,
        });
    }
    events.extend(det.finish());
    Ok((events, trace))
}

pub(crate) fn events_to_peaks(events: &[PeakEvent], rate_hz: f64) -> Result<PeakList> {
    let indices: Vec<usize> = events.iter().map(|e| e.index).collect();
    PeakList::from_indices(&indices, rate_hz)
}

/// Bandpass the record, run the detector over it and return the peak times.
pub fn detect_batch(params: &SrmacParams, record: &PpgRecord, bandpass: &BandpassSpec) -> Result<PeakList> {
    let filtered = apply_bandpass(bandpass, record.sample_rate_hz(), record.samples())?;
    let events = detect_filtered(params, &filtered, record.sample_rate_hz())?;
    events_to_peaks(&events, record.sample_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(thr: f64) -> SrmacParams {
        SrmacParams {
            threshold: thr,
            ..SrmacParams::default()
        }
    }

    fn wave(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / 200.0;
                (2.0 * std::f64::consts::PI * 1.25 * t).sin().max(0.0).powi(3)
            })
            .collect()
    }

    #[test]
    fn huge_threshold_never_fires() {
        let x = wave(4000);
        assert!(detect_filtered(&params(1e6), &x, 200.0).unwrap().is_empty());
    }

    #[test]
    fn constant_input_never_fires() {
        let x = vec![0.0; 5000];
        assert!(detect_filtered(&params(0.0), &x, 200.0).unwrap().is_empty());
        // A non-zero constant only produces the zero-state start-up transient.
        let x = vec![0.7; 5000];
        let events = detect_filtered(&params(1e-9), &x, 200.0).unwrap();
        assert!(events.len() <= 1);
        assert!(events.iter().all(|e| e.roi_end < 1000));
        // Through the bandpass the constant vanishes entirely.
        let rec = PpgRecord::new(
            x,
            200.0,
            "s",
            crate::signal::Group::Healthy,
            crate::signal::Phase::Rest,
        )
        .unwrap();
        assert!(detect_batch(&params(0.0), &rec, &BandpassSpec::default()).unwrap().is_empty());
    }

    #[test]
    fn periodic_input_fires_once_per_cycle() {
        let x = wave(200 * 20);
        let events = detect_filtered(&params(0.0), &x, 200.0).unwrap();
        assert!((24..=26).contains(&events.len()), "{}", events.len());
        for e in &events {
            assert!(e.roi_start <= e.index && e.index < e.roi_end);
        }
    }

    #[test]
    fn non_finite_rejected_and_state_kept() {
        let mut det = SrmacDetector::new(params(0.0), 200.0).unwrap();
        det.push(1.0).unwrap();
        let before = det.last_trace();
        assert!(det.push(f64::NAN).is_err());
        assert_eq!(det.last_trace(), before);
        assert_eq!(det.sample_counter(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(SrmacDetector::new(SrmacParams { alpha_fast: 1.0, ..params(0.0) }, 200.0).is_err());
        assert!(SrmacParams::from_slice(&[0.9, 0.9, 0.9]).is_err());
        let p = SrmacParams::from_slice(&[0.8, 0.9, 0.95, 1e-4]).unwrap();
        assert_eq!(p.to_vec(), vec![0.8, 0.9, 0.95, 1e-4]);
    }

    #[test]
    fn one_sample_record_has_no_peaks() {
        let rec = PpgRecord::new(
            vec![123.0],
            200.0,
            "s",
            crate::signal::Group::Healthy,
            crate::signal::Phase::Rest,
        )
        .unwrap();
        let peaks = detect_batch(&params(0.0), &rec, &BandpassSpec::default()).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn open_roi_is_closed_at_end() {
        let mut det = SrmacDetector::new(params(0.0), 200.0).unwrap();
        for x in [0.0, 1.0, 2.0, 3.0] {
            assert!(det.push(x).unwrap().is_none());
        }
        assert!(det.in_roi());
        let e = det.finish().unwrap();
        assert_eq!(e.index, 3);
        assert_eq!(e.roi_end, 4);
        assert!(det.finish().is_none());
    }

    #[test]
    fn ties_resolve_to_earliest() {
        let mut det = SrmacDetector::new(params(0.0), 200.0).unwrap();
        for x in [0.0, 5.0, 5.0, 5.0] {
            det.push(x).unwrap();
        }
        assert_eq!(det.finish().unwrap().index, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn raising_threshold_only_shrinks_rois(
            seed in any::<u64>(),
            t1 in 0.0f64..0.05,
            dt in 0.0f64..0.05,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = wave(2000);
            let x: Vec<f64> = base.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            let lo = detect_filtered(&params(t1), &x, 200.0).unwrap();
            let hi = detect_filtered(&params(t1 + dt), &x, 200.0).unwrap();
            for inner in &hi {
                prop_assert!(lo
                    .iter()
                    .any(|outer| outer.roi_start <= inner.roi_start && inner.roi_end <= outer.roi_end));
            }
        }

        #[test]
        fn raising_threshold_never_adds_events_on_clean_pulses(
            t1 in 0.0f64..0.05,
            dt in 0.0f64..0.05,
        ) {
            let x = wave(2000);
            let lo = detect_filtered(&params(t1), &x, 200.0).unwrap().len();
            let hi = detect_filtered(&params(t1 + dt), &x, 200.0).unwrap().len();
            prop_assert!(hi <= lo);
        }

        #[test]
        fn streaming_matches_batch(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = wave(1500).iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
            let p = params(rng.random_range(0.0..0.02));
            let batch = detect_filtered(&p, &x, 200.0).unwrap();
            let mut det = SrmacDetector::new(p, 200.0).unwrap();
            let mut streamed = Vec::new();
            for &v in &x {
                streamed.extend(det.push(v).unwrap());
            }
            streamed.extend(det.finish());
            prop_assert_eq!(batch, streamed);
        }
    }
}
