//! Python bindings: detectors, filters, matching, synthetic data and
//! cross-validation.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use srmac_core::crossval::{run_lsocv, CvConfig, SearchConfig};
use srmac_core::detector::DetectorKind;
use srmac_core::filters::{self, BandpassSpec, FilterMode};
use srmac_core::metrics;
use srmac_core::signal::{AnnotatedRecord, Group, PeakList, Phase, PpgRecord};
use srmac_core::srmac as core_srmac;
use srmac_core::synth::{self, SuiteConfig, SynthConfig};
use srmac_core::terma::{self, TermaParams};

fn py_err(e: srmac_core::Error) -> PyErr {
    match e {
        srmac_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn bandpass_spec(low_cut_hz: f64, high_cut_hz: f64, order: usize, mode: &str) -> PyResult<BandpassSpec> {
    Ok(BandpassSpec {
        low_cut_hz,
        high_cut_hz,
        order,
        mode: mode.parse::<FilterMode>().map_err(py_err)?,
    })
}

/// A detected systolic peak.
#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Debug, Clone)]
struct PeakEvent {
    index: usize,
    time_s: f64,
    amplitude: f64,
    roi_start: usize,
    roi_end: usize,
}

#[pymethods]
impl PeakEvent {
    fn __repr__(&self) -> String {
        format!(
            "PeakEvent(index={}, time_s={}, amplitude={}, roi=[{}, {}))",
            self.index, self.time_s, self.amplitude, self.roi_start, self.roi_end
        )
    }
}

impl From<core_srmac::PeakEvent> for PeakEvent {
    fn from(e: core_srmac::PeakEvent) -> Self {
        Self {
            index: e.index,
            time_s: e.time_s,
            amplitude: e.amplitude,
            roi_start: e.roi_start,
            roi_end: e.roi_end,
        }
    }
}

/// Streaming SRMAC detector; feed it one bandpassed sample at a time.
#[pyclass]
struct SrmacDetector {
    inner: core_srmac::SrmacDetector,
}

#[pymethods]
impl SrmacDetector {
    #[new]
    #[pyo3(signature = (alpha_fast=0.85, alpha_slow=0.96, alpha_cross=0.8, threshold=0.0, rate_hz=200.0))]
    fn new(alpha_fast: f64, alpha_slow: f64, alpha_cross: f64, threshold: f64, rate_hz: f64) -> PyResult<Self> {
        let params = core_srmac::SrmacParams {
            alpha_fast,
            alpha_slow,
            alpha_cross,
            threshold,
        };
        let inner = core_srmac::SrmacDetector::new(params, rate_hz).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Consumes one sample; returns the peak of a region that just closed.
    fn push(&mut self, x: f64) -> PyResult<Option<PeakEvent>> {
        Ok(self.inner.push(x).map_err(py_err)?.map(Into::into))
    }

    /// Consumes many samples and returns every peak completed among them.
    fn push_many(&mut self, xs: Vec<f64>) -> PyResult<Vec<PeakEvent>> {
        let mut out = Vec::new();
        for x in xs {
            if let Some(e) = self.inner.push(x).map_err(py_err)? {
                out.push(e.into());
            }
        }
        Ok(out)
    }

    /// Closes a region still open at end of stream.
    fn finish(&mut self) -> Option<PeakEvent> {
        self.inner.finish().map(Into::into)
    }

    /// `(fast, slow, cross)` filter outputs after the last sample.
    fn last_trace(&self) -> (f64, f64, f64) {
        self.inner.last_trace()
    }

    #[getter]
    fn in_roi(&self) -> bool {
        self.inner.in_roi()
    }

    #[getter]
    fn samples_seen(&self) -> usize {
        self.inner.sample_counter()
    }
}

/// A PPG record with annotated peak times in seconds.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Debug, Clone)]
struct Record {
    subject_id: String,
    group: String,
    phase: String,
    sample_rate_hz: f64,
    samples: Vec<f64>,
    peaks: Vec<f64>,
}

#[pymethods]
impl Record {
    #[new]
    #[pyo3(signature = (samples, peaks, subject_id, group="healthy", phase="rest", sample_rate_hz=200.0))]
    fn new(
        samples: Vec<f64>,
        peaks: Vec<f64>,
        subject_id: String,
        group: &str,
        phase: &str,
        sample_rate_hz: f64,
    ) -> PyResult<Self> {
        let r = Record {
            subject_id,
            group: group.to_string(),
            phase: phase.to_string(),
            sample_rate_hz,
            samples,
            peaks,
        };
        let core = r.to_core()?;
        Ok(Self::from_core(&core))
    }

    fn __repr__(&self) -> String {
        format!(
            "Record(subject_id={:?}, group={:?}, phase={:?}, samples={}, peaks={})",
            self.subject_id,
            self.group,
            self.phase,
            self.samples.len(),
            self.peaks.len()
        )
    }
}

impl Record {
    fn from_core(r: &AnnotatedRecord) -> Self {
        Self {
            subject_id: r.record.subject_id.clone(),
            group: r.record.group.as_str().to_string(),
            phase: r.record.phase.as_str().to_string(),
            sample_rate_hz: r.record.sample_rate_hz(),
            samples: r.record.samples().to_vec(),
            peaks: r.peaks.times().to_vec(),
        }
    }

    fn to_core(&self) -> PyResult<AnnotatedRecord> {
        let group: Group = self.group.parse().map_err(py_err)?;
        let phase: Phase = self.phase.parse().map_err(py_err)?;
        let record = PpgRecord::new(self.samples.clone(), self.sample_rate_hz, &self.subject_id, group, phase)
            .map_err(py_err)?;
        let peaks = PeakList::new(self.peaks.clone()).map_err(py_err)?;
        Ok(AnnotatedRecord::new(record, peaks))
    }
}

/// Synthetic PPG record; returns a `Record` with ground-truth peak times.
#[pyfunction]
#[pyo3(signature = (duration_s=60.0, heart_rate_bpm=75.0, noise_std=0.0, seed=0, sample_rate_hz=200.0,
                    baseline_amplitude=0.0, artifact_rate_per_min=0.0, artifact_amplitude=0.0, notch_depth=0.4))]
#[allow(clippy::too_many_arguments)]
fn synth_record(
    duration_s: f64,
    heart_rate_bpm: f64,
    noise_std: f64,
    seed: u64,
    sample_rate_hz: f64,
    baseline_amplitude: f64,
    artifact_rate_per_min: f64,
    artifact_amplitude: f64,
    notch_depth: f64,
) -> PyResult<Record> {
    let cfg = SynthConfig {
        duration_s,
        heart_rate_bpm,
        noise_std,
        seed,
        sample_rate_hz,
        baseline_amplitude,
        artifact_rate_per_min,
        artifact_amplitude,
        notch_depth,
        ..SynthConfig::default()
    };
    let r = synth::synth_record(&cfg, "synth", Group::Healthy, Phase::Rest).map_err(py_err)?;
    Ok(Record::from_core(&r))
}

/// Multi-subject synthetic dataset, three phases per subject by default.
#[pyfunction]
#[pyo3(signature = (subjects=6, duration_s=60.0, clean=false, seed=1, phases=None))]
fn synth_suite(
    subjects: usize,
    duration_s: f64,
    clean: bool,
    seed: u64,
    phases: Option<Vec<String>>,
) -> PyResult<Vec<Record>> {
    let phases = match phases {
        Some(p) => p.iter().map(|s| s.parse::<Phase>()).collect::<Result<_, _>>().map_err(py_err)?,
        None => Phase::ALL.to_vec(),
    };
    let data = synth::synth_suite(&SuiteConfig {
        subjects,
        duration_s,
        clean,
        seed,
        phases,
        ..SuiteConfig::default()
    })
    .map_err(py_err)?;
    Ok(data.iter().map(Record::from_core).collect())
}

/// Butterworth bandpass, zero-phase by default.
#[pyfunction]
#[pyo3(signature = (signal, rate_hz=200.0, low_cut_hz=0.5, high_cut_hz=8.0, order=2, mode="zero-phase"))]
fn bandpass(signal: Vec<f64>, rate_hz: f64, low_cut_hz: f64, high_cut_hz: f64, order: usize, mode: &str) -> PyResult<Vec<f64>> {
    let spec = bandpass_spec(low_cut_hz, high_cut_hz, order, mode)?;
    filters::apply_bandpass(&spec, rate_hz, &signal).map_err(py_err)
}

/// Exponentially weighted moving average starting from zero.
#[pyfunction]
fn ewma(signal: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    filters::ewma_filter(alpha, &signal).map_err(py_err)
}

/// Trailing simple moving average.
#[pyfunction]
fn sma(signal: Vec<f64>, window: usize) -> PyResult<Vec<f64>> {
    filters::sma_filter(window, &signal).map_err(py_err)
}

/// Bandpass then SRMAC; returns the detected events.
#[pyfunction]
#[pyo3(signature = (signal, rate_hz=200.0, alpha_fast=0.85, alpha_slow=0.96, alpha_cross=0.8, threshold=0.0,
                    bandpass_mode="zero-phase"))]
fn detect_srmac(
    signal: Vec<f64>,
    rate_hz: f64,
    alpha_fast: f64,
    alpha_slow: f64,
    alpha_cross: f64,
    threshold: f64,
    bandpass_mode: &str,
) -> PyResult<Vec<PeakEvent>> {
    let spec = bandpass_spec(0.5, 8.0, 2, bandpass_mode)?;
    let filtered = filters::apply_bandpass(&spec, rate_hz, &signal).map_err(py_err)?;
    let params = core_srmac::SrmacParams {
        alpha_fast,
        alpha_slow,
        alpha_cross,
        threshold,
    };
    let events = core_srmac::detect_filtered(&params, &filtered, rate_hz).map_err(py_err)?;
    Ok(events.into_iter().map(Into::into).collect())
}

/// TERMA baseline; returns peak times in seconds.
#[pyfunction]
#[pyo3(signature = (signal, rate_hz=200.0, w1_ms=111.0, w2_ms=667.0, beta=0.02))]
fn detect_terma(signal: Vec<f64>, rate_hz: f64, w1_ms: f64, w2_ms: f64, beta: f64) -> PyResult<Vec<f64>> {
    let record = PpgRecord::new(signal, rate_hz, "input", Group::Healthy, Phase::Rest).map_err(py_err)?;
    let params = TermaParams { w1_ms, w2_ms, beta };
    let peaks = terma::detect_batch(&params, &record, &BandpassSpec::default()).map_err(py_err)?;
    Ok(peaks.times().to_vec())
}

/// `(tp, fp, fn)` for sorted detection and annotation times.
#[pyfunction]
#[pyo3(signature = (detected, annotated, tol_s=0.1))]
fn match_peaks(detected: Vec<f64>, annotated: Vec<f64>, tol_s: f64) -> PyResult<(usize, usize, usize)> {
    let c = metrics::match_times(&detected, &annotated, tol_s).map_err(py_err)?;
    Ok((c.tp, c.fp, c.fn_))
}

/// `(precision, recall, accuracy)` from confusion counts.
#[pyfunction]
fn compute_metrics(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let m = metrics::compute_metrics(&metrics::ConfusionCounts::new(tp, fp, fn_));
    (m.precision, m.recall, m.accuracy)
}

/// Leave-subject-out cross-validation; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (records, detector="srmac", budget=300, runs=30, points_per_dim=11, seed=0))]
fn crossval(
    records: Vec<PyRef<'_, Record>>,
    detector: &str,
    budget: usize,
    runs: usize,
    points_per_dim: usize,
    seed: u64,
) -> PyResult<String> {
    let kind: DetectorKind = detector.parse().map_err(py_err)?;
    let data = records.iter().map(|r| r.to_core()).collect::<PyResult<Vec<_>>>()?;
    let mut config = CvConfig::standard(kind);
    config.base_seed = seed;
    config.search = match kind {
        DetectorKind::Srmac => SearchConfig::Random { budget, runs },
        DetectorKind::Terma => SearchConfig::Grid { points_per_dim },
    };
    let (report, _) = run_lsocv(&data, &config).map_err(py_err)?;
    report.to_json().map_err(py_err)
}

#[pymodule]
fn srmac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PeakEvent>()?;
    m.add_class::<SrmacDetector>()?;
    m.add_class::<Record>()?;
    m.add_function(wrap_pyfunction!(synth_record, m)?)?;
    m.add_function(wrap_pyfunction!(synth_suite, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(ewma, m)?)?;
    m.add_function(wrap_pyfunction!(sma, m)?)?;
    m.add_function(wrap_pyfunction!(detect_srmac, m)?)?;
    m.add_function(wrap_pyfunction!(detect_terma, m)?)?;
    m.add_function(wrap_pyfunction!(match_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(crossval, m)?)?;
    Ok(())
}
