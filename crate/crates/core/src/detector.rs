//! Detector selection and fitness evaluation over annotated records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_bandpass, BandpassSpec, FilterMode};
use crate::metrics::{compute_metrics, match_peaks, ConfusionCounts};
use crate::signal::{AnnotatedRecord, Group, PeakList, Phase};
use crate::srmac::{self, SrmacParams};
use crate::terma::{self, TermaInput, TermaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Srmac,
    Terma,
}

impl DetectorKind {
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            DetectorKind::Srmac => &SrmacParams::NAMES,
            DetectorKind::Terma => &TermaParams::NAMES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Srmac => "srmac",
            DetectorKind::Terma => "terma",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srmac" => Ok(DetectorKind::Srmac),
            "terma" => Ok(DetectorKind::Terma),
            other => Err(Error::invalid("detector", format!("unknown detector `{other}`"))),
        }
    }
}

/// Parameters for either detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "lowercase")]
pub enum DetectorParams {
    Srmac(SrmacParams),
    Terma(TermaParams),
}

impl DetectorParams {
    pub fn from_slice(kind: DetectorKind, v: &[f64]) -> Result<Self> {
        Ok(match kind {
            DetectorKind::Srmac => DetectorParams::Srmac(SrmacParams::from_slice(v)?),
            DetectorKind::Terma => DetectorParams::Terma(TermaParams::from_slice(v)?),
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorParams::Srmac(_) => DetectorKind::Srmac,
            DetectorParams::Terma(_) => DetectorKind::Terma,
        }
    }
}

/// A record with its bandpassed signal cached, ready for repeated detection.
#[derive(Debug, Clone)]
pub struct PreparedRecord {
    pub subject_id: String,
    pub group: Group,
    pub phase: Phase,
    pub rate_hz: f64,
    pub annotations: PeakList,
    srmac_input: Vec<f64>,
    terma_input: Option<TermaInput>,
}

impl PreparedRecord {
    pub fn new(kind: DetectorKind, rec: &AnnotatedRecord, bandpass: &BandpassSpec) -> Result<Self> {
        let r = &rec.record;
        let (srmac_input, terma_input) = match kind {
            DetectorKind::Srmac => (apply_bandpass(bandpass, r.sample_rate_hz(), r.samples())?, None),
            DetectorKind::Terma => (Vec::new(), Some(TermaInput::prepare(r, bandpass)?)),
        };
        Ok(Self {
            subject_id: r.subject_id.clone(),
            group: r.group,
            phase: r.phase,
            rate_hz: r.sample_rate_hz(),
            annotations: rec.peaks.clone(),
            srmac_input,
            terma_input,
        })
    }

    pub fn detect(&self, params: &DetectorParams) -> Result<PeakList> {
        match (params, &self.terma_input) {
            (DetectorParams::Srmac(p), _) => {
                if self.srmac_input.is_empty() {
                    return Err(Error::invalid("params", "record was prepared for TERMA"));
                }
                let events = srmac::detect_filtered(p, &self.srmac_input, self.rate_hz)?;
                srmac::events_to_peaks(&events, self.rate_hz)
            }
            (DetectorParams::Terma(p), Some(input)) => {
                let blocks = terma::detect_prepared(p, input)?;
                let idx: Vec<usize> = blocks.iter().map(|b| b.peak).collect();
                PeakList::from_indices(&idx, self.rate_hz)
            }
            (DetectorParams::Terma(_), None) => Err(Error::invalid("params", "record was prepared for SRMAC")),
        }
    }

    pub fn counts(&self, params: &DetectorParams, tol_s: f64) -> Result<ConfusionCounts> {
        match_peaks(&self.detect(params)?, &self.annotations, tol_s)
    }
}

/// Evaluates parameter vectors against a fixed set of prepared records.
#[derive(Debug, Clone)]
pub struct Evaluator {
    kind: DetectorKind,
    tolerance_s: f64,
    records: Vec<PreparedRecord>,
}

impl Evaluator {
    pub fn new(
        kind: DetectorKind,
        records: &[AnnotatedRecord],
        bandpass: &BandpassSpec,
        tolerance_s: f64,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let records = records
            .par_iter()
            .map(|r| PreparedRecord::new(kind, r, bandpass))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            tolerance_s,
            records,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn records(&self) -> &[PreparedRecord] {
        &self.records
    }

    pub fn params(&self, v: &[f64]) -> Result<DetectorParams> {
        DetectorParams::from_slice(self.kind, v)
    }

    pub fn counts(&self, params: &DetectorParams, record: usize) -> Result<ConfusionCounts> {
        self.records[record].counts(params, self.tolerance_s)
    }

    /// Pooled accuracy over the records at `subset`.
    pub fn fitness(&self, params: &[f64], subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::invalid("train", "fitness needs at least one record"));
        }
        let p = self.params(params)?;
        let mut total = ConfusionCounts::default();
        for &i in subset {
            total = total + self.counts(&p, i)?;
        }
        Ok(compute_metrics(&total).accuracy)
    }
}

/// Pooled accuracy of `params` over `train`.
///
/// Deterministic; detector errors are returned, never scored as zero.
pub fn evaluate_fitness(
    kind: DetectorKind,
    params: &[f64],
    train: &[AnnotatedRecord],
    bandpass: &BandpassSpec,
    tolerance_s: f64,
) -> Result<f64> {
    let eval = Evaluator::new(kind, train, bandpass, tolerance_s)?;
    let all: Vec<usize> = (0..train.len()).collect();
    eval.fitness(params, &all)
}

/// Runs the selected detector on one record end to end.
pub fn detect(params: &DetectorParams, record: &crate::signal::PpgRecord, bandpass: &BandpassSpec) -> Result<PeakList> {
    match params {
        DetectorParams::Srmac(p) => srmac::detect_batch(p, record, bandpass),
        DetectorParams::Terma(p) => terma::detect_batch(
            p,
            record,
            &BandpassSpec {
                mode: FilterMode::ZeroPhase,
                ..*bandpass
            },
        ),
    }
}
