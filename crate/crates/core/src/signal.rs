//! Core domain types: recordings, peak lists and their metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate of the reference dataset.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Healthy,
    #[serde(rename = "COPD")]
    Copd,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Healthy, Group::Copd];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Healthy => "Healthy",
            Group::Copd => "COPD",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    /// Accepts the dataset directory names as well as the display names.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "healthy" => Ok(Group::Healthy),
            "copd" | "not-healthy" | "not_healthy" | "nothealthy" | "unhealthy" => Ok(Group::Copd),
            other => Err(Error::invalid("group", format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Rest,
    Walking,
    Recovery,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Rest, Phase::Walking, Phase::Recovery];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Rest => "Rest",
            Phase::Walking => "Walking",
            Phase::Recovery => "Recovery",
        }
    }

    /// Directory name used on disk. Walking is stored under `balke`.
    pub fn dir_name(self) -> &'static str {
        match self {
            Phase::Rest => "rest",
            Phase::Walking => "balke",
            Phase::Recovery => "recovery",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rest" => Ok(Phase::Rest),
            "balke" | "walking" | "walk" => Ok(Phase::Walking),
            "recovery" => Ok(Phase::Recovery),
            other => Err(Error::invalid("phase", format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupPhaseKey {
    pub group: Group,
    pub phase: Phase,
}

impl GroupPhaseKey {
    /// All six group/phase combinations, group-major.
    pub fn all() -> impl Iterator<Item = GroupPhaseKey> {
        Group::ALL
            .into_iter()
            .flat_map(|group| Phase::ALL.into_iter().map(move |phase| GroupPhaseKey { group, phase }))
    }
}

/// One subject/phase recording.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgRecord {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    pub subject_id: String,
    pub group: Group,
    pub phase: Phase,
}

impl PpgRecord {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        subject_id: impl Into<String>,
        group: Group,
        phase: Phase,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        check_finite(&samples)?;
        check_rate(sample_rate_hz)?;
        Ok(Self {
            samples,
            sample_rate_hz,
            subject_id: subject_id.into(),
            group,
            phase,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        record_duration_s(self)
    }

    pub fn key(&self) -> GroupPhaseKey {
        GroupPhaseKey {
            group: self.group,
            phase: self.phase,
        }
    }
}

pub fn record_duration_s(record: &PpgRecord) -> f64 {
    record.samples.len() as f64 / record.sample_rate_hz
}

pub fn index_to_time(index: usize, rate_hz: f64) -> f64 {
    index as f64 / rate_hz
}

/// Inverse of [`index_to_time`], rounding to the nearest sample.
pub fn time_to_index(time_s: f64, rate_hz: f64) -> usize {
    (time_s * rate_hz).round().max(0.0) as usize
}

/// Ordered peak times in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PeakList {
    times_s: Vec<f64>,
}

impl PeakList {
    pub fn new(times_s: Vec<f64>) -> Result<Self> {
        for (i, &t) in times_s.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::UnsortedPeaks { position: i });
            }
            if i > 0 && t <= times_s[i - 1] {
                return Err(Error::UnsortedPeaks { position: i });
            }
        }
        Ok(Self { times_s })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a peak list from strictly increasing sample indices.
    pub fn from_indices(indices: &[usize], rate_hz: f64) -> Result<Self> {
        check_rate(rate_hz)?;
        Self::new(indices.iter().map(|&i| index_to_time(i, rate_hz)).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn to_indices(&self, rate_hz: f64) -> Vec<usize> {
        self.times_s.iter().map(|&t| time_to_index(t, rate_hz)).collect()
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }
}

impl TryFrom<Vec<f64>> for PeakList {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PeakList::new(v)
    }
}

impl From<PeakList> for Vec<f64> {
    fn from(p: PeakList) -> Self {
        p.times_s
    }
}

/// A recording paired with its reference annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecord {
    pub record: PpgRecord,
    pub peaks: PeakList,
}

impl AnnotatedRecord {
    pub fn new(record: PpgRecord, peaks: PeakList) -> Self {
        Self { record, peaks }
    }
}

pub(crate) fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_rate(rate_hz: f64) -> Result<()> {
    if rate_hz.is_finite() && rate_hz > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("sample_rate_hz", format!("must be positive, got {rate_hz}")))
    }
}
