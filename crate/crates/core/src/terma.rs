//! TERMA baseline detector (two event-related moving averages).
//!
//! Pipeline: zero-phase bandpass, clip negative samples to zero, square, then
//! compare a short "peak" moving average against a long "beat" moving average
//! offset by `β·mean(z)`. Runs where the peak average is above the threshold
//! are blocks of interest; blocks narrower than the peak window are dropped
//! and each remaining block yields the maximum of the bandpassed signal.
//!
//! Both moving averages are centered, so this detector is batch-only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_bandpass, centered_moving_average, BandpassSpec, FilterMode};
use crate::signal::{PeakList, PpgRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermaParams {
    /// Peak window, milliseconds.
    pub w1_ms: f64,
    /// Beat window, milliseconds.
    pub w2_ms: f64,
    /// Threshold offset as a fraction of mean(z).
    pub beta: f64,
}

impl Default for TermaParams {
    fn default() -> Self {
        Self {
            w1_ms: 111.0,
            w2_ms: 667.0,
            beta: 0.02,
        }
    }
}

impl TermaParams {
    pub const NAMES: [&'static str; 3] = ["w1_ms", "w2_ms", "beta"];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [w1_ms, w2_ms, beta] => Ok(Self { w1_ms, w2_ms, beta }),
            _ => Err(Error::invalid("params", format!("TERMA takes 3 parameters, got {}", v.len()))),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.w1_ms, self.w2_ms, self.beta]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1_ms.is_finite() && self.w2_ms.is_finite() && self.beta.is_finite()) {
            return Err(Error::invalid("params", "TERMA parameters must be finite"));
        }
        if self.w1_ms >= self.w2_ms {
            return Err(Error::invalid(
                "params",
                format!("w1_ms ({}) must be below w2_ms ({})", self.w1_ms, self.w2_ms),
            ));
        }
        Ok(())
    }

    /// Window lengths in samples at `rate_hz`.
    pub fn windows(&self, rate_hz: f64) -> Result<(usize, usize)> {
        Ok((window_samples(self.w1_ms, rate_hz)?, window_samples(self.w2_ms, rate_hz)?))
    }
}

/// Nearest whole number of samples covering `ms` milliseconds.
pub fn window_samples(ms: f64, rate_hz: f64) -> Result<usize> {
    let n = (ms * rate_hz / 1000.0).round();
    if !(n >= 1.0) {
        return Err(Error::invalid("window", format!("{ms} ms rounds to zero samples at {rate_hz} Hz")));
    }
    Ok(n as usize)
}

/// Clip negatives to zero, then square.
pub fn clip_square(filtered: &[f64]) -> Vec<f64> {
    filtered.iter().map(|&v| if v > 0.0 { v * v } else { 0.0 }).collect()
}

/// Bandpassed signal and its clipped-squared energy, reusable across many
/// parameter evaluations.
#[derive(Debug, Clone)]
pub struct TermaInput {
    pub filtered: Vec<f64>,
    pub z: Vec<f64>,
    pub mean_z: f64,
    pub rate_hz: f64,
    prefix: Vec<f64>,
}

impl TermaInput {
    pub fn from_filtered(filtered: Vec<f64>, rate_hz: f64) -> Self {
        let z = clip_square(&filtered);
        let mut prefix = Vec::with_capacity(z.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &v in &z {
            acc += v;
            prefix.push(acc);
        }
        let mean_z = if z.is_empty() { 0.0 } else { acc / z.len() as f64 };
        Self {
            filtered,
            z,
            mean_z,
            rate_hz,
            prefix,
        }
    }

    /// Applies the bandpass (always forward-backward, whatever `bandpass.mode` says).
    /// Centered mean of `z` at `i`, same window convention as
    /// [`centered_moving_average`].
    #[inline]
    fn centered_mean(&self, i: usize, window: usize) -> f64 {
        let back = window / 2;
        let ahead = window - 1 - back;
        let lo = i.saturating_sub(back);
        let hi = (i + ahead + 1).min(self.z.len());
        (self.prefix[hi] - self.prefix[lo]) / (hi - lo) as f64
    }

    pub fn prepare(record: &PpgRecord, bandpass: &BandpassSpec) -> Result<Self> {
        let spec = BandpassSpec {
            mode: FilterMode::ZeroPhase,
            ..*bandpass
        };
        let filtered = apply_bandpass(&spec, record.sample_rate_hz(), record.samples())?;
        Ok(Self::from_filtered(filtered, record.sample_rate_hz()))
    }
}

pub fn terma_preprocess(record: &PpgRecord, bandpass: &BandpassSpec) -> Result<Vec<f64>> {
    Ok(TermaInput::prepare(record, bandpass)?.z)
}

/// A block of interest, `[start, end)` in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
}

impl Block {
    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermaTrace {
    pub z: Vec<f64>,
    pub ma_peak: Vec<f64>,
    pub ma_beat: Vec<f64>,
    pub threshold: Vec<f64>,
}

/// Core block logic on prepared input with explicit window lengths. Does not
/// require `w1 < w2`.
pub fn detect_blocks(input: &TermaInput, w1: usize, w2: usize, beta: f64) -> Result<Vec<Block>> {
    if w1 == 0 || w2 == 0 {
        return Err(Error::invalid("window", "must hold at least one sample"));
    }
    let offset = beta * input.mean_z;

    let mut blocks = Vec::new();
    let mut start: Option<usize> = None;
    let n = input.z.len();
    for i in 0..=n {
        let above = i < n && input.centered_mean(i, w1) > input.centered_mean(i, w2) + offset;
        match (above, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                start = None;
                if i - s >= w1 {
                    blocks.push(Block {
                        start: s,
                        end: i,
                        peak: argmax(&input.filtered[s..i]) + s,
                    });
                }
            }
            _ => {}
        }
    }
    Ok(blocks)
}

/// Intermediate signals of the block detector, for plotting.
pub fn trace(params: &TermaParams, input: &TermaInput) -> Result<TermaTrace> {
    let (w1, w2) = params.windows(input.rate_hz)?;
    let ma_peak = centered_moving_average(w1, &input.z)?;
    let ma_beat = centered_moving_average(w2, &input.z)?;
    let offset = params.beta * input.mean_z;
    let threshold = ma_beat.iter().map(|b| b + offset).collect();
    Ok(TermaTrace {
        z: input.z.clone(),
        ma_peak,
        ma_beat,
        threshold,
    })
}

/// First index of the largest value.
fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

pub fn detect_prepared(params: &TermaParams, input: &TermaInput) -> Result<Vec<Block>> {
    params.validate()?;
    let (w1, w2) = params.windows(input.rate_hz)?;
    detect_blocks(input, w1, w2, params.beta)
}

pub fn detect_batch(params: &TermaParams, record: &PpgRecord, bandpass: &BandpassSpec) -> Result<PeakList> {
    params.validate()?;
    params.windows(record.sample_rate_hz())?;
    let input = TermaInput::prepare(record, bandpass)?;
    let blocks = detect_prepared(params, &input)?;
    let indices: Vec<usize> = blocks.iter().map(|b| b.peak).collect();
    PeakList::from_indices(&indices, record.sample_rate_hz())
}
