//! Synthetic PPG with exact systolic-peak annotations.
//!
//! Each beat is an asymmetric Gaussian systolic wave followed by a smaller
//! Gaussian diastolic wave. Baseline wander and a DC offset are part of the
//! clean waveform; white noise and motion-artifact bursts are added on top.
//! Annotations are the argmax of the clean waveform around each systolic
//! wave, so they are always sample-exact local maxima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AnnotatedRecord, Group, PeakList, Phase, PpgRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub heart_rate_bpm: f64,
    /// Heart rate at the end of the record; linear ramp from `heart_rate_bpm`.
    pub heart_rate_end_bpm: Option<f64>,
    /// Standard deviation of beat-to-beat interval jitter, seconds.
    pub rr_jitter_s: f64,
    pub pulse_amplitude: f64,
    /// Gaussian widths of the systolic upstroke and downstroke, seconds.
    pub systolic_rise_s: f64,
    pub systolic_fall_s: f64,
    /// Diastolic wave amplitude relative to the systolic one. At 0 there is
    /// no diastolic wave and no dicrotic notch: every beat is unimodal.
    pub notch_depth: f64,
    pub diastolic_delay_s: f64,
    pub diastolic_width_s: f64,
    pub baseline_amplitude: f64,
    pub baseline_freq_hz: f64,
    pub dc_offset: f64,
    pub noise_std: f64,
    /// Mean number of motion-artifact bursts per minute.
    pub artifact_rate_per_min: f64,
    pub artifact_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate_hz: 200.0,
            heart_rate_bpm: 75.0,
            heart_rate_end_bpm: None,
            rr_jitter_s: 0.0,
            pulse_amplitude: 1.0,
            systolic_rise_s: 0.07,
            systolic_fall_s: 0.12,
            notch_depth: 0.4,
            diastolic_delay_s: 0.3,
            diastolic_width_s: 0.08,
            baseline_amplitude: 0.0,
            baseline_freq_hz: 0.25,
            dc_offset: 0.0,
            noise_std: 0.0,
            artifact_rate_per_min: 0.0,
            artifact_amplitude: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("systolic_rise_s", self.systolic_rise_s),
            ("systolic_fall_s", self.systolic_fall_s),
            ("diastolic_width_s", self.diastolic_width_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("synth", format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("rr_jitter_s", self.rr_jitter_s),
            ("pulse_amplitude", self.pulse_amplitude),
            ("notch_depth", self.notch_depth),
            ("diastolic_delay_s", self.diastolic_delay_s),
            ("baseline_amplitude", self.baseline_amplitude),
            ("baseline_freq_hz", self.baseline_freq_hz),
            ("noise_std", self.noise_std),
            ("artifact_rate_per_min", self.artifact_rate_per_min),
            ("artifact_amplitude", self.artifact_amplitude),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("synth", format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::invalid("synth", "dc_offset must be finite"));
        }
        let rates = std::iter::once(self.heart_rate_bpm).chain(self.heart_rate_end_bpm);
        for hr in rates {
            if !(30.0..=220.0).contains(&hr) {
                return Err(Error::invalid("synth", format!("heart rate {hr} bpm outside [30, 220]")));
            }
        }
        Ok(())
    }

    fn heart_rate_at(&self, t: f64) -> f64 {
        match self.heart_rate_end_bpm {
            Some(end) => self.heart_rate_bpm + (end - self.heart_rate_bpm) * (t / self.duration_s).clamp(0.0, 1.0),
            None => self.heart_rate_bpm,
        }
    }
}

/// Generated record plus the clean waveform it was built from.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub samples: Vec<f64>,
    pub clean: Vec<f64>,
    pub peak_indices: Vec<usize>,
    /// Nominal systolic-wave centres, seconds (including beats cut by the edges).
    pub beat_times_s: Vec<f64>,
}

pub fn synthesize(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let fs = config.sample_rate_hz;
    let n = (config.duration_s * fs).round() as usize;
    if n < 2 {
        return Err(Error::invalid("synth", "record shorter than two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Beat centres, starting before t = 0 so the first visible beat is whole.
    let mut beats = Vec::new();
    let first_rr = 60.0 / config.heart_rate_at(0.0);
    let mut t = -first_rr + rng.random_range(0.0..first_rr);
    let jitter = Normal::new(0.0, config.rr_jitter_s.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid("synth", e.to_string()))?;
    while t < config.duration_s + 1.0 {
        beats.push(t);
        let rr = 60.0 / config.heart_rate_at(t.max(0.0));
        let dt = if config.rr_jitter_s > 0.0 {
            (rr + jitter.sample(&mut rng)).max(0.25 * rr)
        } else {
            rr
        };
        t += dt;
    }

    let mut clean = vec![config.dc_offset; n];
    let baseline_phase = rng.random_range(0.0..std::f64::consts::TAU);
    if config.baseline_amplitude > 0.0 {
        for (i, v) in clean.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v += config.baseline_amplitude
                * (std::f64::consts::TAU * config.baseline_freq_hz * t + baseline_phase).sin();
        }
    }
    let reach = 5.0 * config.systolic_rise_s.max(config.systolic_fall_s);
    let dia_reach = config.diastolic_delay_s + 5.0 * config.diastolic_width_s;
    for &c in &beats {
        let lo = (((c - reach) * fs).floor().max(0.0)) as usize;
        let hi = ((((c + reach.max(dia_reach)) * fs).ceil()).max(0.0) as usize).min(n);
        for (i, v) in clean.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs;
            *v += beat_shape(config, t - c);
        }
    }

    // Annotation: clean argmax within ±half the rise/fall support of each
    // systolic centre; beats whose maximum touches the search border or the
    // record edge are not annotated.
    let half = ((0.1 * fs).round() as usize).max(2);
    let mut peak_indices = Vec::new();
    for &c in &beats {
        let centre = (c * fs).round();
        if centre < 0.0 || centre >= n as f64 {
            continue;
        }
        let centre = centre as usize;
        let lo = centre.saturating_sub(half);
        let hi = (centre + half).min(n - 1);
        let mut best = lo;
        for i in lo..=hi {
            if clean[i] > clean[best] {
                best = i;
            }
        }
        if best == lo || best == hi || best == 0 || best == n - 1 {
            continue;
        }
        if peak_indices.last().is_some_and(|&p| p >= best) {
            continue;
        }
        peak_indices.push(best);
    }

    let mut samples = clean.clone();
    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid("synth", e.to_string()))?;
        for v in samples.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    if config.artifact_rate_per_min > 0.0 && config.artifact_amplitude > 0.0 {
        add_artifacts(config, &mut samples, &mut rng)?;
    }

    Ok(SynthOutput {
        samples,
        clean,
        peak_indices,
        beat_times_s: beats,
    })
}

fn beat_shape(config: &SynthConfig, dt: f64) -> f64 {
    let sys_width = if dt < 0.0 {
        config.systolic_rise_s
    } else {
        config.systolic_fall_s
    };
    let systolic = (-0.5 * (dt / sys_width).powi(2)).exp();
    let diastolic = if config.notch_depth > 0.0 {
        config.notch_depth * (-0.5 * ((dt - config.diastolic_delay_s) / config.diastolic_width_s).powi(2)).exp()
    } else {
        0.0
    };
    config.pulse_amplitude * (systolic + diastolic)
}

/// Hann-windowed sinusoidal bursts at Poisson-distributed onsets.
fn add_artifacts(config: &SynthConfig, samples: &mut [f64], rng: &mut ChaCha8Rng) -> Result<()> {
    let fs = config.sample_rate_hz;
    let n = samples.len();
    let gap = Exp::new(config.artifact_rate_per_min / 60.0).map_err(|e| Error::invalid("synth", e.to_string()))?;
    let mut onset = gap.sample(rng);
    while onset < config.duration_s {
        let duration = rng.random_range(0.8..2.5);
        let freq = rng.random_range(1.0..4.0);
        let amp = config.artifact_amplitude * rng.random_range(0.5..1.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let start = (onset * fs) as usize;
        let len = (duration * fs) as usize;
        for k in 0..len {
            let i = start + k;
            if i >= n {
                break;
            }
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / len as f64).cos();
            samples[i] += amp * w * (std::f64::consts::TAU * freq * k as f64 / fs + phase).sin();
        }
        onset += duration + gap.sample(rng);
    }
    Ok(())
}

/// Generates a record and its ground-truth peaks.
pub fn synth_record(
    config: &SynthConfig,
    subject_id: &str,
    group: Group,
    phase: Phase,
) -> Result<AnnotatedRecord> {
    let out = synthesize(config)?;
    let record = PpgRecord::new(out.samples, config.sample_rate_hz, subject_id, group, phase)?;
    let peaks = PeakList::from_indices(&out.peak_indices, config.sample_rate_hz)?;
    Ok(AnnotatedRecord::new(record, peaks))
}

/// Parameters for a multi-subject synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub subjects: usize,
    pub phases: Vec<Phase>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// No noise, wander or artifacts in any phase.
    pub clean: bool,
    /// Motion-artifact bursts per minute in the Walking phase.
    pub walking_artifact_rate_per_min: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            subjects: 6,
            phases: Phase::ALL.to_vec(),
            duration_s: 60.0,
            sample_rate_hz: 200.0,
            clean: false,
            walking_artifact_rate_per_min: 6.0,
            seed: 1,
        }
    }
}

/// Subjects alternate morphology and heart rate; the first half is Healthy,
/// the rest COPD. Subject ids are `H01`, `H02`, … and `C01`, `C02`, ….
pub fn synth_suite(config: &SuiteConfig) -> Result<Vec<AnnotatedRecord>> {
    if config.subjects == 0 {
        return Err(Error::invalid("subjects", "need at least one subject"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let healthy = config.subjects.div_ceil(2);
    let mut out = Vec::new();
    for s in 0..config.subjects {
        let (group, id) = if s < healthy {
            (Group::Healthy, format!("H{:02}", s + 1))
        } else {
            (Group::Copd, format!("C{:02}", s - healthy + 1))
        };
        let rest_hr = rng.random_range(60.0..85.0);
        let amplitude = rng.random_range(0.5..2.0);
        let rise = rng.random_range(0.05..0.09);
        let fall = rng.random_range(0.10..0.16);
        let notch = rng.random_range(0.2..0.5);
        let delay = rng.random_range(0.25..0.35);
        for &phase in &config.phases {
            let (hr, hr_end, noise, wander, artifacts) = match phase {
                Phase::Rest => (rest_hr, rest_hr, 0.01, 0.1, 0.0),
                Phase::Walking => (rest_hr + 30.0, rest_hr + 40.0, 0.03, 0.3, config.walking_artifact_rate_per_min),
                Phase::Recovery => (rest_hr + 25.0, rest_hr + 10.0, 0.01, 0.15, 0.0),
            };
            let scale = |v: f64| if config.clean { 0.0 } else { v };
            let cfg = SynthConfig {
                duration_s: config.duration_s,
                sample_rate_hz: config.sample_rate_hz,
                heart_rate_bpm: hr,
                heart_rate_end_bpm: Some(hr_end),
                rr_jitter_s: 0.02,
                pulse_amplitude: amplitude,
                systolic_rise_s: rise,
                systolic_fall_s: fall,
                notch_depth: notch,
                // the diastolic wave moves closer at high heart rates
                diastolic_delay_s: delay * (75.0 / hr).sqrt(),
                diastolic_width_s: 0.08,
                baseline_amplitude: scale(wander * amplitude),
                baseline_freq_hz: rng.random_range(0.15..0.35),
                dc_offset: rng.random_range(-50.0..50.0),
                noise_std: scale(noise * amplitude),
                artifact_rate_per_min: scale(artifacts),
                artifact_amplitude: scale(1.5 * amplitude),
                seed: rng.random(),
            };
            out.push(synth_record(&cfg, &id, group, phase)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_75_bpm_minute() {
        let out = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(out.samples.len(), 12000);
        assert!((74..=76).contains(&out.peak_indices.len()), "{}", out.peak_indices.len());
        for w in out.peak_indices.windows(2) {
            let rr = (w[1] - w[0]) as f64 / 200.0;
            assert!((rr - 0.8).abs() <= 0.0051, "{rr}");
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            noise_std: 0.05,
            rr_jitter_s: 0.03,
            artifact_rate_per_min: 5.0,
            artifact_amplitude: 1.0,
            seed: 99,
            ..SynthConfig::default()
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.peak_indices, b.peak_indices);
        let c = synthesize(&SynthConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_notch_is_unimodal() {
        let cfg = SynthConfig {
            notch_depth: 0.0,
            heart_rate_bpm: 50.0,
            ..SynthConfig::default()
        };
        let out = synthesize(&cfg).unwrap();
        // between consecutive peaks the clean signal falls then rises exactly once
        for w in out.peak_indices.windows(2) {
            let seg = &out.clean[w[0]..=w[1]];
            let turns = seg
                .windows(3)
                .filter(|t| (t[1] - t[0]) * (t[2] - t[1]) < 0.0)
                .count();
            assert_eq!(turns, 1);
        }
    }

    #[test]
    fn annotations_are_local_maxima_of_clean_wave() {
        let cfg = SynthConfig {
            baseline_amplitude: 0.3,
            rr_jitter_s: 0.05,
            noise_std: 0.1,
            seed: 5,
            ..SynthConfig::default()
        };
        let out = synthesize(&cfg).unwrap();
        for &p in &out.peak_indices {
            assert!(out.clean[p] >= out.clean[p - 1] && out.clean[p] >= out.clean[p + 1]);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            SynthConfig {
                heart_rate_bpm: 20.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                heart_rate_end_bpm: Some(250.0),
                ..SynthConfig::default()
            },
            SynthConfig {
                noise_std: -1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                duration_s: 0.0,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(synthesize(&cfg).is_err());
        }
    }

    #[test]
    fn suite_layout() {
        let suite = synth_suite(&SuiteConfig {
            subjects: 4,
            duration_s: 10.0,
            ..SuiteConfig::default()
        })
        .unwrap();
        assert_eq!(suite.len(), 12);
        let ids: Vec<&str> = suite.iter().map(|r| r.record.subject_id.as_str()).collect();
        assert_eq!(&ids[..3], &["H01", "H01", "H01"]);
        assert_eq!(ids[11], "C02");
        assert_eq!(suite[11].record.group, Group::Copd);
    }
}
