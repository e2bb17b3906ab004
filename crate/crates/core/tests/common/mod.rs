#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srmac_core::signal::{AnnotatedRecord, Group, Phase};
use srmac_core::synth::{synth_record, SynthConfig};

/// Size of a maximum one-to-one matching where detection `d` may pair with
/// annotation `a` iff `|a − d| < tol`, by exhaustive search over subsets.
pub fn brute_force_tp(detected: &[f64], annotated: &[f64], tol: f64) -> usize {
    assert!(annotated.len() <= 16);
    let mut memo = vec![vec![usize::MAX; 1 << annotated.len()]; detected.len() + 1];
    fn go(i: usize, used: usize, det: &[f64], ann: &[f64], tol: f64, memo: &mut [Vec<usize>]) -> usize {
        if i == det.len() {
            return 0;
        }
        if memo[i][used] != usize::MAX {
            return memo[i][used];
        }
        let mut best = go(i + 1, used, det, ann, tol, memo);
        for (j, &a) in ann.iter().enumerate() {
            if used & (1 << j) == 0 && (a - det[i]).abs() < tol {
                best = best.max(1 + go(i + 1, used | (1 << j), det, ann, tol, memo));
            }
        }
        memo[i][used] = best;
        best
    }
    go(0, 0, detected, annotated, tol, &mut memo)
}

/// Strictly increasing random times; half the time on the 200 Hz sample
/// grid so that exact tolerance boundaries occur.
pub fn random_times(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<f64> {
    let n = rng.random_range(0..=max_len);
    let on_grid = rng.random_bool(0.5);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            if on_grid {
                rng.random_range(0..300usize) as f64 / 200.0
            } else {
                rng.random_range(0.0..1.5)
            }
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// A noisy synthetic record with randomized rate and morphology.
pub fn random_record(seed: u64, duration_s: f64) -> AnnotatedRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SynthConfig {
        duration_s,
        heart_rate_bpm: rng.random_range(50.0..130.0),
        rr_jitter_s: rng.random_range(0.0..0.05),
        pulse_amplitude: rng.random_range(0.2..3.0),
        notch_depth: rng.random_range(0.0..0.6),
        baseline_amplitude: rng.random_range(0.0..0.5),
        dc_offset: rng.random_range(-100.0..100.0),
        noise_std: rng.random_range(0.0..0.1),
        artifact_rate_per_min: rng.random_range(0.0..4.0),
        artifact_amplitude: rng.random_range(0.0..2.0),
        seed: rng.random(),
        ..SynthConfig::default()
    };
    synth_record(&cfg, &format!("R{seed:03}"), Group::Healthy, Phase::Rest).unwrap()
}
