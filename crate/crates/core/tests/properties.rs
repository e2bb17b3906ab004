mod common;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use srmac_core::crossval::{run_lsocv, CvConfig, SearchConfig};
use srmac_core::dataset::{load_dataset, DatasetLayout};
use srmac_core::detector::DetectorKind;
use srmac_core::filters::{apply_bandpass, BandpassSpec};
use srmac_core::signal::Phase;
use srmac_core::srmac::{detect_filtered, SrmacParams};
use srmac_core::synth::{synth_suite, SuiteConfig};

// Keeps the timing test from sharing the CPU with the cross-validation test.
static SERIAL: Mutex<()> = Mutex::new(());

fn best_time(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn detection_cost_is_linear_in_length() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let long = common::random_record(1, 600.0).record;
    let filtered = apply_bandpass(&BandpassSpec::default(), 200.0, long.samples()).unwrap();
    let short = &filtered[..filtered.len() / 10];
    let p = SrmacParams {
        alpha_fast: 0.85,
        alpha_slow: 0.96,
        alpha_cross: 0.8,
        threshold: 1e-4,
    };
    let run = |x: &[f64]| {
        std::hint::black_box(detect_filtered(&p, std::hint::black_box(x), 200.0).unwrap());
    };
    // Repeat the short input ten times so both measurements span similar wall time.
    let t_short = best_time(15, || (0..10).for_each(|_| run(short)));
    let t_long = best_time(15, || run(&filtered));
    let ratio = t_long.as_secs_f64() / t_short.as_secs_f64();
    assert!((0.8..=1.2).contains(&ratio), "10x input took {ratio:.3} x (10 short runs)");
}

#[test]
fn crossval_on_a_dataset_written_to_disk() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let data = synth_suite(&SuiteConfig {
        subjects: 3,
        phases: vec![Phase::Rest, Phase::Walking],
        duration_s: 15.0,
        seed: 3,
        ..SuiteConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    DatasetLayout::new(dir.path()).save_dataset(&data).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.len(), data.len());

    let mut config = CvConfig::standard(DetectorKind::Srmac);
    config.search = SearchConfig::Random { budget: 30, runs: 2 };
    let (from_disk, _) = run_lsocv(&loaded, &config).unwrap();
    let (in_memory, _) = run_lsocv(&data, &config).unwrap();
    assert_eq!(from_disk.folds.len(), 3);
    assert_eq!(from_disk.metadata.records, 6);
    assert!((from_disk.overall.accuracy.mean - in_memory.overall.accuracy.mean).abs() < 1e-3);
}
