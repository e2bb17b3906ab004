//! `srmac` command-line tool: detect peaks, score detections, search
//! parameters and run leave-subject-out cross-validation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use srmac_core::crossval::{run_lsocv, CvConfig, SearchConfig, DEFAULT_CHECKPOINTS};
use srmac_core::dataset::{read_annotations, CsvColumnParser, DatasetLayout, DatasetSummary, SignalParser};
use srmac_core::detector::{DetectorKind, DetectorParams, Evaluator};
use srmac_core::filters::{apply_bandpass, BandpassSpec, FilterMode};
use srmac_core::metrics::{match_peaks, ConfusionCounts, Metrics, DEFAULT_TOLERANCE_S};
use srmac_core::optimize::{grid_search, random_search, Execution, SearchSpace};
use srmac_core::signal::{AnnotatedRecord, Group, PeakList, Phase, PpgRecord, DEFAULT_SAMPLE_RATE_HZ};
use srmac_core::srmac::{self, SrmacParams};
use srmac_core::synth::{synth_record, synth_suite, SuiteConfig, SynthConfig};
use srmac_core::terma::{self, TermaInput, TermaParams};

#[derive(Parser)]
#[command(name = "srmac", version, about = "PPG systolic-peak detection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect peaks in one signal and print their times in seconds.
    Detect(DetectArgs),
    /// Match detections against annotations and print precision and recall.
    Evaluate(EvaluateArgs),
    /// Search detector parameters on a whole dataset.
    Optimize(SearchArgs),
    /// Leave-subject-out cross-validation; writes report JSON and CSV tables.
    Crossval(SearchArgs),
    /// Write a synthetic dataset in the on-disk layout.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Detector {
    Srmac,
    Terma,
}

impl From<Detector> for DetectorKind {
    fn from(d: Detector) -> Self {
        match d {
            Detector::Srmac => DetectorKind::Srmac,
            Detector::Terma => DetectorKind::Terma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BandpassMode {
    Causal,
    ZeroPhase,
}

impl From<BandpassMode> for FilterMode {
    fn from(m: BandpassMode) -> Self {
        match m {
            BandpassMode::Causal => FilterMode::Causal,
            BandpassMode::ZeroPhase => FilterMode::ZeroPhase,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Units {
    Seconds,
    Indices,
}

#[derive(Clone, Copy, ValueEnum)]
enum Search {
    Random,
    Grid,
}

#[derive(Args)]
struct BandpassArgs {
    #[arg(long, value_enum, default_value = "zero-phase")]
    bandpass_mode: BandpassMode,
    #[arg(long, default_value_t = 0.5)]
    low_cut: f64,
    #[arg(long, default_value_t = 8.0)]
    high_cut: f64,
    #[arg(long, default_value_t = 2)]
    filter_order: usize,
}

impl BandpassArgs {
    fn spec(&self) -> BandpassSpec {
        BandpassSpec {
            low_cut_hz: self.low_cut,
            high_cut_hz: self.high_cut,
            order: self.filter_order,
            mode: self.bandpass_mode.into(),
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Signal CSV (one sample per line, optional header).
    #[arg(required_unless_present = "synth", conflicts_with = "synth")]
    input: Option<PathBuf>,
    /// Use a synthetic record instead of a file.
    #[arg(long)]
    synth: bool,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 75.0)]
    bpm: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "srmac")]
    detector: Detector,
    /// Comma-separated parameters: alpha_fast,alpha_slow,alpha_cross,threshold
    /// for SRMAC or w1_ms,w2_ms,beta for TERMA. Defaults per detector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    #[command(flatten)]
    bandpass: BandpassArgs,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    rate: f64,
    /// Zero-based column of the signal file to read.
    #[arg(long, default_value_t = 0)]
    column: usize,
    /// Print sample indices instead of seconds.
    #[arg(long, value_enum, default_value = "seconds")]
    units: Units,
    /// Write per-sample intermediate signals as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detected peaks, one per line.
    detections: PathBuf,
    /// Annotated peaks, one per line.
    annotations: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_S)]
    tol: f64,
    /// Units of both files.
    #[arg(long, value_enum, default_value = "seconds")]
    units: Units,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    rate: f64,
    /// Also write the result as JSON ("-" for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset root in the healthy|not-healthy / rest|balke|recovery layout.
    #[arg(long, env = "SRMAC_DATASET")]
    dataset: Option<PathBuf>,
    /// Use a generated dataset (takes precedence over --dataset).
    #[arg(long)]
    synth_suite: bool,
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// No noise, wander or artifacts in the generated dataset.
    #[arg(long)]
    clean: bool,
    /// Phases to generate or keep (comma-separated).
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    suite_seed: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    column: usize,
}

impl DataArgs {
    fn phases(&self) -> Result<Option<Vec<Phase>>> {
        self.phases
            .as_ref()
            .map(|v| v.iter().map(|p| p.parse::<Phase>().map_err(Into::into)).collect())
            .transpose()
    }

    fn load(&self) -> Result<Vec<AnnotatedRecord>> {
        let phases = self.phases()?;
        let data = if self.synth_suite {
            synth_suite(&SuiteConfig {
                subjects: self.subjects,
                phases: phases.clone().unwrap_or_else(|| Phase::ALL.to_vec()),
                duration_s: self.duration,
                sample_rate_hz: self.rate,
                clean: self.clean,
                seed: self.suite_seed,
                ..SuiteConfig::default()
            })?
        } else {
            let Some(root) = &self.dataset else {
                bail!("no dataset: pass --dataset, set SRMAC_DATASET, or use --synth-suite");
            };
            let mut layout = DatasetLayout::new(root);
            layout.sample_rate_hz = self.rate;
            let mut data = layout
                .load_with(&CsvColumnParser { column: self.column })
                .with_context(|| format!("loading dataset {}", root.display()))?;
            if let Some(p) = &phases {
                data.retain(|r| p.contains(&r.record.phase));
            }
            data
        };
        if data.is_empty() {
            bail!("dataset is empty");
        }
        let s = DatasetSummary::of(&data);
        log::info!(
            "{} subjects, {} records, {:.1} min, {} peaks",
            s.subjects,
            s.records,
            s.minutes,
            s.peaks
        );
        Ok(data)
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "srmac")]
    detector: Detector,
    /// Defaults to random for SRMAC and grid for TERMA.
    #[arg(long, value_enum)]
    search: Option<Search>,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 300)]
    budget: usize,
    #[arg(long, default_value_t = 11)]
    points_per_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Upper (exclusive) bound of the SRMAC threshold search interval.
    #[arg(long)]
    max_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_S)]
    tol: f64,
    #[command(flatten)]
    bandpass: BandpassArgs,
    /// Output directory.
    #[arg(long, default_value = "srmac-out")]
    out: PathBuf,
    /// Also write every evaluation of every search.
    #[arg(long)]
    histories: bool,
    /// Evaluate on one thread.
    #[arg(long)]
    serial: bool,
}

impl SearchArgs {
    fn kind(&self) -> DetectorKind {
        self.detector.into()
    }

    fn search(&self) -> SearchConfig {
        let search = self.search.unwrap_or(match self.detector {
            Detector::Srmac => Search::Random,
            Detector::Terma => Search::Grid,
        });
        match search {
            Search::Random => SearchConfig::Random {
                budget: self.budget,
                runs: self.runs,
            },
            Search::Grid => SearchConfig::Grid {
                points_per_dim: self.points_per_dim,
            },
        }
    }

    fn space(&self) -> SearchSpace {
        match (self.kind(), self.max_threshold) {
            (DetectorKind::Srmac, Some(t)) => SearchSpace::srmac_with_threshold(t),
            (DetectorKind::Srmac, None) => SearchSpace::srmac_default(),
            (DetectorKind::Terma, _) => SearchSpace::terma_default(),
        }
    }

    fn execution(&self) -> Execution {
        if self.serial {
            Execution::Serial
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory to write the dataset into.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => cmd_detect(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Crossval(a) => cmd_crossval(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn detector_params(kind: DetectorKind, values: Option<&[f64]>) -> Result<DetectorParams> {
    let defaults = match kind {
        DetectorKind::Srmac => SrmacParams::default().to_vec(),
        DetectorKind::Terma => TermaParams::default().to_vec(),
    };
    Ok(DetectorParams::from_slice(kind, values.unwrap_or(&defaults))?)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let record = match &a.input {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let samples = CsvColumnParser { column: a.column }.parse(path, &text)?;
            let subject = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            PpgRecord::new(samples, a.rate, &subject, Group::Healthy, Phase::Rest)?
        }
        None => {
            let cfg = SynthConfig {
                duration_s: a.duration,
                sample_rate_hz: a.rate,
                heart_rate_bpm: a.bpm,
                noise_std: a.noise,
                seed: a.seed,
                ..SynthConfig::default()
            };
            synth_record(&cfg, "synth", Group::Healthy, Phase::Rest)?.record
        }
    };
    let kind: DetectorKind = a.detector.into();
    let params = detector_params(kind, a.params.as_deref())?;
    let bandpass = a.bandpass.spec();
    let rate = record.sample_rate_hz();

    let peaks = match &params {
        DetectorParams::Srmac(p) => {
            let filtered = apply_bandpass(&bandpass, rate, record.samples())?;
            let (events, trace) = srmac::detect_traced(p, &filtered, rate)?;
            if let Some(path) = &a.trace {
                let mut w = create(path)?;
                writeln!(w, "index,x,e_fast,e_slow,e_cross")?;
                for (i, t) in trace.iter().enumerate() {
                    writeln!(w, "{i},{},{},{},{}", t.input, t.fast, t.slow, t.cross)?;
                }
                w.flush()?;
            }
            let idx: Vec<usize> = events.iter().map(|e| e.index).collect();
            PeakList::from_indices(&idx, rate)?
        }
        DetectorParams::Terma(p) => {
            if bandpass.mode == FilterMode::Causal {
                log::warn!("TERMA always filters zero-phase; ignoring --bandpass-mode causal");
            }
            let input = TermaInput::prepare(&record, &bandpass)?;
            if let Some(path) = &a.trace {
                let t = terma::trace(p, &input)?;
                let mut w = create(path)?;
                writeln!(w, "index,filtered,z,ma_peak,ma_beat,threshold")?;
                for i in 0..t.z.len() {
                    writeln!(
                        w,
                        "{i},{},{},{},{},{}",
                        input.filtered[i], t.z[i], t.ma_peak[i], t.ma_beat[i], t.threshold[i]
                    )?;
                }
                w.flush()?;
            }
            let idx: Vec<usize> = terma::detect_prepared(p, &input)?.iter().map(|b| b.peak).collect();
            PeakList::from_indices(&idx, rate)?
        }
    };
    log::info!("{} peaks in {:.1} s", peaks.len(), record.duration_s());

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match a.units {
        Units::Seconds => peaks.times().iter().try_for_each(|t| writeln!(out, "{t}"))?,
        Units::Indices => peaks.to_indices(rate).iter().try_for_each(|i| writeln!(out, "{i}"))?,
    }
    Ok(())
}

fn read_peaks(path: &Path, units: Units, rate: f64) -> Result<PeakList> {
    if !path.is_file() {
        bail!("no such file: {}", path.display());
    }
    Ok(match units {
        Units::Indices => read_annotations(path, rate, usize::MAX)?,
        Units::Seconds => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let times = CsvColumnParser::default().parse(path, &text)?;
            PeakList::new(times).with_context(|| format!("invalid peak times in {}", path.display()))?
        }
    })
}

#[derive(serde::Serialize)]
struct Evaluation {
    tolerance_s: f64,
    counts: ConfusionCounts,
    metrics: Metrics,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let det = read_peaks(&a.detections, a.units, a.rate)?;
    let ann = read_peaks(&a.annotations, a.units, a.rate)?;
    let counts = match_peaks(&det, &ann, a.tol)?;
    let m = counts.metrics();
    println!("{:>8} {:>8} {:>8} {:>10} {:>10} {:>10}", "TP", "FP", "FN", "Pp", "SE", "accuracy");
    println!(
        "{:>8} {:>8} {:>8} {:>10.5} {:>10.5} {:>10.5}",
        counts.tp, counts.fp, counts.fn_, m.precision, m.recall, m.accuracy
    );
    if let Some(path) = &a.json {
        let json = serde_json::to_string_pretty(&Evaluation {
            tolerance_s: a.tol,
            counts,
            metrics: m,
        })? + "\n";
        if path.as_os_str() == "-" {
            print!("{json}");
        } else {
            fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct OptimizeReport {
    detector: DetectorKind,
    parameter_names: Vec<String>,
    search: SearchConfig,
    seed: u64,
    records: usize,
    evaluations: usize,
    best_params: Vec<f64>,
    best_fitness: f64,
    best_ofe: usize,
}

fn cmd_optimize(a: &SearchArgs) -> Result<()> {
    let data = a.data.load()?;
    let kind = a.kind();
    let space = a.space();
    let eval = Evaluator::new(kind, &data, &a.bandpass.spec(), a.tol)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let fitness = |p: &[f64]| eval.fitness(p, &all);
    let search = a.search();
    let result = match search {
        SearchConfig::Random { budget, .. } => random_search(&space, budget, a.seed, fitness, a.execution())?,
        SearchConfig::Grid { points_per_dim } => grid_search(&space, points_per_dim, fitness, a.execution())?,
    };
    log::info!("{} evaluations", result.evaluations());

    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let report = OptimizeReport {
        detector: kind,
        parameter_names: space.names(),
        search,
        seed: a.seed,
        records: data.len(),
        evaluations: result.evaluations(),
        best_params: result.best_params.clone(),
        best_fitness: result.best_fitness,
        best_ofe: result.best_ofe,
    };
    let json = a.out.join("optimize.json");
    fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("cannot write {}", json.display()))?;
    result.write_history_csv(create(&a.out.join("history.csv"))?)?;

    for (name, v) in space.names().iter().zip(&result.best_params) {
        println!("{name:<12} {v}");
    }
    println!("{:<12} {}", "accuracy", result.best_fitness);
    Ok(())
}

fn cmd_crossval(a: &SearchArgs) -> Result<()> {
    let data = a.data.load()?;
    let config = CvConfig {
        detector: a.kind(),
        search: a.search(),
        space: a.space(),
        bandpass: a.bandpass.spec(),
        tolerance_s: a.tol,
        base_seed: a.seed,
        checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
        execution: a.execution(),
    };
    let (report, histories) = run_lsocv(&data, &config)?;
    report.write_all(&a.out)?;
    if a.histories {
        histories.write_file(&a.out.join("histories.csv"))?;
    }

    println!(
        "{:<10} {:>8} {:>18} {:>18} {:>18}",
        "", "records", "precision", "recall", "accuracy"
    );
    for row in report.groups.iter().chain(&report.phases).chain([&report.overall]) {
        println!(
            "{:<10} {:>8} {:>9.5} ± {:<6.4} {:>9.5} ± {:<6.4} {:>9.5} ± {:<6.4}",
            row.label,
            row.records,
            row.precision.mean,
            row.precision.std,
            row.recall.mean,
            row.recall.std,
            row.accuracy.mean,
            row.accuracy.std
        );
    }
    for p in &report.ofe_curve {
        println!("OFE {:>4}  validation accuracy {:.5} ± {:.4}", p.ofe, p.accuracy.mean, p.accuracy.std);
    }
    log::info!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut data_args = a.data.clone();
    data_args.synth_suite = true;
    let data = data_args.load()?;
    DatasetLayout::new(&a.out).save_dataset(&data)?;
    println!("wrote {} records to {}", data.len(), a.out.display());
    Ok(())
}
