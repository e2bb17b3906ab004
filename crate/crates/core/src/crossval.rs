//! Leave-subject-out cross-validation.
//!
//! Every fold holds out all records of one subject. For each fold the search
//! runs on the remaining records (repeated `runs` times with independent
//! seeds for random search) and the winning parameters are scored on the
//! held-out records.
//!
//! Aggregation conventions:
//! - search fitness pools counts over the training records;
//! - each validation record's metrics are first averaged over runs, then
//!   group, phase and overall rows report mean ± sample std (n − 1) over
//!   records, alongside metrics from counts pooled over every record and run;
//! - the OFE curve (random search only) takes, per run, the pooled validation accuracy of the best
//!   candidate among the first `c` evaluations, averages it over runs within a
//!   fold, then reports mean ± sample std over folds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorKind, Evaluator};
use crate::error::{Error, Result};
use crate::filters::BandpassSpec;
use crate::metrics::{aggregate_metrics, compute_metrics, AggregateMetrics, ConfusionCounts, MeanStd, Metrics};
use crate::optimize::{grid_search, random_search, Execution, SearchResult, SearchSpace};
use crate::signal::{AnnotatedRecord, Group, Phase};

/// Default OFE checkpoints for the validation-accuracy curve.
pub const DEFAULT_CHECKPOINTS: [usize; 6] = [50, 100, 150, 200, 250, 300];

const STD_CONVENTION: &str = "sample standard deviation (n - 1 denominator)";
const SEED_DERIVATION: &str = "splitmix64(splitmix64(splitmix64(base_seed) ^ fold) ^ run)";

/// One leave-subject-out split, as indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub held_out_subject: String,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Fold {
    /// Fails if any training record belongs to the held-out subject or any
    /// validation record does not.
    pub fn check_no_leakage(&self, dataset: &[AnnotatedRecord]) -> Result<()> {
        let subject = |i: usize| dataset[i].record.subject_id.as_str();
        if let Some(&i) = self.train.iter().find(|&&i| subject(i) == self.held_out_subject) {
            return Err(Error::invalid(
                "folds",
                format!("record {i} of subject {} leaks into training", self.held_out_subject),
            ));
        }
        if let Some(&i) = self.validation.iter().find(|&&i| subject(i) != self.held_out_subject) {
            return Err(Error::invalid(
                "folds",
                format!("validation of fold {} holds record {i} of subject {}", self.index, subject(i)),
            ));
        }
        Ok(())
    }
}

/// One fold per distinct subject id, in sorted id order.
pub fn make_folds(dataset: &[AnnotatedRecord]) -> Result<Vec<Fold>> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.iter().enumerate() {
        by_subject.entry(r.record.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(Error::invalid(
            "dataset",
            format!("leave-subject-out needs at least 2 subjects, found {}", by_subject.len()),
        ));
    }
    let folds: Vec<Fold> = by_subject
        .into_iter()
        .enumerate()
        .map(|(index, (subject, validation))| Fold {
            index,
            held_out_subject: subject.to_string(),
            train: (0..dataset.len()).filter(|i| !validation.contains(i)).collect(),
            validation,
        })
        .collect();
    for f in &folds {
        f.check_no_leakage(dataset)?;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SearchConfig {
    Random { budget: usize, runs: usize },
    Grid { points_per_dim: usize },
}

impl SearchConfig {
    pub fn runs(&self) -> usize {
        match *self {
            SearchConfig::Random { runs, .. } => runs,
            SearchConfig::Grid { .. } => 1,
        }
    }

    pub fn evaluations(&self, dims: usize) -> usize {
        match *self {
            SearchConfig::Random { budget, .. } => budget,
            SearchConfig::Grid { points_per_dim } => points_per_dim.pow(dims as u32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub detector: DetectorKind,
    pub search: SearchConfig,
    pub space: SearchSpace,
    pub bandpass: BandpassSpec,
    pub tolerance_s: f64,
    pub base_seed: u64,
    pub checkpoints: Vec<usize>,
    /// Whether fold × run cells are evaluated in parallel. Never changes results.
    pub execution: Execution,
}

impl CvConfig {
    /// 30 runs of 300-evaluation random search for SRMAC; an 11-point
    /// grid (1331 evaluations) for TERMA.
    pub fn standard(detector: DetectorKind) -> Self {
        let (search, space) = match detector {
            DetectorKind::Srmac => (SearchConfig::Random { budget: 300, runs: 30 }, SearchSpace::srmac_default()),
            DetectorKind::Terma => (SearchConfig::Grid { points_per_dim: 11 }, SearchSpace::terma_default()),
        };
        Self {
            detector,
            search,
            space,
            bandpass: BandpassSpec::default(),
            tolerance_s: crate::metrics::DEFAULT_TOLERANCE_S,
            base_seed: 0,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.space.len() != self.detector.param_names().len() {
            return Err(Error::invalid(
                "space",
                format!(
                    "{} needs {} dimensions, got {}",
                    self.detector,
                    self.detector.param_names().len(),
                    self.space.len()
                ),
            ));
        }
        match self.search {
            SearchConfig::Random { budget: 0, .. } => Err(Error::invalid("budget", "must be positive")),
            SearchConfig::Random { runs: 0, .. } => Err(Error::invalid("runs", "must be positive")),
            SearchConfig::Grid { points_per_dim: 0 } => Err(Error::invalid("points_per_dim", "must be positive")),
            _ => Ok(()),
        }?;
        if !(self.tolerance_s > 0.0 && self.tolerance_s.is_finite()) {
            return Err(Error::invalid("tolerance_s", "must be positive"));
        }
        if self.checkpoints.contains(&0) {
            return Err(Error::invalid("checkpoints", "must be positive"));
        }
        Ok(())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the search in cell (`fold`, `run`); stable across platforms and
/// releases.
pub fn derive_seed(base_seed: u64, fold: usize, run: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ fold as u64) ^ run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub subject_id: String,
    pub group: Group,
    pub phase: Phase,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointAccuracy {
    pub ofe: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub best_params: Vec<f64>,
    pub best_ofe: usize,
    pub evaluations: usize,
    pub train_accuracy: f64,
    pub validation: AggregateMetrics,
    pub records: Vec<RecordResult>,
    pub ofe_curve: Vec<CheckpointAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub held_out_subject: String,
    pub train_records: usize,
    pub validation_records: usize,
    pub runs: Vec<RunReport>,
    /// Pooled validation accuracy over runs.
    pub validation_accuracy: MeanStd,
}

/// One row of a group, phase or overall summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub records: usize,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub accuracy: MeanStd,
    pub pooled: Metrics,
    pub pooled_counts: ConfusionCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfePoint {
    pub ofe: usize,
    pub accuracy: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvMetadata {
    pub detector: DetectorKind,
    pub parameter_names: Vec<String>,
    pub search: SearchConfig,
    pub space: SearchSpace,
    pub bandpass: BandpassSpec,
    pub tolerance_s: f64,
    pub base_seed: u64,
    pub runs: usize,
    pub evaluations_per_search: usize,
    pub subjects: usize,
    pub records: usize,
    pub std_convention: String,
    pub seed_derivation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub metadata: CvMetadata,
    pub folds: Vec<FoldReport>,
    pub groups: Vec<SummaryRow>,
    pub phases: Vec<SummaryRow>,
    pub overall: SummaryRow,
    pub ofe_curve: Vec<OfePoint>,
}

/// Full search histories of one cross-validation, kept apart from the report
/// because of their size.
#[derive(Debug, Clone, PartialEq)]
pub struct CvHistories {
    pub parameter_names: Vec<String>,
    /// `(fold, held-out subject, run, search result)` in fold, run order.
    pub cells: Vec<(usize, String, usize, SearchResult)>,
}

struct Cell {
    report: RunReport,
    search: SearchResult,
}

fn run_cell(eval: &Evaluator, fold: &Fold, run: usize, config: &CvConfig) -> Result<Cell> {
    let seed = derive_seed(config.base_seed, fold.index, run);
    let fitness = |p: &[f64]| eval.fitness(p, &fold.train);
    // cells are the unit of parallelism; each search runs serially inside one
    let search = match config.search {
        SearchConfig::Random { budget, .. } => random_search(&config.space, budget, seed, fitness, Execution::Serial)?,
        SearchConfig::Grid { points_per_dim } => grid_search(&config.space, points_per_dim, fitness, Execution::Serial)?,
    };

    let params = eval.params(&search.best_params)?;
    let mut records = Vec::with_capacity(fold.validation.len());
    for &i in &fold.validation {
        let r = &eval.records()[i];
        let counts = eval.counts(&params, i)?;
        records.push(RecordResult {
            subject_id: r.subject_id.clone(),
            group: r.group,
            phase: r.phase,
            counts,
            metrics: compute_metrics(&counts),
        });
    }
    let counts: Vec<ConfusionCounts> = records.iter().map(|r| r.counts).collect();
    let validation = aggregate_metrics(&counts)?;

    // grid order carries no meaning, so only random search gets a curve
    let checkpoints: &[usize] = match config.search {
        SearchConfig::Random { .. } => &config.checkpoints,
        SearchConfig::Grid { .. } => &[],
    };
    let mut ofe_curve = Vec::new();
    for &c in checkpoints.iter().filter(|&&c| c <= search.evaluations()) {
        let best = search.best_within(c).expect("checkpoint within history");
        ofe_curve.push(CheckpointAccuracy {
            ofe: c,
            accuracy: eval.fitness(&best.params, &fold.validation)?,
        });
    }

    Ok(Cell {
        report: RunReport {
            run,
            seed,
            best_params: search.best_params.clone(),
            best_ofe: search.best_ofe,
            evaluations: search.evaluations(),
            train_accuracy: search.best_fitness,
            validation,
            records,
            ofe_curve,
        },
        search,
    })
}

/// Runs the full leave-subject-out protocol.
///
/// Deterministic for a given dataset and config: cells are merged by
/// (fold, run) regardless of execution order. Any failing cell aborts the
/// whole run.
pub fn run_lsocv(dataset: &[AnnotatedRecord], config: &CvConfig) -> Result<(CvReport, CvHistories)> {
    config.validate()?;
    let folds = make_folds(dataset)?;
    let eval = Evaluator::new(config.detector, dataset, &config.bandpass, config.tolerance_s)?;
    let runs = config.search.runs();

    let jobs: Vec<(usize, usize)> = (0..folds.len()).flat_map(|f| (0..runs).map(move |r| (f, r))).collect();
    let job = |&(f, r): &(usize, usize)| {
        log::debug!("fold {} ({}) run {}", f, folds[f].held_out_subject, r);
        run_cell(&eval, &folds[f], r, config)
    };
    let cells: Vec<Cell> = match config.execution {
        Execution::Serial => jobs.iter().map(job).collect::<Result<_>>()?,
        Execution::Parallel => jobs.par_iter().map(job).collect::<Result<_>>()?,
    };

    let mut fold_reports = Vec::with_capacity(folds.len());
    let mut histories = Vec::with_capacity(cells.len());
    let mut cells = cells.into_iter();
    for fold in &folds {
        let mut run_reports = Vec::with_capacity(runs);
        for _ in 0..runs {
            let cell = cells.next().expect("one cell per fold and run");
            histories.push((fold.index, fold.held_out_subject.clone(), cell.report.run, cell.search));
            run_reports.push(cell.report);
        }
        let acc: Vec<f64> = run_reports.iter().map(|r| r.validation.pooled.accuracy).collect();
        log::info!(
            "fold {:>2} {:<8} {} runs x {} evaluations, validation accuracy {:.5}",
            fold.index,
            fold.held_out_subject,
            runs,
            run_reports[0].evaluations,
            MeanStd::of(&acc)?.mean
        );
        fold_reports.push(FoldReport {
            fold: fold.index,
            held_out_subject: fold.held_out_subject.clone(),
            train_records: fold.train.len(),
            validation_records: fold.validation.len(),
            validation_accuracy: MeanStd::of(&acc)?,
            runs: run_reports,
        });
    }

    let summaries = record_summaries(&fold_reports);
    let groups = group_breakdown(&summaries)?;
    let phases = phase_breakdown(&summaries)?;
    let overall = summary_row("Overall", summaries.iter())?;
    let ofe_curve = ofe_curve(&fold_reports, &config.checkpoints)?;

    let subjects = folds.len();
    let report = CvReport {
        metadata: CvMetadata {
            detector: config.detector,
            parameter_names: config.space.names(),
            search: config.search,
            space: config.space.clone(),
            bandpass: config.bandpass,
            tolerance_s: config.tolerance_s,
            base_seed: config.base_seed,
            runs,
            evaluations_per_search: config.search.evaluations(config.space.len()),
            subjects,
            records: dataset.len(),
            std_convention: STD_CONVENTION.to_string(),
            seed_derivation: SEED_DERIVATION.to_string(),
        },
        folds: fold_reports,
        groups,
        phases,
        overall,
        ofe_curve,
    };
    let histories = CvHistories {
        parameter_names: config.space.names(),
        cells: histories,
    };
    Ok((report, histories))
}

/// A validation record's results across all runs of its fold.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSummary {
    pub subject_id: String,
    pub group: Group,
    pub phase: Phase,
    /// Metrics averaged over runs.
    pub mean: Metrics,
    /// Counts summed over runs.
    pub counts: ConfusionCounts,
}

/// Collapses every validation record over the runs of its fold.
pub fn record_summaries(folds: &[FoldReport]) -> Vec<RecordSummary> {
    let mut out = Vec::new();
    for fold in folds {
        let Some(first) = fold.runs.first() else { continue };
        let n = fold.runs.len() as f64;
        for (j, rec) in first.records.iter().enumerate() {
            let per_run = || fold.runs.iter().map(move |r| &r.records[j]);
            let mean_of = |f: fn(&Metrics) -> f64| per_run().map(|r| f(&r.metrics)).sum::<f64>() / n;
            out.push(RecordSummary {
                subject_id: rec.subject_id.clone(),
                group: rec.group,
                phase: rec.phase,
                mean: Metrics {
                    precision: mean_of(|m| m.precision),
                    recall: mean_of(|m| m.recall),
                    accuracy: mean_of(|m| m.accuracy),
                },
                counts: per_run().map(|r| r.counts).sum(),
            });
        }
    }
    out
}

fn summary_row<'a>(label: &str, records: impl Iterator<Item = &'a RecordSummary>) -> Result<SummaryRow> {
    let records: Vec<&RecordSummary> = records.collect();
    let pick = |f: fn(&Metrics) -> f64| records.iter().map(|r| f(&r.mean)).collect::<Vec<_>>();
    let pooled_counts: ConfusionCounts = records.iter().map(|r| r.counts).sum();
    Ok(SummaryRow {
        label: label.to_string(),
        records: records.len(),
        precision: MeanStd::of(&pick(|m| m.precision))?,
        recall: MeanStd::of(&pick(|m| m.recall))?,
        accuracy: MeanStd::of(&pick(|m| m.accuracy))?,
        pooled: compute_metrics(&pooled_counts),
        pooled_counts,
    })
}

/// One row per group present, Healthy before COPD.
pub fn group_breakdown(records: &[RecordSummary]) -> Result<Vec<SummaryRow>> {
    Group::ALL
        .iter()
        .filter(|g| records.iter().any(|r| r.group == **g))
        .map(|&g| summary_row(g.as_str(), records.iter().filter(|r| r.group == g)))
        .collect()
}

/// One row per phase present, in protocol order.
pub fn phase_breakdown(records: &[RecordSummary]) -> Result<Vec<SummaryRow>> {
    Phase::ALL
        .iter()
        .filter(|p| records.iter().any(|r| r.phase == **p))
        .map(|&p| summary_row(p.as_str(), records.iter().filter(|r| r.phase == p)))
        .collect()
}

fn ofe_curve(folds: &[FoldReport], checkpoints: &[usize]) -> Result<Vec<OfePoint>> {
    let mut out = Vec::new();
    for &c in checkpoints {
        let mut per_fold = Vec::with_capacity(folds.len());
        for fold in folds {
            let values: Vec<f64> = fold
                .runs
                .iter()
                .filter_map(|r| r.ofe_curve.iter().find(|p| p.ofe == c).map(|p| p.accuracy))
                .collect();
            if values.is_empty() {
                break;
            }
            per_fold.push(MeanStd::of(&values)?.mean);
        }
        if per_fold.len() == folds.len() && !per_fold.is_empty() {
            out.push(OfePoint {
                ofe: c,
                accuracy: MeanStd::of(&per_fold)?,
            });
        }
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn summary_csv<W: Write>(w: W, first_column: &str, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        first_column,
        "records",
        "precision_mean",
        "precision_std",
        "recall_mean",
        "recall_std",
        "accuracy_mean",
        "accuracy_std",
        "pooled_precision",
        "pooled_recall",
        "pooled_accuracy",
    ])?;
    for r in rows {
        out.write_record([
            r.label.clone(),
            r.records.to_string(),
            r.precision.mean.to_string(),
            r.precision.std.to_string(),
            r.recall.mean.to_string(),
            r.recall.std.to_string(),
            r.accuracy.mean.to_string(),
            r.accuracy.std.to_string(),
            r.pooled.precision.to_string(),
            r.pooled.recall.to_string(),
            r.pooled.accuracy.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-group rows followed by the overall row.
    pub fn write_table2_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut rows = self.groups.clone();
        rows.push(self.overall.clone());
        summary_csv(w, "group", &rows)
    }

    pub fn write_table3_csv<W: Write>(&self, w: W) -> Result<()> {
        summary_csv(w, "phase", &self.phases)
    }

    /// Validation accuracy at each OFE checkpoint.
    pub fn write_ofe_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ofe", "accuracy_mean", "accuracy_std"])?;
        for p in &self.ofe_curve {
            out.write_record([p.ofe.to_string(), p.accuracy.mean.to_string(), p.accuracy.std.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// One line per fold and run with the chosen parameters.
    pub fn write_folds_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "fold",
            "subject",
            "run",
            "seed",
            "best_ofe",
            "train_accuracy",
            "validation_precision",
            "validation_recall",
            "validation_accuracy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.metadata.parameter_names.iter().cloned());
        out.write_record(&header)?;
        for f in &self.folds {
            for r in &f.runs {
                let mut row = vec![
                    f.fold.to_string(),
                    f.held_out_subject.clone(),
                    r.run.to_string(),
                    r.seed.to_string(),
                    r.best_ofe.to_string(),
                    r.train_accuracy.to_string(),
                    r.validation.pooled.precision.to_string(),
                    r.validation.pooled.recall.to_string(),
                    r.validation.pooled.accuracy.to_string(),
                ];
                row.extend(r.best_params.iter().map(|v| v.to_string()));
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Writes `report.json`, `table2_groups.csv`, `table3_phases.csv`,
    /// `table4_ofe.csv` and `folds.csv` into `dir`, creating it if needed.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        self.write_table2_csv(create(&dir.join("table2_groups.csv"))?)?;
        self.write_table3_csv(create(&dir.join("table3_phases.csv"))?)?;
        self.write_ofe_csv(create(&dir.join("table4_ofe.csv"))?)?;
        self.write_folds_csv(create(&dir.join("folds.csv"))?)?;
        Ok(())
    }
}

impl CvHistories {
    /// Columns `fold,subject,run,ofe_index,fitness,best_so_far` then one per
    /// parameter.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["fold", "subject", "run", "ofe_index", "fitness", "best_so_far"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.parameter_names.iter().cloned());
        out.write_record(&header)?;
        for (fold, subject, run, search) in &self.cells {
            for e in &search.history {
                let mut row = vec![
                    fold.to_string(),
                    subject.clone(),
                    run.to_string(),
                    e.ofe_index.to_string(),
                    e.fitness.to_string(),
                    e.best_so_far.to_string(),
                ];
                row.extend(e.params.iter().map(|v| v.to_string()));
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write_csv(create(path)?)
    }
}
