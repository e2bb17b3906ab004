//! Dataset directory layout and CSV files.
//!
//! ```text
//! root/
//!   healthy/ | not-healthy/
//!     rest/ | balke/ | recovery/
//!       <subject>.csv         one sample value per line, optional header
//!       <subject>_peaks.csv   one peak sample index per line
//! ```
//!
//! Annotations are stored as integer sample indices and converted to seconds
//! on load. Signal values are written in shortest round-trip form, so a saved
//! record loads back bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AnnotatedRecord, Group, PeakList, Phase, PpgRecord, DEFAULT_SAMPLE_RATE_HZ};

/// Turns the text of a signal file into samples.
///
/// Implement this to read layouts other than the default single column, for
/// example a specific channel of a multi-wavelength export.
pub trait SignalParser: Sync {
    fn parse(&self, path: &Path, text: &str) -> Result<Vec<f64>>;
}

/// Reads one numeric column of a comma-separated file. A first line whose
/// value does not parse as a number is taken as a header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvColumnParser {
    pub column: usize,
}

impl SignalParser for CsvColumnParser {
    fn parse(&self, path: &Path, text: &str) -> Result<Vec<f64>> {
        read_column(path, text, self.column, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
    }
}

fn read_column<T>(path: &Path, text: &str, column: usize, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let field = rec.get(column).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("no column {column}"),
        })?;
        match parse(field) {
            Some(v) => out.push(v),
            None if i == 0 => {} // header
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("cannot parse `{field}`"),
                })
            }
        }
    }
    Ok(out)
}

/// Where records live and how files are named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub signal_suffix: String,
    pub annotation_suffix: String,
    pub sample_rate_hz: f64,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            signal_suffix: ".csv".to_string(),
            annotation_suffix: "_peaks.csv".to_string(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }

    pub fn group_dir_name(group: Group) -> &'static str {
        match group {
            Group::Healthy => "healthy",
            Group::Copd => "not-healthy",
        }
    }

    pub fn phase_dir(&self, group: Group, phase: Phase) -> PathBuf {
        self.root.join(Self::group_dir_name(group)).join(phase.dir_name())
    }

    pub fn signal_path(&self, group: Group, phase: Phase, subject: &str) -> PathBuf {
        self.phase_dir(group, phase)
            .join(format!("{subject}{}", self.signal_suffix))
    }

    pub fn annotation_path(&self, group: Group, phase: Phase, subject: &str) -> PathBuf {
        self.phase_dir(group, phase)
            .join(format!("{subject}{}", self.annotation_suffix))
    }

    /// Loads every record with the single-column parser.
    pub fn load(&self) -> Result<Vec<AnnotatedRecord>> {
        self.load_with(&CsvColumnParser::default())
    }

    /// Loads every record, in group, phase, subject order.
    pub fn load_with(&self, parser: &dyn SignalParser) -> Result<Vec<AnnotatedRecord>> {
        if !self.root.is_dir() {
            return Err(Error::io(
                &self.root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
            ));
        }
        let mut jobs = Vec::new();
        for group_dir in sorted_dirs(&self.root)? {
            let name = file_name(&group_dir);
            let Ok(group) = name.parse::<Group>() else {
                log::warn!("skipping {}: not a group directory", group_dir.display());
                continue;
            };
            for phase_dir in sorted_dirs(&group_dir)? {
                let Ok(phase) = file_name(&phase_dir).parse::<Phase>() else {
                    log::warn!("skipping {}: not a phase directory", phase_dir.display());
                    continue;
                };
                for signal in self.signal_files(&phase_dir)? {
                    jobs.push((group, phase, signal));
                }
            }
        }
        let records = jobs
            .par_iter()
            .map(|(group, phase, signal)| self.load_record(parser, signal, *group, *phase))
            .collect::<Result<Vec<_>>>()?;
        if records.is_empty() {
            log::warn!("no records found under {}", self.root.display());
        } else {
            let s = DatasetSummary::of(&records);
            log::info!(
                "loaded {} records of {} subjects: {:.1} min, {} annotated peaks",
                s.records,
                s.subjects,
                s.minutes,
                s.peaks
            );
        }
        Ok(records)
    }

    fn signal_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let n = file_name(p);
                p.is_file() && n.ends_with(&self.signal_suffix) && !n.ends_with(&self.annotation_suffix)
            })
            .collect();
        files.sort();
        Ok(files)
    }

    fn load_record(&self, parser: &dyn SignalParser, signal: &Path, group: Group, phase: Phase) -> Result<AnnotatedRecord> {
        let name = file_name(signal);
        let subject = &name[..name.len() - self.signal_suffix.len()];
        let annotation = signal.with_file_name(format!("{subject}{}", self.annotation_suffix));
        if !annotation.is_file() {
            return Err(Error::MissingAnnotation {
                signal: signal.to_path_buf(),
                expected: annotation,
            });
        }
        let text = fs::read_to_string(signal).map_err(|e| Error::io(signal, e))?;
        let samples = parser.parse(signal, &text)?;
        if samples.is_empty() {
            return Err(Error::Parse {
                path: signal.to_path_buf(),
                line: 1,
                reason: "no samples".to_string(),
            });
        }
        let record = PpgRecord::new(samples, self.sample_rate_hz, subject, group, phase)?;
        let peaks = read_annotations(&annotation, self.sample_rate_hz, record.len())?;
        Ok(AnnotatedRecord::new(record, peaks))
    }

    /// Writes the signal and annotation files of one record.
    pub fn save_record(&self, rec: &AnnotatedRecord) -> Result<()> {
        let r = &rec.record;
        let dir = self.phase_dir(r.group, r.phase);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_record(
            rec,
            &self.signal_path(r.group, r.phase, &r.subject_id),
            &self.annotation_path(r.group, r.phase, &r.subject_id),
        )
    }

    pub fn save_dataset(&self, records: &[AnnotatedRecord]) -> Result<()> {
        records.iter().try_for_each(|r| self.save_record(r))
    }
}

/// Loads a dataset from `root` with the default layout.
pub fn load_dataset(root: impl Into<PathBuf>) -> Result<Vec<AnnotatedRecord>> {
    DatasetLayout::new(root).load()
}

/// Writes `rec` as a signal file and an annotation file.
pub fn save_record(rec: &AnnotatedRecord, signal_path: &Path, annotation_path: &Path) -> Result<()> {
    let write = |path: &Path, lines: &mut dyn Iterator<Item = String>| -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for l in lines {
            writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    };
    write(signal_path, &mut rec.record.samples().iter().map(|v| v.to_string()))?;
    let rate = rec.record.sample_rate_hz();
    write(annotation_path, &mut rec.peaks.to_indices(rate).into_iter().map(|i| i.to_string()))
}

/// Reads a peak-index file; indices must be increasing and inside the record.
pub fn read_annotations(path: &Path, rate_hz: f64, record_len: usize) -> Result<PeakList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let indices = read_column(path, &text, 0, |s| s.parse::<usize>().ok())?;
    if let Some(pos) = indices.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: pos as u64 + 2,
            reason: "peak indices must be strictly increasing".to_string(),
        });
    }
    if let Some(&last) = indices.last() {
        if last >= record_len {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: indices.len() as u64,
                reason: format!("peak index {last} beyond the {record_len}-sample signal"),
            });
        }
    }
    PeakList::from_indices(&indices, rate_hz)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Size of a loaded dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub subjects: usize,
    pub records: usize,
    pub minutes: f64,
    pub peaks: usize,
}

impl DatasetSummary {
    pub fn of(records: &[AnnotatedRecord]) -> Self {
        let mut ids: Vec<&str> = records.iter().map(|r| r.record.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        Self {
            subjects: ids.len(),
            records: records.len(),
            minutes: records.iter().map(|r| r.record.duration_s()).sum::<f64>() / 60.0,
            peaks: records.iter().map(|r| r.peaks.len()).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_suite, SuiteConfig};

    fn suite() -> Vec<AnnotatedRecord> {
        synth_suite(&SuiteConfig {
            subjects: 2,
            duration_s: 10.0,
            ..SuiteConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn save_then_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let layout = DatasetLayout::new(dir.path());
        let data = suite();
        layout.save_dataset(&data).unwrap();
        let mut loaded = layout.load().unwrap();
        let mut expected = data.clone();
        let key = |r: &AnnotatedRecord| (r.record.group, r.record.phase, r.record.subject_id.clone());
        loaded.sort_by_key(key);
        expected.sort_by_key(key);
        assert_eq!(loaded, expected);
        assert!(layout.signal_path(Group::Copd, Phase::Walking, "C01").ends_with("not-healthy/balke/C01.csv"));
    }

    #[test]
    fn signal_file_has_one_line_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let rec = synth_suite(&SuiteConfig {
            subjects: 1,
            phases: vec![Phase::Rest],
            ..SuiteConfig::default()
        })
        .unwrap()
        .remove(0);
        let (s, a) = (dir.path().join("x.csv"), dir.path().join("x_peaks.csv"));
        save_record(&rec, &s, &a).unwrap();
        assert_eq!(fs::read_to_string(&s).unwrap().lines().count(), 12000);
        assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), rec.peaks.len());
    }

    #[test]
    fn empty_annotation_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let layout = DatasetLayout::new(dir.path());
        let mut rec = suite().remove(0);
        rec.peaks = PeakList::empty();
        layout.save_record(&rec).unwrap();
        let p = layout.annotation_path(rec.record.group, rec.record.phase, &rec.record.subject_id);
        assert_eq!(fs::read_to_string(p).unwrap(), "");
        assert_eq!(layout.load().unwrap(), vec![rec]);
    }

    #[test]
    fn empty_root_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());
        assert!(load_dataset(dir.path().join("absent")).is_err());
    }

    #[test]
    fn missing_annotation_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let layout = DatasetLayout::new(dir.path());
        let rec = suite().remove(0);
        layout.save_record(&rec).unwrap();
        let p = layout.annotation_path(rec.record.group, rec.record.phase, &rec.record.subject_id);
        fs::remove_file(&p).unwrap();
        let err = layout.load().unwrap_err();
        assert!(matches!(err, Error::MissingAnnotation { .. }));
        assert!(err.to_string().contains("H01_peaks.csv"), "{err}");
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("healthy").join("rest");
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("S1.csv"), "ppg\n1.0\n2.0\nabc\n").unwrap();
        fs::write(d.join("S1_peaks.csv"), "1\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn header_and_columns() {
        let p = Path::new("f.csv");
        assert_eq!(CsvColumnParser::default().parse(p, "ppg\n1\n2.5\n").unwrap(), [1.0, 2.5]);
        assert_eq!(CsvColumnParser::default().parse(p, "1\n2.5\n").unwrap(), [1.0, 2.5]);
        let second = CsvColumnParser { column: 1 };
        assert_eq!(second.parse(p, "red,ir\n5,1\n6,2\n").unwrap(), [1.0, 2.0]);
        assert!(second.parse(p, "red,ir\n5\n").is_err());
        assert!(CsvColumnParser::default().parse(p, "1\nNaN\n").is_err());
    }

    #[test]
    fn annotation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "5\n3\n").unwrap();
        assert!(read_annotations(&p, 200.0, 10).is_err());
        fs::write(&p, "5\n30\n").unwrap();
        assert!(read_annotations(&p, 200.0, 10).is_err());
        fs::write(&p, "index\n5\n9\n").unwrap();
        assert_eq!(read_annotations(&p, 200.0, 10).unwrap().len(), 2);
    }

    #[test]
    fn summary_counts() {
        let data = suite();
        let s = DatasetSummary::of(&data);
        assert_eq!((s.subjects, s.records), (2, 6));
        assert!((s.minutes - 1.0).abs() < 1e-9);
        assert_eq!(s.peaks, data.iter().map(|r| r.peaks.len()).sum::<usize>());
    }

    #[test]
    fn unknown_directories_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("notes")).unwrap();
        let layout = DatasetLayout::new(dir.path());
        layout.save_record(&suite().remove(0)).unwrap();
        assert_eq!(layout.load().unwrap().len(), 1);
    }
}
