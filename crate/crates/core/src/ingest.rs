//! Canonical cell logs: parsing, validation, serialization and cycle segmentation.
//!
//! A cell log is a CSV file with the header
//! `timestamp_s,voltage_v,current_a,temperature_c`. Current is signed with
//! positive meaning charge. Columns beyond the four measurable signals are
//! ignored on read and never written back, so nothing but V, I, T and time can
//! leak into downstream stages.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical CSV header, in column order.
pub const CSV_HEADER: &str = "timestamp_s,voltage_v,current_a,temperature_c";
const COLUMNS: [&str; 4] = ["timestamp_s", "voltage_v", "current_a", "temperature_c"];

pub const VOLTAGE_RANGE_V: (f64, f64) = (0.0, 10.0);
pub const TEMPERATURE_RANGE_C: (f64, f64) = (-40.0, 120.0);

/// Current magnitude at or below which a sample counts as rest.
pub const DEFAULT_DEADBAND_A: f64 = 0.05;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("timestamp not strictly increasing at line {line}")]
    NonMonotonicTimestamp { line: u64 },
    #[error("{field} = {value} out of range at line {line}")]
    RangeViolation {
        line: u64,
        field: &'static str,
        value: f64,
    },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("a cell series needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("nominal capacity must be positive, got {0}")]
    NonPositiveNominal(f64),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One measurement row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp_s: f64,
    pub voltage_v: f64,
    /// Positive while charging, negative while discharging.
    pub current_a: f64,
    pub temperature_c: f64,
}

/// Validated, time-ordered log of a single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    cell_id: String,
    samples: Vec<RawSample>,
    nominal_capacity_ah: f64,
}

impl CellSeries {
    /// Validates the ordering and range invariants. Line numbers in errors
    /// assume the samples came from a CSV with one header line.
    pub fn new(
        cell_id: impl Into<String>,
        samples: Vec<RawSample>,
        nominal_capacity_ah: f64,
    ) -> Result<Self, IngestError> {
        if !(nominal_capacity_ah > 0.0 && nominal_capacity_ah.is_finite()) {
            return Err(IngestError::NonPositiveNominal(nominal_capacity_ah));
        }
        if samples.is_empty() {
            return Err(IngestError::EmptyFile);
        }
        if samples.len() < 2 {
            return Err(IngestError::TooFewSamples(samples.len()));
        }
        for (i, s) in samples.iter().enumerate() {
            let line = i as u64 + 2;
            check_sample(s, line)?;
            if i > 0 && s.timestamp_s <= samples[i - 1].timestamp_s {
                return Err(IngestError::NonMonotonicTimestamp { line });
            }
        }
        Ok(Self {
            cell_id: cell_id.into(),
            samples,
            nominal_capacity_ah,
        })
    }

    pub fn cell_id(&self) -> &str {
        &self.cell_id
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn nominal_capacity_ah(&self) -> f64 {
        self.nominal_capacity_ah
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples[self.samples.len() - 1].timestamp_s - self.samples[0].timestamp_s
    }
}

fn check_sample(s: &RawSample, line: u64) -> Result<(), IngestError> {
    let range = |field, value: f64, lo: f64, hi: f64| {
        if value > lo && value < hi {
            Ok(())
        } else {
            Err(IngestError::RangeViolation { line, field, value })
        }
    };
    if !(s.timestamp_s >= 0.0 && s.timestamp_s.is_finite()) {
        return Err(IngestError::RangeViolation {
            line,
            field: "timestamp_s",
            value: s.timestamp_s,
        });
    }
    range("voltage_v", s.voltage_v, VOLTAGE_RANGE_V.0, VOLTAGE_RANGE_V.1)?;
    if !s.current_a.is_finite() {
        return Err(IngestError::RangeViolation {
            line,
            field: "current_a",
            value: s.current_a,
        });
    }
    range(
        "temperature_c",
        s.temperature_c,
        TEMPERATURE_RANGE_C.0,
        TEMPERATURE_RANGE_C.1,
    )
}

/// Streaming reader over the rows of a cell CSV. Required columns are
/// located by name; any other columns are skipped. Each row is range-checked
/// but timestamp order is left to the consumer.
pub struct SampleReader<R: Read> {
    reader: csv::Reader<R>,
    index: [usize; 4],
    record: csv::StringRecord,
    rows: u64,
}

impl<R: Read> SampleReader<R> {
    pub fn new(source: R) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(source);
        let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(IngestError::EmptyFile);
        }
        let mut index = [0usize; 4];
        for (slot, name) in index.iter_mut().zip(COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or(IngestError::MissingColumn(name))?;
        }
        Ok(Self {
            reader,
            index,
            record: csv::StringRecord::new(),
            rows: 0,
        })
    }

    /// Next sample with its 1-based file line (the header is line 1).
    pub fn next_sample(&mut self) -> Option<Result<(RawSample, u64), IngestError>> {
        let line_hint = self.rows + 2;
        match self.reader.read_record(&mut self.record) {
            Ok(true) => {}
            Ok(false) => return None,
            Err(e) => return Some(Err(csv_error(e, line_hint))),
        }
        self.rows += 1;
        let line = self.record.position().map_or(line_hint, |p| p.line());
        let record = &self.record;
        let index = &self.index;
        let field = |k: usize| -> Result<f64, IngestError> {
            let raw = &record[index[k]];
            raw.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("`{raw}` is not a number in column {}", COLUMNS[k]),
            })
        };
        let parsed = (|| {
            let sample = RawSample {
                timestamp_s: field(0)?,
                voltage_v: field(1)?,
                current_a: field(2)?,
                temperature_c: field(3)?,
            };
            check_sample(&sample, line)?;
            Ok((sample, line))
        })();
        Some(parsed)
    }
}

impl<R: Read> Iterator for SampleReader<R> {
    type Item = Result<(RawSample, u64), IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_sample()
    }
}

/// Parses a whole cell CSV into a validated series.
pub fn parse_cell_csv<R: Read>(
    source: R,
    cell_id: &str,
    nominal_capacity_ah: f64,
) -> Result<CellSeries, IngestError> {
    if !(nominal_capacity_ah > 0.0 && nominal_capacity_ah.is_finite()) {
        return Err(IngestError::NonPositiveNominal(nominal_capacity_ah));
    }
    let mut samples = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for item in SampleReader::new(source)? {
        let (sample, line) = item?;
        if sample.timestamp_s <= last_t {
            return Err(IngestError::NonMonotonicTimestamp { line });
        }
        last_t = sample.timestamp_s;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    CellSeries::new(cell_id, samples, nominal_capacity_ah)
}

fn csv_error(e: csv::Error, line_hint: u64) -> IngestError {
    let line = e.position().map_or(line_hint, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        kind => IngestError::MalformedRow {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

/// Writes the canonical CSV form: fixed header, shortest round-trip decimal
/// representation, LF line endings.
pub fn write_cell_csv<W: Write>(series: &CellSeries, mut sink: W) -> std::io::Result<()> {
    let mut buf = String::with_capacity(series.len() * 40 + CSV_HEADER.len() + 1);
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for s in series.samples() {
        let _ = writeln!(
            buf,
            "{},{},{},{}",
            s.timestamp_s, s.voltage_v, s.current_a, s.temperature_c
        );
    }
    sink.write_all(buf.as_bytes())
}

pub fn read_cell_file(
    path: &Path,
    cell_id: &str,
    nominal_capacity_ah: f64,
) -> Result<CellSeries, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_cell_csv(std::io::BufReader::new(file), cell_id, nominal_capacity_ah)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Charge,
    Discharge,
    Rest,
}

impl SegmentKind {
    pub fn classify(current_a: f64, deadband_a: f64) -> Self {
        if current_a > deadband_a {
            SegmentKind::Charge
        } else if current_a < -deadband_a {
            SegmentKind::Discharge
        } else {
            SegmentKind::Rest
        }
    }
}

/// Half-open sample range `[start_idx, end_idx)` of one kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSegment {
    pub kind: SegmentKind,
    pub start_idx: usize,
    pub end_idx: usize,
    pub cell_id: String,
}

impl CycleSegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.end_idx == self.start_idx
    }
}

/// Splits a series into maximal runs of equal [`SegmentKind`]. A negative
/// deadband is treated as zero.
pub fn segment_cycles(series: &CellSeries, deadband_a: f64) -> Vec<CycleSegment> {
    segment_range(series, 0, series.len(), deadband_a)
}

/// Segments the sub-range `[start, end)` of a series.
pub fn segment_range(
    series: &CellSeries,
    start: usize,
    end: usize,
    deadband_a: f64,
) -> Vec<CycleSegment> {
    let deadband = deadband_a.max(0.0);
    let samples = &series.samples()[start..end];
    let mut out: Vec<CycleSegment> = Vec::new();
    for (offset, s) in samples.iter().enumerate() {
        let kind = SegmentKind::classify(s.current_a, deadband);
        match out.last_mut() {
            Some(seg) if seg.kind == kind => seg.end_idx += 1,
            _ => out.push(CycleSegment {
                kind,
                start_idx: start + offset,
                end_idx: start + offset + 1,
                cell_id: series.cell_id().to_owned(),
            }),
        }
    }
    out
}

/// One record of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cell_id: String,
    pub path: PathBuf,
    pub nominal_capacity_ah: f64,
}

/// A dataset manifest: a JSON array of [`ManifestEntry`]. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub cells: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for entry in &mut manifest.cells {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for entry in &manifest.cells {
            if !seen.insert(entry.cell_id.as_str()) {
                return Err(IngestError::Manifest(format!(
                    "duplicate cell_id `{}`",
                    entry.cell_id
                )));
            }
        }
        Ok(manifest)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn read_cell(&self, entry: &ManifestEntry) -> Result<CellSeries, IngestError> {
        read_cell_file(&entry.path, &entry.cell_id, entry.nominal_capacity_ah)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, i: f64) -> RawSample {
        RawSample {
            timestamp_s: t,
            voltage_v: 3.7,
            current_a: i,
            temperature_c: 25.0,
        }
    }

    fn series_with_currents(currents: &[f64]) -> CellSeries {
        let samples = currents
            .iter()
            .enumerate()
            .map(|(k, &i)| sample(k as f64, i))
            .collect();
        CellSeries::new("c", samples, 2.0).unwrap()
    }

    fn kinds(segs: &[CycleSegment]) -> Vec<(SegmentKind, usize, usize)> {
        segs.iter().map(|s| (s.kind, s.start_idx, s.end_idx)).collect()
    }

    #[test]
    fn parses_minimal_csv() {
        let csv = "timestamp_s,voltage_v,current_a,temperature_c\n0,3.7,1.0,25\n1,3.71,1.0,25.1\n";
        let s = parse_cell_csv(csv.as_bytes(), "a", 2.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.samples()[1].voltage_v, 3.71);
    }

    #[test]
    fn tie_in_timestamps_reports_line_four() {
        let csv = "timestamp_s,voltage_v,current_a,temperature_c\n0.0,3.7,0,25\n1.0,3.7,0,25\n1.0,3.7,0,25\n";
        match parse_cell_csv(csv.as_bytes(), "a", 2.0) {
            Err(IngestError::NonMonotonicTimestamp { line }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn voltage_out_of_range_rejected() {
        let csv = "timestamp_s,voltage_v,current_a,temperature_c\n0,3.7,0,25\n1,12.0,0,25\n";
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 2.0),
            Err(IngestError::RangeViolation {
                field: "voltage_v",
                line: 3,
                ..
            })
        ));
    }

    #[test]
    fn temperature_out_of_range_rejected() {
        let csv = "timestamp_s,voltage_v,current_a,temperature_c\n0,3.7,0,25\n1,3.7,0,150\n";
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 2.0),
            Err(IngestError::RangeViolation {
                field: "temperature_c",
                ..
            })
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            parse_cell_csv("".as_bytes(), "a", 2.0),
            Err(IngestError::EmptyFile)
        ));
        assert!(matches!(
            parse_cell_csv(format!("{CSV_HEADER}\n").as_bytes(), "a", 2.0),
            Err(IngestError::EmptyFile)
        ));
        assert!(matches!(
            parse_cell_csv(format!("{CSV_HEADER}\n0,3.7,0,25\n").as_bytes(), "a", 2.0),
            Err(IngestError::TooFewSamples(1))
        ));
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let csv = format!("{CSV_HEADER}\n0,3.7,0,25\n1,abc,0,25\n");
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 2.0),
            Err(IngestError::MalformedRow { line: 3, .. })
        ));
        let csv = format!("{CSV_HEADER}\n0,3.7,0,25\n1,3.7,0\n");
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 2.0),
            Err(IngestError::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn missing_column_and_bad_nominal() {
        let csv = "timestamp_s,voltage_v,current_a\n0,3.7,0\n1,3.7,0\n";
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 2.0),
            Err(IngestError::MissingColumn("temperature_c"))
        ));
        let csv = format!("{CSV_HEADER}\n0,3.7,0,25\n1,3.7,0,25\n");
        assert!(matches!(
            parse_cell_csv(csv.as_bytes(), "a", 0.0),
            Err(IngestError::NonPositiveNominal(_))
        ));
    }

    #[test]
    fn extra_columns_are_ignored() {
        let with_soc = "soc,timestamp_s,voltage_v,current_a,temperature_c,soh\n0.5,0,3.7,1,25,99\n0.6,1,3.8,1,25,98\n";
        let plain = format!("{CSV_HEADER}\n0,3.7,1,25\n1,3.8,1,25\n");
        let a = parse_cell_csv(with_soc.as_bytes(), "a", 2.0).unwrap();
        let b = parse_cell_csv(plain.as_bytes(), "a", 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let csv = format!("{CSV_HEADER}\n0,3.7,-1.25,25\n0.5,3.6999999999999997,-1.25,25.1\n");
        let s = parse_cell_csv(csv.as_bytes(), "a", 2.0).unwrap();
        let mut out = Vec::new();
        write_cell_csv(&s, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn segments_follow_sign_pattern() {
        let s = series_with_currents(&[2.0, 2.0, 0.0, 0.0, -2.0, -2.0]);
        let segs = segment_cycles(&s, 0.05);
        assert_eq!(
            kinds(&segs),
            vec![
                (SegmentKind::Charge, 0, 2),
                (SegmentKind::Rest, 2, 4),
                (SegmentKind::Discharge, 4, 6)
            ]
        );
    }

    #[test]
    fn all_zero_current_is_one_rest() {
        let s = series_with_currents(&[0.0; 5]);
        assert_eq!(kinds(&segment_cycles(&s, 0.05)), vec![(SegmentKind::Rest, 0, 5)]);
    }

    #[test]
    fn alternating_currents_do_not_merge() {
        let s = series_with_currents(&[2.0, -2.0, 2.0, -2.0]);
        let segs = segment_cycles(&s, 0.05);
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn deadband_boundary_is_rest() {
        let s = series_with_currents(&[0.05, -0.05, 0.0500001]);
        let segs = segment_cycles(&s, 0.05);
        assert_eq!(
            kinds(&segs),
            vec![(SegmentKind::Rest, 0, 2), (SegmentKind::Charge, 2, 3)]
        );
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(
            &path,
            r#"[{"cell_id":"a","path":"a.csv","nominal_capacity_ah":2.0}]"#,
        )
        .unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.cells[0].path, dir.path().join("a.csv"));
        std::fs::write(
            &path,
            r#"[{"cell_id":"a","path":"a.csv","nominal_capacity_ah":2.0},{"cell_id":"a","path":"b.csv","nominal_capacity_ah":2.0}]"#,
        )
        .unwrap();
        assert!(matches!(Manifest::load(&path), Err(IngestError::Manifest(_))));
    }
}
