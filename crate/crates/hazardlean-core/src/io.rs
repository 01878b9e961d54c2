//! Dataset and artifact (de)serialisation.
//!
//! Datasets travel as long-format CSV: one row per (subject, grid point) with
//! columns `subject_id, time_index, x, z_1..z_d, at_risk, event_increment`
//! and a mandatory header. Scalars are printed with Rust's shortest
//! round-tripping decimal representation, so a write/read cycle reproduces
//! the sample exactly. Study artifacts additionally use JSON sidecars and a
//! 64-bit FNV-1a content hash for manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{SubjectPath, SurvivalSample, TimeGrid};
use crate::scalar::Real;

/// FNV-1a 64-bit offset basis.
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
/// FNV-1a 64-bit prime.
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash of a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// 64-bit FNV-1a hash rendered as 16 lowercase hex digits.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Writes a sample in long CSV format to any writer.
pub fn write_sample_csv<T: Real, W: Write>(sample: &SurvivalSample<T>, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let d = sample.d();
    let mut header: Vec<String> = vec![
        "subject_id".to_string(),
        "time_index".to_string(),
        "x".to_string(),
    ];
    for j in 1..=d {
        header.push(format!("z_{j}"));
    }
    header.push("at_risk".to_string());
    header.push("event_increment".to_string());
    writer.write_record(&header)?;

    let q = sample.grid().q();
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (id, subject) in sample.subjects().iter().enumerate() {
        for i in 0..q {
            row.clear();
            row.push(id.to_string());
            row.push(i.to_string());
            row.push(format!("{}", subject.x()[i]));
            for j in 0..d {
                row.push(format!("{}", subject.z_at(i, j)));
            }
            row.push(if subject.at_risk(i) { "1" } else { "0" }.to_string());
            row.push(if subject.n_increment(i) { "1" } else { "0" }.to_string());
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Renders a sample as a long-CSV string.
pub fn sample_to_csv_string<T: Real>(sample: &SurvivalSample<T>) -> Result<String> {
    let mut buf = Vec::new();
    write_sample_csv(sample, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Usage(format!("csv output is not utf-8: {e}")))
}

/// Writes a sample in long CSV format to a file path.
pub fn write_sample_csv_file<T: Real, P: AsRef<Path>>(
    sample: &SurvivalSample<T>,
    path: P,
) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_sample_csv(sample, BufWriter::new(file))
}

/// Parses the long-CSV header, returning the covariate dimension `d`.
fn parse_header(headers: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 6 {
        return Err(Error::Usage(format!(
            "dataset header has {} columns, need at least subject_id, time_index, x, z_1, \
             at_risk, event_increment",
            cols.len()
        )));
    }
    let d = cols.len() - 5;
    let mut expected: Vec<String> = vec![
        "subject_id".to_string(),
        "time_index".to_string(),
        "x".to_string(),
    ];
    for j in 1..=d {
        expected.push(format!("z_{j}"));
    }
    expected.push("at_risk".to_string());
    expected.push("event_increment".to_string());
    for (got, want) in cols.iter().zip(expected.iter()) {
        if got != want {
            return Err(Error::Usage(format!(
                "dataset header column mismatch: found '{got}', expected '{want}'"
            )));
        }
    }
    Ok(d)
}

fn parse_scalar<T: Real>(field: &str, name: &str, line: u64) -> Result<T> {
    let value: f64 = field.parse().map_err(|_| {
        Error::Usage(format!("line {line}: cannot parse {name} value '{field}'"))
    })?;
    T::from_f64(value)
        .ok_or_else(|| Error::Usage(format!("line {line}: {name} value '{field}' not representable")))
}

fn parse_indicator(field: &str, name: &str, line: u64) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Usage(format!(
            "line {line}: {name} must be 0 or 1, found '{other}'"
        ))),
    }
}

/// Rows collected for one subject before validation.
struct PendingSubject<T> {
    x: Vec<T>,
    z: Vec<T>,
    at_risk: Vec<bool>,
    events: Vec<bool>,
}

impl<T: Real> PendingSubject<T> {
    fn new(d: usize) -> Self {
        Self {
            x: Vec::new(),
            z: Vec::with_capacity(d),
            at_risk: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Validates the at-risk and event columns and builds the subject path.
    fn finish(self, id: usize, d: usize) -> Result<SubjectPath<T>> {
        let q = self.x.len();
        let event_index = self
            .at_risk
            .iter()
            .rposition(|&r| r)
            .ok_or_else(|| Error::Usage(format!("subject {id}: at_risk is 0 at time 0")))?;
        for (i, &r) in self.at_risk.iter().enumerate() {
            if r != (i <= event_index) {
                return Err(Error::Usage(format!(
                    "subject {id}: at_risk must be 1 up to the observed time and 0 after, \
                     violated at time_index {i}"
                )));
            }
        }
        let mut delta = false;
        for (i, &e) in self.events.iter().enumerate() {
            if e {
                if delta {
                    return Err(Error::Usage(format!(
                        "subject {id}: more than one event_increment of 1"
                    )));
                }
                if i != event_index {
                    return Err(Error::Usage(format!(
                        "subject {id}: event_increment at time_index {i} but at-risk period \
                         ends at {event_index}"
                    )));
                }
                delta = true;
            }
        }
        if !delta && event_index != q - 1 {
            return Err(Error::Usage(format!(
                "subject {id}: censored before the last grid point (at_risk ends at \
                 {event_index} of {q} with no event)"
            )));
        }
        SubjectPath::new(self.z, self.x, d, event_index, delta)
    }
}

/// Reads a sample from long CSV format.
///
/// Rows must be grouped by subject in increasing `subject_id` order starting
/// at 0, with `time_index` running contiguously from 0 within each subject;
/// every subject must cover the same grid. The at-risk column must be an
/// unbroken run of 1s ending at the observed time, and `event_increment`
/// may contain at most a single 1, placed at the end of the at-risk run.
pub fn read_sample_csv<T: Real, R: Read>(input: R) -> Result<SurvivalSample<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let d = parse_header(reader.headers()?)?;

    let mut subjects: Vec<SubjectPath<T>> = Vec::new();
    let mut pending: Option<PendingSubject<T>> = None;
    let mut current_id: usize = 0;
    let mut q: Option<usize> = None;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 5 {
            return Err(Error::Usage(format!(
                "line {line}: row has {} fields, header promises {}",
                record.len(),
                d + 5
            )));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| Error::Usage(format!("line {line}: bad subject_id '{}'", &record[0])))?;
        let time: usize = record[1]
            .parse()
            .map_err(|_| Error::Usage(format!("line {line}: bad time_index '{}'", &record[1])))?;

        if pending.is_none() {
            if id != 0 {
                return Err(Error::Usage(format!(
                    "line {line}: first subject_id must be 0, found {id}"
                )));
            }
            pending = Some(PendingSubject::new(d));
        } else if id == current_id + 1 {
            let done = pending.take().expect("pending subject present");
            let finished = done.finish(current_id, d)?;
            match q {
                None => q = Some(finished.q()),
                Some(expect) if expect != finished.q() => {
                    return Err(Error::Usage(format!(
                        "subject {current_id} has {} rows, earlier subjects have {expect}",
                        finished.q()
                    )));
                }
                Some(_) => {}
            }
            subjects.push(finished);
            pending = Some(PendingSubject::new(d));
            current_id = id;
        } else if id != current_id {
            return Err(Error::Usage(format!(
                "line {line}: subject_id {id} out of order (expected {current_id} or {})",
                current_id + 1
            )));
        }

        let subject = pending.as_mut().expect("pending subject present");
        if time != subject.x.len() {
            return Err(Error::Usage(format!(
                "line {line}: time_index {time} out of order for subject {id} (expected {})",
                subject.x.len()
            )));
        }
        subject.x.push(parse_scalar(&record[2], "x", line)?);
        for j in 0..d {
            subject
                .z
                .push(parse_scalar(&record[3 + j], "z", line)?);
        }
        subject
            .at_risk
            .push(parse_indicator(&record[3 + d], "at_risk", line)?);
        subject
            .events
            .push(parse_indicator(&record[4 + d], "event_increment", line)?);
    }

    let last = pending.ok_or_else(|| Error::Usage("dataset has no data rows".into()))?;
    let finished = last.finish(current_id, d)?;
    if let Some(expect) = q {
        if expect != finished.q() {
            return Err(Error::Usage(format!(
                "subject {current_id} has {} rows, earlier subjects have {expect}",
                finished.q()
            )));
        }
    }
    let q = finished.q();
    subjects.push(finished);

    let grid = TimeGrid::new(q)?;
    SurvivalSample::new(grid, subjects, d)
}

/// Reads a sample in long CSV format from a file path.
pub fn read_sample_csv_file<T: Real, P: AsRef<Path>>(path: P) -> Result<SurvivalSample<T>> {
    let file = File::open(path.as_ref())?;
    read_sample_csv(BufReader::new(file))
}

/// Serialises a value as pretty-printed JSON with a trailing newline.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes a value as pretty-printed JSON to a file path.
pub fn write_json_file<S: Serialize, P: AsRef<Path>>(value: &S, path: P) -> Result<()> {
    let text = to_json_string(value)?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

/// Reads a JSON value from a file path.
pub fn read_json_file<D: DeserializeOwned, P: AsRef<Path>>(path: P) -> Result<D> {
    let file = File::open(path.as_ref())?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
