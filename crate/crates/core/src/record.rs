//! Multichannel acceleration records and the column-text record format.
//!
//! ```text
//! #rate_hz 1066
//! #case i
//! #sensor S1 0.120 100
//! #sensor S2 0.240 100
//! 1.25e-3 -4.0e-4
//! ...
//! ```
//!
//! One `#sensor` line per channel (id, span position in metres, sensitivity in
//! mV/g), then one whitespace-separated row per time step with one column per
//! channel. Other `#` lines are comments and are skipped on load.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    Flapwise,
}

/// A mono-axial accelerometer on the spar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: String,
    /// Distance from the clamped root, metres.
    pub span_position: f64,
    /// Nominal sensitivity in mV/g. Informational only; samples are stored in m/s².
    pub sensitivity_mv_per_g: f64,
    #[serde(default)]
    pub axis: Axis,
}

impl SensorSpec {
    pub fn new(id: impl Into<String>, span_position: f64, sensitivity_mv_per_g: f64) -> Self {
        Self { id: id.into(), span_position, sensitivity_mv_per_g, axis: Axis::Flapwise }
    }
}

/// Channel-major acceleration samples (rows = channels, columns = time steps).
///
/// Immutable once constructed; every constructor path validates the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionRecord {
    sensors: Vec<SensorSpec>,
    sample_rate: f64,
    samples: DMatrix<f64>,
    case_label: String,
}

impl AcquisitionRecord {
    pub fn new(
        sensors: Vec<SensorSpec>,
        sample_rate: f64,
        samples: DMatrix<f64>,
        case_label: impl Into<String>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidRecord(format!("sample rate must be positive, got {sample_rate}")));
        }
        if sensors.is_empty() {
            return Err(Error::InvalidRecord("record has no sensors".into()));
        }
        if samples.nrows() != sensors.len() {
            return Err(Error::InvalidRecord(format!(
                "{} sensors declared but samples have {} channels",
                sensors.len(),
                samples.nrows()
            )));
        }
        let mut seen = HashSet::new();
        for s in &sensors {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidRecord(format!("duplicate sensor id {:?}", s.id)));
            }
            if s.id.is_empty() || s.id.contains(char::is_whitespace) {
                return Err(Error::InvalidRecord(format!("invalid sensor id {:?}", s.id)));
            }
            if !(s.span_position.is_finite() && s.span_position >= 0.0) {
                return Err(Error::InvalidRecord(format!(
                    "sensor {} has invalid span position {}",
                    s.id, s.span_position
                )));
            }
        }
        if let Some(idx) = samples.iter().position(|v| !v.is_finite()) {
            let (ch, step) = (idx % samples.nrows(), idx / samples.nrows());
            return Err(Error::InvalidRecord(format!(
                "non-finite sample on channel {} at step {step}",
                sensors[ch].id
            )));
        }
        Ok(Self { sensors, sample_rate, samples, case_label: case_label.into() })
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn case_label(&self) -> &str {
        &self.case_label
    }

    pub fn channel_count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Record length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.ncols() as f64 / self.sample_rate
    }

    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.samples.row(index).iter().copied().collect()
    }

    pub fn channel_index(&self, id: &str) -> Option<usize> {
        self.sensors.iter().position(|s| s.id == id)
    }
}

pub fn load_record(path: impl AsRef<Path>) -> Result<AcquisitionRecord> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };

    let mut rate = None;
    let mut case = None;
    let mut sensors: Vec<SensorSpec> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut in_body = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            let mut parts = header.split_whitespace();
            let keyword = parts.next().unwrap_or("");
            let known = matches!(keyword, "rate_hz" | "case" | "sensor");
            if known && in_body {
                return Err(parse_err(lineno, format!("header #{keyword} after data rows")));
            }
            match keyword {
                "rate_hz" => {
                    let value: f64 = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(lineno, "malformed #rate_hz header".into()))?;
                    if !(value.is_finite() && value > 0.0) {
                        return Err(parse_err(lineno, format!("sample rate must be positive, got {value}")));
                    }
                    rate = Some(value);
                }
                "case" => {
                    let label = header["case".len()..].trim();
                    case = Some(label.to_string());
                }
                "sensor" => {
                    let fields: Vec<&str> = parts.collect();
                    if fields.len() != 3 {
                        return Err(parse_err(lineno, "expected `#sensor <id> <pos_m> <sens_mV_per_g>`".into()));
                    }
                    let pos: f64 = fields[1]
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad sensor position {:?}", fields[1])))?;
                    let sens: f64 = fields[2]
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad sensor sensitivity {:?}", fields[2])))?;
                    sensors.push(SensorSpec::new(fields[0], pos, sens));
                }
                _ => {}
            }
            continue;
        }

        if !in_body {
            if rate.is_none() {
                return Err(parse_err(lineno, "data rows before #rate_hz header".into()));
            }
            if sensors.is_empty() {
                return Err(parse_err(lineno, "data rows before any #sensor header".into()));
            }
            in_body = true;
        }
        let before = data.len();
        for token in trimmed.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| parse_err(lineno, format!("unparseable sample {token:?}")))?;
            if !value.is_finite() {
                return Err(parse_err(lineno, format!("non-finite sample {token:?}")));
            }
            data.push(value);
        }
        let columns = data.len() - before;
        if columns != sensors.len() {
            return Err(parse_err(lineno, format!("{} sensors declared but row has {columns} columns", sensors.len())));
        }
    }

    let rate = rate.ok_or_else(|| parse_err(0, "missing #rate_hz header".into()))?;
    if sensors.is_empty() {
        return Err(parse_err(0, "missing #sensor headers".into()));
    }
    let channels = sensors.len();
    let steps = data.len() / channels;
    // File order (time step major, channels contiguous) is column-major for a
    // channels x steps matrix.
    let samples = DMatrix::from_vec(channels, steps, data);
    AcquisitionRecord::new(sensors, rate, samples, case.unwrap_or_default())
}

/// Writes `record` in the column-text format. `comments` are emitted verbatim
/// as `# <comment>` lines after the typed header.
pub fn write_record<W: Write>(record: &AcquisitionRecord, mut out: W, comments: &[String]) -> std::io::Result<()> {
    writeln!(out, "#rate_hz {}", record.sample_rate)?;
    writeln!(out, "#case {}", record.case_label)?;
    for s in &record.sensors {
        writeln!(out, "#sensor {} {} {}", s.id, s.span_position, s.sensitivity_mv_per_g)?;
    }
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut line = String::new();
    for step in record.samples.column_iter() {
        line.clear();
        for (i, v) in step.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            // `{:e}` is the shortest representation that round-trips exactly.
            use std::fmt::Write as _;
            let _ = write!(line, "{v:e}");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

pub fn save_record(record: &AcquisitionRecord, path: impl AsRef<Path>) -> Result<()> {
    save_record_with_comments(record, path, &[])
}

pub fn save_record_with_comments(
    record: &AcquisitionRecord,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_record(record, BufWriter::new(file), comments).map_err(|e| Error::io(path, e))
}
