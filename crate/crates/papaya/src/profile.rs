//! Training profiles: measured (batch size, peak memory, batch latency)
//! observations for one (model, method, device) combination, plus CSV/JSON
//! ingestion and soft validation.
//!
//! File formats (one series per file):
//!
//! ```text
//! # model=<id> method=<id> device_memory_bytes=<int>
//! batch_size,peak_memory_bytes,latency_ms,oom
//! 16,6000000000,660.0,false
//! 512,,,true
//! ```
//!
//! or the JSON equivalent
//! `{"model", "method", "device_memory_bytes", "points": [...]}`.
//!
//! Memory crosses the file boundary as integer bytes and latency as
//! milliseconds; model math runs in GB and seconds (see
//! [`crate::model::BYTES_PER_GB`]). Out-of-memory rows keep their batch size
//! but carry no measurements; they bound the empirical max batch and are
//! never fitted.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BYTES_PER_GB;

const CSV_HEADER: &str = "batch_size,peak_memory_bytes,latency_ms,oom";
const MS_PER_S: f64 = 1e3;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("missing metadata line `# model=<id> method=<id> device_memory_bytes=<int>`")]
    MissingMeta,
    #[error("invalid JSON profile: {0}")]
    Json(String),
    #[error("duplicate batch size {batch}")]
    DuplicateBatchSize { batch: u32 },
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("batch {batch}: {field} must be positive")]
    NonPositiveValue { batch: u32, field: &'static str },
    #[error("batch {batch}: out-of-memory point must not carry measurements")]
    OomWithValues { batch: u32 },
    #[error("batch {batch}: measured point is missing memory or latency")]
    MissingValues { batch: u32 },
    #[error("device memory must be positive")]
    NonPositiveDeviceMemory,
    #[error("batch {batch}: peak memory {peak} bytes exceeds device memory {device} bytes")]
    MemoryExceedsDevice { batch: u32, peak: u64, device: u64 },
    #[error("invalid {what} id {id:?}: ids are nonempty [A-Za-z0-9._-] tokens")]
    InvalidId { what: &'static str, id: String },
}

/// One measured batch size. `oom` means the run failed with out-of-memory;
/// memory and latency are then absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub batch_size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_memory_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default)]
    pub oom: bool,
}

impl ProfilePoint {
    pub fn measured(batch_size: u32, peak_memory_bytes: u64, latency_ms: f64) -> Self {
        Self {
            batch_size,
            peak_memory_bytes: Some(peak_memory_bytes),
            latency_ms: Some(latency_ms),
            oom: false,
        }
    }

    pub fn oom(batch_size: u32) -> Self {
        Self {
            batch_size,
            peak_memory_bytes: None,
            latency_ms: None,
            oom: true,
        }
    }

    /// Peak memory in GB, absent for OOM points.
    pub fn peak_memory_gb(&self) -> Option<f64> {
        self.peak_memory_bytes.map(|b| b as f64 / BYTES_PER_GB)
    }

    /// Batch latency in seconds, absent for OOM points.
    pub fn latency_s(&self) -> Option<f64> {
        self.latency_ms.map(|ms| ms / MS_PER_S)
    }

    fn check(&self) -> Result<(), ProfileError> {
        if self.batch_size == 0 {
            return Err(ProfileError::ZeroBatchSize);
        }
        if self.oom {
            if self.peak_memory_bytes.is_some() || self.latency_ms.is_some() {
                return Err(ProfileError::OomWithValues {
                    batch: self.batch_size,
                });
            }
            return Ok(());
        }
        match (self.peak_memory_bytes, self.latency_ms) {
            (Some(mem), Some(lat)) => {
                if mem == 0 {
                    return Err(ProfileError::NonPositiveValue {
                        batch: self.batch_size,
                        field: "peak_memory_bytes",
                    });
                }
                if !(lat > 0.0) {
                    return Err(ProfileError::NonPositiveValue {
                        batch: self.batch_size,
                        field: "latency_ms",
                    });
                }
                Ok(())
            }
            _ => Err(ProfileError::MissingValues {
                batch: self.batch_size,
            }),
        }
    }
}

/// A validated profile: points sorted by strictly increasing batch size, all
/// measured peaks within the device budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesFile", into = "SeriesFile")]
pub struct ProfileSeries {
    model_id: String,
    method_id: String,
    device_memory_bytes: u64,
    points: Vec<ProfilePoint>,
}

impl ProfileSeries {
    pub fn new(
        model_id: impl Into<String>,
        method_id: impl Into<String>,
        device_memory_bytes: u64,
        mut points: Vec<ProfilePoint>,
    ) -> Result<Self, ProfileError> {
        let model_id = valid_id("model", model_id.into())?;
        let method_id = valid_id("method", method_id.into())?;
        if device_memory_bytes == 0 {
            return Err(ProfileError::NonPositiveDeviceMemory);
        }
        points.sort_by_key(|p| p.batch_size);
        for pair in points.windows(2) {
            if pair[0].batch_size == pair[1].batch_size {
                return Err(ProfileError::DuplicateBatchSize {
                    batch: pair[0].batch_size,
                });
            }
        }
        for p in &points {
            p.check()?;
            if let Some(peak) = p.peak_memory_bytes {
                if peak > device_memory_bytes {
                    return Err(ProfileError::MemoryExceedsDevice {
                        batch: p.batch_size,
                        peak,
                        device: device_memory_bytes,
                    });
                }
            }
        }
        Ok(Self {
            model_id,
            method_id,
            device_memory_bytes,
            points,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn method_id(&self) -> &str {
        &self.method_id
    }

    pub fn device_memory_bytes(&self) -> u64 {
        self.device_memory_bytes
    }

    /// Device memory in GB.
    pub fn device_memory_gb(&self) -> f64 {
        self.device_memory_bytes as f64 / BYTES_PER_GB
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    /// Measured points only, as (batch, peak GB, latency s).
    pub fn measured(&self) -> impl Iterator<Item = (u32, f64, f64)> + '_ {
        self.points.iter().filter(|p| !p.oom).map(|p| {
            (
                p.batch_size,
                p.peak_memory_gb().expect("validated measured point"),
                p.latency_s().expect("validated measured point"),
            )
        })
    }
}

/// Soft checks worth surfacing to an operator but not worth rejecting the
/// series over.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesWarning {
    /// Fewer than four measured points; fits will be fragile.
    InsufficientPoints { non_oom: usize },
    /// Peak memory decreased between consecutive batch sizes.
    NonMonotoneMemory { batch: u32 },
    /// A measured peak exceeds the device budget (cannot happen for series
    /// built by this crate; kept as defense for foreign producers).
    ExceedsDeviceMemory { batch: u32 },
}

impl fmt::Display for SeriesWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesWarning::InsufficientPoints { non_oom } => {
                write!(
                    f,
                    "only {non_oom} measured points: insufficient for a robust fit"
                )
            }
            SeriesWarning::NonMonotoneMemory { batch } => {
                write!(
                    f,
                    "peak memory decreases at batch {batch}: non-monotone profile"
                )
            }
            SeriesWarning::ExceedsDeviceMemory { batch } => {
                write!(f, "peak memory at batch {batch} exceeds the device budget")
            }
        }
    }
}

/// Scan a series for suspicious-but-tolerable conditions.
pub fn validate_series(series: &ProfileSeries) -> Vec<SeriesWarning> {
    let mut warnings = Vec::new();
    let measured: Vec<&ProfilePoint> = series.points.iter().filter(|p| !p.oom).collect();
    if measured.len() < 4 {
        warnings.push(SeriesWarning::InsufficientPoints {
            non_oom: measured.len(),
        });
    }
    for pair in measured.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.peak_memory_bytes > b.peak_memory_bytes {
            warnings.push(SeriesWarning::NonMonotoneMemory {
                batch: b.batch_size,
            });
        }
    }
    for p in &measured {
        if p.peak_memory_bytes
            .is_some_and(|peak| peak > series.device_memory_bytes)
        {
            warnings.push(SeriesWarning::ExceedsDeviceMemory {
                batch: p.batch_size,
            });
        }
    }
    warnings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileFormat {
    Csv,
    Json,
}

/// Parse a profile in either supported format.
pub fn parse_profile(source: &str, format: ProfileFormat) -> Result<ProfileSeries, ProfileError> {
    match format {
        ProfileFormat::Csv => parse_csv(source),
        ProfileFormat::Json => parse_json(source),
    }
}

/// Parse the CSV profile format. Row order in the file is irrelevant; the
/// returned series is sorted by batch size.
pub fn parse_csv(source: &str) -> Result<ProfileSeries, ProfileError> {
    let mut lines = source.lines().enumerate();

    let (_, meta) = lines.next().ok_or(ProfileError::MissingMeta)?;
    let (model_id, method_id, device_memory_bytes) = parse_meta_line(meta)?;

    let (header_line, header) = lines.next().ok_or_else(|| ProfileError::Malformed {
        line: 2,
        msg: format!("missing column header `{CSV_HEADER}`"),
    })?;
    if header.trim() != CSV_HEADER {
        return Err(ProfileError::Malformed {
            line: header_line + 1,
            msg: format!(
                "expected column header `{CSV_HEADER}`, found `{}`",
                header.trim()
            ),
        });
    }

    let mut points = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        points.push(parse_row(raw, line)?);
    }

    ProfileSeries::new(model_id, method_id, device_memory_bytes, points)
}

/// Parse the JSON profile format.
pub fn parse_json(source: &str) -> Result<ProfileSeries, ProfileError> {
    serde_json::from_str(source).map_err(|e| ProfileError::Json(e.to_string()))
}

/// Render a series back into the CSV profile format.
pub fn serialize_csv(series: &ProfileSeries) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# model={} method={} device_memory_bytes={}\n",
        series.model_id, series.method_id, series.device_memory_bytes
    ));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &series.points {
        let mem = p
            .peak_memory_bytes
            .map(|v| v.to_string())
            .unwrap_or_default();
        let lat = p.latency_ms.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.batch_size, mem, lat, p.oom));
    }
    out
}

/// Render a series into the JSON profile format.
pub fn serialize_json(series: &ProfileSeries) -> String {
    serde_json::to_string_pretty(series).expect("profile series serializes")
}

fn parse_meta_line(meta: &str) -> Result<(String, String, u64), ProfileError> {
    let body = meta.strip_prefix('#').ok_or(ProfileError::MissingMeta)?;
    let mut model = None;
    let mut method = None;
    let mut device = None;
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| ProfileError::Malformed {
                line: 1,
                msg: format!("bad metadata token `{token}`"),
            })?;
        match key {
            "model" => model = Some(value.to_string()),
            "method" => method = Some(value.to_string()),
            "device_memory_bytes" => {
                device = Some(value.parse::<u64>().map_err(|_| ProfileError::Malformed {
                    line: 1,
                    msg: format!("device_memory_bytes is not an integer: `{value}`"),
                })?);
            }
            other => {
                return Err(ProfileError::Malformed {
                    line: 1,
                    msg: format!("unknown metadata key `{other}`"),
                })
            }
        }
    }
    let model = model.ok_or(ProfileError::MissingMeta)?;
    let method = method.ok_or(ProfileError::MissingMeta)?;
    let device = device.ok_or(ProfileError::MissingMeta)?;
    Ok((model, method, device))
}

fn parse_row(raw: &str, line: usize) -> Result<ProfilePoint, ProfileError> {
    let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(ProfileError::Malformed {
            line,
            msg: format!("expected 4 comma-separated fields, found {}", fields.len()),
        });
    }
    let batch_size: u32 = fields[0].parse().map_err(|_| ProfileError::Malformed {
        line,
        msg: format!("batch_size is not a positive integer: `{}`", fields[0]),
    })?;
    let oom: bool = fields[3].parse().map_err(|_| ProfileError::Malformed {
        line,
        msg: format!("oom is not a boolean: `{}`", fields[3]),
    })?;
    let peak_memory_bytes = if fields[1].is_empty() {
        None
    } else {
        Some(
            fields[1]
                .parse::<u64>()
                .map_err(|_| ProfileError::Malformed {
                    line,
                    msg: format!("peak_memory_bytes is not an integer: `{}`", fields[1]),
                })?,
        )
    };
    let latency_ms = if fields[2].is_empty() {
        None
    } else {
        Some(
            fields[2]
                .parse::<f64>()
                .map_err(|_| ProfileError::Malformed {
                    line,
                    msg: format!("latency_ms is not a number: `{}`", fields[2]),
                })?,
        )
    };
    Ok(ProfilePoint {
        batch_size,
        peak_memory_bytes,
        latency_ms,
        oom,
    })
}

fn valid_id(what: &'static str, id: String) -> Result<String, ProfileError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(id)
    } else {
        Err(ProfileError::InvalidId { what, id })
    }
}

/// Raw file schema for the JSON format; invariants are re-checked when
/// converting into [`ProfileSeries`].
#[derive(Serialize, Deserialize)]
struct SeriesFile {
    model: String,
    method: String,
    device_memory_bytes: u64,
    points: Vec<ProfilePoint>,
}

impl TryFrom<SeriesFile> for ProfileSeries {
    type Error = ProfileError;

    fn try_from(raw: SeriesFile) -> Result<Self, Self::Error> {
        ProfileSeries::new(raw.model, raw.method, raw.device_memory_bytes, raw.points)
    }
}

impl From<ProfileSeries> for SeriesFile {
    fn from(series: ProfileSeries) -> Self {
        SeriesFile {
            model: series.model_id,
            method: series.method_id,
            device_memory_bytes: series.device_memory_bytes,
            points: series.points,
        }
    }
}
