//! Line-delimited JSON I/O for the dataset record types.
//!
//! Each line is one JSON document; blank lines are skipped. Reads are
//! strict about structure (a malformed line aborts with its 1-based line
//! number and the offending field path) but tolerant of vocabulary: unknown
//! fields are dropped and tallied in [`LoadReport::unknown_fields`] so
//! callers can surface a warning without failing on forward-compatible
//! input.
//!
//! [`save_records`] is the validating writer for [`GroundedVideoRecord`]s:
//! it checks every record with [`validate_record`] first and writes nothing
//! unless the whole batch is clean, so a crash or bad input can never leave
//! a half-written dataset behind.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::types::{
    validate_record, FrameAnnotation, GroundedVideoRecord, RawPrediction, Violation,
};

/// Shape of a record type as far as field names go; used to count unknown
/// fields on ingest. `Any` stops the walk (leaf values, including box
/// arrays).
#[derive(Debug)]
pub enum Schema {
    Object(&'static [(&'static str, Schema)]),
    Array(&'static Schema),
    Any,
}

/// A type that can be read from JSONL with unknown-field accounting.
pub trait JsonlSchema {
    fn schema() -> &'static Schema;
}

static PHRASE_BOX: Schema = Schema::Object(&[("text", Schema::Any), ("box", Schema::Any)]);
static FRAME: Schema = Schema::Object(&[
    ("clip_id", Schema::Any),
    ("frame_index", Schema::Any),
    ("timestamp_s", Schema::Any),
    ("caption", Schema::Any),
    ("phrases", Schema::Array(&PHRASE_BOX)),
]);

static SPAN: Schema = Schema::Object(&[
    ("id", Schema::Any),
    ("text", Schema::Any),
    ("char_start", Schema::Any),
    ("char_end", Schema::Any),
]);
static TRACK_ENTRY: Schema = Schema::Object(&[
    ("frame_index", Schema::Any),
    ("box", Schema::Any),
    ("score", Schema::Any),
]);
static TRACK: Schema = Schema::Object(&[
    ("phrase_id", Schema::Any),
    ("boxes", Schema::Array(&TRACK_ENTRY)),
]);
static RECORD: Schema = Schema::Object(&[
    ("clip_id", Schema::Any),
    ("num_frames", Schema::Any),
    ("fps", Schema::Any),
    ("width", Schema::Any),
    ("height", Schema::Any),
    ("caption", Schema::Any),
    ("phrases", Schema::Array(&SPAN)),
    ("tracks", Schema::Array(&TRACK)),
]);

static RAW_FRAME: Schema = Schema::Object(&[("box", Schema::Any), ("objectness", Schema::Any)]);
static RAW_OBJECT: Schema = Schema::Object(&[
    ("phrase_id", Schema::Any),
    ("frames", Schema::Array(&RAW_FRAME)),
]);
static RAW: Schema = Schema::Object(&[
    ("clip_id", Schema::Any),
    ("num_frames", Schema::Any),
    ("objects", Schema::Array(&RAW_OBJECT)),
]);

impl JsonlSchema for FrameAnnotation {
    fn schema() -> &'static Schema {
        &FRAME
    }
}
impl JsonlSchema for GroundedVideoRecord {
    fn schema() -> &'static Schema {
        &RECORD
    }
}
impl JsonlSchema for RawPrediction {
    fn schema() -> &'static Schema {
        &RAW
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A line failed to parse; `line` is 1-based, `path` points at the
    /// offending field when one could be identified.
    #[error("line {line}: {message}{}", path.as_ref().map(|p| format!(" (at {p})")).unwrap_or_default())]
    Parse {
        line: usize,
        path: Option<String>,
        message: String,
    },
    /// Refused to write: at least one record failed validation.
    #[error("validation failed for {} record(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
}

/// Result of a successful [`read_jsonl`]: the records in input order plus
/// how many unknown fields were dropped along the way.
#[derive(Debug)]
pub struct LoadReport<T> {
    pub items: Vec<T>,
    pub unknown_fields: usize,
}

fn count_unknown(value: &serde_json::Value, schema: &Schema) -> usize {
    match (schema, value) {
        (Schema::Object(fields), serde_json::Value::Object(map)) => {
            let mut n = 0;
            for (key, val) in map {
                match fields.iter().find(|(name, _)| name == key) {
                    Some((_, sub)) => n += count_unknown(val, sub),
                    None => n += 1,
                }
            }
            n
        }
        (Schema::Array(inner), serde_json::Value::Array(items)) => {
            items.iter().map(|v| count_unknown(v, inner)).sum()
        }
        _ => 0,
    }
}

/// Read a whole JSONL stream into memory, preserving input order.
///
/// Errors carry the 1-based line number; structural errors (wrong type,
/// missing field) also carry a field path such as `tracks[0].boxes[2].box`.
pub fn read_jsonl<T, R>(reader: R) -> Result<LoadReport<T>, JsonlError>
where
    T: DeserializeOwned + JsonlSchema,
    R: BufRead,
{
    let mut items = Vec::new();
    let mut unknown_fields = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (item, unknown) = parse_line(&line, idx + 1)?;
        unknown_fields += unknown;
        items.push(item);
    }
    Ok(LoadReport {
        items,
        unknown_fields,
    })
}

/// Parse a single JSONL line as one `T`, reporting the 1-based `lineno` in
/// errors exactly as [`read_jsonl`] does, plus the number of unknown fields
/// the line carried. Lets callers stream arbitrarily large files with
/// bounded memory.
pub fn parse_line<T>(line: &str, lineno: usize) -> Result<(T, usize), JsonlError>
where
    T: DeserializeOwned + JsonlSchema,
{
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| JsonlError::Parse {
        line: lineno,
        path: None,
        message: e.to_string(),
    })?;
    let unknown = count_unknown(&value, T::schema());
    let item = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        JsonlError::Parse {
            line: lineno,
            path: (path != ".").then_some(path),
            message: e.inner().to_string(),
        }
    })?;
    Ok((item, unknown))
}

/// [`read_jsonl`] from a file path.
pub fn read_jsonl_path<T>(path: &Path) -> Result<LoadReport<T>, JsonlError>
where
    T: DeserializeOwned + JsonlSchema,
{
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

/// Serialize `items` one per line. Returns the number of lines written.
/// Field order follows the struct definitions, so writing the result of a
/// read reproduces the input bytes for normalized input.
pub fn write_jsonl<T, W>(mut writer: W, items: &[T]) -> Result<usize, JsonlError>
where
    T: Serialize,
    W: Write,
{
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| JsonlError::Parse {
            line: 0,
            path: None,
            message: e.to_string(),
        })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(items.len())
}

/// Validating writer for grounded records: every record must pass
/// [`validate_record`], otherwise nothing at all is written and the full
/// violation list is returned.
pub fn save_records<W: Write>(
    writer: W,
    records: &[GroundedVideoRecord],
) -> Result<usize, JsonlError> {
    let violations: Vec<Violation> = records.iter().flat_map(validate_record).collect();
    if !violations.is_empty() {
        return Err(JsonlError::Invalid(violations));
    }
    write_jsonl(writer, records)
}

/// [`save_records`] to a file path; the file is not created when validation
/// fails.
pub fn save_records_path(path: &Path, records: &[GroundedVideoRecord]) -> Result<usize, JsonlError> {
    let violations: Vec<Violation> = records.iter().flat_map(validate_record).collect();
    if !violations.is_empty() {
        return Err(JsonlError::Invalid(violations));
    }
    let file = std::fs::File::create(path)?;
    write_jsonl(std::io::BufWriter::new(file), records)
}
