//! Task-usage trace ingestion.
//!
//! Parses rows of the task-resource-usage layout used by public cluster
//! traces (microsecond start/end timestamps plus a mean CPU rate in
//! core-seconds per second) and aggregates them into a fixed-interval
//! cluster utilization series. Also generates synthetic desk-scale series
//! for experiments that do not ship the multi-gigabyte real trace.

mod synth;

pub use synth::{synth_trace, SynthProfile};

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICROS_PER_SECOND: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum TraceError {
    /// A row could not be turned into a usage record. `row` is the
    /// zero-based index of the data row (header excluded).
    #[error("record parse error at row {row}: {reason}")]
    RecordParse { row: usize, reason: String },
    #[error("cannot aggregate an empty record set")]
    EmptyTrace,
    #[error("invalid trace schema: {0}")]
    InvalidSchema(String),
    #[error("invalid slot series: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Column layout of a delimiter-separated usage trace.
///
/// Defaults follow the task-usage table of the 2011 public cluster trace:
/// column 0 holds the measurement start, column 1 the end (both integer
/// microseconds) and column 5 the mean CPU rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSchema {
    pub start_col: usize,
    pub end_col: usize,
    pub cpu_col: usize,
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for TraceSchema {
    fn default() -> Self {
        Self {
            start_col: 0,
            end_col: 1,
            cpu_col: 5,
            delimiter: ',',
            has_header: false,
        }
    }
}

impl TraceSchema {
    fn validate(&self) -> Result<(), TraceError> {
        if self.start_col == self.end_col
            || self.start_col == self.cpu_col
            || self.end_col == self.cpu_col
        {
            return Err(TraceError::InvalidSchema(
                "column indices must be pairwise distinct".into(),
            ));
        }
        Ok(())
    }

    fn width(&self) -> usize {
        self.start_col.max(self.end_col).max(self.cpu_col) + 1
    }
}

/// One measurement row: a half-open interval `[start_us, end_us)` during
/// which the task used `cpu_rate` core-seconds per second. Rates above 1.0
/// are legal (multi-core tasks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub start_us: u64,
    pub end_us: u64,
    pub cpu_rate: f64,
}

impl UsageRecord {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }

    /// Core-seconds consumed over the whole measurement interval.
    pub fn core_seconds(&self) -> f64 {
        self.cpu_rate * (self.duration_us() as f64 / MICROS_PER_SECOND as f64)
    }
}

/// How to react to malformed rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Abort on the first bad row.
    Strict,
    /// Skip bad rows and count them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<UsageRecord>,
    pub skipped: usize,
}

/// Aggregated CPU usage at a fixed slot cadence. `values[k]` is the mean
/// concurrent core usage during slot `k`, i.e. core-seconds in the slot
/// divided by the slot length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSeries {
    pub origin_us: u64,
    pub slot_seconds: u32,
    pub values: Vec<f64>,
}

impl SlotSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Two-column text form, one `slot_index,value` row per slot.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot_index,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    /// Parses the two-column text form. The header row is optional; the
    /// slot and origin metadata fall back to defaults (300 s, origin 0)
    /// since the text table does not carry them.
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("slot_index")) {
                continue;
            }
            let (idx_field, value_field) = line.split_once(',').ok_or_else(|| {
                TraceError::InvalidSeries(format!("line {i}: expected `slot_index,value`"))
            })?;
            let idx: usize = idx_field.trim().parse().map_err(|_| {
                TraceError::InvalidSeries(format!("line {i}: bad slot index `{idx_field}`"))
            })?;
            if idx != values.len() {
                return Err(TraceError::InvalidSeries(format!(
                    "line {i}: slot index {idx} out of order (expected {})",
                    values.len()
                )));
            }
            let value: f64 = value_field.trim().parse().map_err(|_| {
                TraceError::InvalidSeries(format!("line {i}: bad value `{value_field}`"))
            })?;
            values.push(value);
        }
        Ok(Self {
            origin_us: 0,
            slot_seconds: 300,
            values,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slot series serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TraceError> {
        serde_json::from_str(text).map_err(|e| TraceError::InvalidSeries(e.to_string()))
    }
}

/// Parses delimiter-separated usage rows into records, in input order.
///
/// Empty lines are ignored. In [`ParseMode::Lenient`] malformed rows are
/// skipped and counted instead of aborting the parse.
pub fn parse_usage_records<R: BufRead>(
    input: R,
    schema: &TraceSchema,
    mode: ParseMode,
) -> Result<ParseOutcome, TraceError> {
    schema.validate()?;
    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut row = 0usize;
    let mut first = true;
    for line in input.lines() {
        let line = line?;
        if first && schema.has_header {
            first = false;
            continue;
        }
        first = false;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line, schema, row) {
            Ok(record) => records.push(record),
            Err(err) => match mode {
                ParseMode::Strict => return Err(err),
                ParseMode::Lenient => skipped += 1,
            },
        }
        row += 1;
    }
    Ok(ParseOutcome { records, skipped })
}

fn parse_row(line: &str, schema: &TraceSchema, row: usize) -> Result<UsageRecord, TraceError> {
    let fields: Vec<&str> = line.split(schema.delimiter).collect();
    if fields.len() < schema.width() {
        return Err(TraceError::RecordParse {
            row,
            reason: format!(
                "expected at least {} columns, found {}",
                schema.width(),
                fields.len()
            ),
        });
    }
    let start_us = parse_field_u64(fields[schema.start_col], "start", row)?;
    let end_us = parse_field_u64(fields[schema.end_col], "end", row)?;
    let cpu_rate = parse_field_f64(fields[schema.cpu_col], "cpu rate", row)?;
    if end_us <= start_us {
        return Err(TraceError::RecordParse {
            row,
            reason: format!("end {end_us} must be after start {start_us}"),
        });
    }
    if !cpu_rate.is_finite() || cpu_rate < 0.0 {
        return Err(TraceError::RecordParse {
            row,
            reason: format!("cpu rate {cpu_rate} must be finite and non-negative"),
        });
    }
    Ok(UsageRecord {
        start_us,
        end_us,
        cpu_rate,
    })
}

fn parse_field_u64(field: &str, what: &str, row: usize) -> Result<u64, TraceError> {
    field.trim().parse().map_err(|_| TraceError::RecordParse {
        row,
        reason: format!("non-numeric {what} field `{field}`"),
    })
}

fn parse_field_f64(field: &str, what: &str, row: usize) -> Result<f64, TraceError> {
    field.trim().parse().map_err(|_| TraceError::RecordParse {
        row,
        reason: format!("non-numeric {what} field `{field}`"),
    })
}

/// Writes records back to delimiter-separated rows under `schema`.
/// Columns the schema does not map are left empty.
pub fn write_usage_records(records: &[UsageRecord], schema: &TraceSchema) -> String {
    let width = schema.width();
    let mut out = String::new();
    for record in records {
        let mut fields = vec![String::new(); width];
        fields[schema.start_col] = record.start_us.to_string();
        fields[schema.end_col] = record.end_us.to_string();
        fields[schema.cpu_col] = record.cpu_rate.to_string();
        out.push_str(&fields.join(&schema.delimiter.to_string()));
        out.push('\n');
    }
    out
}

/// Aggregates records into a [`SlotSeries`] at `slot_seconds` cadence.
///
/// Slot `k` covers `[origin + k*slot, origin + (k+1)*slot)`. The origin is
/// the earliest record start aligned down to the slot grid, so slot
/// boundaries sit at absolute multiples of the slot length. Each record
/// contributes `cpu_rate * overlap / slot_length` to every slot it
/// overlaps, which conserves total core-seconds. The per-slot summation
/// order is fixed by sorting contributions, so the result is invariant
/// under permutation of the input records.
pub fn aggregate_to_slots(
    records: &[UsageRecord],
    slot_seconds: u32,
) -> Result<SlotSeries, TraceError> {
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    if slot_seconds == 0 {
        return Err(TraceError::InvalidSchema("slot_seconds must be > 0".into()));
    }
    let earliest = records.iter().map(|r| r.start_us).min().expect("non-empty");
    let t_max_us = records.iter().map(|r| r.end_us).max().expect("non-empty");
    let slot_us = u64::from(slot_seconds) * MICROS_PER_SECOND;
    let origin_us = earliest / slot_us * slot_us;
    let span = t_max_us - origin_us;
    let slot_count = usize::try_from(span.div_ceil(slot_us)).expect("slot count fits usize");

    let mut contributions: Vec<(usize, f64)> = Vec::new();
    for record in records {
        let rel_start = record.start_us - origin_us;
        let rel_end = record.end_us - origin_us;
        let first_slot = (rel_start / slot_us) as usize;
        let last_slot = (((rel_end - 1) / slot_us) as usize).min(slot_count - 1);
        for k in first_slot..=last_slot {
            let slot_start = k as u64 * slot_us;
            let slot_end = slot_start + slot_us;
            let overlap = rel_end.min(slot_end) - rel_start.max(slot_start);
            contributions.push((k, record.cpu_rate * (overlap as f64 / slot_us as f64)));
        }
    }
    contributions.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut values = vec![0.0f64; slot_count];
    for (k, contrib) in contributions {
        values[k] += contrib;
    }
    Ok(SlotSeries {
        origin_us,
        slot_seconds,
        values,
    })
}
