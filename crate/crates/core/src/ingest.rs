//! CSV sensor datasets: loading, seeded sub-sampling into a combined corpus,
//! and a synthetic replay clock.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datatree::{LeafPath, Timestamp};
use crate::pathsel::parse_path;
use crate::schema::SchemaModule;
use crate::value::{Decimal, Value, ValueKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: file has no data rows")]
    EmptyFile { source_name: String },
    #[error("{source_name}: column `{column}` not found in header")]
    MissingColumn { source_name: String, column: String },
    #[error("{source_name}: {needed} samples requested but only {available} rows loaded")]
    InsufficientRows {
        source_name: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid dataset spec for {source_name}: {reason}")]
    InvalidSpec { source_name: String, reason: String },
    #[error("column `{column}` target `{target}`: {reason}")]
    BadTarget {
        column: String,
        target: String,
        reason: String,
    },
    #[error("inter-reading gap must be positive")]
    InvalidGap,
    #[error("replay file line {line}: {reason}")]
    BadReplay { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Size figures for one source dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub source_name: String,
    pub feature_count: usize,
    pub total_samples: usize,
    pub used_samples: usize,
}

impl DatasetSpec {
    pub fn new(
        source_name: impl Into<String>,
        feature_count: usize,
        total_samples: usize,
        used_samples: usize,
    ) -> Result<Self, IngestError> {
        let source_name = source_name.into();
        let invalid = |reason: &str| IngestError::InvalidSpec {
            source_name: source_name.clone(),
            reason: reason.to_string(),
        };
        if feature_count == 0 {
            return Err(invalid("feature count must be at least 1"));
        }
        if used_samples == 0 || used_samples > total_samples {
            return Err(invalid("used samples must be in 1..=total samples"));
        }
        Ok(DatasetSpec {
            source_name,
            feature_count,
            total_samples,
            used_samples,
        })
    }
}

/// Leaf path text that may reference other columns of the same row as
/// `{column}`, typically inside a list key predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTemplate(String);

impl PathTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        PathTemplate(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Column names referenced by placeholders.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.0.as_str();
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}') else {
                break;
            };
            out.push(&rest[open + 1..open + close]);
            rest = &rest[open + close + 1..];
        }
        out
    }

    fn render(&self, lookup: impl Fn(&str) -> Option<String>) -> Option<String> {
        let mut out = self.0.clone();
        for name in self.placeholders() {
            let v = lookup(name)?;
            out = out.replacen(&format!("{{{name}}}"), &v, 1);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRule {
    pub csv_column: String,
    pub target: PathTemplate,
    pub kind: ValueKind,
    /// Multiplier applied to numeric cells before rounding.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnMapping {
    pub rules: Vec<ColumnRule>,
}

impl ColumnMapping {
    /// Checks that every target names a leaf whose type holds the rule's
    /// value kind.
    pub fn check(&self, schema: &SchemaModule) -> Result<(), IngestError> {
        for rule in &self.rules {
            let bad = |reason: String| IngestError::BadTarget {
                column: rule.csv_column.clone(),
                target: rule.target.0.clone(),
                reason,
            };
            let probe = rule.target.render(|_| Some("0".into())).unwrap_or_default();
            let expr = parse_path(&probe).map_err(|e| bad(e.to_string()))?;
            let mut siblings = &schema.roots[..];
            let mut node = None;
            for (i, seg) in expr.segments.iter().enumerate() {
                let crate::pathsel::SegmentName::Name(name) = &seg.name else {
                    return Err(bad("wildcards are not allowed in targets".into()));
                };
                let sn = siblings
                    .iter()
                    .find(|c| &c.name == name)
                    .ok_or_else(|| bad(format!("no schema node `{name}` at segment {i}")))?;
                if sn.list_key().is_some() != seg.predicate.is_some() {
                    return Err(bad(format!("key predicate must appear exactly on list segments (`{name}`)")));
                }
                siblings = sn.children();
                node = Some(sn);
            }
            let leaf = node
                .and_then(|n| n.leaf_type())
                .ok_or_else(|| bad("target is not a leaf".into()))?;
            if leaf.value_kind() != rule.kind {
                return Err(bad(format!("leaf type {} cannot hold {:?} values", leaf.name(), rule.kind)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorReading {
    pub sensor_id: String,
    pub path: LeafPath,
    pub value: Value,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub retained: usize,
    pub skipped: usize,
}

/// A loaded source: readings grouped per retained CSV row.
#[derive(Debug, Clone)]
pub struct LoadedSource {
    pub spec: DatasetSpec,
    pub rows: Vec<Vec<SensorReading>>,
    pub report: LoadReport,
}

impl LoadedSource {
    pub fn readings(&self) -> impl Iterator<Item = &SensorReading> {
        self.rows.iter().flatten()
    }
}

fn parse_cell(kind: ValueKind, cell: &str, scale: Option<f64>) -> Option<Value> {
    let cell = cell.trim();
    match kind {
        ValueKind::Num => {
            let v: f64 = cell.parse().ok()?;
            let v = v * scale.unwrap_or(1.0);
            Decimal::from_f64(v).map(Value::Num)
        }
        ValueKind::Str => (!cell.is_empty()).then(|| Value::Str(cell.to_string())),
        ValueKind::Bool => match cell.to_ascii_lowercase().as_str() {
            "true" | "1" => Some(Value::Bool(true)),
            "false" | "0" => Some(Value::Bool(false)),
            _ => None,
        },
    }
}

/// Loads every row of a CSV source. Rows where any mapped cell fails to
/// parse are skipped and counted in the report.
pub fn load_csv<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
    spec: &DatasetSpec,
    schema: &Arc<SchemaModule>,
) -> Result<LoadedSource, IngestError> {
    mapping.check(schema)?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::EmptyFile {
            source_name: spec.source_name.clone(),
        });
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let column = |name: &str| {
        index.get(name).copied().ok_or_else(|| IngestError::MissingColumn {
            source_name: spec.source_name.clone(),
            column: name.to_string(),
        })
    };
    struct Compiled<'a> {
        rule: &'a ColumnRule,
        col: usize,
        placeholders: Vec<(String, usize)>,
        sensor_id: String,
    }
    let mut compiled = Vec::with_capacity(mapping.rules.len());
    for rule in &mapping.rules {
        let placeholders = rule
            .target
            .placeholders()
            .into_iter()
            .map(|p| column(p).map(|i| (p.to_string(), i)))
            .collect::<Result<Vec<_>, _>>()?;
        compiled.push(Compiled {
            rule,
            col: column(&rule.csv_column)?,
            placeholders,
            sensor_id: format!("{}.{}", spec.source_name, rule.csv_column),
        });
    }

    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    'rows: while csv.read_record(&mut record)? {
        report.rows_read += 1;
        let mut readings = Vec::with_capacity(compiled.len());
        for c in &compiled {
            let parsed = record
                .get(c.col)
                .and_then(|cell| parse_cell(c.rule.kind, cell, c.rule.scale));
            let path = c
                .rule
                .target
                .render(|name| {
                    let (_, i) = c.placeholders.iter().find(|(n, _)| n == name)?;
                    record.get(*i).map(|s| s.trim().to_string())
                })
                .and_then(|text| text.parse::<LeafPath>().ok())
                .and_then(|p| p.canonicalize(schema).ok());
            match (parsed, path) {
                (Some(value), Some(path)) => readings.push(SensorReading {
                    sensor_id: c.sensor_id.clone(),
                    path,
                    value,
                    ts: 0,
                }),
                _ => {
                    report.skipped += 1;
                    continue 'rows;
                }
            }
        }
        rows.push(readings);
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyFile {
            source_name: spec.source_name.clone(),
        });
    }
    report.retained = rows.len();
    Ok(LoadedSource {
        spec: spec.clone(),
        rows,
        report,
    })
}

fn source_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Row indices kept from a source of `available` rows: `used` indices drawn
/// uniformly without replacement, returned in original order.
pub fn sample_rows(available: usize, used: usize, seed: u64) -> Vec<usize> {
    if used >= available {
        return (0..available).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, available, used).into_vec();
    picked.sort_unstable();
    picked
}

/// Draws `used_samples` rows from each source and concatenates them in
/// source order.
pub fn constitute(sources: &[LoadedSource], seed: u64) -> Result<Vec<SensorReading>, IngestError> {
    let mut out = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        let needed = src.spec.used_samples;
        if needed > src.rows.len() {
            return Err(IngestError::InsufficientRows {
                source_name: src.spec.source_name.clone(),
                needed,
                available: src.rows.len(),
            });
        }
        for row in sample_rows(src.rows.len(), needed, source_seed(seed, i)) {
            out.extend(src.rows[row].iter().cloned());
        }
    }
    Ok(out)
}

/// Time-ordered readings on the replay clock.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplaySchedule {
    pub events: Vec<SensorReading>,
    /// Timestamp of the last event; 0 when empty.
    pub horizon_ms: Timestamp,
}

impl ReplaySchedule {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Places reading `i` at `i * gap_ms` plus a seeded jitter in
/// `[0, gap_ms / 4]`.
pub fn schedule(
    readings: Vec<SensorReading>,
    gap_ms: u64,
    seed: u64,
) -> Result<ReplaySchedule, IngestError> {
    schedule_with_jitter(readings, gap_ms, gap_ms / 4, seed)
}

pub fn schedule_with_jitter(
    mut readings: Vec<SensorReading>,
    gap_ms: u64,
    max_jitter_ms: u64,
    seed: u64,
) -> Result<ReplaySchedule, IngestError> {
    if gap_ms == 0 {
        return Err(IngestError::InvalidGap);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, r) in readings.iter_mut().enumerate() {
        let jitter = if max_jitter_ms == 0 {
            0
        } else {
            rng.gen_range(0..=max_jitter_ms)
        };
        r.ts = i as u64 * gap_ms + jitter;
    }
    readings.sort_by_key(|r| r.ts);
    let horizon_ms = readings.last().map_or(0, |r| r.ts);
    Ok(ReplaySchedule {
        events: readings,
        horizon_ms,
    })
}

pub const REPLAY_HEADER: [&str; 4] = ["ts_ms", "sensor_id", "path", "value"];

pub fn write_replay_csv<W: Write>(writer: W, schedule: &ReplaySchedule) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPLAY_HEADER)?;
    for e in &schedule.events {
        w.write_record([
            e.ts.to_string(),
            e.sensor_id.clone(),
            e.path.to_string(),
            e.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a replay file back, typing values by their target leaf.
pub fn read_replay_csv<R: Read>(reader: R, schema: &SchemaModule) -> Result<ReplaySchedule, IngestError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut events: Vec<SensorReading> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |reason: String| IngestError::BadReplay { line, reason };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let ts: Timestamp = rec[0].parse().map_err(|_| bad("bad timestamp".into()))?;
        let path: LeafPath = rec[2].parse().map_err(|e| bad(format!("{e}")))?;
        let path = path.canonicalize(schema).map_err(|e| bad(e.to_string()))?;
        let ty = schema
            .resolve(&path.schema_path())
            .ok()
            .and_then(|n| n.leaf_type())
            .ok_or_else(|| bad("path is not a leaf".into()))?;
        let value = Value::parse_as(ty.value_kind(), &rec[3]).map_err(|e| bad(e.to_string()))?;
        if events.last().is_some_and(|p| p.ts > ts) {
            return Err(bad("events out of time order".into()));
        }
        events.push(SensorReading {
            sensor_id: rec[1].to_string(),
            path,
            value,
            ts,
        });
    }
    let horizon_ms = events.last().map_or(0, |e| e.ts);
    Ok(ReplaySchedule { events, horizon_ms })
}
