//! Harness configuration file and command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use yada_core::ingest::{ColumnMapping, ColumnRule, DatasetSpec, PathTemplate};
use yada_core::twinsync::NetworkModel;
use yada_core::{Decimal, ValueKind};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub schema_file: PathBuf,
    /// Omit to pull every leaf of the schema.
    pub selection_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub ingest: IngestSection,
    #[serde(default)]
    pub sim: SimSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    #[serde(default = "default_gap")]
    pub inter_reading_gap_ms: u64,
    pub sources: Vec<SourceConfig>,
}

fn default_gap() -> u64 {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub name: String,
    pub file: PathBuf,
    pub feature_count: usize,
    pub total_samples: usize,
    pub used_samples: usize,
    /// CSV column name to target leaf.
    pub columns: BTreeMap<String, ColumnConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub path: String,
    #[serde(default = "default_kind")]
    pub kind: String,
    pub scale: Option<f64>,
}

fn default_kind() -> String {
    "num".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub gateway_batch_size: usize,
    pub gateway_flush_ms: u64,
    pub monitor_poll_ms: u64,
    pub staleness_window_ms: u64,
    pub processing_cost_per_leaf_ms: f64,
    pub base_latency_ms: f64,
    pub jitter_ms: f64,
    pub per_byte_ms: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        use yada_core::twinsync::SimConfig as S;
        let net = NetworkModel::default();
        SimSection {
            gateway_batch_size: S::DEFAULT_BATCH_SIZE,
            gateway_flush_ms: S::DEFAULT_FLUSH_MS,
            monitor_poll_ms: S::DEFAULT_POLL_MS,
            staleness_window_ms: S::DEFAULT_STALENESS_MS,
            processing_cost_per_leaf_ms: S::DEFAULT_PER_LEAF_MS.to_f64(),
            base_latency_ms: net.base_latency_ms.to_f64(),
            jitter_ms: net.jitter_ms.to_f64(),
            per_byte_ms: net.per_byte_ms.to_f64(),
        }
    }
}

impl SimSection {
    pub fn decimal(name: &str, v: f64) -> Result<Decimal, CliError> {
        match Decimal::from_f64(v) {
            Some(d) if d.micros() >= 0 => Ok(d),
            _ => Err(CliError::Config(format!("sim.{name} must be a finite, non-negative number"))),
        }
    }

    pub fn network(&self) -> Result<NetworkModel, CliError> {
        Ok(NetworkModel {
            base_latency_ms: Self::decimal("base_latency_ms", self.base_latency_ms)?,
            jitter_ms: Self::decimal("jitter_ms", self.jitter_ms)?,
            per_byte_ms: Self::decimal("per_byte_ms", self.per_byte_ms)?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub num_nodes: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write one event log per sweep cell.
    pub event_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            event_log: true,
        }
    }
}

/// Flags that override values from the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `dotted.key=value` assignments; values use TOML syntax and fall back
    /// to plain strings.
    pub set: Vec<String>,
}

fn set_dotted(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: expected key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set `{assignment}`: bad key")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A parsed configuration with every path made absolute or relative to
/// the working directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: HarnessConfig,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text, path, overrides)
    }

    pub fn from_text(text: &str, path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for s in &overrides.set {
            set_dotted(&mut table, s)?;
        }
        let mut config: HarnessConfig = table
            .try_into()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        config.schema_file = resolve(&config.schema_file);
        config.selection_file = config.selection_file.as_deref().map(resolve);
        for s in &mut config.ingest.sources {
            s.file = resolve(&s.file);
        }
        config.output.dir = match &overrides.out {
            Some(out) => out.clone(),
            None => resolve(&config.output.dir),
        };
        let loaded = LoadedConfig {
            config,
            path: path.to_path_buf(),
        };
        loaded.check()?;
        Ok(loaded)
    }

    fn check(&self) -> Result<(), CliError> {
        let c = &self.config;
        let must_exist = |p: &Path, what: &str| {
            if p.is_file() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} `{}` not found", p.display())))
            }
        };
        must_exist(&c.schema_file, "schema_file")?;
        if let Some(sel) = &c.selection_file {
            must_exist(sel, "selection_file")?;
        }
        if c.ingest.sources.is_empty() {
            return Err(CliError::Config("ingest.sources is empty".into()));
        }
        for s in &c.ingest.sources {
            must_exist(&s.file, &format!("ingest source `{}`", s.name))?;
            if s.columns.is_empty() {
                return Err(CliError::Config(format!("ingest source `{}` maps no columns", s.name)));
            }
        }
        if c.ingest.inter_reading_gap_ms == 0 {
            return Err(CliError::Config("ingest.inter_reading_gap_ms must be positive".into()));
        }
        if c.sweep.num_nodes.is_empty() {
            return Err(CliError::Config("sweep.num_nodes is empty".into()));
        }
        if c.sweep.num_nodes.contains(&0) {
            return Err(CliError::Config("sweep.num_nodes entries must be at least 1".into()));
        }
        c.sim.network()?;
        SimSection::decimal("processing_cost_per_leaf_ms", c.sim.processing_cost_per_leaf_ms)?;
        Ok(())
    }
}

impl SourceConfig {
    pub fn spec(&self) -> Result<DatasetSpec, CliError> {
        DatasetSpec::new(&self.name, self.feature_count, self.total_samples, self.used_samples)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn mapping(&self) -> Result<ColumnMapping, CliError> {
        let mut rules = Vec::with_capacity(self.columns.len());
        for (csv, col) in &self.columns {
            let kind: ValueKind = col
                .kind
                .parse()
                .map_err(|e| CliError::Config(format!("source `{}` column `{csv}`: {e}", self.name)))?;
            rules.push(ColumnRule {
                csv_column: csv.clone(),
                target: PathTemplate::new(col.path.clone()),
                kind,
                scale: col.scale,
            });
        }
        Ok(ColumnMapping { rules })
    }
}
