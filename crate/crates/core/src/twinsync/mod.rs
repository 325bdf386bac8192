//! Discrete-event simulation of sensor nodes feeding a digital twin through
//! a batching gateway, polled by a monitoring client either through a path
//! selection or for the full tree.

mod metrics;
mod sim;
mod topology;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datatree::{DataTree, Timestamp};
use crate::ingest::ReplaySchedule;
use crate::pathsel::{BoundSelection, SelectionSet};
use crate::schema::SchemaModule;
use crate::value::Decimal;

pub use metrics::{
    check_comparable, compare, write_metrics_csv, ComparisonReport, ComparisonRow, EventKind, EventLog, EventRecord, MetricsRecord,
    Summary, COMPARISON_HEADER, METRICS_HEADER,
};
pub use sim::run;
pub use topology::{
    build_topology, node_id, PhysicalNode, Topology, TopologyError, TwinEntity, TwinGraph,
    TwinGraphError, FEEDS, GATEWAY_ID,
};

pub(crate) const STREAM_TOPOLOGY: u64 = 1;
pub(crate) const STREAM_UPLINK: u64 = 2;
pub(crate) const STREAM_GATEWAY: u64 = 3;
pub(crate) const STREAM_POLL: u64 = 4;

/// Independent generator for one purpose (`tag`) and index under `seed`.
/// Both modes of a comparison draw identical numbers from each stream.
pub(crate) fn rng_stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 32) | index);
    rng
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("configs differ in `{0}`, not only in mode")]
    ConfigMismatch(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// The monitor pulls only the selected leaves.
    WithYada,
    /// The monitor pulls the whole twin tree.
    WithoutYada,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::WithYada => "with",
            Mode::WithoutYada => "without",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "with" => Ok(Mode::WithYada),
            "without" => Ok(Mode::WithoutYada),
            other => Err(format!("unknown mode `{other}` (expected with/without)")),
        }
    }
}

/// Channel model. Every figure is in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkModel {
    pub base_latency_ms: Decimal,
    /// Upper bound of a uniform `[0, jitter]` draw added per hop.
    pub jitter_ms: Decimal,
    pub per_byte_ms: Decimal,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            base_latency_ms: Decimal::from_micros(5_000_000),
            jitter_ms: Decimal::from_micros(2_000_000),
            per_byte_ms: Decimal::from_micros(10_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub schema: Arc<SchemaModule>,
    pub num_nodes: usize,
    pub mode: Mode,
    /// Leaves the monitor cares about; also the scope of the sync score.
    pub selection: SelectionSet,
    pub schedule: Arc<ReplaySchedule>,
    pub gateway_batch_size: usize,
    pub gateway_flush_ms: u64,
    pub monitor_poll_ms: u64,
    pub staleness_window_ms: u64,
    pub processing_cost_per_leaf_ms: Decimal,
    pub network: NetworkModel,
    pub seed: u64,
}

impl SimConfig {
    pub const DEFAULT_BATCH_SIZE: usize = 16;
    pub const DEFAULT_FLUSH_MS: u64 = 50;
    pub const DEFAULT_POLL_MS: u64 = 100;
    pub const DEFAULT_STALENESS_MS: u64 = 60_000;
    pub const DEFAULT_PER_LEAF_MS: Decimal = Decimal::from_micros(200_000);

    pub fn new(
        schema: Arc<SchemaModule>,
        selection: SelectionSet,
        schedule: Arc<ReplaySchedule>,
    ) -> Self {
        SimConfig {
            schema,
            num_nodes: 4,
            mode: Mode::WithYada,
            selection,
            schedule,
            gateway_batch_size: Self::DEFAULT_BATCH_SIZE,
            gateway_flush_ms: Self::DEFAULT_FLUSH_MS,
            monitor_poll_ms: Self::DEFAULT_POLL_MS,
            staleness_window_ms: Self::DEFAULT_STALENESS_MS,
            processing_cost_per_leaf_ms: Self::DEFAULT_PER_LEAF_MS,
            network: NetworkModel::default(),
            seed: 0,
        }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        SimConfig {
            mode,
            ..self.clone()
        }
    }

    pub fn with_nodes(&self, num_nodes: usize) -> Self {
        SimConfig {
            num_nodes,
            ..self.clone()
        }
    }

    pub fn check(&self) -> Result<BoundSelection, SimError> {
        let invalid = |m: &str| Err(SimError::ConfigInvalid(m.to_string()));
        if self.num_nodes == 0 {
            return invalid("num_nodes must be at least 1");
        }
        if self.gateway_batch_size == 0 {
            return invalid("gateway_batch_size must be at least 1");
        }
        if self.gateway_flush_ms == 0 || self.monitor_poll_ms == 0 {
            return invalid("flush and poll intervals must be positive");
        }
        let n = &self.network;
        if [n.base_latency_ms, n.jitter_ms, n.per_byte_ms, self.processing_cost_per_leaf_ms]
            .iter()
            .any(|d| d.micros() < 0)
        {
            return invalid("latencies and costs must be non-negative");
        }
        if self.schedule.is_empty() {
            return invalid("replay schedule is empty");
        }
        for (i, ev) in self.schedule.events.iter().enumerate() {
            let p = ev
                .path
                .canonicalize(&self.schema)
                .map_err(|e| SimError::ConfigInvalid(format!("replay event {i}: {e}")))?;
            let ty = self
                .schema
                .resolve(&p.schema_path())
                .ok()
                .and_then(|s| s.leaf_type());
            if !ty.is_some_and(|t| t.accepts(&ev.value)) {
                return Err(SimError::ConfigInvalid(format!(
                    "replay event {i}: value `{}` does not fit {}",
                    ev.value, ev.path
                )));
            }
        }
        self.selection
            .bind(&self.schema)
            .map_err(|e| SimError::ConfigInvalid(format!("selection: {e}")))
    }
}

/// Matched and counted leaves behind a sync score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncCounts {
    pub matched: usize,
    pub considered: usize,
}

impl SyncCounts {
    /// `matched / considered`, or 1.0 when nothing is considered.
    pub fn score(self) -> f64 {
        if self.considered == 0 {
            1.0
        } else {
            self.matched as f64 / self.considered as f64
        }
    }
}

/// Counts the selected leaves the physical side has written and, of those,
/// the ones the twin holds with the same value, updated no earlier than
/// `now - window`.
pub fn sync_counts(
    physical: &DataTree,
    twin: &DataTree,
    selection: &BoundSelection,
    staleness_window_ms: u64,
    now: Timestamp,
) -> SyncCounts {
    let horizon = now.saturating_sub(staleness_window_ms);
    let mut counts = SyncCounts::default();
    for path in selection.evaluate(physical) {
        let Some(phys) = physical.get(&path) else {
            continue;
        };
        counts.considered += 1;
        let fresh = twin
            .get(&path)
            .is_some_and(|t| t.same_value(&phys) && t.last_updated().is_none_or(|ts| ts >= horizon));
        if fresh {
            counts.matched += 1;
        }
    }
    counts
}

/// Fraction of fresh, matching selected leaves; 1.0 when the physical side
/// has written none of them.
pub fn sync_score(
    physical: &DataTree,
    twin: &DataTree,
    selection: &BoundSelection,
    staleness_window_ms: u64,
    now: Timestamp,
) -> f64 {
    sync_counts(physical, twin, selection, staleness_window_ms, now).score()
}

/// Combined tree of every node's local state.
pub fn physical_snapshot(nodes: &[PhysicalNode], schema: &Arc<SchemaModule>) -> DataTree {
    let mut tree = DataTree::new(Arc::clone(schema));
    for n in nodes {
        for (path, lv) in &n.local_state {
            // local states only hold paths that already passed the schema
            let _ = tree.apply_update(path, lv.value.clone(), lv.last_updated);
        }
    }
    tree
}
