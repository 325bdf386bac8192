use std::io::Write;

use crate::value::Decimal;

use super::{run, Mode, SimConfig, SimError, SyncCounts};

/// Renders whole microseconds as canonical decimal milliseconds.
pub(crate) fn us_to_ms(us: u64) -> String {
    Decimal::from_micros(us as i64 * 1000).to_string()
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn mean<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (sum, n) = it.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub scheduled: usize,
    pub applied: usize,
    pub dropped: usize,
    pub polls: usize,
    pub mean_rtt_ms: f64,
    pub mean_e2e_ms: f64,
    pub mean_payload_bytes: f64,
    /// Mean sync score over polls. Polls leave on a fixed period, so this
    /// is the time average on the monitor's clock.
    pub sync_score: f64,
}

/// Everything measured in one run. Lists are in simulated-time order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub num_nodes: usize,
    /// Response arrival time of each poll.
    pub poll_times_us: Vec<u64>,
    pub rtt_samples_us: Vec<u64>,
    pub payload_bytes_per_poll: Vec<usize>,
    pub leaves_per_poll: Vec<usize>,
    /// Emission-to-application delay of each applied reading.
    pub e2e_delays_us: Vec<u64>,
    pub sync_series: Vec<(u64, f64)>,
    pub summary: Summary,
}

impl MetricsRecord {
    pub(crate) fn new(mode: Mode, num_nodes: usize, scheduled: usize) -> Self {
        MetricsRecord {
            mode,
            num_nodes,
            poll_times_us: Vec::new(),
            rtt_samples_us: Vec::new(),
            payload_bytes_per_poll: Vec::new(),
            leaves_per_poll: Vec::new(),
            e2e_delays_us: Vec::new(),
            sync_series: Vec::new(),
            summary: Summary {
                scheduled,
                ..Summary::default()
            },
        }
    }

    pub(crate) fn record_apply(&mut self, delay_us: u64) {
        self.summary.applied += 1;
        self.e2e_delays_us.push(delay_us);
    }

    pub(crate) fn record_poll(&mut self, t: u64, rtt_us: u64, bytes: usize, leaves: usize, counts: SyncCounts) {
        self.poll_times_us.push(t);
        self.rtt_samples_us.push(rtt_us);
        self.payload_bytes_per_poll.push(bytes);
        self.leaves_per_poll.push(leaves);
        self.sync_series.push((t, counts.score()));
    }

    pub(crate) fn finish(&mut self) {
        let s = &mut self.summary;
        s.polls = self.rtt_samples_us.len();
        s.mean_rtt_ms = mean(self.rtt_samples_us.iter().map(|&v| v as f64 / 1000.0));
        s.mean_e2e_ms = mean(self.e2e_delays_us.iter().map(|&v| v as f64 / 1000.0));
        s.mean_payload_bytes = mean(self.payload_bytes_per_poll.iter().map(|&v| v as f64));
        s.sync_score = mean(self.sync_series.iter().map(|&(_, v)| v));
    }

    pub fn series_name(&self) -> String {
        format!("{}-{}", self.mode, self.num_nodes)
    }

    /// Rows of `metric,mode,num_nodes,value`.
    pub fn rows(&self) -> Vec<[String; 4]> {
        let s = &self.summary;
        let row = |name: &str, v: String| [name.to_string(), self.mode.to_string(), self.num_nodes.to_string(), v];
        vec![
            row("scheduled", s.scheduled.to_string()),
            row("applied", s.applied.to_string()),
            row("dropped", s.dropped.to_string()),
            row("polls", s.polls.to_string()),
            row("mean_rtt_ms", fixed(s.mean_rtt_ms)),
            row("mean_e2e_ms", fixed(s.mean_e2e_ms)),
            row("mean_payload_bytes", fixed(s.mean_payload_bytes)),
            row("sync_score", fixed(s.sync_score)),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        write_metrics_csv(w, std::slice::from_ref(self))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    /// `(series, poll_index, rtt_ms, payload_bytes)` rows.
    pub fn rtt_rows(&self) -> impl Iterator<Item = [String; 4]> + '_ {
        let name = self.series_name();
        self.rtt_samples_us.iter().zip(&self.payload_bytes_per_poll).enumerate().map(
            move |(i, (&rtt, &bytes))| [name.clone(), i.to_string(), us_to_ms(rtt), bytes.to_string()],
        )
    }

    /// `(series, apply_index, delay_ms)` rows.
    pub fn e2e_rows(&self) -> impl Iterator<Item = [String; 3]> + '_ {
        let name = self.series_name();
        self.e2e_delays_us
            .iter()
            .enumerate()
            .map(move |(i, &d)| [name.clone(), i.to_string(), us_to_ms(d)])
    }

    /// `(series, t_ms, score)` rows.
    pub fn sync_rows(&self) -> impl Iterator<Item = [String; 3]> + '_ {
        let name = self.series_name();
        self.sync_series
            .iter()
            .map(move |&(t, v)| [name.clone(), us_to_ms(t), fixed(v)])
    }
}

pub const METRICS_HEADER: [&str; 4] = ["metric", "mode", "num_nodes", "value"];

pub fn write_metrics_csv<W: Write>(w: W, records: &[MetricsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        for row in r.rows() {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Emit,
    Flush,
    Apply,
    Drop,
    Poll,
    Response,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Emit => "emit",
            EventKind::Flush => "flush",
            EventKind::Apply => "apply",
            EventKind::Drop => "drop",
            EventKind::Poll => "poll",
            EventKind::Response => "response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub ts_us: u64,
    pub kind: EventKind,
    pub node: String,
    pub path: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub(crate) fn push(&mut self, ts_us: u64, kind: EventKind, node: &str, path: &str, bytes: usize) {
        self.records.push(EventRecord {
            ts_us,
            kind,
            node: node.to_string(),
            path: path.to_string(),
            bytes,
        });
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["ts_us", "kind", "node", "path", "bytes"])?;
        for e in &self.records {
            w.write_record([
                e.ts_us.to_string().as_str(),
                e.kind.label(),
                &e.node,
                &e.path,
                &e.bytes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// One node count's filtered vs. full-tree comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub num_nodes: usize,
    pub sync_with: f64,
    pub sync_without: f64,
    pub mean_rtt_with: f64,
    pub mean_rtt_without: f64,
    pub mean_e2e_with: f64,
    pub mean_e2e_without: f64,
    pub mean_payload_with: f64,
    pub mean_payload_without: f64,
}

impl ComparisonRow {
    pub fn from_records(with: &MetricsRecord, without: &MetricsRecord) -> Self {
        let (a, b) = (&with.summary, &without.summary);
        ComparisonRow {
            num_nodes: with.num_nodes,
            sync_with: a.sync_score,
            sync_without: b.sync_score,
            mean_rtt_with: a.mean_rtt_ms,
            mean_rtt_without: b.mean_rtt_ms,
            mean_e2e_with: a.mean_e2e_ms,
            mean_e2e_without: b.mean_e2e_ms,
            mean_payload_with: a.mean_payload_bytes,
            mean_payload_without: b.mean_payload_bytes,
        }
    }

    /// Fraction of full-tree payload saved by filtering.
    pub fn payload_reduction(&self) -> f64 {
        if self.mean_payload_without == 0.0 {
            0.0
        } else {
            1.0 - self.mean_payload_with / self.mean_payload_without
        }
    }
}

pub const COMPARISON_HEADER: [&str; 10] = [
    "num_nodes",
    "sync_with",
    "sync_without",
    "mean_rtt_ms_with",
    "mean_rtt_ms_without",
    "mean_e2e_ms_with",
    "mean_e2e_ms_without",
    "mean_payload_bytes_with",
    "mean_payload_bytes_without",
    "payload_reduction",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(COMPARISON_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.num_nodes.to_string(),
                fixed(r.sync_with),
                fixed(r.sync_without),
                fixed(r.mean_rtt_with),
                fixed(r.mean_rtt_without),
                fixed(r.mean_e2e_with),
                fixed(r.mean_e2e_without),
                fixed(r.mean_payload_with),
                fixed(r.mean_payload_without),
                fixed(r.payload_reduction()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fails unless the two configs differ at most in mode.
pub fn check_comparable(a: &SimConfig, b: &SimConfig) -> Result<(), SimError> {
    let checks: [(&'static str, bool); 11] = [
        ("schema", a.schema == b.schema),
        ("num_nodes", a.num_nodes == b.num_nodes),
        ("selection", a.selection == b.selection),
        ("schedule", a.schedule == b.schedule),
        ("gateway_batch_size", a.gateway_batch_size == b.gateway_batch_size),
        ("gateway_flush_ms", a.gateway_flush_ms == b.gateway_flush_ms),
        ("monitor_poll_ms", a.monitor_poll_ms == b.monitor_poll_ms),
        ("staleness_window_ms", a.staleness_window_ms == b.staleness_window_ms),
        ("processing_cost_per_leaf_ms", a.processing_cost_per_leaf_ms == b.processing_cost_per_leaf_ms),
        ("network", a.network == b.network),
        ("seed", a.seed == b.seed),
    ];
    match checks.iter().find(|(_, same)| !same) {
        Some((field, _)) => Err(SimError::ConfigMismatch(field)),
        None => Ok(()),
    }
}

/// Runs both configs and pairs their summaries.
pub fn compare(with: &SimConfig, without: &SimConfig) -> Result<ComparisonRow, SimError> {
    check_comparable(with, without)?;
    let (a, _) = run(with)?;
    let (b, _) = run(without)?;
    Ok(ComparisonRow::from_records(&a, &b))
}
