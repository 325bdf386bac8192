use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datatree::{DataTree, UpdateOutcome};
use crate::ingest::SensorReading;
use crate::pathsel::project;
use crate::value::Decimal;

use super::metrics::{EventKind, EventLog, MetricsRecord};
use super::topology::{build_topology, GATEWAY_ID};
use super::{rng_stream, sync_counts, Mode, SimConfig, SimError, STREAM_GATEWAY, STREAM_POLL, STREAM_UPLINK};

const MONITOR_ID: &str = "monitor";

/// Events at the same instant run in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Emit(usize),
    GatewayIn(usize),
    FlushTimer(u64),
    BatchArrive(usize),
    PollSend(u64),
    PollArrive { sent: u64, leg: u64 },
    PollRespond(usize),
}

#[derive(Debug, PartialEq, Eq)]
struct Queued {
    t: u64,
    seq: u64,
    ev: Ev,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, event order, insertion)
        (other.t, other.ev.rank(), other.seq).cmp(&(self.t, self.ev.rank(), self.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ev {
    fn rank(self) -> u8 {
        match self {
            Ev::Emit(_) => 0,
            Ev::GatewayIn(_) => 1,
            Ev::FlushTimer(_) => 2,
            Ev::BatchArrive(_) => 3,
            Ev::PollSend(_) => 4,
            Ev::PollArrive { .. } => 5,
            Ev::PollRespond(_) => 6,
        }
    }
}

struct Queue {
    heap: BinaryHeap<Queued>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Queued { t, seq: self.seq, ev });
    }
}

struct Response {
    sent: u64,
    served: DataTree,
    bytes: usize,
    leaves: usize,
}

/// Milliseconds as a decimal, converted to whole microseconds.
fn us(ms: Decimal) -> u64 {
    (ms.micros() / 1000) as u64
}

/// `per_unit_ms * units`, in microseconds rounded to nearest.
fn cost_us(per_unit_ms: Decimal, units: usize) -> u64 {
    let ns = per_unit_ms.micros() as u128 * units as u128;
    ((ns + 500) / 1000) as u64
}

fn draw(rng: &mut ChaCha8Rng, max_us: u64) -> u64 {
    if max_us == 0 {
        0
    } else {
        rng.gen_range(0..=max_us)
    }
}

/// Size of the gateway's wire form of a reading: `ts,path,value\n`.
fn message_bytes(r: &SensorReading) -> usize {
    format!("{},{},{}\n", r.ts, r.path, r.value).len()
}

/// Runs one simulation to completion.
pub fn run(config: &SimConfig) -> Result<(MetricsRecord, EventLog), SimError> {
    let selection = config.check()?;
    let schema = &config.schema;
    let topo = build_topology(schema, config.num_nodes, config.seed)
        .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    let mut nodes = topo.nodes.clone();
    let owner_by_leaf: HashMap<&str, usize> = topo
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(i, n)| n.bound_leaves.iter().map(move |l| (l.as_str(), i)))
        .collect();

    let events = &config.schedule.events;
    let mut paths = Vec::with_capacity(events.len());
    let mut owner = Vec::with_capacity(events.len());
    let mut msg_bytes = Vec::with_capacity(events.len());
    for r in events {
        let p = r.path.canonicalize(schema).expect("checked by config");
        let o = *owner_by_leaf
            .get(p.schema_path_string().as_str())
            .expect("every leaf has an owner");
        owner.push(o);
        msg_bytes.push(message_bytes(r));
        paths.push(p);
    }

    let net = config.network;
    let base = us(net.base_latency_ms);
    let jitter = us(net.jitter_ms);
    let mut uplinks: Vec<ChaCha8Rng> = (0..config.num_nodes)
        .map(|i| rng_stream(config.seed, STREAM_UPLINK, i as u64))
        .collect();
    let mut gw_rng = rng_stream(config.seed, STREAM_GATEWAY, 0);
    let mut poll_rng = rng_stream(config.seed, STREAM_POLL, 0);

    let mut q = Queue {
        heap: BinaryHeap::new(),
        seq: 0,
    };
    for (i, r) in events.iter().enumerate() {
        q.push(r.ts * 1000, Ev::Emit(i));
    }
    let poll_us = config.monitor_poll_ms * 1000;
    let polls = (config.schedule.horizon_ms / config.monitor_poll_ms).max(1);
    for k in 1..=polls {
        q.push(k * poll_us, Ev::PollSend(k));
    }

    let mut physical = DataTree::new(Arc::clone(schema));
    let mut twin = DataTree::new(Arc::clone(schema));
    let mut busy_until = 0u64;
    let mut batch: Vec<usize> = Vec::new();
    let mut batch_gen = 0u64;
    let mut in_flight: Vec<Vec<usize>> = Vec::new();
    let mut responses: Vec<Option<Response>> = Vec::new();

    let mut rec = MetricsRecord::new(config.mode, config.num_nodes, events.len());
    let mut log = EventLog::default();

    let flush = |t: u64,
                     batch: &mut Vec<usize>,
                     batch_gen: &mut u64,
                     in_flight: &mut Vec<Vec<usize>>,
                     q: &mut Queue,
                     log: &mut EventLog,
                     gw_rng: &mut ChaCha8Rng| {
        let bytes: usize = batch.iter().map(|&i| msg_bytes[i]).sum();
        let delay = base + draw(gw_rng, jitter) + cost_us(net.per_byte_ms, bytes);
        log.push(t, EventKind::Flush, GATEWAY_ID, "", bytes);
        in_flight.push(std::mem::take(batch));
        *batch_gen += 1;
        q.push(t + delay, Ev::BatchArrive(in_flight.len() - 1));
    };

    while let Some(Queued { t, ev, .. }) = q.heap.pop() {
        match ev {
            Ev::Emit(i) => {
                let r = &events[i];
                let node = &mut nodes[owner[i]];
                node.record(&paths[i], r.value.clone(), r.ts);
                physical
                    .apply_update(&paths[i], r.value.clone(), r.ts)
                    .expect("checked by config");
                log.push(t, EventKind::Emit, &node.id, &paths[i].to_string(), msg_bytes[i]);
                let d = draw(&mut uplinks[owner[i]], jitter);
                q.push(t + d, Ev::GatewayIn(i));
            }
            Ev::GatewayIn(i) => {
                if batch.is_empty() {
                    q.push(t + config.gateway_flush_ms * 1000, Ev::FlushTimer(batch_gen));
                }
                batch.push(i);
                if batch.len() >= config.gateway_batch_size {
                    flush(t, &mut batch, &mut batch_gen, &mut in_flight, &mut q, &mut log, &mut gw_rng);
                }
            }
            Ev::FlushTimer(gen) => {
                if gen == batch_gen && !batch.is_empty() {
                    flush(t, &mut batch, &mut batch_gen, &mut in_flight, &mut q, &mut log, &mut gw_rng);
                }
            }
            Ev::BatchArrive(b) => {
                if t < busy_until {
                    q.push(busy_until, ev);
                    continue;
                }
                for &i in &in_flight[b] {
                    let r = &events[i];
                    let outcome = twin
                        .apply_update(&paths[i], r.value.clone(), r.ts)
                        .expect("checked by config");
                    let node = &nodes[owner[i]].id;
                    match outcome {
                        UpdateOutcome::Applied => {
                            rec.record_apply(t - r.ts * 1000);
                            log.push(t, EventKind::Apply, node, &paths[i].to_string(), msg_bytes[i]);
                        }
                        UpdateOutcome::Dropped => {
                            rec.summary.dropped += 1;
                            log.push(t, EventKind::Drop, node, &paths[i].to_string(), msg_bytes[i]);
                        }
                    }
                }
                in_flight[b] = Vec::new();
            }
            Ev::PollSend(_) => {
                let leg = base + draw(&mut poll_rng, jitter);
                q.push(t + leg, Ev::PollArrive { sent: t, leg });
            }
            Ev::PollArrive { sent, leg } => {
                if t < busy_until {
                    q.push(busy_until, ev);
                    continue;
                }
                let served = match config.mode {
                    Mode::WithYada => project(&twin, &selection),
                    Mode::WithoutYada => twin.clone(),
                };
                let bytes = served.serialize().len();
                let leaves = served.leaf_count();
                let service = cost_us(config.processing_cost_per_leaf_ms, leaves)
                    + cost_us(net.per_byte_ms, bytes);
                busy_until = t + service;
                log.push(t, EventKind::Poll, MONITOR_ID, "", bytes);
                responses.push(Some(Response {
                    sent,
                    served,
                    bytes,
                    leaves,
                }));
                q.push(t + service + leg, Ev::PollRespond(responses.len() - 1));
            }
            Ev::PollRespond(idx) => {
                let resp = responses[idx].take().expect("responded once");
                let counts = sync_counts(
                    &physical,
                    &resp.served,
                    &selection,
                    config.staleness_window_ms,
                    t / 1000,
                );
                rec.record_poll(t, t - resp.sent, resp.bytes, resp.leaves, counts);
                log.push(t, EventKind::Response, MONITOR_ID, "", resp.bytes);
            }
        }
    }
    rec.finish();
    Ok((rec, log))
}
