use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::datatree::{LeafPath, LeafValue, Timestamp};
use crate::schema::SchemaModule;
use crate::value::{Decimal, Value};

use super::rng_stream;

pub const GATEWAY_ID: &str = "gateway";
pub const FEEDS: &str = "feeds";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("schema has no value-bearing leaves")]
    NoLeaves,
    #[error("node count must be at least 1")]
    NoNodes,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TwinGraphError {
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("entity `{from}` has a `{label}` relationship to unknown entity `{to}`")]
    DanglingRelationship {
        from: String,
        to: String,
        label: String,
    },
}

/// Descriptor of one digital-twin entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwinEntity {
    pub id: String,
    /// Stored, writable state.
    pub properties: BTreeMap<String, Value>,
    /// Names of measured streams; not kept historically.
    pub telemetry: Vec<String>,
    /// `(target id, label)` pairs.
    pub relationships: Vec<(String, String)>,
    pub components: Vec<String>,
}

impl TwinEntity {
    pub fn new(id: impl Into<String>) -> Self {
        TwinEntity {
            id: id.into(),
            properties: BTreeMap::new(),
            telemetry: Vec::new(),
            relationships: Vec::new(),
            components: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TwinGraph {
    pub entities: Vec<TwinEntity>,
}

impl TwinGraph {
    pub fn get(&self, id: &str) -> Option<&TwinEntity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn check(&self) -> Result<(), TwinGraphError> {
        let mut ids = HashSet::new();
        for e in &self.entities {
            if !ids.insert(e.id.as_str()) {
                return Err(TwinGraphError::DuplicateId(e.id.clone()));
            }
        }
        for e in &self.entities {
            for (to, label) in &e.relationships {
                if !ids.contains(to.as_str()) {
                    return Err(TwinGraphError::DanglingRelationship {
                        from: e.id.clone(),
                        to: to.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A sensor node on the physical side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalNode {
    pub id: String,
    /// Schema paths (list keys omitted) of the leaves this node writes.
    pub bound_leaves: BTreeSet<String>,
    /// Latest reading per written leaf instance.
    pub local_state: BTreeMap<LeafPath, LeafValue>,
}

impl PhysicalNode {
    pub fn new(id: impl Into<String>) -> Self {
        PhysicalNode {
            id: id.into(),
            bound_leaves: BTreeSet::new(),
            local_state: BTreeMap::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.bound_leaves.is_empty()
    }

    /// Records a reading, keeping the newer of old and new by timestamp.
    pub fn record(&mut self, path: &LeafPath, value: Value, ts: Timestamp) {
        match self.local_state.get_mut(path) {
            Some(cur) if cur.last_updated > ts => {}
            Some(cur) => {
                cur.value = value;
                cur.last_updated = ts;
            }
            None => {
                self.local_state.insert(
                    path.clone(),
                    LeafValue {
                        value,
                        last_updated: ts,
                    },
                );
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<PhysicalNode>,
    pub twin: TwinGraph,
}

impl Topology {
    /// Index of the node bound to the leaf with this schema path.
    pub fn owner_of(&self, schema_path: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.bound_leaves.contains(schema_path))
    }
}

pub fn node_id(i: usize) -> String {
    format!("node-{i}")
}

/// Deals the schema's leaves, shuffled by `seed`, round-robin over
/// `num_nodes` nodes and builds the matching twin graph.
pub fn build_topology(
    schema: &SchemaModule,
    num_nodes: usize,
    seed: u64,
) -> Result<Topology, TopologyError> {
    if num_nodes == 0 {
        return Err(TopologyError::NoNodes);
    }
    let mut leaves: Vec<String> = schema
        .leaf_paths()
        .into_iter()
        .map(|p| format!("/{}", p.join("/")))
        .collect();
    if leaves.is_empty() {
        return Err(TopologyError::NoLeaves);
    }
    leaves.shuffle(&mut rng_stream(seed, super::STREAM_TOPOLOGY, 0));
    let mut nodes: Vec<PhysicalNode> = (0..num_nodes).map(|i| PhysicalNode::new(node_id(i))).collect();
    for (i, leaf) in leaves.into_iter().enumerate() {
        nodes[i % num_nodes].bound_leaves.insert(leaf);
    }

    let mut entities = Vec::with_capacity(num_nodes + 1);
    for n in &nodes {
        let mut e = TwinEntity::new(n.id.clone());
        e.telemetry = n.bound_leaves.iter().cloned().collect();
        e.properties.insert(
            "boundLeafCount".into(),
            Value::Num(Decimal::from_int(n.bound_leaves.len() as i64).expect("small count")),
        );
        e.relationships.push((GATEWAY_ID.into(), FEEDS.into()));
        entities.push(e);
    }
    let mut gw = TwinEntity::new(GATEWAY_ID);
    gw.components.push(schema.name.clone());
    entities.push(gw);
    Ok(Topology {
        nodes,
        twin: TwinGraph { entities },
    })
}
