//! Random generators and brute-force oracles shared by the property tests
//! and the acceptance runner.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use yada_core::datatree::{LeafPath, PathSegment};
use yada_core::pathsel::{PathExpr, Segment, SegmentName};
use yada_core::schema::NodeKind;
use yada_core::{parse_schema, DataTree, Decimal, LeafType, SchemaModule, SchemaNode, Value, ValueKind};

pub const AIR_QUALITY: &str = include_str!("../../../../fixtures/air-quality.yada");

pub fn air_quality() -> Arc<SchemaModule> {
    Arc::new(parse_schema(AIR_QUALITY).expect("fixture parses"))
}

const NAME_POOL: &[&str] = &[
    "a", "b", "c", "value", "pm2.5-data", "temp_1", "x-y", "leaf", "list", "key", "type",
    "container", "module", "z9", "Gas", "n.o2",
];

fn fresh_name<R: Rng>(rng: &mut R, taken: &mut BTreeSet<String>) -> String {
    loop {
        let base = *NAME_POOL.choose(rng).unwrap();
        let name = if rng.gen_bool(0.5) {
            base.to_string()
        } else {
            format!("{base}{}", rng.gen_range(0..100))
        };
        if taken.insert(name.clone()) {
            return name;
        }
    }
}

fn random_description<R: Rng>(rng: &mut R) -> Option<String> {
    const PIECES: &[&str] = &["Air", " sensor", "\"q\"", "\\", "\n", "\t", "µg/m³", "{ }", ";", "//x"];
    if rng.gen_bool(0.6) {
        return None;
    }
    let n = rng.gen_range(0..5);
    Some((0..n).map(|_| *PIECES.choose(rng).unwrap()).collect())
}

fn random_type<R: Rng>(rng: &mut R) -> LeafType {
    *LeafType::ALL.choose(rng).unwrap()
}

fn random_children<R: Rng>(rng: &mut R, depth: usize, max_depth: usize, budget: &mut usize) -> Vec<SchemaNode> {
    // module level holds containers only
    let top = depth == 1;
    let mut taken = BTreeSet::new();
    let mut out = Vec::new();
    let want = rng.gen_range(0..=4);
    for _ in 0..want {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let name = fresh_name(rng, &mut taken);
        let description = random_description(rng);
        let interior = depth < max_depth;
        let pick = if top { 2 } else { rng.gen_range(0..if interior { 4 } else { 2 }) };
        let kind = match pick {
            0 => NodeKind::Leaf { ty: random_type(rng) },
            1 => NodeKind::LeafList { ty: random_type(rng) },
            2 => NodeKind::Container {
                children: random_children(rng, depth + 1, max_depth, budget),
            },
            _ => {
                if *budget == 0 {
                    NodeKind::Leaf { ty: random_type(rng) }
                } else {
                    *budget -= 1;
                    let mut children = random_children(rng, depth + 1, max_depth, budget);
                    let mut names: BTreeSet<String> = children.iter().map(|c| c.name.clone()).collect();
                    let key = fresh_name(rng, &mut names);
                    let at = rng.gen_range(0..=children.len());
                    children.insert(
                        at,
                        SchemaNode {
                            name: key.clone(),
                            description: None,
                            kind: NodeKind::Leaf { ty: random_type(rng) },
                        },
                    );
                    NodeKind::List { key, children }
                }
            }
        };
        out.push(SchemaNode {
            name,
            description,
            kind,
        });
    }
    out
}

/// A valid schema with at most `max_nodes` nodes and depth `max_depth`.
pub fn random_schema<R: Rng>(rng: &mut R, max_depth: usize, max_nodes: usize) -> SchemaModule {
    let mut budget = max_nodes;
    let mut roots = Vec::new();
    // keep generating until something non-trivial appears, within budget
    while roots.is_empty() && budget > 0 && rng.gen_bool(0.95) {
        roots = random_children(rng, 1, max_depth, &mut budget);
    }
    SchemaModule {
        name: format!("m{}", rng.gen_range(0..1000)),
        roots,
    }
}

pub fn count_nodes(nodes: &[SchemaNode]) -> usize {
    nodes.iter().map(|n| 1 + count_nodes(n.children())).sum()
}

pub fn depth(nodes: &[SchemaNode]) -> usize {
    nodes.iter().map(|n| 1 + depth(n.children())).max().unwrap_or(0)
}

pub fn random_value<R: Rng>(rng: &mut R, kind: ValueKind) -> Value {
    match kind {
        ValueKind::Num => {
            let micros = if rng.gen_bool(0.3) {
                rng.gen_range(-50..50) * 1_000_000
            } else {
                rng.gen_range(-50_000_000i64..50_000_000)
            };
            Value::Num(Decimal::from_micros(micros))
        }
        ValueKind::Str => {
            const POOL: &[&str] = &["on", "off", "idle", "a b", "µ", ""];
            Value::Str(POOL.choose(rng).unwrap().to_string())
        }
        ValueKind::Bool => Value::Bool(rng.gen()),
    }
}

/// Small domains so that keys collide and predicates hit.
pub fn random_key<R: Rng>(rng: &mut R, kind: ValueKind) -> Value {
    match kind {
        ValueKind::Num => {
            let pool = ["0", "1", "2.5", "12.5", "-3"];
            Value::num(pool.choose(rng).unwrap()).unwrap()
        }
        ValueKind::Str => Value::Str(["a", "b", "x-1", "k k"].choose(rng).unwrap().to_string()),
        ValueKind::Bool => Value::Bool(rng.gen()),
    }
}

/// Non-canonical spelling of a key where one exists.
pub fn key_literal<R: Rng>(rng: &mut R, key: &Value) -> String {
    match key {
        Value::Num(d) if rng.gen_bool(0.3) => {
            let s = d.to_string();
            if s.contains('.') {
                format!("{s}00")
            } else {
                format!("{s}.0")
            }
        }
        other => other.to_string(),
    }
}

/// A random instance path to one of the schema's value-bearing nodes.
pub fn random_leaf_path<R: Rng>(rng: &mut R, schema: &SchemaModule) -> Option<(LeafPath, LeafType, Option<Value>)> {
    let names = schema.leaf_paths().choose(rng)?.clone();
    let mut segments = Vec::new();
    let mut last_key = None;
    let mut key_leaf_value = None;
    for i in 0..names.len() {
        let node = schema.resolve(&names[..=i]).unwrap();
        let key = node.list_key().map(|(kname, kty)| {
            let k = random_key(rng, kty.value_kind());
            (kname.to_string(), k)
        });
        if i == names.len() - 1 {
            if let Some((kname, k)) = &last_key {
                if *kname == names[i] {
                    key_leaf_value = Some(Value::clone(k));
                }
            }
        }
        segments.push(PathSegment {
            name: names[i].clone(),
            key: key.as_ref().map(|(_, k)| k.to_string()),
        });
        last_key = key;
    }
    let ty = schema.resolve(&names).unwrap().leaf_type().unwrap();
    Some((LeafPath { segments }, ty, key_leaf_value))
}

/// Applies up to `max_updates` random writes to an empty tree.
pub fn random_tree<R: Rng>(rng: &mut R, schema: &Arc<SchemaModule>, max_updates: usize) -> DataTree {
    let mut tree = DataTree::new(Arc::clone(schema));
    let updates = rng.gen_range(0..=max_updates);
    for _ in 0..updates {
        let Some((path, ty, key_value)) = random_leaf_path(rng, schema) else {
            break;
        };
        let value = key_value.unwrap_or_else(|| random_value(rng, ty.value_kind()));
        tree.apply_update(&path, value, rng.gen_range(0..100)).expect("generated write is valid");
    }
    tree
}

/// A path expression that binds against `schema`; keys are drawn from `tree`
/// when possible so predicates often match.
pub fn random_expr<R: Rng>(rng: &mut R, schema: &SchemaModule, tree: &DataTree) -> PathExpr {
    let existing: Vec<LeafPath> = tree.leaves().into_iter().map(|(p, _)| p).collect();
    let mut frontier: Vec<&SchemaNode> = schema.roots.iter().collect();
    let mut segments = Vec::new();
    let len = rng.gen_range(1..=5);
    while segments.len() < len && !frontier.is_empty() {
        let name = if rng.gen_bool(0.2) {
            SegmentName::Wildcard
        } else {
            SegmentName::Name(frontier.choose(rng).unwrap().name.clone())
        };
        let matched: Vec<&SchemaNode> = frontier.iter().copied().filter(|n| name.matches(&n.name)).collect();
        let mut predicate = None;
        if let SegmentName::Name(n) = &name {
            if matched.iter().all(|m| m.list_key().is_some()) && rng.gen_bool(0.6) {
                let depth = segments.len();
                let from_tree: Vec<&String> = existing
                    .iter()
                    .filter_map(|p| p.segments.get(depth))
                    .filter(|s| &s.name == n)
                    .filter_map(|s| s.key.as_ref())
                    .collect();
                let kind = matched[0].list_key().unwrap().1.value_kind();
                let lit = match from_tree.choose(rng) {
                    Some(k) if rng.gen_bool(0.8) => {
                        let v = Value::parse_as(kind, k).unwrap();
                        key_literal(rng, &v)
                    }
                    _ => {
                        let k = random_key(rng, kind);
                        key_literal(rng, &k)
                    }
                };
                predicate = Some(lit);
            }
        }
        segments.push(Segment { name, predicate });
        frontier = matched.iter().flat_map(|m| m.children()).collect();
    }
    PathExpr { segments }
}

/// Exhaustive matcher: walks every leaf of `tree` and tests the expression
/// as a prefix pattern, comparing keys after typing both sides.
pub fn brute_force_match(tree: &DataTree, expr: &PathExpr) -> Vec<LeafPath> {
    let schema = tree.schema();
    let mut out = Vec::new();
    'leaves: for (path, _) in tree.leaves() {
        if expr.segments.len() > path.segments.len() || expr.segments.is_empty() {
            continue;
        }
        for (i, (es, ps)) in expr.segments.iter().zip(&path.segments).enumerate() {
            if let SegmentName::Name(n) = &es.name {
                if n != &ps.name {
                    continue 'leaves;
                }
            }
            if let Some(lit) = &es.predicate {
                let names: Vec<&str> = path.segments[..=i].iter().map(|s| s.name.as_str()).collect();
                let Some((_, kty)) = schema.resolve(&names).ok().and_then(|n| n.list_key()) else {
                    continue 'leaves;
                };
                let Some(actual) = &ps.key else {
                    continue 'leaves;
                };
                let want = Value::parse_as(kty.value_kind(), lit);
                let have = Value::parse_as(kty.value_kind(), actual);
                match (want, have) {
                    (Ok(w), Ok(h)) if w == h => {}
                    _ => continue 'leaves,
                }
            }
        }
        out.push(path);
    }
    out
}
