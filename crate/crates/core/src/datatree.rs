//! Instance data trees bound to a [`SchemaModule`].
//!
//! Trees can be built from canonical JSON (`.ydata` files), mutated through
//! [`DataTree::apply_update`], compared with [`diff`] and serialized back to
//! canonical JSON. Every node in the schema is optional in an instance.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::pathsel::{parse_path, PathSyntaxError, SegmentName};
use crate::schema::{Kind, NodeKind, SchemaModule, SchemaNode};
use crate::value::{Decimal, LeafType, Value, ValueKind};

/// Simulated milliseconds since epoch 0.
pub type Timestamp = u64;

pub type Children = BTreeMap<String, DataNode>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafValue {
    pub value: Value,
    pub last_updated: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListEntry {
    pub key: Value,
    pub children: Children,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataNode {
    Container(Children),
    /// Entries ordered by key value.
    List(Vec<ListEntry>),
    Leaf(LeafValue),
    LeafList(Vec<Value>),
}

impl DataNode {
    pub fn kind(&self) -> Kind {
        match self {
            DataNode::Container(_) => Kind::Container,
            DataNode::List(_) => Kind::List,
            DataNode::Leaf(_) => Kind::Leaf,
            DataNode::LeafList(_) => Kind::LeafList,
        }
    }
}

/// Borrowed view of a value-bearing instance node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafRef<'a> {
    Leaf(&'a LeafValue),
    LeafList(&'a [Value]),
}

impl LeafRef<'_> {
    pub fn same_value(&self, other: &LeafRef<'_>) -> bool {
        match (self, other) {
            (LeafRef::Leaf(a), LeafRef::Leaf(b)) => a.value == b.value,
            (LeafRef::LeafList(a), LeafRef::LeafList(b)) => a == b,
            _ => false,
        }
    }

    /// Leaf-lists carry no timestamp.
    pub fn last_updated(&self) -> Option<Timestamp> {
        match self {
            LeafRef::Leaf(l) => Some(l.last_updated),
            LeafRef::LeafList(_) => None,
        }
    }
}

impl fmt::Display for LeafRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafRef::Leaf(l) => l.value.fmt(f),
            LeafRef::LeafList(vs) => {
                f.write_str("[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    v.fmt(f)?;
                }
                f.write_str("]")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// LeafPath

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathSegment {
    pub name: String,
    /// Key literal selecting a list entry.
    pub key: Option<String>,
}

/// Concrete address of one leaf (or leaf-list) instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeafPath {
    pub segments: Vec<PathSegment>,
}

impl LeafPath {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.name.as_str())
    }

    /// Name path with list keys dropped.
    pub fn schema_path(&self) -> Vec<String> {
        self.names().map(str::to_string).collect()
    }

    pub fn schema_path_string(&self) -> String {
        let mut s = String::new();
        for n in self.names() {
            s.push('/');
            s.push_str(n);
        }
        s
    }

    /// Checks the path against `schema` and rewrites key literals into
    /// canonical value text.
    pub fn canonicalize(&self, schema: &SchemaModule) -> Result<LeafPath, DataError> {
        let target = check_path(schema, self)?;
        let mut out = self.clone();
        for (seg, key) in out.segments.iter_mut().zip(target.keys) {
            seg.key = key.map(|k| k.to_string());
        }
        Ok(out)
    }
}

impl fmt::Display for LeafPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            write!(f, "/{}", seg.name)?;
            if let Some(k) = &seg.key {
                write!(f, "[key='{k}']")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LeafPathError {
    #[error(transparent)]
    Syntax(#[from] PathSyntaxError),
    #[error("wildcard segment at index {0} is not allowed in a concrete leaf path")]
    Wildcard(usize),
}

impl FromStr for LeafPath {
    type Err = LeafPathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let expr = parse_path(s)?;
        let mut segments = Vec::with_capacity(expr.segments.len());
        for (i, seg) in expr.segments.into_iter().enumerate() {
            match seg.name {
                SegmentName::Name(name) => segments.push(PathSegment {
                    name,
                    key: seg.predicate,
                }),
                SegmentName::Wildcard => return Err(LeafPathError::Wildcard(i)),
            }
        }
        Ok(LeafPath { segments })
    }
}

// ---------------------------------------------------------------------------
// Errors and reports

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("unknown path {path}: {reason}")]
    UnknownPath { path: String, reason: String },
    #[error("type mismatch at {path}: leaf type {expected} does not accept {found}")]
    TypeMismatch {
        path: String,
        expected: &'static str,
        found: String,
    },
    #[error("key mismatch at {path}: key leaf of entry `{key}` cannot hold `{value}`")]
    KeyMismatch {
        path: String,
        key: String,
        value: String,
    },
    #[error("trees are bound to different schemas")]
    SchemaMismatch,
    #[error("instance node at {path} is a {found}, schema declares a {expected}")]
    Structure {
        path: String,
        expected: Kind,
        found: Kind,
    },
    #[error("invalid instance data at {path}: {reason}")]
    Instance { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// The update was older than the leaf's current timestamp and was ignored.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    UnknownNode,
    KindMismatch { expected: Kind, found: Kind },
    TypeMismatch { expected: LeafType },
    DuplicateListKey { key: String },
    EntriesOutOfOrder,
    MissingKeyLeaf,
    KeyLeafMismatch { key: String, value: String },
    DuplicateLeafListValue { value: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub locator: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.locator)?;
        match &self.kind {
            ViolationKind::UnknownNode => f.write_str("node not declared in schema"),
            ViolationKind::KindMismatch { expected, found } => {
                write!(f, "expected {expected}, found {found}")
            }
            ViolationKind::TypeMismatch { expected } => {
                write!(f, "value does not conform to type {}", expected.name())
            }
            ViolationKind::DuplicateListKey { key } => write!(f, "duplicate list key `{key}`"),
            ViolationKind::EntriesOutOfOrder => f.write_str("list entries not ordered by key"),
            ViolationKind::MissingKeyLeaf => f.write_str("list entry lacks its key leaf"),
            ViolationKind::KeyLeafMismatch { key, value } => {
                write!(f, "entry key `{key}` differs from key leaf value `{value}`")
            }
            ViolationKind::DuplicateLeafListValue { value } => {
                write!(f, "duplicate leaf-list value `{value}`")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Path checking against the schema

/// Schema-level resolution of a leaf path: the target node plus the typed
/// key of every list segment.
struct PathTarget<'s> {
    node: &'s SchemaNode,
    keys: Vec<Option<Value>>,
    /// For the final segment: the key of the enclosing entry, if the leaf is
    /// that list's key leaf.
    key_leaf_of: Option<Value>,
}

fn check_path<'s>(schema: &'s SchemaModule, path: &LeafPath) -> Result<PathTarget<'s>, DataError> {
    let unknown = |reason: String| DataError::UnknownPath {
        path: path.to_string(),
        reason,
    };
    if path.segments.is_empty() {
        return Err(unknown("empty path".into()));
    }
    let mut siblings: &[SchemaNode] = &schema.roots;
    let mut keys: Vec<Option<Value>> = Vec::with_capacity(path.segments.len());
    let mut node: Option<&SchemaNode> = None;
    let mut key_leaf_of = None;
    let last = path.segments.len() - 1;
    for (i, seg) in path.segments.iter().enumerate() {
        let sn = siblings
            .iter()
            .find(|c| c.name == seg.name)
            .ok_or_else(|| unknown(format!("no schema node `{}` at segment {i}", seg.name)))?;
        let key = match sn.list_key() {
            Some((_, key_ty)) => {
                let lit = seg
                    .key
                    .as_ref()
                    .ok_or_else(|| unknown(format!("list `{}` needs a key", seg.name)))?;
                let key = Value::parse_as(key_ty.value_kind(), lit)
                    .map_err(|e| unknown(format!("bad key for `{}`: {e}", seg.name)))?;
                Some(key)
            }
            None if seg.key.is_some() => {
                return Err(unknown(format!("`{}` is not a list", seg.name)))
            }
            None => None,
        };
        if i < last && sn.is_value_bearing() {
            return Err(unknown(format!("`{}` is a {} and has no children", seg.name, sn.kind())));
        }
        if i == last {
            if let (Some(parent), Some(Some(parent_key))) = (node, keys.last()) {
                if parent.list_key().is_some_and(|(k, _)| k == seg.name) {
                    key_leaf_of = Some(parent_key.clone());
                }
            }
        }
        keys.push(key);
        siblings = sn.children();
        node = Some(sn);
    }
    let node = node.expect("non-empty path");
    if !node.is_value_bearing() {
        return Err(unknown(format!("`{}` is a {}, not a leaf", node.name, node.kind())));
    }
    Ok(PathTarget {
        node,
        keys,
        key_leaf_of,
    })
}

// ---------------------------------------------------------------------------
// DataTree

#[derive(Debug, Clone)]
pub struct DataTree {
    schema: Arc<SchemaModule>,
    root: Children,
}

impl PartialEq for DataTree {
    fn eq(&self, other: &Self) -> bool {
        self.same_schema(other) && self.root == other.root
    }
}

impl DataTree {
    pub fn new(schema: Arc<SchemaModule>) -> Self {
        DataTree {
            schema,
            root: Children::new(),
        }
    }

    /// Wraps raw instance content without checking it; see [`DataTree::validate`].
    pub fn from_raw(schema: Arc<SchemaModule>, root: Children) -> Self {
        DataTree { schema, root }
    }

    pub fn schema(&self) -> &Arc<SchemaModule> {
        &self.schema
    }

    pub fn root(&self) -> &Children {
        &self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    pub fn same_schema(&self, other: &DataTree) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || *self.schema == *other.schema
    }

    /// Writes `value` into the leaf at `path`, creating missing ancestors.
    ///
    /// An update older than the leaf's `last_updated` is ignored and
    /// reported as [`UpdateOutcome::Dropped`]; equal timestamps apply, so
    /// ties go to the later arrival. Leaf-lists gain `value` if absent.
    pub fn apply_update(
        &mut self,
        path: &LeafPath,
        value: Value,
        ts: Timestamp,
    ) -> Result<UpdateOutcome, DataError> {
        let schema = Arc::clone(&self.schema);
        let target = check_path(&schema, path)?;
        let ty = target.node.leaf_type().expect("target is value-bearing");
        if !ty.accepts(&value) {
            return Err(DataError::TypeMismatch {
                path: path.to_string(),
                expected: ty.name(),
                found: describe(&value),
            });
        }
        if let Some(key) = &target.key_leaf_of {
            if *key != value {
                return Err(DataError::KeyMismatch {
                    path: path.to_string(),
                    key: key.to_string(),
                    value: value.to_string(),
                });
            }
        }
        let mut children = &mut self.root;
        let mut siblings: &[SchemaNode] = &schema.roots;
        let last = path.segments.len() - 1;
        for (i, (seg, key)) in path.segments.iter().zip(&target.keys).enumerate() {
            let sn = siblings
                .iter()
                .find(|c| c.name == seg.name)
                .expect("checked path");
            let here = || prefix_string(path, i);
            if i == last {
                return match (children.get_mut(&seg.name), sn.kind()) {
                    (None, Kind::Leaf) => {
                        children.insert(
                            seg.name.clone(),
                            DataNode::Leaf(LeafValue {
                                value,
                                last_updated: ts,
                            }),
                        );
                        Ok(UpdateOutcome::Applied)
                    }
                    (None, _) => {
                        children.insert(seg.name.clone(), DataNode::LeafList(vec![value]));
                        Ok(UpdateOutcome::Applied)
                    }
                    (Some(DataNode::Leaf(lv)), Kind::Leaf) => {
                        if ts < lv.last_updated {
                            Ok(UpdateOutcome::Dropped)
                        } else {
                            lv.value = value;
                            lv.last_updated = ts;
                            Ok(UpdateOutcome::Applied)
                        }
                    }
                    (Some(DataNode::LeafList(vs)), Kind::LeafList) => {
                        if !vs.contains(&value) {
                            vs.push(value);
                        }
                        Ok(UpdateOutcome::Applied)
                    }
                    (Some(other), expected) => Err(DataError::Structure {
                        path: here(),
                        expected,
                        found: other.kind(),
                    }),
                };
            }
            let node = children.entry(seg.name.clone()).or_insert_with(|| match sn.kind() {
                Kind::List => DataNode::List(Vec::new()),
                _ => DataNode::Container(Children::new()),
            });
            children = match (node, key) {
                (DataNode::Container(c), None) => c,
                (DataNode::List(entries), Some(key)) => {
                    let (key_name, _) = sn.list_key().expect("list has key");
                    entry_children(entries, key, key_name, ts)
                }
                (other, _) => {
                    return Err(DataError::Structure {
                        path: here(),
                        expected: sn.kind(),
                        found: other.kind(),
                    })
                }
            };
            siblings = sn.children();
        }
        unreachable!("loop returns on the last segment")
    }

    /// Looks up a leaf instance. Key literals match by typed value.
    pub fn get(&self, path: &LeafPath) -> Option<LeafRef<'_>> {
        let mut children = &self.root;
        let last = path.segments.len().checked_sub(1)?;
        for (i, seg) in path.segments.iter().enumerate() {
            let node = children.get(&seg.name)?;
            match (node, &seg.key) {
                (DataNode::Leaf(lv), None) if i == last => return Some(LeafRef::Leaf(lv)),
                (DataNode::LeafList(vs), None) if i == last => return Some(LeafRef::LeafList(vs)),
                (DataNode::Container(c), None) if i < last => children = c,
                (DataNode::List(entries), Some(k)) if i < last => {
                    children = &entries.iter().find(|e| key_matches(&e.key, k))?.children;
                }
                _ => return None,
            }
        }
        None
    }

    /// Every value-bearing instance in document order: schema declaration
    /// order, then list key order.
    pub fn leaves(&self) -> Vec<(LeafPath, LeafRef<'_>)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        collect_leaves(&self.root, &self.schema.roots, &mut prefix, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        validate_children(&self.root, &self.schema.roots, "", &mut report);
        report
    }

    /// Canonical JSON bytes.
    pub fn serialize(&self) -> Vec<u8> {
        self.to_json().into_bytes()
    }

    /// Canonical JSON: schema declaration order for object keys, list
    /// entries by key, numbers without trailing zeros, no whitespace.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        write_children(&mut out, &self.root, &self.schema.roots);
        out
    }

    pub fn from_json(schema: Arc<SchemaModule>, text: &str) -> Result<DataTree, DataError> {
        let json: serde_json::Value = serde_json::from_str(text).map_err(|e| DataError::Instance {
            path: "/".into(),
            reason: e.to_string(),
        })?;
        let root = match &json {
            serde_json::Value::Object(map) => {
                let mut root = Children::new();
                for (name, v) in map {
                    let sn = schema.root(name).ok_or_else(|| DataError::Instance {
                        path: format!("/{name}"),
                        reason: "not declared in schema".into(),
                    })?;
                    root.insert(name.clone(), node_from_json(sn, v, &format!("/{name}"))?);
                }
                root
            }
            _ => {
                return Err(DataError::Instance {
                    path: "/".into(),
                    reason: "top level must be an object".into(),
                })
            }
        };
        Ok(DataTree { schema, root })
    }

    /// Copies the leaf at `path` from `src` into `self`, together with the
    /// containers and list entries (including their key leaves) needed to
    /// address it.
    pub fn graft(&mut self, src: &DataTree, path: &LeafPath) -> bool {
        graft_into(&mut self.root, &src.root, &path.segments)
    }
}

fn describe(value: &Value) -> String {
    match value.kind() {
        ValueKind::Num => format!("number {value}"),
        ValueKind::Str => "a string".into(),
        ValueKind::Bool => format!("boolean {value}"),
    }
}

fn prefix_string(path: &LeafPath, upto: usize) -> String {
    LeafPath {
        segments: path.segments[..=upto].to_vec(),
    }
    .to_string()
}

/// `literal` denotes the same value as `key` under the key's own kind.
pub fn key_matches(key: &Value, literal: &str) -> bool {
    Value::parse_as(key.kind(), literal).is_ok_and(|v| v == *key)
}

fn entry_children<'a>(
    entries: &'a mut Vec<ListEntry>,
    key: &Value,
    key_name: &str,
    ts: Timestamp,
) -> &'a mut Children {
    let idx = match entries.binary_search_by(|e| e.key.key_cmp(key)) {
        Ok(i) => i,
        Err(i) => {
            let mut children = Children::new();
            children.insert(
                key_name.to_string(),
                DataNode::Leaf(LeafValue {
                    value: key.clone(),
                    last_updated: ts,
                }),
            );
            entries.insert(
                i,
                ListEntry {
                    key: key.clone(),
                    children,
                },
            );
            i
        }
    };
    &mut entries[idx].children
}

fn collect_leaves<'a>(
    children: &'a Children,
    schema: &[SchemaNode],
    prefix: &mut Vec<PathSegment>,
    out: &mut Vec<(LeafPath, LeafRef<'a>)>,
) {
    for sn in schema {
        let Some(node) = children.get(&sn.name) else {
            continue;
        };
        match node {
            DataNode::Container(c) => {
                prefix.push(PathSegment {
                    name: sn.name.clone(),
                    key: None,
                });
                collect_leaves(c, sn.children(), prefix, out);
                prefix.pop();
            }
            DataNode::List(entries) => {
                for e in entries {
                    prefix.push(PathSegment {
                        name: sn.name.clone(),
                        key: Some(e.key.to_string()),
                    });
                    collect_leaves(&e.children, sn.children(), prefix, out);
                    prefix.pop();
                }
            }
            DataNode::Leaf(lv) => out.push((leaf_path(prefix, &sn.name), LeafRef::Leaf(lv))),
            DataNode::LeafList(vs) => {
                out.push((leaf_path(prefix, &sn.name), LeafRef::LeafList(vs)))
            }
        }
    }
}

fn leaf_path(prefix: &[PathSegment], name: &str) -> LeafPath {
    let mut segments = prefix.to_vec();
    segments.push(PathSegment {
        name: name.to_string(),
        key: None,
    });
    LeafPath { segments }
}

fn validate_children(
    children: &Children,
    schema: &[SchemaNode],
    locator: &str,
    report: &mut ValidationReport,
) {
    for (name, node) in children {
        let here = format!("{locator}/{name}");
        let Some(sn) = schema.iter().find(|s| &s.name == name) else {
            report.violations.push(Violation {
                locator: here,
                kind: ViolationKind::UnknownNode,
            });
            continue;
        };
        if sn.kind() != node.kind() {
            report.violations.push(Violation {
                locator: here,
                kind: ViolationKind::KindMismatch {
                    expected: sn.kind(),
                    found: node.kind(),
                },
            });
            continue;
        }
        match node {
            DataNode::Container(c) => validate_children(c, sn.children(), &here, report),
            DataNode::Leaf(lv) => {
                let ty = sn.leaf_type().expect("leaf");
                if !ty.accepts(&lv.value) {
                    report.violations.push(Violation {
                        locator: here,
                        kind: ViolationKind::TypeMismatch { expected: ty },
                    });
                }
            }
            DataNode::LeafList(vs) => {
                let ty = sn.leaf_type().expect("leaf-list");
                let mut seen = HashSet::new();
                for v in vs {
                    if !ty.accepts(v) {
                        report.violations.push(Violation {
                            locator: here.clone(),
                            kind: ViolationKind::TypeMismatch { expected: ty },
                        });
                    } else if !seen.insert(v) {
                        report.violations.push(Violation {
                            locator: here.clone(),
                            kind: ViolationKind::DuplicateLeafListValue {
                                value: v.to_string(),
                            },
                        });
                    }
                }
            }
            DataNode::List(entries) => {
                let (key_name, key_ty) = sn.list_key().expect("list");
                for (i, e) in entries.iter().enumerate() {
                    let entry_loc = format!("{here}[key='{}']", e.key);
                    if !key_ty.accepts(&e.key) {
                        report.violations.push(Violation {
                            locator: entry_loc.clone(),
                            kind: ViolationKind::TypeMismatch { expected: key_ty },
                        });
                    }
                    if i > 0 {
                        match entries[i - 1].key.key_cmp(&e.key) {
                            std::cmp::Ordering::Equal => report.violations.push(Violation {
                                locator: entry_loc.clone(),
                                kind: ViolationKind::DuplicateListKey {
                                    key: e.key.to_string(),
                                },
                            }),
                            std::cmp::Ordering::Greater => report.violations.push(Violation {
                                locator: entry_loc.clone(),
                                kind: ViolationKind::EntriesOutOfOrder,
                            }),
                            std::cmp::Ordering::Less => {}
                        }
                    }
                    match e.children.get(key_name) {
                        None => report.violations.push(Violation {
                            locator: entry_loc.clone(),
                            kind: ViolationKind::MissingKeyLeaf,
                        }),
                        Some(DataNode::Leaf(lv)) if lv.value != e.key => {
                            report.violations.push(Violation {
                                locator: format!("{entry_loc}/{key_name}"),
                                kind: ViolationKind::KeyLeafMismatch {
                                    key: e.key.to_string(),
                                    value: lv.value.to_string(),
                                },
                            })
                        }
                        _ => {}
                    }
                    validate_children(&e.children, sn.children(), &entry_loc, report);
                }
            }
        }
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Num(d) => out.push_str(&d.to_string()),
        Value::Str(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"))
        }
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
    }
}

fn write_children(out: &mut String, children: &Children, schema: &[SchemaNode]) {
    out.push('{');
    let mut first = true;
    for sn in schema {
        let Some(node) = children.get(&sn.name) else {
            continue;
        };
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&serde_json::to_string(&sn.name).expect("names serialize"));
        out.push(':');
        match node {
            DataNode::Container(c) => write_children(out, c, sn.children()),
            DataNode::List(entries) => {
                out.push('[');
                for (i, e) in entries.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_children(out, &e.children, sn.children());
                }
                out.push(']');
            }
            DataNode::Leaf(lv) => write_value(out, &lv.value),
            DataNode::LeafList(vs) => {
                out.push('[');
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_value(out, v);
                }
                out.push(']');
            }
        }
    }
    out.push('}');
}

fn scalar_from_json(ty: LeafType, v: &serde_json::Value, path: &str) -> Result<Value, DataError> {
    let err = |reason: String| DataError::Instance {
        path: path.to_string(),
        reason,
    };
    let value = match (ty.value_kind(), v) {
        (ValueKind::Num, serde_json::Value::Number(n)) => Value::Num(
            n.to_string()
                .parse::<Decimal>()
                .map_err(|e| err(e.to_string()))?,
        ),
        (ValueKind::Str, serde_json::Value::String(s)) => Value::Str(s.clone()),
        (ValueKind::Bool, serde_json::Value::Bool(b)) => Value::Bool(*b),
        (_, other) => return Err(err(format!("type {} cannot hold {other}", ty.name()))),
    };
    value.check().map_err(|e| err(e.to_string()))?;
    Ok(value)
}

fn children_from_json(
    schema: &[SchemaNode],
    map: &serde_json::Map<String, serde_json::Value>,
    path: &str,
) -> Result<Children, DataError> {
    let mut children = Children::new();
    for (name, v) in map {
        let here = format!("{path}/{name}");
        let sn = schema
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| DataError::Instance {
                path: here.clone(),
                reason: "not declared in schema".into(),
            })?;
        children.insert(name.clone(), node_from_json(sn, v, &here)?);
    }
    Ok(children)
}

fn node_from_json(sn: &SchemaNode, v: &serde_json::Value, path: &str) -> Result<DataNode, DataError> {
    let shape = |want: &str| DataError::Instance {
        path: path.to_string(),
        reason: format!("{} must be a JSON {want}", sn.kind()),
    };
    match &sn.kind {
        NodeKind::Container { children } => match v {
            serde_json::Value::Object(map) => {
                Ok(DataNode::Container(children_from_json(children, map, path)?))
            }
            _ => Err(shape("object")),
        },
        NodeKind::List { key, children } => {
            let serde_json::Value::Array(items) = v else {
                return Err(shape("array"));
            };
            let mut entries = Vec::with_capacity(items.len());
            for item in items {
                let serde_json::Value::Object(map) = item else {
                    return Err(shape("array of objects"));
                };
                let entry_children = children_from_json(children, map, path)?;
                let key_value = match entry_children.get(key) {
                    Some(DataNode::Leaf(lv)) => lv.value.clone(),
                    _ => {
                        return Err(DataError::Instance {
                            path: path.to_string(),
                            reason: format!("list entry lacks key leaf `{key}`"),
                        })
                    }
                };
                entries.push(ListEntry {
                    key: key_value,
                    children: entry_children,
                });
            }
            entries.sort_by(|a, b| a.key.key_cmp(&b.key));
            Ok(DataNode::List(entries))
        }
        NodeKind::Leaf { ty } => Ok(DataNode::Leaf(LeafValue {
            value: scalar_from_json(*ty, v, path)?,
            last_updated: 0,
        })),
        NodeKind::LeafList { ty } => {
            let serde_json::Value::Array(items) = v else {
                return Err(shape("array"));
            };
            items
                .iter()
                .map(|i| scalar_from_json(*ty, i, path))
                .collect::<Result<Vec<_>, _>>()
                .map(DataNode::LeafList)
        }
    }
}

fn graft_into(dst: &mut Children, src: &Children, segs: &[PathSegment]) -> bool {
    let Some((seg, rest)) = segs.split_first() else {
        return false;
    };
    let Some(node) = src.get(&seg.name) else {
        return false;
    };
    match (node, &seg.key) {
        (DataNode::Leaf(_) | DataNode::LeafList(_), None) if rest.is_empty() => {
            dst.insert(seg.name.clone(), node.clone());
            true
        }
        (DataNode::Container(c), None) => {
            let slot = dst
                .entry(seg.name.clone())
                .or_insert_with(|| DataNode::Container(Children::new()));
            match slot {
                DataNode::Container(d) => {
                    let ok = graft_into(d, c, rest);
                    if d.is_empty() {
                        dst.remove(&seg.name);
                    }
                    ok
                }
                _ => false,
            }
        }
        (DataNode::List(entries), Some(k)) => {
            let Some(entry) = entries.iter().find(|e| key_matches(&e.key, k)) else {
                return false;
            };
            let slot = dst
                .entry(seg.name.clone())
                .or_insert_with(|| DataNode::List(Vec::new()));
            let DataNode::List(dst_entries) = slot else {
                return false;
            };
            let idx = match dst_entries.binary_search_by(|e| e.key.key_cmp(&entry.key)) {
                Ok(i) => i,
                Err(i) => {
                    // The key leaf travels with the entry so it stays addressable.
                    let key_leaf = entry
                        .children
                        .iter()
                        .find(|(_, n)| matches!(n, DataNode::Leaf(lv) if lv.value == entry.key));
                    let mut children = Children::new();
                    if let Some((name, n)) = key_leaf {
                        children.insert(name.clone(), n.clone());
                    }
                    dst_entries.insert(
                        i,
                        ListEntry {
                            key: entry.key.clone(),
                            children,
                        },
                    );
                    i
                }
            };
            let ok = graft_into(&mut dst_entries[idx].children, &entry.children, rest);
            if !ok && dst_entries[idx].children.len() <= 1 {
                dst_entries.remove(idx);
            }
            if dst_entries.is_empty() {
                dst.remove(&seg.name);
            }
            ok
        }
        _ => false,
    }
}

/// Leaf paths whose values differ between `a` and `b`, or that exist in
/// only one of them. Timestamps are ignored.
pub fn diff(a: &DataTree, b: &DataTree) -> Result<BTreeSet<LeafPath>, DataError> {
    if !a.same_schema(b) {
        return Err(DataError::SchemaMismatch);
    }
    let la: BTreeMap<_, _> = a.leaves().into_iter().collect();
    let lb: BTreeMap<_, _> = b.leaves().into_iter().collect();
    let mut out = BTreeSet::new();
    for (p, va) in &la {
        match lb.get(p) {
            Some(vb) if va.same_value(vb) => {}
            _ => {
                out.insert(p.clone());
            }
        }
    }
    for p in lb.keys() {
        if !la.contains_key(p) {
            out.insert(p.clone());
        }
    }
    Ok(out)
}
