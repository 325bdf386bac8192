//! Path expressions over data trees and KPI selections.
//!
//! Grammar: `/seg(/seg)*` where `seg` is a node name, `name[key='literal']`
//! or `*`. A path that stops on a container or list selects every leaf
//! beneath it.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::datatree::{key_matches, Children, DataNode, DataTree, LeafPath, PathSegment};
use crate::schema::{is_ident_char, SchemaModule, SchemaNode};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SegmentName {
    Name(String),
    Wildcard,
}

impl SegmentName {
    pub fn matches(&self, name: &str) -> bool {
        match self {
            SegmentName::Name(n) => n == name,
            SegmentName::Wildcard => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub name: SegmentName,
    /// `KeyEq` literal.
    pub predicate: Option<String>,
}

/// An absolute path expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathExpr {
    pub segments: Vec<Segment>,
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            f.write_str("/")?;
            match &seg.name {
                SegmentName::Name(n) => f.write_str(n)?,
                SegmentName::Wildcard => f.write_str("*")?,
            }
            if let Some(p) = &seg.predicate {
                write!(f, "[key='{p}']")?;
            }
        }
        Ok(())
    }
}

impl FromStr for PathExpr {
    type Err = PathSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_path(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("path syntax error at offset {offset}: expected {expected}")]
pub struct PathSyntaxError {
    pub offset: usize,
    pub expected: &'static str,
}

pub fn parse_path(text: &str) -> Result<PathExpr, PathSyntaxError> {
    let bytes = text.as_bytes();
    let err = |offset, expected| PathSyntaxError { offset, expected };
    let mut pos = 0;
    let mut segments = Vec::new();
    loop {
        if bytes.get(pos) != Some(&b'/') {
            return Err(err(pos, "`/`"));
        }
        pos += 1;
        let name = if bytes.get(pos) == Some(&b'*') {
            pos += 1;
            SegmentName::Wildcard
        } else {
            let start = pos;
            match text[pos..].chars().next() {
                Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
                _ => return Err(err(pos, "segment name or `*`")),
            }
            while let Some(c) = text[pos..].chars().next() {
                if !is_ident_char(c) {
                    break;
                }
                pos += c.len_utf8();
            }
            SegmentName::Name(text[start..pos].to_string())
        };
        let mut predicate = None;
        if bytes.get(pos) == Some(&b'[') {
            if name == SegmentName::Wildcard {
                return Err(err(pos, "`/` or end of path"));
            }
            pos += 1;
            const OPEN: &str = "key='";
            if !text[pos..].starts_with(OPEN) {
                return Err(err(pos, "`key='`"));
            }
            pos += OPEN.len();
            let close = text[pos..].find('\'').ok_or(err(text.len(), "closing `'`"))?;
            predicate = Some(text[pos..pos + close].to_string());
            pos += close + 1;
            if bytes.get(pos) != Some(&b']') {
                return Err(err(pos, "`]`"));
            }
            pos += 1;
        }
        segments.push(Segment { name, predicate });
        if pos == bytes.len() {
            return Ok(PathExpr { segments });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("segment {index} (`{segment}`) does not resolve in the schema")]
    UnknownSegment { index: usize, segment: String },
    #[error("segment {index} (`{segment}`) carries a key predicate but is not a list")]
    PredicateOnNonList { index: usize, segment: String },
}

/// A path expression checked against a schema.
#[derive(Debug, Clone)]
pub struct BoundPath {
    expr: PathExpr,
    schema: Arc<SchemaModule>,
}

impl BoundPath {
    pub fn expr(&self) -> &PathExpr {
        &self.expr
    }

    pub fn schema(&self) -> &Arc<SchemaModule> {
        &self.schema
    }
}

pub fn bind(expr: &PathExpr, schema: &Arc<SchemaModule>) -> Result<BoundPath, BindError> {
    let mut frontier: Vec<&[SchemaNode]> = vec![&schema.roots];
    for (index, seg) in expr.segments.iter().enumerate() {
        let matched: Vec<&SchemaNode> = frontier
            .iter()
            .flat_map(|sibs| sibs.iter())
            .filter(|n| seg.name.matches(&n.name))
            .collect();
        let segment = match &seg.name {
            SegmentName::Name(n) => n.clone(),
            SegmentName::Wildcard => "*".into(),
        };
        if matched.is_empty() {
            return Err(BindError::UnknownSegment { index, segment });
        }
        if seg.predicate.is_some() && matched.iter().any(|n| n.list_key().is_none()) {
            return Err(BindError::PredicateOnNonList { index, segment });
        }
        frontier = matched.iter().map(|n| n.children()).collect();
    }
    Ok(BoundPath {
        expr: expr.clone(),
        schema: Arc::clone(schema),
    })
}

/// Leaf instances matched by `path`, in document order.
pub fn evaluate(tree: &DataTree, path: &BoundPath) -> Vec<LeafPath> {
    let mut out = Vec::new();
    if path.expr.segments.is_empty() {
        return out;
    }
    eval_children(
        tree.root(),
        &tree.schema().roots,
        &path.expr.segments,
        &mut Vec::new(),
        &mut out,
    );
    out
}

fn eval_children(
    children: &Children,
    schema: &[SchemaNode],
    segs: &[Segment],
    prefix: &mut Vec<PathSegment>,
    out: &mut Vec<LeafPath>,
) {
    let (seg, rest) = segs.split_first().expect("non-empty");
    for sn in schema.iter().filter(|sn| seg.name.matches(&sn.name)) {
        let Some(node) = children.get(&sn.name) else {
            continue;
        };
        match node {
            DataNode::Container(c) if seg.predicate.is_none() => {
                prefix.push(PathSegment {
                    name: sn.name.clone(),
                    key: None,
                });
                descend(c, sn.children(), rest, prefix, out);
                prefix.pop();
            }
            DataNode::List(entries) => {
                for e in entries {
                    if let Some(lit) = &seg.predicate {
                        if !key_matches(&e.key, lit) {
                            continue;
                        }
                    }
                    prefix.push(PathSegment {
                        name: sn.name.clone(),
                        key: Some(e.key.to_string()),
                    });
                    descend(&e.children, sn.children(), rest, prefix, out);
                    prefix.pop();
                }
            }
            DataNode::Leaf(_) | DataNode::LeafList(_) if rest.is_empty() && seg.predicate.is_none() => {
                let mut segments = prefix.clone();
                segments.push(PathSegment {
                    name: sn.name.clone(),
                    key: None,
                });
                out.push(LeafPath { segments });
            }
            _ => {}
        }
    }
}

fn descend(
    children: &Children,
    schema: &[SchemaNode],
    rest: &[Segment],
    prefix: &mut Vec<PathSegment>,
    out: &mut Vec<LeafPath>,
) {
    if rest.is_empty() {
        all_leaves(children, schema, prefix, out);
    } else {
        eval_children(children, schema, rest, prefix, out);
    }
}

fn all_leaves(
    children: &Children,
    schema: &[SchemaNode],
    prefix: &mut Vec<PathSegment>,
    out: &mut Vec<LeafPath>,
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
                all_leaves(c, sn.children(), prefix, out);
                prefix.pop();
            }
            DataNode::List(entries) => {
                for e in entries {
                    prefix.push(PathSegment {
                        name: sn.name.clone(),
                        key: Some(e.key.to_string()),
                    });
                    all_leaves(&e.children, sn.children(), prefix, out);
                    prefix.pop();
                }
            }
            DataNode::Leaf(_) | DataNode::LeafList(_) => {
                let mut segments = prefix.clone();
                segments.push(PathSegment {
                    name: sn.name.clone(),
                    key: None,
                });
                out.push(LeafPath { segments });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Selections

/// A named set of path expressions, e.g. a KPI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSet {
    pub name: String,
    exprs: Vec<PathExpr>,
}

impl SelectionSet {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        assert!(!name.is_empty(), "selection name must be non-empty");
        SelectionSet {
            name,
            exprs: Vec::new(),
        }
    }

    pub fn with_exprs(name: impl Into<String>, exprs: impl IntoIterator<Item = PathExpr>) -> Self {
        let mut sel = SelectionSet::new(name);
        for e in exprs {
            sel.insert(e);
        }
        sel
    }

    /// Adds `expr`; duplicates are ignored.
    pub fn insert(&mut self, expr: PathExpr) -> bool {
        if self.exprs.contains(&expr) {
            false
        } else {
            self.exprs.push(expr);
            true
        }
    }

    pub fn exprs(&self) -> &[PathExpr] {
        &self.exprs
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn bind(&self, schema: &Arc<SchemaModule>) -> Result<BoundSelection, BindError> {
        let paths = self
            .exprs
            .iter()
            .map(|e| bind(e, schema))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundSelection {
            name: self.name.clone(),
            paths,
        })
    }

    /// Selection over every top-level container of `schema`.
    pub fn everything(schema: &SchemaModule) -> Self {
        SelectionSet::with_exprs(
            "all-leaves",
            schema.roots.iter().map(|r| PathExpr {
                segments: vec![Segment {
                    name: SegmentName::Name(r.name.clone()),
                    predicate: None,
                }],
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {source}")]
pub struct SelectionFileError {
    pub line: usize,
    #[source]
    pub source: PathSyntaxError,
}

/// Parses the `.ypath` format: one path per line, `#` comments.
pub fn parse_selection(name: &str, text: &str) -> Result<SelectionSet, SelectionFileError> {
    let mut sel = SelectionSet::new(name);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let expr = parse_path(line).map_err(|source| SelectionFileError { line: i + 1, source })?;
        sel.insert(expr);
    }
    Ok(sel)
}

#[derive(Debug, Clone)]
pub struct BoundSelection {
    pub name: String,
    pub paths: Vec<BoundPath>,
}

impl BoundSelection {
    /// Union of every expression's matches, in first-seen order.
    pub fn evaluate(&self, tree: &DataTree) -> Vec<LeafPath> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in &self.paths {
            for lp in evaluate(tree, p) {
                if seen.insert(lp.clone()) {
                    out.push(lp);
                }
            }
        }
        out
    }
}

/// Prunes `tree` to the selected leaves plus the containers and list
/// entries that address them.
pub fn project(tree: &DataTree, sel: &BoundSelection) -> DataTree {
    let mut out = DataTree::new(Arc::clone(tree.schema()));
    for lp in sel.evaluate(tree) {
        out.graft(tree, &lp);
    }
    out
}

pub const KPI_NAME: &str = "air-quality-kpi";

/// Default air quality KPI over the air monitoring schema.
pub fn kpi_airquality() -> SelectionSet {
    SelectionSet::with_exprs(
        KPI_NAME,
        [
            "/AirParticleURI/value/pm2.5-data",
            "/AirParticleURI/value/pm10-data",
            "/AirGasesURI/value/carbon-monoxide-data",
            "/AirGasesURI/value/nitrogen-dioxide",
            "/AirGasesURI/value/ozone",
            "/AirTemperatureURI/value",
            "/AirHumidityURI/value",
        ]
        .into_iter()
        .map(|p| parse_path(p).expect("static KPI paths parse")),
    )
}
