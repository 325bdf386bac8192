//! Schema modules: parsing, canonical printing and name lookup.
//!
//! The accepted statement set is `module`, `container`, `list`, `key`,
//! `leaf`, `leaf-list`, `type` and `description`. String arguments use
//! double quotes; simple statements end in `;`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::value::LeafType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("syntax error at line {line}, column {column} (offset {offset}): expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("duplicate name at {path}")]
    DuplicateName { path: String },
    #[error("unknown type `{name}` at offset {offset}")]
    UnknownType { name: String, offset: usize },
    #[error("{}", match key {
        Some(k) => format!("list {path}: key `{k}` does not name a direct leaf child"),
        None => format!("list {path} has no key statement"),
    })]
    BadKey { path: String, key: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no schema node `{segment}` at segment {index}")]
pub struct NotFound {
    pub index: usize,
    pub segment: String,
}

/// A compiled schema module. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaModule {
    pub name: String,
    pub roots: Vec<SchemaNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaNode {
    pub name: String,
    pub description: Option<String>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Container { children: Vec<SchemaNode> },
    List { key: String, children: Vec<SchemaNode> },
    Leaf { ty: LeafType },
    LeafList { ty: LeafType },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Container,
    List,
    Leaf,
    LeafList,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Container => "container",
            Kind::List => "list",
            Kind::Leaf => "leaf",
            Kind::LeafList => "leaf-list",
        })
    }
}

impl SchemaNode {
    pub fn kind(&self) -> Kind {
        match self.kind {
            NodeKind::Container { .. } => Kind::Container,
            NodeKind::List { .. } => Kind::List,
            NodeKind::Leaf { .. } => Kind::Leaf,
            NodeKind::LeafList { .. } => Kind::LeafList,
        }
    }

    pub fn children(&self) -> &[SchemaNode] {
        match &self.kind {
            NodeKind::Container { children } | NodeKind::List { children, .. } => children,
            NodeKind::Leaf { .. } | NodeKind::LeafList { .. } => &[],
        }
    }

    pub fn child(&self, name: &str) -> Option<&SchemaNode> {
        self.children().iter().find(|c| c.name == name)
    }

    /// Leaf type for leaves and leaf-lists.
    pub fn leaf_type(&self) -> Option<LeafType> {
        match self.kind {
            NodeKind::Leaf { ty } | NodeKind::LeafList { ty } => Some(ty),
            _ => None,
        }
    }

    /// Key leaf name and its type, for lists.
    pub fn list_key(&self) -> Option<(&str, LeafType)> {
        match &self.kind {
            NodeKind::List { key, children } => {
                let ty = children.iter().find(|c| &c.name == key)?.leaf_type()?;
                Some((key.as_str(), ty))
            }
            _ => None,
        }
    }

    pub fn is_value_bearing(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. } | NodeKind::LeafList { .. })
    }
}

impl SchemaModule {
    pub fn root(&self, name: &str) -> Option<&SchemaNode> {
        self.roots.iter().find(|r| r.name == name)
    }

    /// Looks up the node at a name path, descending through containers and
    /// lists.
    pub fn resolve<S: AsRef<str>>(&self, segments: &[S]) -> Result<&SchemaNode, NotFound> {
        let not_found = |index: usize| NotFound {
            index,
            segment: segments
                .get(index)
                .map(|s| s.as_ref().to_string())
                .unwrap_or_default(),
        };
        let first = segments.first().ok_or_else(|| not_found(0))?;
        let mut node = self.root(first.as_ref()).ok_or_else(|| not_found(0))?;
        for (i, seg) in segments.iter().enumerate().skip(1) {
            node = node.child(seg.as_ref()).ok_or_else(|| not_found(i))?;
        }
        Ok(node)
    }

    /// Every value-bearing node as its name path, in declaration order.
    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        fn walk(node: &SchemaNode, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            prefix.push(node.name.clone());
            if node.is_value_bearing() {
                out.push(prefix.clone());
            }
            for c in node.children() {
                walk(c, prefix, out);
            }
            prefix.pop();
        }
        let mut out = Vec::new();
        for r in &self.roots {
            walk(r, &mut Vec::new(), &mut out);
        }
        out
    }

    pub fn print(&self) -> String {
        print_schema(self)
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

/// Whether `s` is a valid schema node name.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, SchemaError> {
        let mut p = Parser {
            src,
            toks: Vec::new(),
            pos: 0,
        };
        p.lex()?;
        Ok(p)
    }

    fn error_at(&self, offset: usize, expected: &str, found: String) -> SchemaError {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        SchemaError::Syntax {
            offset,
            line,
            column,
            expected: expected.to_string(),
            found,
        }
    }

    fn lex(&mut self) -> Result<(), SchemaError> {
        let src = self.src;
        let mut it = src.char_indices().peekable();
        while let Some(&(i, c)) = it.peek() {
            match c {
                c if c.is_whitespace() => {
                    it.next();
                }
                '/' if src[i..].starts_with("//") => {
                    while let Some(&(_, c)) = it.peek() {
                        if c == '\n' {
                            break;
                        }
                        it.next();
                    }
                }
                '{' | '}' | ';' => {
                    it.next();
                    let t = match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        _ => Tok::Semi,
                    };
                    self.toks.push((t, i));
                }
                '"' => {
                    it.next();
                    let mut s = String::new();
                    let mut closed = false;
                    while let Some((j, c)) = it.next() {
                        match c {
                            '"' => {
                                closed = true;
                                break;
                            }
                            '\\' => match it.next() {
                                Some((_, '"')) => s.push('"'),
                                Some((_, '\\')) => s.push('\\'),
                                Some((_, 'n')) => s.push('\n'),
                                Some((_, 't')) => s.push('\t'),
                                Some((k, other)) => {
                                    return Err(self.error_at(
                                        k,
                                        "escape sequence",
                                        format!("`\\{other}`"),
                                    ))
                                }
                                None => {
                                    return Err(self.error_at(j, "closing `\"`", "end of input".into()))
                                }
                            },
                            c => s.push(c),
                        }
                    }
                    if !closed {
                        return Err(self.error_at(src.len(), "closing `\"`", "end of input".into()));
                    }
                    self.toks.push((Tok::Str(s), i));
                }
                c if is_ident_start(c) => {
                    let mut end = i;
                    while let Some(&(j, c)) = it.peek() {
                        if !is_ident_char(c) {
                            break;
                        }
                        end = j + c.len_utf8();
                        it.next();
                    }
                    self.toks.push((Tok::Ident(src[i..end].to_string()), i));
                }
                other => {
                    return Err(self.error_at(i, "statement or punctuation", format!("`{other}`")));
                }
            }
        }
        self.toks.push((Tok::Eof, src.len()));
        Ok(())
    }

    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<usize, SchemaError> {
        let (tok, off) = self.bump();
        if tok == want {
            Ok(off)
        } else {
            Err(self.error_at(off, expected, tok.to_string()))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, usize), SchemaError> {
        match self.bump() {
            (Tok::Ident(s), off) => Ok((s, off)),
            (tok, off) => Err(self.error_at(off, expected, tok.to_string())),
        }
    }

    fn string(&mut self, expected: &str) -> Result<String, SchemaError> {
        match self.bump() {
            (Tok::Str(s), _) => Ok(s),
            (tok, off) => Err(self.error_at(off, expected, tok.to_string())),
        }
    }

    fn module(&mut self) -> Result<SchemaModule, SchemaError> {
        let (kw, off) = self.ident("`module`")?;
        if kw != "module" {
            return Err(self.error_at(off, "`module`", format!("`{kw}`")));
        }
        let (name, _) = self.ident("module name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut roots: Vec<SchemaNode> = Vec::new();
        let path = name.clone();
        loop {
            match self.peek().clone() {
                (Tok::RBrace, _) => {
                    self.bump();
                    break;
                }
                (Tok::Ident(kw), _) if kw == "container" => {
                    self.bump();
                    let node = self.container_or_list(Kind::Container, &path)?;
                    push_unique(&mut roots, node, &path)?;
                }
                (tok, off) => return Err(self.error_at(off, "`container` or `}`", tok.to_string())),
            }
        }
        self.expect(Tok::Eof, "end of input")?;
        Ok(SchemaModule { name, roots })
    }

    fn container_or_list(&mut self, kind: Kind, parent: &str) -> Result<SchemaNode, SchemaError> {
        let (name, _) = self.ident(&format!("{kind} name"))?;
        let path = format!("{parent}/{name}");
        self.expect(Tok::LBrace, "`{`")?;
        let mut description = None;
        let mut key: Option<String> = None;
        let mut children: Vec<SchemaNode> = Vec::new();
        let expected = if kind == Kind::List {
            "`description`, `key`, `container`, `list`, `leaf`, `leaf-list` or `}`"
        } else {
            "`description`, `container`, `list`, `leaf`, `leaf-list` or `}`"
        };
        loop {
            let (tok, off) = self.bump();
            let kw = match tok {
                Tok::RBrace => break,
                Tok::Ident(kw) => kw,
                other => return Err(self.error_at(off, expected, other.to_string())),
            };
            match kw.as_str() {
                "description" if description.is_none() => {
                    description = Some(self.string("description string")?);
                    self.expect(Tok::Semi, "`;`")?;
                }
                "key" if kind == Kind::List && key.is_none() => {
                    key = Some(self.string("key string")?);
                    self.expect(Tok::Semi, "`;`")?;
                }
                "container" => {
                    let node = self.container_or_list(Kind::Container, &path)?;
                    push_unique(&mut children, node, &path)?;
                }
                "list" => {
                    let node = self.container_or_list(Kind::List, &path)?;
                    push_unique(&mut children, node, &path)?;
                }
                "leaf" => {
                    let node = self.leaf(Kind::Leaf)?;
                    push_unique(&mut children, node, &path)?;
                }
                "leaf-list" => {
                    let node = self.leaf(Kind::LeafList)?;
                    push_unique(&mut children, node, &path)?;
                }
                _ => return Err(self.error_at(off, expected, format!("`{kw}`"))),
            }
        }
        let kind = match kind {
            Kind::List => {
                let key_ok = key.as_ref().is_some_and(|k| {
                    children
                        .iter()
                        .any(|c| &c.name == k && matches!(c.kind, NodeKind::Leaf { .. }))
                });
                match key {
                    Some(key) if key_ok => NodeKind::List { key, children },
                    key => return Err(SchemaError::BadKey { path, key }),
                }
            }
            _ => NodeKind::Container { children },
        };
        Ok(SchemaNode {
            name,
            description,
            kind,
        })
    }

    fn leaf(&mut self, kind: Kind) -> Result<SchemaNode, SchemaError> {
        let (name, _) = self.ident(&format!("{kind} name"))?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut ty = None;
        let mut description = None;
        loop {
            let (tok, off) = self.bump();
            let kw = match tok {
                Tok::RBrace if ty.is_some() => break,
                Tok::Ident(kw) => kw,
                other => {
                    let expected = if ty.is_some() {
                        "`description` or `}`"
                    } else {
                        "`type` or `description`"
                    };
                    return Err(self.error_at(off, expected, other.to_string()));
                }
            };
            match kw.as_str() {
                "type" if ty.is_none() => {
                    let (tname, toff) = self.ident("type name")?;
                    let t = LeafType::lookup(&tname).ok_or(SchemaError::UnknownType {
                        name: tname,
                        offset: toff,
                    })?;
                    self.expect(Tok::Semi, "`;`")?;
                    ty = Some(t);
                }
                "description" if description.is_none() => {
                    description = Some(self.string("description string")?);
                    self.expect(Tok::Semi, "`;`")?;
                }
                _ => {
                    let expected = if ty.is_some() {
                        "`description` or `}`"
                    } else {
                        "`type` or `description`"
                    };
                    return Err(self.error_at(off, expected, format!("`{kw}`")));
                }
            }
        }
        let ty = ty.expect("loop exits only once a type is set");
        let kind = match kind {
            Kind::LeafList => NodeKind::LeafList { ty },
            _ => NodeKind::Leaf { ty },
        };
        Ok(SchemaNode {
            name,
            description,
            kind,
        })
    }
}

fn push_unique(
    siblings: &mut Vec<SchemaNode>,
    node: SchemaNode,
    parent: &str,
) -> Result<(), SchemaError> {
    if siblings.iter().any(|s| s.name == node.name) {
        return Err(SchemaError::DuplicateName {
            path: format!("{parent}/{}", node.name),
        });
    }
    siblings.push(node);
    Ok(())
}

/// Parses schema source text into a module.
pub fn parse_schema(text: &str) -> Result<SchemaModule, SchemaError> {
    Parser::new(text)?.module()
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text: two-space indentation, one statement per line,
/// declaration order.
pub fn print_schema(module: &SchemaModule) -> String {
    fn node(out: &mut String, n: &SchemaNode, depth: usize) {
        let pad = "  ".repeat(depth);
        let inner = "  ".repeat(depth + 1);
        let _ = writeln!(out, "{pad}{} {} {{", n.kind(), n.name);
        if let Some(ty) = n.leaf_type() {
            let _ = writeln!(out, "{inner}type {};", ty.name());
        }
        if let Some(d) = &n.description {
            let _ = writeln!(out, "{inner}description {};", quote(d));
        }
        if let NodeKind::List { key, .. } = &n.kind {
            let _ = writeln!(out, "{inner}key {};", quote(key));
        }
        for c in n.children() {
            node(out, c, depth + 1);
        }
        let _ = writeln!(out, "{pad}}}");
    }
    let mut out = format!("module {} {{\n", module.name);
    for r in &module.roots {
        node(&mut out, r, 1);
    }
    out.push_str("}\n");
    out
}

/// Checks sibling-name uniqueness and list keys on a module assembled
/// without the parser.
pub fn check_invariants(module: &SchemaModule) -> Result<(), SchemaError> {
    fn siblings(nodes: &[SchemaNode], parent: &str) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for n in nodes {
            let path = format!("{parent}/{}", n.name);
            if !seen.insert(n.name.as_str()) {
                return Err(SchemaError::DuplicateName { path });
            }
            if let NodeKind::List { key, children } = &n.kind {
                let ok = children
                    .iter()
                    .any(|c| &c.name == key && matches!(c.kind, NodeKind::Leaf { .. }));
                if !ok {
                    return Err(SchemaError::BadKey {
                        path,
                        key: Some(key.clone()),
                    });
                }
            }
            siblings(n.children(), &path)?;
        }
        Ok(())
    }
    siblings(&module.roots, &module.name)
}
