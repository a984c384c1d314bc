//! Join-graph extraction: parse a restricted SQL subset or load a declarative
//! workload file, producing the alias set and join-edge set that define the
//! search space.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Catalog;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("duplicate alias `{0}` in FROM list")]
    DuplicateAlias(String),
    #[error("predicate references alias `{0}` not present in FROM list")]
    UnknownAlias(String),
    #[error("io error reading workload: {0}")]
    Io(#[from] std::io::Error),
    #[error("workload schema error: {0}")]
    Schema(String),
}

impl GraphError {
    fn parse(position: usize, message: impl Into<String>) -> Self {
        GraphError::Parse { position, message: message.into() }
    }
}

/// A FROM-list entry: alias plus underlying table name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasRef {
    pub alias: String,
    pub table: String,
}

/// An undirected equi-join edge between two aliases. Multiple predicates on
/// the same alias pair are merged: predicates ANDed, selectivities multiplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: String,
    pub right: String,
    pub predicate: String,
    pub selectivity: Option<f64>,
}

impl JoinEdge {
    /// Canonical unordered key for this edge's endpoints.
    pub fn key(&self) -> (String, String) {
        unordered_key(&self.left, &self.right)
    }

    pub fn touches(&self, alias: &str) -> bool {
        self.left == alias || self.right == alias
    }

    /// Given one endpoint, returns the other.
    pub fn other(&self, alias: &str) -> Option<&str> {
        if self.left == alias {
            Some(&self.right)
        } else if self.right == alias {
            Some(&self.left)
        } else {
            None
        }
    }
}

pub fn unordered_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JoinGraph {
    pub aliases: Vec<AliasRef>,
    pub edges: Vec<JoinEdge>,
    /// Local (single-alias) filter predicates, kept verbatim for rewriting.
    pub local_predicates: Vec<String>,
    /// Select list text of the original query, when parsed from SQL.
    pub select_list: Option<String>,
    pub source_sql: Option<String>,
}

impl JoinGraph {
    pub fn alias_names(&self) -> Vec<&str> {
        self.aliases.iter().map(|a| a.alias.as_str()).collect()
    }

    pub fn has_alias(&self, alias: &str) -> bool {
        self.aliases.iter().any(|a| a.alias == alias)
    }

    pub fn table_of(&self, alias: &str) -> Option<&str> {
        self.aliases.iter().find(|a| a.alias == alias).map(|a| a.table.as_str())
    }

    pub fn edge_between(&self, a: &str, b: &str) -> Option<&JoinEdge> {
        let key = unordered_key(a, b);
        self.edges.iter().find(|e| e.key() == key)
    }

    pub fn neighbors(&self, alias: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter_map(|e| e.other(alias))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self).len() <= 1
    }
}

/// Partition of aliases into maximal edge-connected sets. Components are
/// ordered by first appearance of their lexicographically smallest member in
/// the alias list.
pub fn connected_components(graph: &JoinGraph) -> Vec<BTreeSet<String>> {
    let mut remaining: BTreeSet<&str> =
        graph.aliases.iter().map(|a| a.alias.as_str()).collect();
    let mut adjacency: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for edge in &graph.edges {
        adjacency.entry(&edge.left).or_default().insert(&edge.right);
        adjacency.entry(&edge.right).or_default().insert(&edge.left);
    }
    let mut components: Vec<BTreeSet<String>> = Vec::new();
    // BTreeSet iteration gives the lexicographically smallest unassigned
    // member first, which fixes the component order deterministically.
    while let Some(&start) = remaining.iter().next() {
        let mut component = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if !remaining.remove(node) {
                continue;
            }
            component.insert(node.to_string());
            if let Some(next) = adjacency.get(node) {
                stack.extend(next.iter().copied());
            }
        }
        components.push(component);
    }
    components
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const KEYWORDS: &[&str] = &["select", "from", "where", "join", "on", "and", "as", "inner"];

/// One token of the restricted SQL subset, with its byte offset.
#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Symbol(char),
    // quoted string or numeric literal, kept verbatim
    Literal(String),
}

fn tokenize(sql: &str) -> Result<Vec<(usize, Tok)>, GraphError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c == '/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                i += 1;
            }
            if i + 1 >= bytes.len() {
                return Err(GraphError::parse(start, "unterminated comment"));
            }
            i += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((start, Tok::Word(sql[start..i].to_ascii_lowercase())));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'.')
            {
                i += 1;
            }
            out.push((start, Tok::Literal(sql[start..i].to_string())));
        } else if c == '\'' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] != b'\'' {
                i += 1;
            }
            if i >= bytes.len() {
                return Err(GraphError::parse(start, "unterminated string literal"));
            }
            i += 1;
            out.push((start, Tok::Literal(sql[start..i].to_string())));
        } else {
            // multi-char comparison operators collapse to one symbol token each
            if (c == '<' || c == '>' || c == '!') && bytes.get(i + 1) == Some(&b'=') {
                out.push((i, Tok::Symbol(c)));
                out.push((i + 1, Tok::Symbol('=')));
                i += 2;
            } else {
                out.push((i, Tok::Symbol(c)));
                i += 1;
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    sql: &'a str,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.sql.len())
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(w)) if w == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<(), GraphError> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(GraphError::parse(self.offset(), format!("expected `{word}`")))
        }
    }

    fn expect_identifier(&mut self) -> Result<String, GraphError> {
        let off = self.offset();
        match self.next() {
            Some(Tok::Word(w)) if is_identifier(&w) && !KEYWORDS.contains(&w.as_str()) => Ok(w),
            other => Err(GraphError::parse(off, format!("expected identifier, got {other:?}"))),
        }
    }
}

/// An `alias.column` reference or a literal, as found inside a conjunct.
#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Column { alias: String, column: String },
    Literal(String),
}

#[derive(Debug)]
struct Conjunct {
    text: String,
    aliases: Vec<String>,
    /// Set when the conjunct is exactly `a.col = b.col` with distinct aliases.
    equi_join: Option<(String, String)>,
    offset: usize,
}

fn parse_sql_inner(sql: &str) -> Result<JoinGraph, GraphError> {
    let toks = tokenize(sql)?;
    // set operations are rejected up front
    for (off, t) in &toks {
        if let Tok::Word(w) = t {
            if matches!(w.as_str(), "union" | "except" | "intersect") {
                return Err(GraphError::parse(*off, format!("set operation `{w}` unsupported")));
            }
        }
    }
    let mut p = Parser { toks, pos: 0, sql };
    p.expect_word("select")?;

    // capture the select list verbatim up to FROM
    let select_start = p.offset();
    let mut depth = 0usize;
    loop {
        match p.peek() {
            None => return Err(GraphError::parse(p.offset(), "missing FROM clause")),
            Some(Tok::Word(w)) if w == "from" && depth == 0 => break,
            Some(Tok::Symbol('(')) => {
                depth += 1;
                p.pos += 1;
            }
            Some(Tok::Symbol(')')) => {
                depth = depth.saturating_sub(1);
                p.pos += 1;
            }
            _ => p.pos += 1,
        }
    }
    let select_list = sql[select_start..p.offset()].trim().to_string();
    p.expect_word("from")?;

    let mut aliases: Vec<AliasRef> = Vec::new();
    let mut conjuncts: Vec<Conjunct> = Vec::new();

    let add_alias = |aliases: &mut Vec<AliasRef>, table: String, alias: String, off: usize| {
        if !is_identifier(&alias) {
            return Err(GraphError::parse(off, format!("invalid alias `{alias}`")));
        }
        if aliases.iter().any(|a| a.alias == alias) {
            return Err(GraphError::DuplicateAlias(alias));
        }
        aliases.push(AliasRef { alias, table });
        Ok(())
    };

    // FROM list: comma-separated items, each optionally followed by a chain of
    // [INNER] JOIN ... ON ... clauses, which normalize into plain conjuncts.
    loop {
        if matches!(p.peek(), Some(Tok::Symbol('('))) {
            return Err(GraphError::parse(p.offset(), "subqueries are unsupported"));
        }
        let off = p.offset();
        let table = p.expect_identifier()?;
        let alias = parse_optional_alias(&mut p)?.unwrap_or_else(|| table.clone());
        add_alias(&mut aliases, table, alias, off)?;

        loop {
            let joined = if p.eat_word("join") {
                true
            } else if p.eat_word("inner") {
                p.expect_word("join")?;
                true
            } else if matches!(p.peek(), Some(Tok::Word(w)) if matches!(w.as_str(), "left" | "right" | "full" | "outer" | "cross"))
            {
                return Err(GraphError::parse(
                    p.offset(),
                    "only inner joins are supported",
                ));
            } else {
                false
            };
            if !joined {
                break;
            }
            if matches!(p.peek(), Some(Tok::Symbol('('))) {
                return Err(GraphError::parse(p.offset(), "subqueries are unsupported"));
            }
            let off = p.offset();
            let table = p.expect_identifier()?;
            let alias = parse_optional_alias(&mut p)?.unwrap_or_else(|| table.clone());
            add_alias(&mut aliases, table, alias, off)?;
            p.expect_word("on")?;
            parse_condition(&mut p, &mut conjuncts)?;
        }

        if matches!(p.peek(), Some(Tok::Symbol(','))) {
            p.pos += 1;
            continue;
        }
        break;
    }

    if p.eat_word("where") {
        parse_condition(&mut p, &mut conjuncts)?;
    }
    if p.eat_word("group") || p.eat_word("order") || p.eat_word("limit") {
        // trailing clauses pass through untouched; graph extraction ignores them
        p.pos = p.toks.len();
    }
    if matches!(p.peek(), Some(Tok::Symbol(';'))) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(GraphError::parse(p.offset(), "trailing tokens after statement"));
    }

    // classify conjuncts and merge join edges per unordered pair
    let mut edges: BTreeMap<(String, String), JoinEdge> = BTreeMap::new();
    let mut locals = Vec::new();
    for c in conjuncts {
        for a in &c.aliases {
            if !aliases.iter().any(|ar| &ar.alias == a) {
                return Err(GraphError::UnknownAlias(a.clone()));
            }
        }
        match (&c.equi_join, c.aliases.len()) {
            (Some((l, r)), _) => {
                let key = unordered_key(l, r);
                match edges.get_mut(&key) {
                    Some(edge) => {
                        edge.predicate = format!("{} AND {}", edge.predicate, c.text);
                    }
                    None => {
                        edges.insert(
                            key.clone(),
                            JoinEdge {
                                left: l.clone(),
                                right: r.clone(),
                                predicate: c.text,
                                selectivity: None,
                            },
                        );
                    }
                }
            }
            (None, 0 | 1) => locals.push(c.text),
            (None, _) => {
                return Err(GraphError::parse(
                    c.offset,
                    "cross-alias predicates must be column equalities",
                ));
            }
        }
    }

    Ok(JoinGraph {
        aliases,
        edges: edges.into_values().collect(),
        local_predicates: locals,
        select_list: Some(select_list),
        source_sql: Some(sql.to_string()),
    })
}

fn parse_optional_alias(p: &mut Parser) -> Result<Option<String>, GraphError> {
    if p.eat_word("as") {
        return Ok(Some(p.expect_identifier()?));
    }
    match p.peek() {
        Some(Tok::Word(w)) if is_identifier(w) && !KEYWORDS.contains(&w.as_str()) => {
            let alias = w.clone();
            p.pos += 1;
            Ok(Some(alias))
        }
        _ => Ok(None),
    }
}

/// Parses a conjunction of comparison predicates, splitting on top-level AND.
/// Top-level OR is rejected.
fn parse_condition(p: &mut Parser, out: &mut Vec<Conjunct>) -> Result<(), GraphError> {
    loop {
        out.push(parse_conjunct(p)?);
        if p.eat_word("and") {
            continue;
        }
        if matches!(p.peek(), Some(Tok::Word(w)) if w == "or") {
            return Err(GraphError::parse(
                p.offset(),
                "OR at top level of the join condition is unsupported",
            ));
        }
        return Ok(());
    }
}

fn parse_conjunct(p: &mut Parser) -> Result<Conjunct, GraphError> {
    let offset = p.offset();
    if matches!(p.peek(), Some(Tok::Symbol('('))) {
        // parenthesized groups may hide OR; keep the subset strict
        return Err(GraphError::parse(offset, "parenthesized predicates are unsupported"));
    }
    let left = parse_operand(p)?;
    let op_off = p.offset();
    let op = match p.next() {
        Some(Tok::Symbol(c)) if matches!(c, '=' | '<' | '>' | '!') => {
            let mut s = c.to_string();
            if c != '=' && matches!(p.peek(), Some(Tok::Symbol('='))) {
                p.pos += 1;
                s.push('=');
            }
            s
        }
        Some(Tok::Word(w)) if w == "like" || w == "in" || w == "between" || w == "is" => {
            return Err(GraphError::parse(op_off, format!("operator `{w}` unsupported")));
        }
        other => {
            return Err(GraphError::parse(op_off, format!("expected comparison operator, got {other:?}")));
        }
    };
    let right = parse_operand(p)?;

    let mut aliases = Vec::new();
    for side in [&left, &right] {
        if let Operand::Column { alias, .. } = side {
            if !aliases.contains(alias) {
                aliases.push(alias.clone());
            }
        }
    }
    let equi_join = match (&left, &right, op.as_str()) {
        (
            Operand::Column { alias: la, column: lc },
            Operand::Column { alias: ra, column: rc },
            "=",
        ) if la != ra => {
            let _ = (lc, rc);
            Some((la.clone(), ra.clone()))
        }
        _ => None,
    };
    let text = format!("{} {} {}", operand_text(&left), op, operand_text(&right));
    Ok(Conjunct { text, aliases, equi_join, offset })
}

fn parse_operand(p: &mut Parser) -> Result<Operand, GraphError> {
    let off = p.offset();
    match p.next() {
        Some(Tok::Word(w)) if is_identifier(&w) && !KEYWORDS.contains(&w.as_str()) => {
            if matches!(p.peek(), Some(Tok::Symbol('.'))) {
                p.pos += 1;
                let column = p.expect_identifier()?;
                Ok(Operand::Column { alias: w, column })
            } else {
                // bare identifier without alias qualification: treat as literal-ish
                Ok(Operand::Literal(w))
            }
        }
        Some(Tok::Literal(l)) => Ok(Operand::Literal(l)),
        Some(Tok::Symbol('(')) => {
            Err(GraphError::parse(off, "subqueries are unsupported"))
        }
        other => Err(GraphError::parse(off, format!("expected operand, got {other:?}"))),
    }
}

fn operand_text(op: &Operand) -> String {
    match op {
        Operand::Column { alias, column } => format!("{alias}.{column}"),
        Operand::Literal(l) => l.clone(),
    }
}

/// Parse a single SELECT statement of the supported subset into a JoinGraph.
/// Identifiers are compared case-insensitively and stored lower-cased.
pub fn parse_sql(query_text: &str) -> Result<JoinGraph, GraphError> {
    parse_sql_inner(query_text)
}

// ---------------------------------------------------------------------------
// Workload files

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub name: String,
    pub tables: Vec<WorkloadTable>,
    pub edges: Vec<WorkloadEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkloadTable {
    pub alias: String,
    pub table: String,
    pub cardinality: u64,
    #[serde(default = "default_selectivity")]
    pub local_selectivity: f64,
}

fn default_selectivity() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkloadEdge {
    pub left: String,
    pub right: String,
    pub selectivity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
}

/// Load a workload: either a declarative `.json` file (graph + catalog) or a
/// bare `.sql` file (graph only; EXPLAIN-oracle mode).
pub fn load_workload(path: impl AsRef<Path>) -> Result<(JoinGraph, Option<Catalog>), GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("sql") {
        let graph = parse_sql(&text)?;
        return Ok((graph, None));
    }
    let file: WorkloadFile = serde_json::from_str(&text)
        .map_err(|e| GraphError::Schema(format!("{}: {e}", path.display())))?;
    workload_to_graph(&file)
}

pub fn workload_to_graph(file: &WorkloadFile) -> Result<(JoinGraph, Option<Catalog>), GraphError> {
    let mut graph = JoinGraph::default();
    let mut catalog = Catalog::default();
    for t in &file.tables {
        let alias = t.alias.to_ascii_lowercase();
        if !is_identifier(&alias) {
            return Err(GraphError::Schema(format!("invalid alias `{}`", t.alias)));
        }
        if graph.has_alias(&alias) {
            return Err(GraphError::Schema(format!("duplicate alias `{alias}`")));
        }
        if t.cardinality < 1 {
            return Err(GraphError::Schema(format!(
                "cardinality for `{alias}` must be >= 1"
            )));
        }
        if !(t.local_selectivity > 0.0 && t.local_selectivity <= 1.0) {
            return Err(GraphError::Schema(format!(
                "local_selectivity for `{alias}` must be in (0, 1]"
            )));
        }
        graph.aliases.push(AliasRef { alias: alias.clone(), table: t.table.to_ascii_lowercase() });
        catalog.base_cardinality.insert(alias.clone(), t.cardinality);
        catalog.local_selectivity.insert(alias, t.local_selectivity);
    }
    let mut seen = BTreeSet::new();
    for e in &file.edges {
        let left = e.left.to_ascii_lowercase();
        let right = e.right.to_ascii_lowercase();
        for a in [&left, &right] {
            if !graph.has_alias(a) {
                return Err(GraphError::Schema(format!(
                    "edge references undeclared alias `{a}`"
                )));
            }
        }
        if left == right {
            return Err(GraphError::Schema(format!("self-loop edge on `{left}`")));
        }
        if !(e.selectivity > 0.0 && e.selectivity <= 1.0) {
            return Err(GraphError::Schema(format!(
                "selectivity for edge ({left}, {right}) must be in (0, 1]"
            )));
        }
        let key = unordered_key(&left, &right);
        if !seen.insert(key.clone()) {
            return Err(GraphError::Schema(format!(
                "duplicate edge ({}, {})",
                key.0, key.1
            )));
        }
        let predicate = e
            .predicate
            .clone()
            .unwrap_or_else(|| format!("{left}.join_key = {right}.join_key"));
        catalog.edge_selectivity.insert(key, e.selectivity);
        graph.edges.push(JoinEdge { left, right, predicate, selectivity: Some(e.selectivity) });
    }
    graph.source_sql = file.sql.clone();
    if let Some(sql) = &file.sql {
        let parsed = parse_sql(sql)?;
        graph.local_predicates = parsed.local_predicates;
        graph.select_list = parsed.select_list;
    }
    Ok((graph, Some(catalog)))
}
