//! Cost-evaluation contract used as the search reward: the synthetic C_out
//! catalog model, reward normalization, and a shared evaluation cache.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::join_graph::{unordered_key, JoinGraph};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("invalid expression: {0}")]
    InvalidExpression(String),
    #[error("missing catalog entry for {0}")]
    MissingCatalogEntry(String),
    #[error("cost oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// An ordered sequence of aliases denoting a left-deep join order. Length n
/// (all aliases of the graph) makes it complete; shorter ones are prefixes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeadingExpression {
    pub order: Vec<String>,
}

impl LeadingExpression {
    pub fn new(order: Vec<String>) -> Self {
        LeadingExpression { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_complete(&self, graph: &JoinGraph) -> bool {
        self.order.len() == graph.aliases.len()
    }

    /// Canonical cache key: lower-cased aliases joined by a single space.
    /// Bit-exact match with the linearized hint body.
    pub fn key(&self) -> String {
        self.order.join(" ")
    }

    pub fn contains(&self, alias: &str) -> bool {
        self.order.iter().any(|a| a == alias)
    }

    /// Checks duplicates and alias membership; complete additionally requires
    /// full length.
    pub fn validate(&self, graph: &JoinGraph, complete: bool) -> Result<(), CostError> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.order {
            if !graph.has_alias(a) {
                return Err(CostError::InvalidExpression(format!("unknown alias `{a}`")));
            }
            if !seen.insert(a.as_str()) {
                return Err(CostError::InvalidExpression(format!("duplicate alias `{a}`")));
            }
        }
        if complete && self.order.len() != graph.aliases.len() {
            return Err(CostError::InvalidExpression(format!(
                "order of length {} is not complete for {} aliases",
                self.order.len(),
                graph.aliases.len()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for LeadingExpression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({})", self.key())
    }
}

/// Per-alias base cardinalities and local selectivities plus per-edge join
/// selectivities; drives the synthetic cost oracle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub base_cardinality: BTreeMap<String, u64>,
    pub local_selectivity: BTreeMap<String, f64>,
    pub edge_selectivity: BTreeMap<(String, String), f64>,
}

impl Catalog {
    pub fn cardinality(&self, alias: &str) -> Result<f64, CostError> {
        self.base_cardinality
            .get(alias)
            .map(|&c| c as f64)
            .ok_or_else(|| CostError::MissingCatalogEntry(format!("cardinality of `{alias}`")))
    }

    /// Missing local selectivity defaults to 1.0.
    pub fn local(&self, alias: &str) -> f64 {
        self.local_selectivity.get(alias).copied().unwrap_or(1.0)
    }

    pub fn edge(&self, a: &str, b: &str) -> Result<f64, CostError> {
        self.edge_selectivity
            .get(&unordered_key(a, b))
            .copied()
            .ok_or_else(|| CostError::MissingCatalogEntry(format!("selectivity of ({a}, {b})")))
    }

    /// Effective rows of a single alias after local filtering.
    pub fn filtered_cardinality(&self, alias: &str) -> Result<f64, CostError> {
        Ok(self.cardinality(alias)? * self.local(alias))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSource {
    Synthetic,
    Explain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanCost {
    pub cost: f64,
    pub source: CostSource,
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub raw: f64,
    pub normalized: f64,
    pub cost: f64,
    pub cached: bool,
}

/// C_out: the sum of intermediate result cardinalities over the left-deep
/// order. Step k joins alias a_k onto the prefix; its cardinality is the
/// previous cardinality times the alias's filtered rows times the product of
/// selectivities of every edge from a_k back into the prefix. A step with no
/// connecting edge is a cross product (empty selectivity product).
fn cost_recurrence(
    graph: &JoinGraph,
    catalog: &Catalog,
    order: &[String],
) -> Result<f64, CostError> {
    let mut card = catalog.filtered_cardinality(&order[0])?;
    let mut total = 0.0;
    for k in 1..order.len() {
        let alias = &order[k];
        let mut step = card * catalog.filtered_cardinality(alias)?;
        // selectivity factors multiply in the graph's alias declaration
        // order, not placement order, so every evaluation of the same
        // partial plan set rounds identically
        for a in &graph.aliases {
            let prev = &a.alias;
            if order[..k].iter().any(|p| p == prev)
                && graph.edge_between(alias, prev).is_some()
            {
                step *= catalog.edge(alias, prev)?;
            }
        }
        card = step;
        total += card;
    }
    Ok(total)
}

pub fn cost_synthetic(
    graph: &JoinGraph,
    catalog: &Catalog,
    expr: &LeadingExpression,
) -> Result<PlanCost, CostError> {
    expr.validate(graph, true)?;
    let cost = cost_recurrence(graph, catalog, &expr.order)?;
    Ok(PlanCost { cost, source: CostSource::Synthetic, cached: false })
}

/// Same recurrence truncated at the prefix length; requires length >= 2.
pub fn cost_prefix(
    graph: &JoinGraph,
    catalog: &Catalog,
    expr: &LeadingExpression,
) -> Result<PlanCost, CostError> {
    if expr.order.len() < 2 {
        return Err(CostError::InvalidExpression(
            "prefix cost requires length >= 2".into(),
        ));
    }
    expr.validate(graph, false)?;
    let cost = cost_recurrence(graph, catalog, &expr.order)?;
    Ok(PlanCost { cost, source: CostSource::Synthetic, cached: false })
}

/// The cost-evaluation contract the search depends on. Implementations must
/// be deterministic per expression within a session.
pub trait CostOracle: Sync {
    fn cost(&self, expr: &LeadingExpression) -> Result<PlanCost, CostError>;

    /// Incremental prefix costing for rollout guidance; None when per-step
    /// costing is unavailable (EXPLAIN mode).
    fn prefix_cost(&self, expr: &LeadingExpression) -> Option<Result<PlanCost, CostError>>;

    fn source(&self) -> CostSource;
}

pub struct SyntheticOracle<'a> {
    pub graph: &'a JoinGraph,
    pub catalog: &'a Catalog,
}

impl CostOracle for SyntheticOracle<'_> {
    fn cost(&self, expr: &LeadingExpression) -> Result<PlanCost, CostError> {
        cost_synthetic(self.graph, self.catalog, expr)
    }

    fn prefix_cost(&self, expr: &LeadingExpression) -> Option<Result<PlanCost, CostError>> {
        Some(cost_prefix(self.graph, self.catalog, expr))
    }

    fn source(&self) -> CostSource {
        CostSource::Synthetic
    }
}

/// Shared evaluation cache, keyed by the canonical order string. Safe for
/// concurrent evaluate calls across searches.
#[derive(Default)]
pub struct CostCache {
    map: Mutex<BTreeMap<String, f64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CostCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<(), CostError> {
        let map = self.map.lock().unwrap();
        let json = serde_json::to_string_pretty(&*map).expect("cache serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path)?;
        let map: BTreeMap<String, f64> = serde_json::from_str(&text)
            .map_err(|e| CostError::OracleUnavailable(format!("bad cache file: {e}")))?;
        Ok(CostCache { map: Mutex::new(map), hits: AtomicU64::new(0), misses: AtomicU64::new(0) })
    }
}

/// Per-search evaluation front end: cache lookup, oracle dispatch, and reward
/// normalization over the running cost range. Each search owns its own
/// normalization state; only the cache is shared.
pub struct Evaluator<'a> {
    oracle: &'a dyn CostOracle,
    cache: Option<&'a CostCache>,
    // (min, max) observed costs; the pair updates atomically with the lookup
    range: Mutex<Option<(f64, f64)>>,
    oracle_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: &'a dyn CostOracle, cache: Option<&'a CostCache>) -> Self {
        Evaluator {
            oracle,
            cache,
            range: Mutex::new(None),
            oracle_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn oracle(&self) -> &dyn CostOracle {
        self.oracle
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Cache-first evaluation returning both raw and normalized reward.
    /// A failed external evaluation surfaces as OracleUnavailable and leaves
    /// the normalization state untouched.
    pub fn evaluate(&self, expr: &LeadingExpression) -> Result<Reward, CostError> {
        let key = expr.key();
        let (cost, cached) = match self.cache {
            Some(cache) => {
                let mut map = cache.map.lock().unwrap();
                if let Some(&cost) = map.get(&key) {
                    cache.hits.fetch_add(1, Ordering::Relaxed);
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    (cost, true)
                } else {
                    let cost = self.oracle.cost(expr)?.cost;
                    cache.misses.fetch_add(1, Ordering::Relaxed);
                    self.oracle_calls.fetch_add(1, Ordering::Relaxed);
                    map.insert(key, cost);
                    (cost, false)
                }
            }
            None => {
                let cost = self.oracle.cost(expr)?.cost;
                self.oracle_calls.fetch_add(1, Ordering::Relaxed);
                (cost, false)
            }
        };

        let mut range = self.range.lock().unwrap();
        let (min, max) = match *range {
            None => (cost, cost),
            Some((lo, hi)) => (lo.min(cost), hi.max(cost)),
        };
        *range = Some((min, max));
        let normalized = if max == min { 0.5 } else { (max - cost) / (max - min) };
        Ok(Reward { raw: -cost, normalized, cost, cached })
    }

    /// Incremental cost of a prefix for rollout guidance; None in EXPLAIN
    /// mode. Prefix costs bypass the cache and normalization.
    pub fn prefix_cost(&self, expr: &LeadingExpression) -> Option<Result<f64, CostError>> {
        self.oracle.prefix_cost(expr).map(|r| r.map(|p| p.cost))
    }
}

#[cfg(test)]
pub mod fixtures {
    use super::*;
    use crate::join_graph::{AliasRef, JoinEdge};

    /// Chain A-B-C with |A|=1000, |B|=100, |C|=10, unit local selectivities,
    /// sel(A,B)=0.01, sel(B,C)=0.1.
    pub fn chain3() -> (JoinGraph, Catalog) {
        let mut graph = JoinGraph::default();
        for (alias, table) in [("a", "t1"), ("b", "t2"), ("c", "t3")] {
            graph.aliases.push(AliasRef { alias: alias.into(), table: table.into() });
        }
        graph.edges.push(JoinEdge {
            left: "a".into(),
            right: "b".into(),
            predicate: "a.x = b.y".into(),
            selectivity: Some(0.01),
        });
        graph.edges.push(JoinEdge {
            left: "b".into(),
            right: "c".into(),
            predicate: "b.z = c.w".into(),
            selectivity: Some(0.1),
        });
        graph.source_sql = Some(
            "SELECT * FROM t1 a, t2 b, t3 c WHERE a.x = b.y AND b.z = c.w".into(),
        );
        graph.select_list = Some("*".into());

        let mut catalog = Catalog::default();
        for (alias, card) in [("a", 1000u64), ("b", 100), ("c", 10)] {
            catalog.base_cardinality.insert(alias.into(), card);
            catalog.local_selectivity.insert(alias.into(), 1.0);
        }
        catalog.edge_selectivity.insert(("a".into(), "b".into()), 0.01);
        catalog.edge_selectivity.insert(("b".into(), "c".into()), 0.1);
        (graph, catalog)
    }

    pub fn expr(order: &[&str]) -> LeadingExpression {
        LeadingExpression::new(order.iter().map(|s| s.to_string()).collect())
    }
}
