//! Two-stage prefix-guided search: stage 1 seeds one short MCTS run per join
//! edge to pick the best starting prefix, stage 2 spends the main budget
//! refining that prefix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostCache, CostError, CostOracle, Evaluator, LeadingExpression};
use crate::join_graph::JoinGraph;
use crate::rng::{combine, substream};
use crate::search::{Search, SearchError, SearchParams, TraceRecord};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("graph has fewer than 2 aliases")]
    DegenerateGraph,
    #[error("graph has no join edges and cross joins are disallowed")]
    NoEdges,
    #[error("trace was not enabled for this run")]
    TraceMissing,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Stage-1 outcome: the best cost found from each edge seed and the winner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOneResult {
    /// One entry per edge, in the graph's deterministic edge order:
    /// (left, right, best cost of the seed run).
    pub per_edge: Vec<(String, String, f64)>,
    /// Winning edge, absent only in the no-edge cross-join fallback.
    pub winner: Option<(String, String)>,
    /// Oriented prefix the winner seeds stage 2 with.
    pub winner_prefix: Vec<String>,
    pub winner_cost: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BudgetReport {
    pub stage1_calls: u64,
    pub stage2_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug)]
pub struct OptimizeOutcome {
    pub best: LeadingExpression,
    pub best_cost: f64,
    pub stage_one: StageOneResult,
    pub queue: Vec<(LeadingExpression, f64)>,
    budget: BudgetReport,
    pub trace: Option<Vec<TraceRecord>>,
}

impl OptimizeOutcome {
    /// Internal accounting, available regardless of tracing.
    pub(crate) fn raw_budget(&self) -> BudgetReport {
        self.budget
    }
}

/// Oracle-call accounting per stage; requires the run to have been traced.
pub fn budget_report(outcome: &OptimizeOutcome) -> Result<BudgetReport, OptimizeError> {
    if outcome.trace.is_none() {
        return Err(OptimizeError::TraceMissing);
    }
    Ok(outcome.budget)
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeOptions {
    pub t_pair: u64,
    pub t_main: u64,
    pub warm_start: Option<LeadingExpression>,
    pub trace: bool,
}

struct SeedOutcome {
    prefix: Vec<String>,
    best: Option<(LeadingExpression, f64)>,
    calls: u64,
    hits: u64,
    trace: Option<Vec<TraceRecord>>,
}

/// One stage-1 seed run from the given oriented prefix.
fn run_seed(
    graph: &JoinGraph,
    oracle: &dyn CostOracle,
    cache: Option<&CostCache>,
    params: SearchParams,
    prefix: Vec<String>,
    iterations: u64,
    rng_tag: u64,
    trace: bool,
) -> Result<SeedOutcome, SearchError> {
    let evaluator = Evaluator::new(oracle, cache);
    let mut search = Search::new(
        graph,
        &evaluator,
        params,
        prefix.clone(),
        substream(params.seed, rng_tag),
        trace,
    );
    search.run(iterations)?;
    let best = search.best_queue().best().cloned();
    let trace = search.take_trace();
    Ok(SeedOutcome {
        prefix,
        best,
        calls: evaluator.oracle_calls(),
        hits: evaluator.cache_hits(),
        trace,
    })
}

/// Picks the cheaper orientation of an edge prefix when prefix costing is
/// available; otherwise splits the seed budget between the two orientations.
fn seed_edge(
    graph: &JoinGraph,
    oracle: &dyn CostOracle,
    cache: Option<&CostCache>,
    params: SearchParams,
    left: &str,
    right: &str,
    t_pair: u64,
    edge_index: u64,
    trace: bool,
) -> Result<SeedOutcome, SearchError> {
    let fwd = vec![left.to_string(), right.to_string()];
    let rev = vec![right.to_string(), left.to_string()];
    let rng_tag = 1_000 + edge_index;

    let orientation = oracle
        .prefix_cost(&LeadingExpression::new(fwd.clone()))
        .and_then(|r| r.ok())
        .zip(
            oracle
                .prefix_cost(&LeadingExpression::new(rev.clone()))
                .and_then(|r| r.ok()),
        );
    match orientation {
        Some((cf, cr)) => {
            // ties keep the stored (left, right) orientation
            let prefix = if cr.cost < cf.cost { rev } else { fwd };
            run_seed(graph, oracle, cache, params, prefix, t_pair, rng_tag, trace)
        }
        None => {
            // EXPLAIN mode: orientation decided by two half-budget runs
            let half = t_pair / 2;
            let a = run_seed(graph, oracle, cache, params, fwd, half, rng_tag, trace)?;
            let b = run_seed(
                graph,
                oracle,
                cache,
                params,
                rev,
                t_pair - half,
                combine(rng_tag, 1),
                trace,
            )?;
            let (mut winner, loser) = match (&a.best, &b.best) {
                (Some((_, ca)), Some((_, cb))) if *cb < *ca => (b, a),
                (None, Some(_)) => (b, a),
                _ => (a, b),
            };
            winner.calls += loser.calls;
            winner.hits += loser.hits;
            if let (Some(wt), Some(lt)) = (&mut winner.trace, loser.trace) {
                wt.extend(lt);
            }
            if let Some((le, lc)) = loser.best {
                match &winner.best {
                    Some((_, wc)) if lc < *wc => winner.best = Some((le, lc)),
                    None => winner.best = Some((le, lc)),
                    _ => {}
                }
            }
            Ok(winner)
        }
    }
}

/// Two-stage optimization over a join graph. Stage-1 edge runs execute
/// concurrently; results are deterministic for a fixed seed regardless of
/// worker count.
pub fn optimize(
    graph: &JoinGraph,
    oracle: &dyn CostOracle,
    cache: Option<&CostCache>,
    params: SearchParams,
    options: &OptimizeOptions,
) -> Result<OptimizeOutcome, OptimizeError> {
    if graph.aliases.len() < 2 {
        return Err(OptimizeError::DegenerateGraph);
    }
    if graph.edges.is_empty() {
        if !params.allow_cross_join {
            return Err(OptimizeError::NoEdges);
        }
        return optimize_single_stage(graph, oracle, cache, params, options);
    }

    // stage 1: one seed run per edge, deterministic edge order
    let seeds: Vec<Result<SeedOutcome, SearchError>> = graph
        .edges
        .par_iter()
        .enumerate()
        .map(|(i, edge)| {
            seed_edge(
                graph,
                oracle,
                cache,
                params,
                &edge.left,
                &edge.right,
                options.t_pair,
                i as u64,
                options.trace,
            )
        })
        .collect();

    let mut per_edge = Vec::with_capacity(graph.edges.len());
    let mut stage1_calls = 0u64;
    let mut cache_hits = 0u64;
    let mut trace: Option<Vec<TraceRecord>> = options.trace.then(Vec::new);
    let mut winner: Option<(usize, LeadingExpression, f64, Vec<String>)> = None;
    for (i, seed) in seeds.into_iter().enumerate() {
        let seed = seed?;
        stage1_calls += seed.calls;
        cache_hits += seed.hits;
        if let (Some(t), Some(st)) = (&mut trace, seed.trace) {
            t.extend(st);
        }
        let edge = &graph.edges[i];
        let (expr, cost) = seed
            .best
            .ok_or(SearchError::NoLegalAction)?;
        per_edge.push((edge.left.clone(), edge.right.clone(), cost));
        // strict < keeps the earlier edge on ties
        if winner.as_ref().map(|w| cost < w.2).unwrap_or(true) {
            winner = Some((i, expr, cost, seed.prefix));
        }
    }
    let (widx, winner_expr, winner_cost, winner_prefix) = winner.expect("edges nonempty");
    let stage_one = StageOneResult {
        per_edge,
        winner: Some((graph.edges[widx].left.clone(), graph.edges[widx].right.clone())),
        winner_prefix: winner_prefix.clone(),
        winner_cost,
    };

    // stage 2: fresh search from the winning prefix
    let evaluator = Evaluator::new(oracle, cache);
    let mut search = Search::new(
        graph,
        &evaluator,
        params,
        winner_prefix.clone(),
        substream(params.seed, 2),
        options.trace,
    );
    // stage-1 knowledge enters stage 2 only through the prefix and the
    // injected winner expression
    search.inject(winner_expr)?;
    let mut warm_cost: Option<(LeadingExpression, f64)> = None;
    if let Some(w) = &options.warm_start {
        if w.order.starts_with(&winner_prefix) {
            search.inject(w.clone())?;
        } else {
            // inconsistent with the winning prefix: still evaluated so the
            // final answer never regresses below the warm start
            let reward = evaluator.evaluate(w)?;
            warm_cost = Some((w.clone(), reward.cost));
        }
    }
    search.run(options.t_main)?;

    let queue: Vec<(LeadingExpression, f64)> =
        search.best_queue().entries().to_vec();
    if let (Some(t), Some(st)) = (&mut trace, search.take_trace()) {
        t.extend(st);
    }
    let (mut best, mut best_cost) = queue.first().cloned().expect("stage 2 evaluated");
    if let Some((we, wc)) = warm_cost {
        if wc < best_cost {
            best = we;
            best_cost = wc;
        }
    }
    Ok(OptimizeOutcome {
        best,
        best_cost,
        stage_one,
        queue,
        budget: BudgetReport {
            stage1_calls,
            stage2_calls: evaluator.oracle_calls(),
            cache_hits: cache_hits + evaluator.cache_hits(),
        },
        trace,
    })
}

/// Fallback for edgeless graphs with cross joins allowed: a single search
/// from the empty prefix with the main budget.
fn optimize_single_stage(
    graph: &JoinGraph,
    oracle: &dyn CostOracle,
    cache: Option<&CostCache>,
    params: SearchParams,
    options: &OptimizeOptions,
) -> Result<OptimizeOutcome, OptimizeError> {
    let evaluator = Evaluator::new(oracle, cache);
    let mut search = Search::new(
        graph,
        &evaluator,
        params,
        Vec::new(),
        substream(params.seed, 2),
        options.trace,
    );
    if let Some(w) = &options.warm_start {
        search.inject(w.clone())?;
    }
    search.run(options.t_main)?;
    let queue: Vec<(LeadingExpression, f64)> = search.best_queue().entries().to_vec();
    let (best, best_cost) = queue.first().cloned().ok_or(OptimizeError::NoEdges)?;
    let trace = search.take_trace();
    Ok(OptimizeOutcome {
        best,
        best_cost,
        stage_one: StageOneResult {
            per_edge: Vec::new(),
            winner: None,
            winner_prefix: Vec::new(),
            winner_cost: best_cost,
        },
        queue,
        budget: BudgetReport {
            stage1_calls: 0,
            stage2_calls: evaluator.oracle_calls(),
            cache_hits: evaluator.cache_hits(),
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::fixtures::{chain3, expr};
    use crate::cost::SyntheticOracle;
    use crate::join_graph::AliasRef;
    use crate::search::is_valid_order;

    fn opts(t_pair: u64, t_main: u64) -> OptimizeOptions {
        OptimizeOptions { t_pair, t_main, warm_start: None, trace: true }
    }

    #[test]
    fn chain_fixture_reaches_optimum() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        for seed in [0u64, 1, 42] {
            let params = SearchParams { seed, ..Default::default() };
            let out = optimize(&g, &oracle, None, params, &opts(50, 500)).unwrap();
            assert_eq!(out.best_cost, 1100.0, "seed {seed}");
            assert!(is_valid_order(&g, &out.best.order, false));
            assert_eq!(out.stage_one.per_edge.len(), 2);
        }
    }

    #[test]
    fn single_edge_graph() {
        let (mut g, mut c) = chain3();
        g.aliases.retain(|a| a.alias != "c");
        g.edges.retain(|e| e.key() == ("a".to_string(), "b".to_string()));
        c.base_cardinality.remove("c");
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let out =
            optimize(&g, &oracle, None, SearchParams::default(), &opts(10, 10)).unwrap();
        assert_eq!(out.best.order.len(), 2);
        assert_eq!(out.stage_one.per_edge.len(), 1);
        // both orientations cost the same under C_out for n = 2
        assert_eq!(out.best_cost, 1000.0 * 100.0 * 0.01);
    }

    #[test]
    fn degenerate_graphs_error() {
        let (mut g, c) = chain3();
        g.aliases.truncate(1);
        g.edges.clear();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        assert!(matches!(
            optimize(&g, &oracle, None, SearchParams::default(), &opts(1, 1)),
            Err(OptimizeError::DegenerateGraph)
        ));

        let (mut g2, c2) = chain3();
        g2.edges.clear();
        let oracle2 = SyntheticOracle { graph: &g2, catalog: &c2 };
        assert!(matches!(
            optimize(&g2, &oracle2, None, SearchParams::default(), &opts(1, 1)),
            Err(OptimizeError::NoEdges)
        ));
    }

    #[test]
    fn edgeless_cross_join_fallback() {
        let (mut g, c) = chain3();
        g.edges.clear();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let params = SearchParams { allow_cross_join: true, ..Default::default() };
        let out = optimize(&g, &oracle, None, params, &opts(10, 200)).unwrap();
        assert!(out.stage_one.winner.is_none());
        assert!(is_valid_order(&g, &out.best.order, true));
        // cheapest cross product starts with the two smallest relations
        assert_eq!(out.best_cost, 10.0 * 100.0 + 10.0 * 100.0 * 1000.0);
    }

    #[test]
    fn stage1_tie_prefers_earlier_edge() {
        // symmetric graph: both edges discover the same optimal cost
        let mut g = crate::join_graph::JoinGraph::default();
        for (a, t) in [("a", "t1"), ("b", "t2"), ("c", "t3")] {
            g.aliases.push(AliasRef { alias: a.into(), table: t.into() });
        }
        for (l, r) in [("a", "b"), ("b", "c")] {
            g.edges.push(crate::join_graph::JoinEdge {
                left: l.into(),
                right: r.into(),
                predicate: format!("{l}.k = {r}.k"),
                selectivity: Some(0.5),
            });
        }
        let mut c = crate::cost::Catalog::default();
        for a in ["a", "b", "c"] {
            c.base_cardinality.insert(a.into(), 10);
        }
        c.edge_selectivity.insert(("a".into(), "b".into()), 0.5);
        c.edge_selectivity.insert(("b".into(), "c".into()), 0.5);
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let out =
            optimize(&g, &oracle, None, SearchParams::default(), &opts(50, 50)).unwrap();
        let costs: Vec<f64> = out.stage_one.per_edge.iter().map(|e| e.2).collect();
        assert_eq!(costs[0], costs[1]);
        assert_eq!(out.stage_one.winner, Some(("a".into(), "b".into())));
    }

    #[test]
    fn budget_accounting_without_evolution() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let cache = CostCache::new();
        let params = SearchParams { mutation_rate: 0.0, gp_rate: 0.0, ..Default::default() };
        let out = optimize(&g, &oracle, Some(&cache), params, &opts(50, 100)).unwrap();
        let budget = budget_report(&out).unwrap();
        // one evaluation per iteration, so stage-1 misses are bounded by |E|·T_pair
        assert!(budget.stage1_calls <= 2 * 50);

        // fully cached rerun: zero oracle calls
        let out2 = optimize(&g, &oracle, Some(&cache), params, &opts(50, 100)).unwrap();
        let budget2 = budget_report(&out2).unwrap();
        assert_eq!(budget2.stage1_calls + budget2.stage2_calls, 0);
        assert_eq!(out2.best_cost, out.best_cost);
    }

    #[test]
    fn budget_report_requires_trace() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let out = optimize(
            &g,
            &oracle,
            None,
            SearchParams::default(),
            &OptimizeOptions { t_pair: 5, t_main: 5, warm_start: None, trace: false },
        )
        .unwrap();
        assert!(matches!(budget_report(&out), Err(OptimizeError::TraceMissing)));
    }

    #[test]
    fn warm_start_dominance() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        // a deliberately bad warm start must not hurt; a perfect one must win
        for warm in [expr(&["a", "b", "c"]), expr(&["b", "c", "a"])] {
            let warm_cost =
                crate::cost::cost_synthetic(&g, &c, &warm).unwrap().cost;
            let out = optimize(
                &g,
                &oracle,
                None,
                SearchParams::default(),
                &OptimizeOptions {
                    t_pair: 5,
                    t_main: 20,
                    warm_start: Some(warm),
                    trace: false,
                },
            )
            .unwrap();
            assert!(out.best_cost <= warm_cost);
        }
    }

    #[test]
    fn stage2_never_worse_than_stage1_winner() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        for seed in 0..5 {
            let params = SearchParams { seed, ..Default::default() };
            let out = optimize(&g, &oracle, None, params, &opts(10, 10)).unwrap();
            assert!(out.best_cost <= out.stage_one.winner_cost);
        }
    }

    #[test]
    fn monotone_budget() {
        let (g, c) = chain3();
        let oracle = SyntheticOracle { graph: &g, catalog: &c };
        let params = SearchParams { seed: 9, ..Default::default() };
        let mut prev = f64::INFINITY;
        for t_main in [5, 20, 80, 320] {
            let out = optimize(&g, &oracle, None, params, &opts(10, t_main)).unwrap();
            assert!(out.best_cost <= prev);
            prev = out.best_cost;
        }
    }
}
