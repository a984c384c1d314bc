//! Property-based invariants over the search operators, hint formats, and
//! the SQL round trip.

use proptest::prelude::*;

use joinsearch::cost::LeadingExpression;
use joinsearch::hint::{emit_hint, parse_hint, rewrite_sql, HintFormat, RewriteMode};
use joinsearch::join_graph::{parse_sql, workload_to_graph, JoinGraph};
use joinsearch::search::{is_valid_order, legal_extensions};
use joinsearch::workload_gen::{generate_file, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn topology_strategy() -> impl Strategy<Value = Topology> {
    prop_oneof![
        Just(Topology::Chain),
        Just(Topology::Star),
        Just(Topology::Cycle),
        Just(Topology::Clique),
    ]
}

fn graph_for(topology: Topology, n: usize, seed: u64) -> JoinGraph {
    let file = generate_file(topology, n, seed).unwrap();
    workload_to_graph(&file).unwrap().0
}

fn valid_order(graph: &JoinGraph, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::new();
    while order.len() < graph.aliases.len() {
        let legal = legal_extensions(graph, &order, false);
        order.push(legal[rng.gen_range(0..legal.len())].clone());
    }
    order
}

proptest! {
    #[test]
    fn random_valid_orders_are_valid(
        topology in topology_strategy(),
        n in 3usize..10,
        seed in any::<u64>(),
    ) {
        let graph = graph_for(topology, n, seed);
        let order = valid_order(&graph, seed);
        prop_assert!(is_valid_order(&graph, &order, false));
    }

    #[test]
    fn hint_round_trip_identity(
        topology in topology_strategy(),
        n in 2usize..12,
        seed in any::<u64>(),
    ) {
        let graph = graph_for(topology, n, seed);
        let expr = LeadingExpression::new(valid_order(&graph, seed.wrapping_add(1)));
        for format in [HintFormat::Linear, HintFormat::Bracketed] {
            let hint = emit_hint(&expr, format).unwrap();
            prop_assert_eq!(parse_hint(&hint).unwrap(), expr.clone());
        }
    }

    #[test]
    fn linear_hint_body_is_cache_key(
        topology in topology_strategy(),
        n in 2usize..12,
        seed in any::<u64>(),
    ) {
        let graph = graph_for(topology, n, seed);
        let expr = LeadingExpression::new(valid_order(&graph, seed));
        let hint = emit_hint(&expr, HintFormat::Linear).unwrap();
        let body = hint
            .strip_prefix("/*+ Leading(").unwrap()
            .strip_suffix(") */").unwrap();
        prop_assert_eq!(body, expr.key());
    }

    #[test]
    fn rewrite_preserves_graph(
        topology in topology_strategy(),
        n in 2usize..9,
        seed in any::<u64>(),
    ) {
        let graph = graph_for(topology, n, seed);
        let from: Vec<String> = graph
            .aliases
            .iter()
            .map(|a| format!("{} {}", a.table, a.alias))
            .collect();
        let preds: Vec<String> = graph.edges.iter().map(|e| e.predicate.clone()).collect();
        let sql = format!("SELECT * FROM {} WHERE {}", from.join(", "), preds.join(" AND "));
        let source = parse_sql(&sql).unwrap();

        let expr = LeadingExpression::new(valid_order(&source, seed));
        let rewritten =
            rewrite_sql(&source, &expr, RewriteMode::ExplicitJoin, HintFormat::Linear, false)
                .unwrap();
        let reparsed = parse_sql(&rewritten).unwrap();

        let mut want: Vec<&str> = source.aliases.iter().map(|a| a.alias.as_str()).collect();
        let mut got: Vec<&str> = reparsed.aliases.iter().map(|a| a.alias.as_str()).collect();
        want.sort();
        got.sort();
        prop_assert_eq!(want, got);
        prop_assert_eq!(source.edges.len(), reparsed.edges.len());
        for e in &source.edges {
            prop_assert!(reparsed.edge_between(&e.left, &e.right).is_some());
        }
    }

    #[test]
    fn legal_extensions_never_repeat_prefix(
        topology in topology_strategy(),
        n in 3usize..10,
        seed in any::<u64>(),
        cut in 0usize..9,
    ) {
        let graph = graph_for(topology, n, seed);
        let order = valid_order(&graph, seed);
        let cut = cut.min(order.len());
        let prefix = &order[..cut];
        for ext in legal_extensions(&graph, prefix, false) {
            prop_assert!(!prefix.contains(&ext));
            prop_assert!(graph.has_alias(&ext));
        }
    }
}
