//! Two-stage extreme-UCT search against the synthetic cost model.
//!
//! Generates a star-shaped workload, runs the optimizer, and compares the
//! result with exact dynamic programming.
//!
//! Run: cargo run --example optimize_synthetic

use joinsearch::baselines::{dp_leftdeep, DP_DEFAULT_LIMIT};
use joinsearch::cost::SyntheticOracle;
use joinsearch::join_graph::workload_to_graph;
use joinsearch::search::SearchParams;
use joinsearch::two_stage::{budget_report, optimize, OptimizeOptions};
use joinsearch::workload_gen::{generate_file, Topology};

fn main() {
    let file = generate_file(Topology::Star, 7, 42).unwrap();
    let (graph, catalog) = workload_to_graph(&file).unwrap();
    let catalog = catalog.unwrap();

    let oracle = SyntheticOracle { graph: &graph, catalog: &catalog };
    let params = SearchParams { seed: 42, ..SearchParams::default() };
    let options = OptimizeOptions { t_pair: 50, t_main: 2000, warm_start: None, trace: true };

    let out = optimize(&graph, &oracle, None, params, &options).unwrap();

    println!("stage-1 seed runs (one per join edge):");
    for (left, right, cost) in &out.stage_one.per_edge {
        println!("  ({left}, {right}) -> best cost {cost:.4}");
    }
    let (wl, wr) = out.stage_one.winner.clone().unwrap();
    println!("winning prefix: {} {} (cost {:.4})", wl, wr, out.stage_one.winner_cost);

    println!("final order: {}", out.best.key());
    println!("final cost:  {:.4}", out.best_cost);
    let budget = budget_report(&out).unwrap();
    println!(
        "oracle calls: {} stage-1 + {} stage-2 ({} cache hits)",
        budget.stage1_calls, budget.stage2_calls, budget.cache_hits
    );

    let (dp_order, dp_cost) = dp_leftdeep(&graph, &catalog, DP_DEFAULT_LIMIT, false).unwrap();
    println!("exact dp:    {} (cost {:.4})", dp_order.key(), dp_cost);
    println!("ratio vs dp: {:.4}", out.best_cost / dp_cost);
}
