//! Live-DBMS cost adapter: optimize a query using EXPLAIN total cost as the
//! oracle, with forced join orders verified against the returned plan.
//!
//! Needs a reachable PostgreSQL instance; set JOINSEARCH_DSN, e.g.
//!   JOINSEARCH_DSN="host=localhost user=postgres dbname=imdb" \
//!     cargo run --example explain_adapter -- query.sql
//!
//! Without a DSN the example prints what it would do and exits.

use joinsearch::explain::{redact_dsn, DbTarget, ExplainOracle};
use joinsearch::hint::{rewrite_sql, HintFormat, RewriteMode};
use joinsearch::join_graph::load_workload;
use joinsearch::search::SearchParams;
use joinsearch::two_stage::{optimize, OptimizeOptions};

fn main() {
    let Some(dsn) = std::env::var("JOINSEARCH_DSN").ok().filter(|s| !s.is_empty()) else {
        println!("JOINSEARCH_DSN is not set; skipping the live run.");
        println!("This example would: connect, set join_collapse_limit = 1 and");
        println!("from_collapse_limit = 1, then cost candidate orders by EXPLAIN");
        println!("over explicit-join rewrites, verifying the plan's leaf order.");
        return;
    };

    let path = std::env::args().nth(1).expect("usage: explain_adapter <query.sql>");
    let (graph, _) = load_workload(&path).unwrap();

    let mut target = DbTarget::new(dsn);
    target.statement_timeout_ms = 60_000;
    println!("connecting to {}", redact_dsn(&target.dsn));

    let oracle = ExplainOracle::new(target, &graph);
    println!("default plan cost: {}", oracle.default_plan_cost().unwrap());

    let params = SearchParams { seed: 1, ..SearchParams::default() };
    // small budget: every evaluation is a round trip to the server
    let options = OptimizeOptions { t_pair: 5, t_main: 60, warm_start: None, trace: false };
    let out = optimize(&graph, &oracle, None, params, &options).unwrap();

    println!("best order: {}", out.best.key());
    println!("best plan cost: {}", out.best_cost);
    let forced =
        rewrite_sql(&graph, &out.best, RewriteMode::ExplicitJoin, HintFormat::Linear, false)
            .unwrap();
    println!("forced statement:\n{forced}");
}
