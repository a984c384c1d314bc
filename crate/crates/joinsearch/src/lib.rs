//! Join-order search toolkit: a two-stage prefix-guided Monte Carlo tree
//! search optimizer with extreme-value UCT selection, classical baselines
//! (left-deep dynamic programming, greedy operator ordering, a genetic
//! optimizer), a synthetic cost model, a live-DBMS EXPLAIN cost adapter,
//! hint emission and SQL rewriting, a seeded workload generator, and a
//! benchmark harness.

pub mod baselines;
pub mod bench;
pub mod cost;
pub mod explain;
pub mod hint;
pub mod join_graph;
pub mod rng;
pub mod search;
pub mod two_stage;
pub mod workload_gen;
