//! Parse restricted SQL into a join graph.
//!
//! The parser accepts SELECT ... FROM with comma-separated relations or
//! INNER JOIN ... ON chains, and a WHERE clause of AND-ed equi-join and
//! local predicates. Everything else is rejected with a positioned error.
//!
//! Run: cargo run --example parse_sql

use joinsearch::join_graph::parse_sql;

fn main() {
    let sql = "SELECT t.title, mc.note \
               FROM title t, movie_companies mc, company_name cn \
               WHERE t.id = mc.movie_id \
                 AND mc.company_id = cn.id \
                 AND cn.country_code = '[us]' \
                 AND t.production_year > 2000";

    let graph = parse_sql(sql).unwrap();

    println!("aliases:");
    for a in &graph.aliases {
        println!("  {} -> {}", a.alias, a.table);
    }
    println!("join edges:");
    for e in &graph.edges {
        println!("  {} -- {} : {}", e.left, e.right, e.predicate);
    }
    println!("local predicates:");
    for p in &graph.local_predicates {
        println!("  {p}");
    }
    println!("connected: {}", graph.is_connected());

    // rejected constructs come back as positioned parse errors
    let bad = "SELECT * FROM a, b WHERE a.x = b.x OR a.y = 1";
    println!("\nOR example -> {}", parse_sql(bad).unwrap_err());
}
