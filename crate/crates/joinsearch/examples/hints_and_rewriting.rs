//! Hint emission, hint parsing, and SQL rewriting.
//!
//! Run: cargo run --example hints_and_rewriting

use joinsearch::cost::LeadingExpression;
use joinsearch::hint::{emit_hint, parse_hint, rewrite_sql, HintFormat, RewriteMode};
use joinsearch::join_graph::parse_sql;

fn main() {
    let sql = "SELECT * FROM orders o, customers c, items i \
               WHERE o.cust_id = c.id AND o.id = i.order_id AND c.region = 'EU'";
    let graph = parse_sql(sql).unwrap();

    let order = LeadingExpression::new(vec!["c".into(), "o".into(), "i".into()]);

    let linear = emit_hint(&order, HintFormat::Linear).unwrap();
    let bracketed = emit_hint(&order, HintFormat::Bracketed).unwrap();
    println!("linear:    {linear}");
    println!("bracketed: {bracketed}");

    // both formats parse back to the same expression
    assert_eq!(parse_hint(&linear).unwrap(), order);
    assert_eq!(parse_hint(&bracketed).unwrap(), order);

    let hinted = rewrite_sql(&graph, &order, RewriteMode::HintOnly, HintFormat::Linear, false)
        .unwrap();
    println!("\nhint-only rewrite:\n{hinted}");

    // the explicit form pins the order even without a hint extension:
    // left-nested JOINs plus collapse limits set to 1 on the session
    let explicit =
        rewrite_sql(&graph, &order, RewriteMode::ExplicitJoin, HintFormat::Linear, false).unwrap();
    println!("\nexplicit-join rewrite:\n{explicit}");
}
