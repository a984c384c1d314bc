//! Leading-hint emission and parsing plus explicit-join SQL rewriting for
//! collapse-limit plan forcing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::LeadingExpression;
use crate::join_graph::JoinGraph;

#[derive(Debug, Error)]
pub enum HintError {
    #[error("expression must be complete (length >= 2)")]
    IncompleteExpression,
    #[error("malformed hint: {0}")]
    MalformedHint(String),
    #[error("hint is not left-deep: {0}")]
    NonLeftDeepHint(String),
    #[error("source SQL is missing or unparsed")]
    MissingSql,
    #[error("step for `{0}` has no join predicate and cross joins are disallowed")]
    DisconnectedOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HintFormat {
    /// `/*+ Leading(((a b) c) d) */` with left-nested pairs.
    Bracketed,
    /// `/*+ Leading(a b c d) */`; the default, see parse-compatibility notes.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteMode {
    /// Original SQL prefixed by the hint comment.
    HintOnly,
    /// FROM clause rewritten as a left-nested explicit JOIN chain.
    ExplicitJoin,
}

/// Emits a leading hint directive for a complete expression. Aliases are
/// lower-cased and single-space separated; the linear body is bit-identical
/// to the expression's cache key.
pub fn emit_hint(expr: &LeadingExpression, format: HintFormat) -> Result<String, HintError> {
    if expr.order.len() < 2 {
        return Err(HintError::IncompleteExpression);
    }
    let body = match format {
        HintFormat::Linear => expr.key(),
        HintFormat::Bracketed => {
            let mut nested = format!("({} {})", expr.order[0], expr.order[1]);
            for alias in &expr.order[2..] {
                nested = format!("({nested} {alias})");
            }
            nested
        }
    };
    Ok(format!("/*+ Leading({body}) */"))
}

/// Parses either emitted hint format back into an alias order. Bracketed
/// nesting must be strictly left-deep; right-nested groups are rejected.
pub fn parse_hint(hint: &str) -> Result<LeadingExpression, HintError> {
    let trimmed = hint.trim();
    let inner = trimmed
        .strip_prefix("/*+")
        .and_then(|s| s.strip_suffix("*/"))
        .ok_or_else(|| HintError::MalformedHint("missing /*+ ... */ markers".into()))?
        .trim();
    let body = inner
        .strip_prefix("Leading(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| HintError::MalformedHint("missing Leading(...)".into()))?
        .trim();
    if body.is_empty() {
        return Err(HintError::MalformedHint("empty Leading body".into()));
    }
    let order = if body.starts_with('(') {
        parse_bracketed(body)?
    } else {
        if body.contains('(') || body.contains(')') {
            return Err(HintError::MalformedHint("unbalanced brackets".into()));
        }
        body.split_whitespace().map(|s| s.to_ascii_lowercase()).collect()
    };
    if order.len() < 2 {
        return Err(HintError::MalformedHint("fewer than 2 aliases".into()));
    }
    Ok(LeadingExpression::new(order))
}

/// Strictly left-deep bracket shape: `(pair alias)` recursively, innermost
/// `(alias alias)`.
fn parse_bracketed(body: &str) -> Result<Vec<String>, HintError> {
    let body = body.trim();
    let inner = body
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| HintError::MalformedHint(format!("expected (..): `{body}`")))?
        .trim();
    if inner.starts_with('(') {
        // left-nested: `(<group> alias)`
        let close = matching_paren(inner)
            .ok_or_else(|| HintError::MalformedHint("unbalanced brackets".into()))?;
        let head = &inner[..=close];
        let tail = inner[close + 1..].trim();
        if tail.is_empty() || tail.contains('(') || tail.contains(')') {
            return Err(HintError::NonLeftDeepHint(body.to_string()));
        }
        if tail.split_whitespace().count() != 1 {
            return Err(HintError::MalformedHint(format!("expected single alias after group: `{tail}`")));
        }
        let mut order = parse_bracketed(head)?;
        order.push(tail.to_ascii_lowercase());
        Ok(order)
    } else {
        // innermost pair: `alias alias`, any nesting on the right is rejected
        if inner.contains('(') || inner.contains(')') {
            return Err(HintError::NonLeftDeepHint(body.to_string()));
        }
        let parts: Vec<&str> = inner.split_whitespace().collect();
        match parts.as_slice() {
            [a, b] => Ok(vec![a.to_ascii_lowercase(), b.to_ascii_lowercase()]),
            _ => {
                // `(a (b c))` parses here as `a` followed by a group, which is
                // right nesting; anything else is malformed
                if parts.len() == 1 && inner.len() > parts[0].len() {
                    Err(HintError::NonLeftDeepHint(body.to_string()))
                } else {
                    Err(HintError::MalformedHint(format!("expected alias pair: `{inner}`")))
                }
            }
        }
    }
}

fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites the graph's source SQL to force the given join order: either a
/// hint-comment prefix or a left-nested explicit JOIN chain whose ON clauses
/// carry the merged edge predicates, with local predicates retained in WHERE.
pub fn rewrite_sql(
    graph: &JoinGraph,
    expr: &LeadingExpression,
    mode: RewriteMode,
    format: HintFormat,
    allow_cross_join: bool,
) -> Result<String, HintError> {
    let source = graph.source_sql.as_deref().ok_or(HintError::MissingSql)?;
    if expr.order.len() != graph.aliases.len() || expr.order.len() < 2 {
        return Err(HintError::IncompleteExpression);
    }
    match mode {
        RewriteMode::HintOnly => {
            let hint = emit_hint(expr, format)?;
            Ok(format!("{hint} {source}"))
        }
        RewriteMode::ExplicitJoin => {
            let select_list = graph.select_list.as_deref().unwrap_or("*");
            let mut from = String::new();
            let first = &expr.order[0];
            from.push_str(&format!(
                "{} {}",
                graph.table_of(first).ok_or(HintError::MissingSql)?,
                first
            ));
            for k in 1..expr.order.len() {
                let alias = &expr.order[k];
                let table = graph.table_of(alias).ok_or(HintError::MissingSql)?;
                // every edge between the new alias and the prefix lands in
                // this step's ON clause
                let mut on_parts = Vec::new();
                for prev in &expr.order[..k] {
                    if let Some(edge) = graph.edge_between(alias, prev) {
                        on_parts.push(edge.predicate.clone());
                    }
                }
                if on_parts.is_empty() {
                    if !allow_cross_join {
                        return Err(HintError::DisconnectedOrder(alias.clone()));
                    }
                    from.push_str(&format!(" CROSS JOIN {table} {alias}"));
                } else {
                    from.push_str(&format!(
                        " JOIN {table} {alias} ON {}",
                        on_parts.join(" AND ")
                    ));
                }
            }
            let mut sql = format!("SELECT {select_list} FROM {from}");
            if !graph.local_predicates.is_empty() {
                sql.push_str(&format!(" WHERE {}", graph.local_predicates.join(" AND ")));
            }
            Ok(sql)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::fixtures::{chain3, expr};
    use crate::join_graph::parse_sql;

    #[test]
    fn linear_hint_minimal() {
        assert_eq!(
            emit_hint(&expr(&["a", "b"]), HintFormat::Linear).unwrap(),
            "/*+ Leading(a b) */"
        );
    }

    #[test]
    fn bracketed_left_nesting() {
        assert_eq!(
            emit_hint(&expr(&["b", "c", "a"]), HintFormat::Bracketed).unwrap(),
            "/*+ Leading(((b c) a)) */"
        );
        assert_eq!(
            emit_hint(&expr(&["a", "b", "c", "d"]), HintFormat::Bracketed).unwrap(),
            "/*+ Leading((((a b) c) d)) */"
        );
    }

    #[test]
    fn incomplete_expression_rejected() {
        assert!(matches!(
            emit_hint(&expr(&["a"]), HintFormat::Linear),
            Err(HintError::IncompleteExpression)
        ));
    }

    #[test]
    fn parse_linear() {
        assert_eq!(
            parse_hint("/*+ Leading(a b c) */").unwrap(),
            expr(&["a", "b", "c"])
        );
    }

    #[test]
    fn parse_rejects_right_nesting() {
        assert!(matches!(
            parse_hint("/*+ Leading((a (b c))) */"),
            Err(HintError::NonLeftDeepHint(_))
        ));
    }

    #[test]
    fn parse_rejects_malformed() {
        for bad in ["Leading(a b)", "/*+ Lead(a b) */", "/*+ Leading() */", "/*+ Leading((a b) */"] {
            assert!(parse_hint(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trip_both_formats() {
        for order in [vec!["a", "b"], vec!["b", "c", "a"], vec!["d", "a", "c", "b"]] {
            let e = expr(&order);
            for f in [HintFormat::Linear, HintFormat::Bracketed] {
                let emitted = emit_hint(&e, f).unwrap();
                assert_eq!(parse_hint(&emitted).unwrap(), e);
            }
        }
    }

    #[test]
    fn linear_body_equals_cache_key() {
        let e = expr(&["b", "c", "a"]);
        let hint = emit_hint(&e, HintFormat::Linear).unwrap();
        let body = hint
            .strip_prefix("/*+ Leading(")
            .unwrap()
            .strip_suffix(") */")
            .unwrap();
        assert_eq!(body, e.key());
    }

    #[test]
    fn rewrite_minimal_two_table() {
        let g = parse_sql("SELECT * FROM t1 a, t2 b WHERE a.x = b.y AND a.k = 5").unwrap();
        let sql = rewrite_sql(
            &g,
            &expr(&["a", "b"]),
            RewriteMode::ExplicitJoin,
            HintFormat::Linear,
            false,
        )
        .unwrap();
        assert_eq!(sql, "SELECT * FROM t1 a JOIN t2 b ON a.x = b.y WHERE a.k = 5");
    }

    #[test]
    fn rewrite_chain_order() {
        let (g, _) = chain3();
        let sql = rewrite_sql(
            &g,
            &expr(&["b", "c", "a"]),
            RewriteMode::ExplicitJoin,
            HintFormat::Linear,
            false,
        )
        .unwrap();
        assert_eq!(
            sql,
            "SELECT * FROM t2 b JOIN t3 c ON b.z = c.w JOIN t1 a ON a.x = b.y"
        );
    }

    #[test]
    fn rewrite_hint_only_prefixes() {
        let (g, _) = chain3();
        let sql = rewrite_sql(
            &g,
            &expr(&["b", "c", "a"]),
            RewriteMode::HintOnly,
            HintFormat::Linear,
            false,
        )
        .unwrap();
        assert!(sql.starts_with("/*+ Leading(b c a) */ SELECT"));
    }

    #[test]
    fn rewrite_round_trips_through_parser() {
        let (g, _) = chain3();
        let sql = rewrite_sql(
            &g,
            &expr(&["b", "c", "a"]),
            RewriteMode::ExplicitJoin,
            HintFormat::Linear,
            false,
        )
        .unwrap();
        let reparsed = parse_sql(&sql).unwrap();
        let mut orig: Vec<_> = g.aliases.iter().map(|a| a.alias.clone()).collect();
        let mut back: Vec<_> = reparsed.aliases.iter().map(|a| a.alias.clone()).collect();
        orig.sort();
        back.sort();
        assert_eq!(orig, back);
        let mut edges_a: Vec<_> = g.edges.iter().map(|e| e.key()).collect();
        let mut edges_b: Vec<_> = reparsed.edges.iter().map(|e| e.key()).collect();
        edges_a.sort();
        edges_b.sort();
        assert_eq!(edges_a, edges_b);
    }

    #[test]
    fn disconnected_step_errors_or_cross_joins() {
        let mut g = parse_sql("SELECT * FROM t1 a, t2 b, t3 c WHERE a.x = b.y AND b.z = c.w")
            .unwrap();
        g.edges.retain(|e| e.key() == ("a".to_string(), "b".to_string()));
        let e = expr(&["a", "b", "c"]);
        assert!(matches!(
            rewrite_sql(&g, &e, RewriteMode::ExplicitJoin, HintFormat::Linear, false),
            Err(HintError::DisconnectedOrder(c)) if c == "c"
        ));
        let sql =
            rewrite_sql(&g, &e, RewriteMode::ExplicitJoin, HintFormat::Linear, true).unwrap();
        assert!(sql.contains("CROSS JOIN t3 c"));
    }
}
