//! MCTS over left-deep join orders: UCT / UCT-extreme selection, guided
//! rollouts, backpropagation of mean and max statistics, evolutionary
//! state-jumping operators, and the bounded best-expression queue.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, Evaluator, LeadingExpression};
use crate::join_graph::JoinGraph;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no legal action: prefix cannot be extended without a cross join")]
    NoLegalAction,
    #[error("expression has fewer than 2 free positions")]
    Unmutatable,
    #[error("crossover parents do not share the protected prefix")]
    MismatchedParents,
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    UctMean,
    UctExtreme,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchParams {
    pub policy: Policy,
    /// Exploration constant, >= 0.
    pub c: f64,
    /// Exploration exponent for the extreme policy, > 0.
    pub gamma: f64,
    /// Probability of a crossover jump per iteration.
    pub gp_rate: f64,
    /// Probability of a mutation jump per iteration.
    pub mutation_rate: f64,
    /// Probability of a random (instead of greedy) rollout move.
    pub exploration_rate: f64,
    /// Best-queue capacity, >= 1.
    pub k: usize,
    pub seed: u64,
    pub allow_cross_join: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            policy: Policy::UctExtreme,
            c: 1.0,
            gamma: 0.5,
            gp_rate: 0.1,
            mutation_rate: 0.2,
            exploration_rate: 0.3,
            k: 10,
            seed: 0,
            allow_cross_join: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("gp_rate", self.gp_rate),
            ("mutation_rate", self.mutation_rate),
            ("exploration_rate", self.exploration_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.c < 0.0 {
            return Err(format!("c must be >= 0, got {}", self.c));
        }
        if self.gamma <= 0.0 {
            return Err(format!("gamma must be > 0, got {}", self.gamma));
        }
        if self.k < 1 {
            return Err("k must be >= 1".into());
        }
        Ok(())
    }
}

/// Mean-based UCT score: X̄_j + c·sqrt(2·ln N / n_j).
pub fn uct_mean_score(mean: f64, parent_visits: u64, child_visits: u64, c: f64) -> f64 {
    mean + c * (2.0 * (parent_visits as f64).ln() / child_visits as f64).sqrt()
}

/// Extreme UCT score: Q̂_j + 2c·(ln N / n_j)^γ.
pub fn uct_extreme_score(
    max: f64,
    parent_visits: u64,
    child_visits: u64,
    c: f64,
    gamma: f64,
) -> f64 {
    max + 2.0 * c * ((parent_visits as f64).ln() / child_visits as f64).powf(gamma)
}

/// Aliases that may legally extend the prefix: unplaced aliases sharing at
/// least one edge with a prefix member. When that set is empty and unplaced
/// aliases remain, all of them become legal if cross joins are allowed,
/// otherwise none. An empty prefix admits every alias.
pub fn legal_extensions(
    graph: &JoinGraph,
    prefix: &[String],
    allow_cross_join: bool,
) -> Vec<String> {
    let unplaced: Vec<String> = graph
        .aliases
        .iter()
        .map(|a| a.alias.clone())
        .filter(|a| !prefix.contains(a))
        .collect();
    if prefix.is_empty() || unplaced.is_empty() {
        return unplaced;
    }
    let connected: Vec<String> = unplaced
        .iter()
        .filter(|a| prefix.iter().any(|p| graph.edge_between(a, p).is_some()))
        .cloned()
        .collect();
    if !connected.is_empty() {
        connected
    } else if allow_cross_join {
        unplaced
    } else {
        Vec::new()
    }
}

/// True iff `order` is a permutation of the graph's aliases in which every
/// element was a legal extension of the preceding prefix.
pub fn is_valid_order(graph: &JoinGraph, order: &[String], allow_cross_join: bool) -> bool {
    if order.len() != graph.aliases.len() {
        return false;
    }
    for k in 0..order.len() {
        let legal = legal_extensions(graph, &order[..k], allow_cross_join);
        if !legal.contains(&order[k]) {
            return false;
        }
    }
    true
}

/// Up to K (expression, raw cost) pairs ordered by ascending cost; the
/// minimum entry is the global best seen by the owning search.
#[derive(Debug, Clone, Default)]
pub struct BestQueue {
    entries: Vec<(LeadingExpression, f64)>,
    capacity: usize,
}

impl BestQueue {
    pub fn new(capacity: usize) -> Self {
        BestQueue { entries: Vec::new(), capacity: capacity.max(1) }
    }

    pub fn insert(&mut self, expr: LeadingExpression, cost: f64) {
        if self.entries.iter().any(|(e, _)| *e == expr) {
            return;
        }
        self.entries.push((expr, cost));
        self.entries
            .sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.key().cmp(&b.0.key())));
        self.entries.truncate(self.capacity);
    }

    pub fn best(&self) -> Option<&(LeadingExpression, f64)> {
        self.entries.first()
    }

    pub fn entries(&self) -> &[(LeadingExpression, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One tree node: the child alias it was reached by, visit count, running
/// mean reward and running max reward.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub alias: Option<String>,
    pub children: BTreeMap<String, usize>,
    pub visits: u64,
    pub mean: f64,
    pub max: f64,
}

impl SearchNode {
    fn new(alias: Option<String>) -> Self {
        SearchNode { alias, children: BTreeMap::new(), visits: 0, mean: 0.0, max: f64::NEG_INFINITY }
    }

    fn record(&mut self, reward: f64) {
        self.visits += 1;
        self.mean += (reward - self.mean) / self.visits as f64;
        self.max = self.max.max(reward);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub path: Vec<String>,
    pub expression: String,
    pub raw_cost: f64,
    pub normalized_reward: f64,
    pub operator: TraceOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOperator {
    Mcts,
    Mutation,
    Crossover,
    Inject,
}

/// A single-writer MCTS search rooted at a fixed prefix. Multiple searches
/// may run concurrently, each with its own tree, RNG stream, and
/// normalization state; only the cost cache is shared.
pub struct Search<'a> {
    graph: &'a JoinGraph,
    evaluator: &'a Evaluator<'a>,
    params: SearchParams,
    root_prefix: Vec<String>,
    nodes: Vec<SearchNode>,
    rng: ChaCha8Rng,
    best: BestQueue,
    trace: Option<Vec<TraceRecord>>,
    iterations: u64,
}

impl<'a> Search<'a> {
    pub fn new(
        graph: &'a JoinGraph,
        evaluator: &'a Evaluator<'a>,
        params: SearchParams,
        root_prefix: Vec<String>,
        rng: ChaCha8Rng,
        trace: bool,
    ) -> Self {
        Search {
            graph,
            evaluator,
            best: BestQueue::new(params.k),
            params,
            root_prefix,
            nodes: vec![SearchNode::new(None)],
            rng,
            trace: trace.then(Vec::new),
            iterations: 0,
        }
    }

    pub fn best_queue(&self) -> &BestQueue {
        &self.best
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRecord>> {
        self.trace.take()
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn node(&self, idx: usize) -> &SearchNode {
        &self.nodes[idx]
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Selection rule over one node's children. Any unvisited child is
    /// selected before any visited one (uniformly at random); otherwise the
    /// policy's argmax, ties broken uniformly at random.
    fn select_action(&mut self, idx: usize, prefix: &[String]) -> Result<String, SearchError> {
        let legal = legal_extensions(self.graph, prefix, self.params.allow_cross_join);
        if legal.is_empty() {
            return Err(SearchError::NoLegalAction);
        }
        let node = &self.nodes[idx];
        let unvisited: Vec<&String> = legal
            .iter()
            .filter(|a| {
                node.children
                    .get(a.as_str())
                    .map(|&ci| self.nodes[ci].visits == 0)
                    .unwrap_or(true)
            })
            .collect();
        if !unvisited.is_empty() {
            return Ok((*unvisited.choose(&mut self.rng).unwrap()).clone());
        }
        let parent_visits = node.visits;
        let mut best_score = f64::NEG_INFINITY;
        let mut ties: Vec<&String> = Vec::new();
        for alias in &legal {
            let child = &self.nodes[node.children[alias.as_str()]];
            let score = match self.params.policy {
                Policy::UctMean => {
                    uct_mean_score(child.mean, parent_visits, child.visits, self.params.c)
                }
                Policy::UctExtreme => uct_extreme_score(
                    child.max,
                    parent_visits,
                    child.visits,
                    self.params.c,
                    self.params.gamma,
                ),
            };
            if score > best_score {
                best_score = score;
                ties.clear();
                ties.push(alias);
            } else if score == best_score {
                ties.push(alias);
            }
        }
        Ok((*ties.choose(&mut self.rng).unwrap()).clone())
    }

    fn child_index(&mut self, idx: usize, alias: &str) -> usize {
        if let Some(&ci) = self.nodes[idx].children.get(alias) {
            return ci;
        }
        let ci = self.nodes.len();
        self.nodes.push(SearchNode::new(Some(alias.to_string())));
        self.nodes[idx].children.insert(alias.to_string(), ci);
        ci
    }

    /// Completes a prefix into a full order: with probability
    /// exploration_rate a uniformly random legal extension, otherwise the
    /// extension minimizing the incremental prefix cost when the oracle can
    /// cost prefixes (ties to the lexicographically first), else uniform.
    fn rollout(&mut self, mut prefix: Vec<String>) -> Result<LeadingExpression, SearchError> {
        let n = self.graph.aliases.len();
        while prefix.len() < n {
            let legal = legal_extensions(self.graph, &prefix, self.params.allow_cross_join);
            if legal.is_empty() {
                return Err(SearchError::NoLegalAction);
            }
            let explore = self.rng.gen::<f64>() < self.params.exploration_rate;
            let choice = if explore || legal.len() == 1 {
                legal.choose(&mut self.rng).unwrap().clone()
            } else {
                self.greedy_choice(&prefix, &legal)
            };
            prefix.push(choice);
        }
        Ok(LeadingExpression::new(prefix))
    }

    fn greedy_choice(&mut self, prefix: &[String], legal: &[String]) -> String {
        if prefix.is_empty() {
            // length-1 prefixes are not costable; fall back to uniform
            return legal.choose(&mut self.rng).unwrap().clone();
        }
        let mut best: Option<(f64, &String)> = None;
        for alias in legal {
            let mut extended = prefix.to_vec();
            extended.push(alias.clone());
            let cost = match self
                .evaluator
                .prefix_cost(&LeadingExpression::new(extended))
            {
                Some(Ok(c)) => c,
                // EXPLAIN mode or costing failure: uniform random step
                _ => return legal.choose(&mut self.rng).unwrap().clone(),
            };
            match best {
                Some((b, _)) if b <= cost => {}
                _ => best = Some((cost, alias)),
            }
        }
        best.unwrap().1.clone()
    }

    fn backpropagate(&mut self, path: &[usize], reward: f64) {
        for &idx in path {
            self.nodes[idx].record(reward);
        }
    }

    /// Backpropagates along the tree path matching the expression's longest
    /// common prefix with the root's subtree, without creating nodes.
    fn backpropagate_lcp(&mut self, expr: &LeadingExpression, reward: f64) {
        if !expr.order.starts_with(&self.root_prefix) {
            return;
        }
        let mut path = vec![0usize];
        let mut idx = 0usize;
        for alias in &expr.order[self.root_prefix.len()..] {
            match self.nodes[idx].children.get(alias.as_str()) {
                Some(&ci) => {
                    path.push(ci);
                    idx = ci;
                }
                None => break,
            }
        }
        self.backpropagate(&path, reward);
    }

    fn record_trace(
        &mut self,
        path: Vec<String>,
        expr: &LeadingExpression,
        raw_cost: f64,
        normalized: f64,
        operator: TraceOperator,
    ) {
        let iter = self.iterations;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                iter,
                path,
                expression: expr.key(),
                raw_cost,
                normalized_reward: normalized,
                operator,
            });
        }
    }

    /// Injects an externally found expression (warm start, stage-1 winner):
    /// evaluates it, inserts it into the queue, and backpropagates along the
    /// matching tree path.
    pub fn inject(&mut self, expr: LeadingExpression) -> Result<f64, SearchError> {
        let reward = self.evaluator.evaluate(&expr)?;
        self.best.insert(expr.clone(), reward.cost);
        self.backpropagate_lcp(&expr, reward.normalized);
        self.record_trace(Vec::new(), &expr, reward.cost, reward.normalized, TraceOperator::Inject);
        Ok(reward.cost)
    }

    /// One Selection -> Expansion -> Simulation -> Backpropagation cycle,
    /// followed by the probabilistic evolutionary jumps.
    pub fn iteration(&mut self) -> Result<(), SearchError> {
        self.iterations += 1;
        let n = self.graph.aliases.len();

        // selection / expansion
        let mut idx = 0usize;
        let mut prefix = self.root_prefix.clone();
        let mut path = vec![0usize];
        while prefix.len() < n {
            let action = self.select_action(idx, &prefix)?;
            let existing = self.nodes[idx].children.contains_key(&action);
            let was_unvisited = !existing
                || self.nodes[self.nodes[idx].children[&action]].visits == 0;
            let ci = self.child_index(idx, &action);
            path.push(ci);
            prefix.push(action);
            idx = ci;
            if was_unvisited {
                break;
            }
        }

        // simulation
        let full = self.rollout(prefix)?;
        let reward = match self.evaluator.evaluate(&full) {
            Ok(r) => r,
            // the iteration is consumed but updates nothing
            Err(CostError::OracleUnavailable(_)) => return Ok(()),
            Err(e) => return Err(e.into()),
        };

        // backpropagation
        self.backpropagate(&path, reward.normalized);
        self.best.insert(full.clone(), reward.cost);
        let path_aliases: Vec<String> = path
            .iter()
            .filter_map(|&i| self.nodes[i].alias.clone())
            .collect();
        self.record_trace(path_aliases, &full, reward.cost, reward.normalized, TraceOperator::Mcts);

        // evolutionary state jumps
        if self.rng.gen::<f64>() < self.params.mutation_rate {
            let mutated = mutate(
                self.graph,
                &full,
                self.root_prefix.len(),
                self.params.allow_cross_join,
                &mut self.rng,
            );
            if let Ok(mutant) = mutated {
                self.apply_jump(mutant, TraceOperator::Mutation)?;
            }
        }
        if self.rng.gen::<f64>() < self.params.gp_rate && self.best.len() >= 2 {
            let i = self.rng.gen_range(0..self.best.len());
            let mut j = self.rng.gen_range(0..self.best.len() - 1);
            if j >= i {
                j += 1;
            }
            let parent_a = self.best.entries()[i].0.clone();
            let parent_b = self.best.entries()[j].0.clone();
            if let Ok(child) = crossover(
                self.graph,
                &parent_a,
                &parent_b,
                self.root_prefix.len(),
                self.params.allow_cross_join,
                &mut self.rng,
            ) {
                self.apply_jump(child, TraceOperator::Crossover)?;
            }
        }
        Ok(())
    }

    fn apply_jump(
        &mut self,
        expr: LeadingExpression,
        operator: TraceOperator,
    ) -> Result<(), SearchError> {
        let reward = match self.evaluator.evaluate(&expr) {
            Ok(r) => r,
            Err(CostError::OracleUnavailable(_)) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        self.best.insert(expr.clone(), reward.cost);
        self.backpropagate_lcp(&expr, reward.normalized);
        self.record_trace(Vec::new(), &expr, reward.cost, reward.normalized, operator);
        Ok(())
    }

    pub fn run(&mut self, iterations: u64) -> Result<(), SearchError> {
        for _ in 0..iterations {
            self.iteration()?;
        }
        Ok(())
    }
}

/// Reorders the free positions so every step is a legal extension: scan the
/// order, always placing the earliest remaining alias that connects to what
/// is already placed (falling back to cross joins only when nothing
/// connects and they are allowed).
fn repair(
    graph: &JoinGraph,
    order: Vec<String>,
    prefix_len: usize,
    allow_cross_join: bool,
) -> Result<Vec<String>, SearchError> {
    let mut placed: Vec<String> = order[..prefix_len].to_vec();
    let mut remaining: Vec<String> = order[prefix_len..].to_vec();
    while !remaining.is_empty() {
        let legal = legal_extensions(graph, &placed, allow_cross_join);
        if legal.is_empty() {
            return Err(SearchError::NoLegalAction);
        }
        let pos = remaining
            .iter()
            .position(|a| legal.contains(a))
            .ok_or(SearchError::NoLegalAction)?;
        placed.push(remaining.remove(pos));
    }
    Ok(placed)
}

/// Swaps two positions strictly after the protected prefix, repairing
/// connectivity by greedy reinsertion.
pub fn mutate(
    graph: &JoinGraph,
    expr: &LeadingExpression,
    prefix_len: usize,
    allow_cross_join: bool,
    rng: &mut ChaCha8Rng,
) -> Result<LeadingExpression, SearchError> {
    let free = expr.order.len().saturating_sub(prefix_len);
    if free < 2 {
        return Err(SearchError::Unmutatable);
    }
    let mut order = expr.order.clone();
    let i = prefix_len + rng.gen_range(0..free);
    let mut j = prefix_len + rng.gen_range(0..free - 1);
    if j >= i {
        j += 1;
    }
    order.swap(i, j);
    let repaired = repair(graph, order, prefix_len, allow_cross_join)?;
    Ok(LeadingExpression::new(repaired))
}

/// Order crossover (OX) on the suffixes after the shared protected prefix:
/// a contiguous slice of parent_a's suffix is kept in place, the remaining
/// positions fill in parent_b's suffix order, then connectivity repair.
pub fn crossover(
    graph: &JoinGraph,
    parent_a: &LeadingExpression,
    parent_b: &LeadingExpression,
    prefix_len: usize,
    allow_cross_join: bool,
    rng: &mut ChaCha8Rng,
) -> Result<LeadingExpression, SearchError> {
    if parent_a.order.len() != parent_b.order.len()
        || parent_a.order[..prefix_len] != parent_b.order[..prefix_len]
    {
        return Err(SearchError::MismatchedParents);
    }
    let m = parent_a.order.len() - prefix_len;
    if m < 2 {
        return Err(SearchError::Unmutatable);
    }
    let suffix_a = &parent_a.order[prefix_len..];
    let suffix_b = &parent_b.order[prefix_len..];
    let lo = rng.gen_range(0..m);
    let hi = rng.gen_range(lo..m) + 1;

    let mut child: Vec<Option<String>> = vec![None; m];
    for k in lo..hi {
        child[k] = Some(suffix_a[k].clone());
    }
    let mut fill = suffix_b
        .iter()
        .filter(|a| !suffix_a[lo..hi].contains(a))
        .cloned();
    for slot in child.iter_mut() {
        if slot.is_none() {
            *slot = fill.next();
        }
    }
    let mut order = parent_a.order[..prefix_len].to_vec();
    order.extend(child.into_iter().map(|s| s.expect("all slots filled")));
    let repaired = repair(graph, order, prefix_len, allow_cross_join)?;
    Ok(LeadingExpression::new(repaired))
}
