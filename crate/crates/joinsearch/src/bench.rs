//! Benchmark harness: run optimizers over a workload directory, classify
//! outcomes against a baseline, and emit CSV + JSON reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    dp_leftdeep, geqo_like, goo, mcts_single, DP_DEFAULT_LIMIT,
    GEQO_DEFAULT_GENERATIONS, GEQO_DEFAULT_POPULATION,
};
use crate::cost::{cost_synthetic, Catalog, CostOracle, SyntheticOracle};
use crate::explain::{DbTarget, ExplainOracle};
use crate::join_graph::{load_workload, JoinGraph};
use crate::rng::combine_str;
use crate::search::{Policy, SearchParams};
use crate::two_stage::{optimize, OptimizeOptions};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("workload error: {0}")]
    Workload(String),
    #[error("empty report")]
    EmptyReport,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Extreme,
    Mean,
    Dp,
    Goo,
    Geqo,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Extreme => "extreme",
            OptimizerKind::Mean => "mean",
            OptimizerKind::Dp => "dp",
            OptimizerKind::Goo => "goo",
            OptimizerKind::Geqo => "geqo",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extreme" => Ok(OptimizerKind::Extreme),
            "mean" => Ok(OptimizerKind::Mean),
            "dp" => Ok(OptimizerKind::Dp),
            "goo" => Ok(OptimizerKind::Goo),
            "geqo" => Ok(OptimizerKind::Geqo),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Improved,
    Same,
    Degraded,
    Error,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Improved => "improved",
            Outcome::Same => "same",
            Outcome::Degraded => "degraded",
            Outcome::Error => "error",
        }
    }
}

/// ratio < 1-eps improves, ratio > 1+eps degrades, anything else is same.
pub fn classify(ratio: f64, epsilon: f64) -> Outcome {
    if ratio < 1.0 - epsilon {
        Outcome::Improved
    } else if ratio > 1.0 + epsilon {
        Outcome::Degraded
    } else {
        Outcome::Same
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub n_relations: usize,
    pub optimizer: String,
    pub best_cost: f64,
    pub baseline_cost: f64,
    pub dp_cost: Option<f64>,
    pub ratio: f64,
    pub outcome: Outcome,
    pub oracle_calls: u64,
    pub wall_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumSummary {
    pub optimizer: String,
    /// "lt12" or "ge12": relation-count stratum boundary at n = 12.
    pub stratum: String,
    pub queries: usize,
    pub pct_improved: f64,
    pub pct_same: f64,
    pub pct_degraded: f64,
    pub pct_error: f64,
    pub geomean_ratio: f64,
    pub median_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub records: Vec<RunRecord>,
    pub summary: Vec<StratumSummary>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub optimizers: Vec<OptimizerKind>,
    pub baseline: OptimizerKind,
    pub params: SearchParams,
    pub t_pair: u64,
    pub t_main: u64,
    pub epsilon: f64,
    pub seed: u64,
    pub workers: usize,
    pub warm_start_geqo: bool,
    /// When set, costs come from the live-DBMS EXPLAIN oracle and the
    /// baseline is the unhinted default plan.
    pub dsn: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            optimizers: vec![OptimizerKind::Extreme],
            baseline: OptimizerKind::Dp,
            params: SearchParams::default(),
            t_pair: 50,
            t_main: 2000,
            epsilon: 0.05,
            seed: 0,
            workers: 0,
            warm_start_geqo: false,
            dsn: None,
        }
    }
}

struct OptimizerRun {
    best_cost: f64,
    oracle_calls: u64,
}

fn run_optimizer(
    kind: OptimizerKind,
    graph: &JoinGraph,
    catalog: Option<&Catalog>,
    oracle: &dyn CostOracle,
    config: &BenchConfig,
    seed: u64,
) -> Result<OptimizerRun, String> {
    let params = SearchParams { seed, ..config.params };
    match kind {
        OptimizerKind::Extreme => {
            let warm_start = if config.warm_start_geqo {
                let catalog = catalog.ok_or("geqo warm start needs a catalog")?;
                Some(
                    geqo_like(
                        graph,
                        catalog,
                        GEQO_DEFAULT_POPULATION,
                        GEQO_DEFAULT_GENERATIONS,
                        seed,
                    )
                    .map_err(|e| e.to_string())?
                    .0,
                )
            } else {
                None
            };
            let options = OptimizeOptions {
                t_pair: config.t_pair,
                t_main: config.t_main,
                warm_start,
                trace: false,
            };
            let out =
                optimize(graph, oracle, None, params, &options).map_err(|e| e.to_string())?;
            let budget = out.raw_budget();
            Ok(OptimizerRun {
                best_cost: out.best_cost,
                oracle_calls: budget.stage1_calls + budget.stage2_calls,
            })
        }
        OptimizerKind::Mean => {
            let (_, cost, calls) = mcts_single(
                graph,
                oracle,
                None,
                params,
                Policy::UctMean,
                config.t_pair * graph.edges.len() as u64 + config.t_main,
            )
            .map_err(|e| e.to_string())?;
            Ok(OptimizerRun { best_cost: cost, oracle_calls: calls })
        }
        OptimizerKind::Dp => {
            let catalog = catalog.ok_or("dp needs a synthetic catalog")?;
            let (_, cost) =
                dp_leftdeep(graph, catalog, DP_DEFAULT_LIMIT, params.allow_cross_join)
                    .map_err(|e| e.to_string())?;
            Ok(OptimizerRun { best_cost: cost, oracle_calls: 0 })
        }
        OptimizerKind::Goo => {
            let catalog = catalog.ok_or("goo needs a synthetic catalog")?;
            let order = goo(graph, catalog).map_err(|e| e.to_string())?;
            let cost = cost_synthetic(graph, catalog, &order).map_err(|e| e.to_string())?.cost;
            Ok(OptimizerRun { best_cost: cost, oracle_calls: 0 })
        }
        OptimizerKind::Geqo => {
            let catalog = catalog.ok_or("geqo needs a synthetic catalog")?;
            let (_, cost) = geqo_like(
                graph,
                catalog,
                GEQO_DEFAULT_POPULATION,
                GEQO_DEFAULT_GENERATIONS,
                seed,
            )
            .map_err(|e| e.to_string())?;
            Ok(OptimizerRun {
                best_cost: cost,
                oracle_calls: (GEQO_DEFAULT_POPULATION
                    + GEQO_DEFAULT_GENERATIONS * (GEQO_DEFAULT_POPULATION - 1))
                    as u64,
            })
        }
    }
}

fn bench_instance(path: &Path, config: &BenchConfig) -> Result<Vec<RunRecord>, BenchError> {
    let query_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    let (graph, catalog) = load_workload(path)
        .map_err(|e| BenchError::Workload(format!("{query_id}: {e}")))?;
    let n = graph.aliases.len();
    let seed = combine_str(config.seed, &query_id);

    let explain_oracle = config
        .dsn
        .as_ref()
        .map(|dsn| ExplainOracle::new(DbTarget::new(dsn.clone()), &graph));
    let synthetic = catalog
        .as_ref()
        .map(|c| SyntheticOracle { graph: &graph, catalog: c });

    let dp_cost = catalog.as_ref().and_then(|c| {
        dp_leftdeep(&graph, c, DP_DEFAULT_LIMIT, config.params.allow_cross_join)
            .ok()
            .map(|(_, cost)| cost)
    });

    // baseline: default-plan EXPLAIN cost in DBMS mode, otherwise the
    // configured baseline optimizer (dp by default)
    let baseline_cost = match &explain_oracle {
        Some(oracle) => oracle
            .default_plan_cost()
            .map_err(|e| BenchError::Workload(format!("{query_id}: {e}")))?,
        None => {
            let oracle = synthetic
                .as_ref()
                .ok_or_else(|| BenchError::Workload(format!("{query_id}: no catalog")))?;
            run_optimizer(config.baseline, &graph, catalog.as_ref(), oracle, config, seed)
                .map_err(|e| BenchError::Workload(format!("{query_id}: baseline: {e}")))?
                .best_cost
        }
    };

    let mut records = Vec::new();
    for &kind in &config.optimizers {
        let started = Instant::now();
        let result = match (&explain_oracle, &synthetic) {
            (Some(oracle), _) => {
                run_optimizer(kind, &graph, catalog.as_ref(), oracle, config, seed)
            }
            (None, Some(oracle)) => {
                run_optimizer(kind, &graph, catalog.as_ref(), oracle, config, seed)
            }
            (None, None) => Err("no oracle available".to_string()),
        };
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let record = match result {
            Ok(run) => {
                let ratio = run.best_cost / baseline_cost;
                RunRecord {
                    query_id: query_id.clone(),
                    n_relations: n,
                    optimizer: kind.name().to_string(),
                    best_cost: run.best_cost,
                    baseline_cost,
                    dp_cost,
                    ratio,
                    outcome: classify(ratio, config.epsilon),
                    oracle_calls: run.oracle_calls,
                    wall_ms,
                    seed,
                }
            }
            // a failed run falls back to the baseline plan
            Err(_) => RunRecord {
                query_id: query_id.clone(),
                n_relations: n,
                optimizer: kind.name().to_string(),
                best_cost: baseline_cost,
                baseline_cost,
                dp_cost,
                ratio: 1.0,
                outcome: Outcome::Error,
                oracle_calls: 0,
                wall_ms,
                seed,
            },
        };
        records.push(record);
    }
    Ok(records)
}

pub fn workload_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, BenchError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(p.extension().and_then(|e| e.to_str()), Some("json") | Some("sql"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Runs every configured optimizer over every workload instance. Instances
/// are dispatched to a bounded worker pool; records come back sorted by
/// (query_id, optimizer), so the report is deterministic for a fixed seed
/// regardless of worker count (wall_ms aside).
pub fn run_bench(dir: impl AsRef<Path>, config: &BenchConfig) -> Result<BenchReport, BenchError> {
    let paths = workload_paths(dir)?;
    if paths.is_empty() {
        return Err(BenchError::Workload("no workload files found".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| BenchError::Workload(e.to_string()))?;
    let results: Vec<Result<Vec<RunRecord>, BenchError>> =
        pool.install(|| paths.par_iter().map(|p| bench_instance(p, config)).collect());

    let mut records = Vec::new();
    for result in results {
        // per-instance workload errors surface as error records, never abort
        match result {
            Ok(mut rs) => records.append(&mut rs),
            Err(BenchError::Workload(msg)) => {
                eprintln!("warning: {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    records.sort_by(|a, b| {
        a.query_id.cmp(&b.query_id).then_with(|| a.optimizer.cmp(&b.optimizer))
    });
    let summary = summarize(&records)?;
    Ok(BenchReport { records, summary })
}

fn geomean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Per-optimizer, per-stratum (n < 12 vs n >= 12) outcome distribution and
/// ratio aggregates.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<StratumSummary>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let mut optimizers: Vec<String> = records.iter().map(|r| r.optimizer.clone()).collect();
    optimizers.sort();
    optimizers.dedup();
    let mut summary = Vec::new();
    for optimizer in optimizers {
        for (stratum, lo, hi) in [("lt12", 0usize, 12usize), ("ge12", 12, usize::MAX)] {
            let subset: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.optimizer == optimizer && r.n_relations >= lo && r.n_relations < hi)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let total = subset.len() as f64;
            let pct = |o: Outcome| {
                100.0 * subset.iter().filter(|r| r.outcome == o).count() as f64 / total
            };
            let ratios: Vec<f64> = subset.iter().map(|r| r.ratio).collect();
            summary.push(StratumSummary {
                optimizer: optimizer.clone(),
                stratum: stratum.to_string(),
                queries: subset.len(),
                pct_improved: pct(Outcome::Improved),
                pct_same: pct(Outcome::Same),
                pct_degraded: pct(Outcome::Degraded),
                pct_error: pct(Outcome::Error),
                geomean_ratio: geomean(&ratios),
                median_ratio: median(&mut ratios.clone()),
            });
        }
    }
    Ok(summary)
}

pub const CSV_HEADER: &str =
    "query_id,n_relations,optimizer,best_cost,baseline_cost,dp_cost,ratio,outcome,oracle_calls,wall_ms,seed";

pub fn to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let dp = r.dp_cost.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.query_id,
            r.n_relations,
            r.optimizer,
            r.best_cost,
            r.baseline_cost,
            dp,
            r.ratio,
            r.outcome.name(),
            r.oracle_calls,
            r.wall_ms,
            r.seed
        ));
    }
    out
}

/// Writes report.csv and report.json (field-for-field identical data).
pub fn write_report(report: &BenchReport, out_dir: impl AsRef<Path>) -> Result<(), BenchError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.csv"), to_csv(report))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload_gen::{corpus, CorpusSpec, Topology};

    fn chain_fixture_file(dir: &Path) -> PathBuf {
        let json = r#"{
          "name": "chain3",
          "tables": [
            {"alias": "a", "table": "t1", "cardinality": 1000},
            {"alias": "b", "table": "t2", "cardinality": 100},
            {"alias": "c", "table": "t3", "cardinality": 10}
          ],
          "edges": [
            {"left": "a", "right": "b", "selectivity": 0.01},
            {"left": "b", "right": "c", "selectivity": 0.1}
          ]
        }"#;
        let path = dir.join("chain3.json");
        std::fs::write(&path, json).unwrap();
        path
    }

    #[test]
    fn classification_boundaries() {
        assert_eq!(classify(0.9, 0.05), Outcome::Improved);
        assert_eq!(classify(1.0, 0.05), Outcome::Same);
        assert_eq!(classify(1.04, 0.05), Outcome::Same);
        assert_eq!(classify(1.06, 0.05), Outcome::Degraded);
        // epsilon 0 makes "same" require exact equality
        assert_eq!(classify(1.0, 0.0), Outcome::Same);
        assert_eq!(classify(1.0000001, 0.0), Outcome::Degraded);
    }

    #[test]
    fn chain_fixture_is_same_as_dp() {
        let dir = tempfile::tempdir().unwrap();
        chain_fixture_file(dir.path());
        let config = BenchConfig {
            t_pair: 20,
            t_main: 100,
            workers: 1,
            ..Default::default()
        };
        let report = run_bench(dir.path(), &config).unwrap();
        assert_eq!(report.records.len(), 1);
        let r = &report.records[0];
        assert_eq!(r.outcome, Outcome::Same);
        assert_eq!(r.best_cost, 1100.0);
        assert_eq!(r.dp_cost, Some(1100.0));
    }

    #[test]
    fn every_instance_appears_once_per_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let spec = [CorpusSpec { topology: Topology::Chain, n: 4, count: 3 }];
        corpus(&spec, 5, dir.path()).unwrap();
        let config = BenchConfig {
            optimizers: vec![OptimizerKind::Goo, OptimizerKind::Geqo],
            t_pair: 5,
            t_main: 20,
            workers: 2,
            ..Default::default()
        };
        let report = run_bench(dir.path(), &config).unwrap();
        assert_eq!(report.records.len(), 6);
        for r in &report.records {
            assert!(r.ratio > 0.0);
        }
    }

    #[test]
    fn summary_single_record_and_stratum_boundary() {
        let mk = |n: usize| RunRecord {
            query_id: format!("q{n}"),
            n_relations: n,
            optimizer: "goo".into(),
            best_cost: 1.0,
            baseline_cost: 1.0,
            dp_cost: None,
            ratio: 1.0,
            outcome: Outcome::Same,
            oracle_calls: 0,
            wall_ms: 0.0,
            seed: 0,
        };
        let s = summarize(&[mk(5)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].stratum, "lt12");
        assert_eq!(s[0].pct_same, 100.0);

        // n = 12 lands in the >= 12 stratum
        let s = summarize(&[mk(12)]).unwrap();
        assert_eq!(s[0].stratum, "ge12");
        assert!(matches!(summarize(&[]), Err(BenchError::EmptyReport)));
    }

    #[test]
    fn outcome_percentages_sum_to_100() {
        let dir = tempfile::tempdir().unwrap();
        let spec = [CorpusSpec { topology: Topology::Star, n: 5, count: 4 }];
        corpus(&spec, 11, dir.path()).unwrap();
        let config = BenchConfig { t_pair: 10, t_main: 50, workers: 1, ..Default::default() };
        let report = run_bench(dir.path(), &config).unwrap();
        for s in &report.summary {
            let total = s.pct_improved + s.pct_same + s.pct_degraded + s.pct_error;
            assert!((total - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_and_json_carry_identical_data() {
        let dir = tempfile::tempdir().unwrap();
        chain_fixture_file(dir.path());
        let config = BenchConfig { t_pair: 5, t_main: 20, workers: 1, ..Default::default() };
        let report = run_bench(dir.path(), &config).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_report(&report, out.path()).unwrap();
        let csv = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
        let json: BenchReport = serde_json::from_str(
            &std::fs::read_to_string(out.path().join("report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(csv, to_csv(&json));
        assert_eq!(json.records.len(), report.records.len());
    }
}
