use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use joinsearch::baselines::{
    dp_leftdeep, geqo_like, goo, mcts_mean, DP_DEFAULT_LIMIT, GEQO_DEFAULT_GENERATIONS,
    GEQO_DEFAULT_POPULATION,
};
use joinsearch::bench::{run_bench, write_report, BenchConfig, OptimizerKind};
use joinsearch::cost::{cost_synthetic, CostCache, CostOracle, LeadingExpression, SyntheticOracle};
use joinsearch::explain::{DbTarget, ExplainFormat, ExplainOracle};
use joinsearch::hint::{emit_hint, rewrite_sql, HintFormat, RewriteMode};
use joinsearch::join_graph::load_workload;
use joinsearch::search::SearchParams;
use joinsearch::two_stage::{optimize, OptimizeOptions};
use joinsearch::workload_gen::{corpus, CorpusSpec, Topology};

const EXIT_USAGE: u8 = 1;
const EXIT_WORKLOAD: u8 = 2;
const EXIT_DBMS: u8 = 3;

#[derive(Parser)]
#[command(name = "joinsearch", about = "Join-order search toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the join order of a single workload file (.json or .sql)
    Optimize(OptimizeArgs),
    /// Run optimizers over a directory of workload files and emit a report
    Bench(BenchArgs),
    /// Generate seeded synthetic workload files
    Gen(GenArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Workload file: .json (with catalog) or .sql (restricted SQL)
    file: PathBuf,
    #[arg(long, default_value = "extreme")]
    optimizer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    t_pair: u64,
    #[arg(long, default_value_t = 2000)]
    t_main: u64,
    /// Exploration constant
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    gp_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    mutation_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    exploration_rate: f64,
    /// Best-queue capacity
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    allow_cross_join: bool,
    /// Warm-start source for the extreme optimizer (only `geqo` supported)
    #[arg(long)]
    warm_start: Option<String>,
    /// Live-DBMS connection string; defaults to $JOINSEARCH_DSN when unset
    #[arg(long, env = "JOINSEARCH_DSN")]
    dsn: Option<String>,
    #[arg(long, default_value_t = 60_000)]
    statement_timeout_ms: u64,
    #[arg(long, default_value = "json")]
    explain_format: String,
    /// Log statements sent to the DBMS (DSN is still redacted)
    #[arg(long)]
    log_sql: bool,
    /// Hint format for the emitted plan
    #[arg(long, default_value = "linear")]
    format: String,
    /// SQL rewrite mode: `hint` or `explicit`
    #[arg(long, default_value = "hint")]
    mode: String,
    /// Load a cost cache from this JSON file before searching
    #[arg(long)]
    cache_load: Option<PathBuf>,
    /// Dump the cost cache to this JSON file after searching
    #[arg(long)]
    cache_dump: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of workload files
    dir: PathBuf,
    /// Comma-separated list: extreme,mean,dp,goo,geqo
    #[arg(long, default_value = "extreme", value_delimiter = ',')]
    optimizers: Vec<String>,
    #[arg(long, default_value = "dp")]
    baseline: String,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    t_pair: u64,
    #[arg(long, default_value_t = 2000)]
    t_main: u64,
    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long, env = "JOINSEARCH_DSN")]
    dsn: Option<String>,
    /// Output directory for report.csv and report.json
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// chain, star, cycle, or clique
    #[arg(long)]
    topology: String,
    /// Number of relations
    #[arg(long)]
    n: usize,
    /// Number of instances
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn usage(msg: impl Into<String>) -> (u8, String) {
    (EXIT_USAGE, msg.into())
}

fn workload_err(msg: impl std::fmt::Display) -> (u8, String) {
    (EXIT_WORKLOAD, msg.to_string())
}

fn dbms_err(msg: impl std::fmt::Display) -> (u8, String) {
    (EXIT_DBMS, msg.to_string())
}

fn cmd_optimize(args: OptimizeArgs) -> CmdResult {
    let (graph, catalog) = load_workload(&args.file).map_err(workload_err)?;

    let params = SearchParams {
        c: args.c,
        gamma: args.gamma,
        gp_rate: args.gp_rate,
        mutation_rate: args.mutation_rate,
        exploration_rate: args.exploration_rate,
        k: args.k,
        allow_cross_join: args.allow_cross_join,
        seed: args.seed,
        ..SearchParams::default()
    };
    params.validate().map_err(|e| usage(e.to_string()))?;

    let hint_format = match args.format.as_str() {
        "linear" => HintFormat::Linear,
        "bracketed" => HintFormat::Bracketed,
        other => return Err(usage(format!("unknown hint format `{other}`"))),
    };
    let rewrite_mode = match args.mode.as_str() {
        "hint" => RewriteMode::HintOnly,
        "explicit" => RewriteMode::ExplicitJoin,
        other => return Err(usage(format!("unknown rewrite mode `{other}`"))),
    };

    let cache = match &args.cache_load {
        Some(path) => CostCache::load(path).map_err(workload_err)?,
        None => CostCache::new(),
    };

    // In DBMS mode plan costs come from EXPLAIN over a forced join order;
    // otherwise the synthetic model requires a catalog (.json workloads).
    let explain_target = args.dsn.as_ref().map(|dsn| {
        let mut target = DbTarget::new(dsn.clone());
        target.statement_timeout_ms = args.statement_timeout_ms;
        target.log_sql = args.log_sql;
        target
    });
    let explain_oracle;
    let synthetic_oracle;
    let oracle: &dyn CostOracle = match &explain_target {
        Some(target) => {
            let format: ExplainFormat =
                args.explain_format.parse().map_err(usage)?;
            let mut target = target.clone();
            target.explain_format = format;
            explain_oracle = ExplainOracle::new(target, &graph);
            &explain_oracle
        }
        None => {
            let catalog = catalog
                .as_ref()
                .ok_or_else(|| workload_err("workload has no catalog; pass --dsn or use .json"))?;
            synthetic_oracle = SyntheticOracle { graph: &graph, catalog };
            &synthetic_oracle
        }
    };

    let (best, best_cost) = match args.optimizer.as_str() {
        "extreme" => {
            let warm_start = match args.warm_start.as_deref() {
                None => None,
                Some("geqo") => {
                    let catalog = catalog
                        .as_ref()
                        .ok_or_else(|| usage("--warm-start geqo needs a catalog"))?;
                    let (order, _) = geqo_like(
                        &graph,
                        catalog,
                        GEQO_DEFAULT_POPULATION,
                        GEQO_DEFAULT_GENERATIONS,
                        args.seed,
                    )
                    .map_err(workload_err)?;
                    Some(order)
                }
                Some(other) => return Err(usage(format!("unknown warm start `{other}`"))),
            };
            let options = OptimizeOptions {
                t_pair: args.t_pair,
                t_main: args.t_main,
                warm_start,
                trace: false,
            };
            let out = optimize(&graph, oracle, Some(&cache), params, &options)
                .map_err(|e| classify_error(explain_target.is_some(), e))?;
            (out.best, out.best_cost)
        }
        "mean" => {
            let budget = args.t_pair * graph.edges.len() as u64 + args.t_main;
            let (order, cost, _) = mcts_mean(&graph, oracle, Some(&cache), params, budget)
                .map_err(|e| classify_error(explain_target.is_some(), e))?;
            (order, cost)
        }
        "dp" => {
            let catalog = catalog.as_ref().ok_or_else(|| usage("dp needs a catalog"))?;
            dp_leftdeep(&graph, catalog, DP_DEFAULT_LIMIT, args.allow_cross_join)
                .map_err(workload_err)?
        }
        "goo" => {
            let catalog = catalog.as_ref().ok_or_else(|| usage("goo needs a catalog"))?;
            let order = goo(&graph, catalog).map_err(workload_err)?;
            let cost = cost_synthetic(&graph, catalog, &order).map_err(workload_err)?.cost;
            (order, cost)
        }
        "geqo" => {
            let catalog = catalog.as_ref().ok_or_else(|| usage("geqo needs a catalog"))?;
            geqo_like(
                &graph,
                catalog,
                GEQO_DEFAULT_POPULATION,
                GEQO_DEFAULT_GENERATIONS,
                args.seed,
            )
            .map_err(workload_err)?
        }
        other => return Err(usage(format!("unknown optimizer `{other}`"))),
    };

    if let Some(path) = &args.cache_dump {
        cache.dump(path).map_err(workload_err)?;
    }

    report_plan(&graph, &best, best_cost, hint_format, rewrite_mode, args.allow_cross_join)
}

fn report_plan(
    graph: &joinsearch::join_graph::JoinGraph,
    best: &LeadingExpression,
    best_cost: f64,
    hint_format: HintFormat,
    rewrite_mode: RewriteMode,
    allow_cross_join: bool,
) -> CmdResult {
    println!("order: {}", best.key());
    println!("cost: {best_cost}");
    match emit_hint(best, hint_format) {
        Ok(hint) => println!("hint: {hint}"),
        Err(e) => println!("hint: unavailable ({e})"),
    }
    if graph.source_sql.is_some() {
        match rewrite_sql(graph, best, rewrite_mode, hint_format, allow_cross_join) {
            Ok(sql) => println!("sql: {sql}"),
            Err(e) => println!("sql: unavailable ({e})"),
        }
    }
    Ok(())
}

fn classify_error(dbms_mode: bool, err: impl std::fmt::Display) -> (u8, String) {
    if dbms_mode {
        dbms_err(err)
    } else {
        workload_err(err)
    }
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let optimizers: Vec<OptimizerKind> = args
        .optimizers
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    let baseline: OptimizerKind = args.baseline.parse().map_err(usage)?;
    let warm_start_geqo = match args.warm_start.as_deref() {
        None => false,
        Some("geqo") => true,
        Some(other) => return Err(usage(format!("unknown warm start `{other}`"))),
    };
    let config = BenchConfig {
        optimizers,
        baseline,
        t_pair: args.t_pair,
        t_main: args.t_main,
        epsilon: args.epsilon,
        seed: args.seed,
        workers: args.workers,
        warm_start_geqo,
        dsn: args.dsn.clone(),
        ..BenchConfig::default()
    };
    let report = run_bench(&args.dir, &config)
        .map_err(|e| classify_error(args.dsn.is_some(), e))?;
    write_report(&report, &args.out).map_err(workload_err)?;
    for s in &report.summary {
        println!(
            "{} n{} queries={} improved={:.1}% same={:.1}% degraded={:.1}% error={:.1}% \
             geomean_ratio={:.4} median_ratio={:.4}",
            s.optimizer,
            if s.stratum == "lt12" { "<12" } else { ">=12" },
            s.queries,
            s.pct_improved,
            s.pct_same,
            s.pct_degraded,
            s.pct_error,
            s.geomean_ratio,
            s.median_ratio
        );
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let topology: Topology = args.topology.parse().map_err(usage)?;
    let spec = [CorpusSpec { topology, n: args.n, count: args.count }];
    let paths = corpus(&spec, args.seed, &args.out).map_err(workload_err)?;
    for path in paths {
        println!("{}", path.display());
    }
    Ok(())
}
