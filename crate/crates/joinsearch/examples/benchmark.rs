//! Benchmark harness over a generated corpus: extreme vs mean vs goo vs
//! geqo, dp as baseline, CSV + JSON report.
//!
//! Run: cargo run --release --example benchmark

use joinsearch::bench::{run_bench, write_report, BenchConfig, OptimizerKind};
use joinsearch::workload_gen::{corpus, CorpusSpec, Topology};

fn main() {
    let dir = std::env::temp_dir().join("joinsearch_bench_example");
    let spec: Vec<CorpusSpec> = Topology::ALL
        .iter()
        .map(|&topology| CorpusSpec { topology, n: 6, count: 5 })
        .collect();
    corpus(&spec, 3, &dir).unwrap();

    let config = BenchConfig {
        optimizers: vec![
            OptimizerKind::Extreme,
            OptimizerKind::Mean,
            OptimizerKind::Goo,
            OptimizerKind::Geqo,
        ],
        t_pair: 30,
        t_main: 500,
        seed: 3,
        ..BenchConfig::default()
    };

    let report = run_bench(&dir, &config).unwrap();
    for s in &report.summary {
        println!(
            "{:8} [{:4}] n={:3}  improved {:5.1}%  same {:5.1}%  degraded {:5.1}%  \
             geomean ratio {:.4}  median {:.4}",
            s.optimizer,
            s.stratum,
            s.queries,
            s.pct_improved,
            s.pct_same,
            s.pct_degraded,
            s.geomean_ratio,
            s.median_ratio
        );
    }

    let out = std::env::temp_dir().join("joinsearch_bench_example_report");
    write_report(&report, &out).unwrap();
    println!("report.csv / report.json written to {}", out.display());
}
