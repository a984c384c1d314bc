//! Seeded synthetic workload generation.
//!
//! Writes a small corpus (all four topologies, a few sizes) into a temp
//! directory and prints the per-instance seeds. The same master seed always
//! produces byte-identical files.
//!
//! Run: cargo run --example generate_corpus

use joinsearch::workload_gen::{corpus, instance_seed, CorpusSpec, Topology};

fn main() {
    let out = std::env::temp_dir().join("joinsearch_corpus_example");
    let spec: Vec<CorpusSpec> = Topology::ALL
        .iter()
        .flat_map(|&topology| {
            [4usize, 6, 8]
                .into_iter()
                .map(move |n| CorpusSpec { topology, n, count: 2 })
        })
        .collect();

    let master_seed = 7;
    let paths = corpus(&spec, master_seed, &out).unwrap();
    println!("wrote {} workload files to {}", paths.len(), out.display());
    for entry in &spec {
        for index in 0..entry.count {
            println!(
                "  {}_{}_{}.json  seed={}",
                entry.topology.name(),
                entry.n,
                index,
                instance_seed(master_seed, entry.topology, entry.n, index)
            );
        }
    }
}
