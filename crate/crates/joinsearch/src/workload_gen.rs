//! Seeded synthetic workload generator across chain, star, cycle, and clique
//! topologies.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Catalog;
use crate::join_graph::{workload_to_graph, JoinGraph, WorkloadEdge, WorkloadFile, WorkloadTable};
use crate::rng::{combine, combine_str};
use rand_chacha::rand_core::SeedableRng;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("bad topology parameters: {0}")]
    BadTopologyParams(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Chain,
    Star,
    Cycle,
    Clique,
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Chain => "chain",
            Topology::Star => "star",
            Topology::Cycle => "cycle",
            Topology::Clique => "clique",
        }
    }

    pub const ALL: [Topology; 4] =
        [Topology::Chain, Topology::Star, Topology::Cycle, Topology::Clique];
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(Topology::Chain),
            "star" => Ok(Topology::Star),
            "cycle" => Ok(Topology::Cycle),
            "clique" => Ok(Topology::Clique),
            other => Err(format!("unknown topology `{other}`")),
        }
    }
}

/// Cliques are capped to keep the DP oracle tractable.
pub const CLIQUE_MAX_N: usize = 12;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn edge_pairs(topology: Topology, n: usize) -> Vec<(usize, usize)> {
    match topology {
        Topology::Chain => (0..n - 1).map(|i| (i, i + 1)).collect(),
        Topology::Star => (1..n).map(|i| (0, i)).collect(),
        Topology::Cycle => {
            let mut e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            if n > 2 {
                e.push((n - 1, 0));
            }
            e
        }
        Topology::Clique => {
            let mut e = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    e.push((i, j));
                }
            }
            e
        }
    }
}

/// Deterministically generates a connected workload: base cardinalities
/// log-uniform over [10, 1e6], edge selectivities log-uniform over
/// [1e-4, 0.5], local selectivities uniform over [0.05, 1.0].
pub fn generate(
    topology: Topology,
    n: usize,
    seed: u64,
) -> Result<(JoinGraph, Catalog), GenError> {
    let file = generate_file(topology, n, seed)?;
    let (graph, catalog) = workload_to_graph(&file)
        .map_err(|e| GenError::BadTopologyParams(format!("internal: {e}")))?;
    Ok((graph, catalog.expect("generator always emits a catalog")))
}

pub fn generate_file(topology: Topology, n: usize, seed: u64) -> Result<WorkloadFile, GenError> {
    if n < 2 {
        return Err(GenError::BadTopologyParams(format!("n must be >= 2, got {n}")));
    }
    if topology == Topology::Clique && n > CLIQUE_MAX_N {
        return Err(GenError::BadTopologyParams(format!(
            "clique n is capped at {CLIQUE_MAX_N}, got {n}"
        )));
    }
    if n > 26 {
        return Err(GenError::BadTopologyParams(format!("n is capped at 26, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alias_of = |i: usize| format!("r{i}");
    let tables = (0..n)
        .map(|i| WorkloadTable {
            alias: alias_of(i),
            table: format!("{}_{}_t{}", topology.name(), n, i),
            cardinality: log_uniform(&mut rng, 10.0, 1e6).round().max(10.0) as u64,
            local_selectivity: rng.gen_range(0.05..=1.0),
        })
        .collect();
    let edges = edge_pairs(topology, n)
        .into_iter()
        .map(|(i, j)| WorkloadEdge {
            left: alias_of(i),
            right: alias_of(j),
            selectivity: log_uniform(&mut rng, 1e-4, 0.5),
            predicate: Some(format!("{}.k{} = {}.k{}", alias_of(i), j, alias_of(j), i)),
        })
        .collect();
    Ok(WorkloadFile {
        name: format!("{}_{}", topology.name(), n),
        tables,
        edges,
        sql: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub topology: Topology,
    pub n: usize,
    pub count: usize,
}

/// Writes one workload JSON file per instance into `out`, filenames
/// `{topology}_{n}_{index}.json`, seeds derived from the master seed.
pub fn corpus(
    spec: &[CorpusSpec],
    master_seed: u64,
    out: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, GenError> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for entry in spec {
        for index in 0..entry.count {
            let seed = instance_seed(master_seed, entry.topology, entry.n, index);
            let file = generate_file(entry.topology, entry.n, seed)?;
            let path = out.join(format!("{}_{}_{}.json", entry.topology.name(), entry.n, index));
            let json = serde_json::to_string_pretty(&file).expect("workload serializes");
            std::fs::write(&path, json)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

pub fn instance_seed(master_seed: u64, topology: Topology, n: usize, index: usize) -> u64 {
    combine(
        combine_str(master_seed, topology.name()),
        combine(n as u64, index as u64),
    )
}

/// The default acceptance corpus: 4 topologies x n in 4..=8 x 10 seeds.
pub fn default_corpus_spec() -> Vec<CorpusSpec> {
    let mut spec = Vec::new();
    for topology in Topology::ALL {
        for n in 4..=8 {
            spec.push(CorpusSpec { topology, n, count: 10 });
        }
    }
    spec
}
