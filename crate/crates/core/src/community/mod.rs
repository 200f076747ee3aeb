//! Modularity-based community detection on feature graphs.

mod leiden;
mod louvain;
mod metrics;
mod records;
mod wgraph;

pub use metrics::{adjusted_rand_index, disconnected_communities};
pub use records::{annotate_intra_layer_cosine, extract_communities, CommunityFilter, CommunityRecord};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::graph::{FeatureGraph, GraphConfig};
use crate::{Error, FeatureId, Result};
use wgraph::WGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Louvain,
    Leiden,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Louvain => "louvain",
            Algorithm::Leiden => "leiden",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "louvain" => Ok(Algorithm::Louvain),
            "leiden" => Ok(Algorithm::Leiden),
            other => Err(Error::Invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    /// Modularity resolution.
    pub resolution: f64,
    /// Use edge weights; otherwise every edge counts 1.
    pub weighted: bool,
    pub seed: u64,
    /// Cap on aggregation levels.
    pub max_levels: usize,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            weighted: true,
            seed: 0,
            max_levels: 100,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Invalid(format!(
                "resolution {} must be positive",
                self.resolution
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::Invalid("iteration cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Community of every node of a graph. Ids are dense and numbered by first
/// appearance in node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub algorithm: Option<Algorithm>,
    pub quality: QualityConfig,
    pub graph: GraphConfig,
    pub n_communities: u32,
    pub assignment: BTreeMap<FeatureId, u32>,
}

impl Partition {
    /// Partition of `graph` from per-node labels aligned with its nodes.
    pub fn from_labels(
        graph: &FeatureGraph,
        labels: &[usize],
        algorithm: Option<Algorithm>,
        quality: QualityConfig,
    ) -> Result<Self> {
        if labels.len() != graph.n_nodes() {
            return Err(Error::Invalid(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.n_nodes()
            )));
        }
        let mut dense = labels.to_vec();
        let n = wgraph::renumber(&mut dense);
        Ok(Self {
            algorithm,
            quality,
            graph: graph.config().clone(),
            n_communities: n as u32,
            assignment: graph.nodes().iter().zip(dense).map(|(&f, c)| (f, c as u32)).collect(),
        })
    }

    pub fn community_of(&self, f: FeatureId) -> Option<u32> {
        self.assignment.get(&f).copied()
    }

    /// Members of each community, by id.
    pub fn communities(&self) -> Vec<Vec<FeatureId>> {
        let mut out = vec![Vec::new(); self.n_communities as usize];
        for (&f, &c) in &self.assignment {
            out[c as usize].push(f);
        }
        out
    }

    /// Labels aligned with `graph.nodes()`; fails if a node is unassigned.
    pub fn labels_for(&self, graph: &FeatureGraph) -> Result<Vec<usize>> {
        graph
            .nodes()
            .iter()
            .map(|f| {
                self.community_of(*f)
                    .map(|c| c as usize)
                    .ok_or_else(|| Error::Invalid(format!("node {f} has no community")))
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&std::fs::read_to_string(path).at(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).at(path)
    }
}

/// `Q = Σ_c [in_c / 2m − γ (tot_c / 2m)²]`. Edgeless graphs score 0.
pub fn modularity(graph: &FeatureGraph, partition: &Partition, resolution: f64, weighted: bool) -> Result<f64> {
    let labels = partition.labels_for(graph)?;
    Ok(WGraph::from_graph(graph, weighted).modularity(&labels, resolution))
}

pub fn louvain(graph: &FeatureGraph, cfg: &QualityConfig) -> Result<Partition> {
    detect(graph, Algorithm::Louvain, cfg)
}

pub fn leiden(graph: &FeatureGraph, cfg: &QualityConfig) -> Result<Partition> {
    detect(graph, Algorithm::Leiden, cfg)
}

pub fn detect(graph: &FeatureGraph, algorithm: Algorithm, cfg: &QualityConfig) -> Result<Partition> {
    cfg.validate()?;
    if graph.n_nodes() == 0 {
        return Err(Error::Invalid("community detection needs at least one node".into()));
    }
    let g = WGraph::from_graph(graph, cfg.weighted);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels = match algorithm {
        Algorithm::Louvain => louvain::louvain(&g, cfg.resolution, &mut rng, cfg.max_levels),
        Algorithm::Leiden => {
            let mut labels = leiden::leiden(&g, cfg.resolution, &mut rng, cfg.max_levels);
            wgraph::split_disconnected(&g, &mut labels);
            labels
        }
    };
    wgraph::renumber(&mut labels);
    Partition::from_labels(graph, &labels, Some(algorithm), *cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{planted_partition_graph, Edge, NodeRule, PlantedPartitionSpec};
    use crate::sim::MeasureKind;
    use proptest::prelude::*;

    type Spec = ((u32, u32), (u32, u32), f64);

    fn graph_from(n_per_layer: u32, n_layers: u32, edges: &[Spec]) -> FeatureGraph {
        let nodes = (0..n_layers)
            .flat_map(|l| (0..n_per_layer).map(move |i| FeatureId::new(l, i)))
            .collect();
        let edges = edges
            .iter()
            .map(|&((lu, iu), (lv, iv), w)| Edge {
                u: FeatureId::new(lu, iu),
                v: FeatureId::new(lv, iv),
                w,
                value: w,
            })
            .collect();
        let config = GraphConfig {
            nodes: NodeRule::All,
            ..GraphConfig::new(MeasureKind::Jaccard, 0.0)
        };
        FeatureGraph::from_parts(config, nodes, edges).unwrap()
    }

    /// Two complete bipartite blocks K(3,3) between layers 0 and 1, disjoint.
    fn two_blocks() -> FeatureGraph {
        let mut edges = Vec::new();
        for block in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    edges.push(((0, block * 3 + i), (1, block * 3 + j), 1.0));
                }
            }
        }
        graph_from(6, 2, &edges)
    }

    /// Direct double sum over node pairs.
    fn modularity_oracle(graph: &FeatureGraph, labels: &[usize], gamma: f64) -> f64 {
        let n = graph.n_nodes();
        let mut a = vec![vec![0.0; n]; n];
        for (i, j, w) in graph.indexed_edges() {
            a[i][j] += w;
            a[j][i] += w;
        }
        let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let m2: f64 = k.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += a[i][j] - gamma * k[i] * k[j] / m2;
                }
            }
        }
        q / m2
    }

    #[test]
    fn modularity_matches_direct_summation() {
        let g = two_blocks();
        let labels: Vec<usize> = g.nodes().iter().map(|f| (f.index / 3) as usize).collect();
        let p = Partition::from_labels(&g, &labels, None, QualityConfig::default()).unwrap();
        let q = modularity(&g, &p, 1.0, true).unwrap();
        assert!((q - modularity_oracle(&g, &labels, 1.0)).abs() < 1e-12);
        assert!((q - 0.5).abs() < 1e-12);

        let singletons: Vec<usize> = (0..g.n_nodes()).collect();
        let p = Partition::from_labels(&g, &singletons, None, QualityConfig::default()).unwrap();
        let q = modularity(&g, &p, 1.0, true).unwrap();
        // each node has degree 3 and 2m = 36
        assert!((q - -(12.0 * 9.0) / (36.0 * 36.0)).abs() < 1e-12);

        let one = vec![0; g.n_nodes()];
        let p = Partition::from_labels(&g, &one, None, QualityConfig::default()).unwrap();
        assert_eq!(modularity(&g, &p, 1.0, true).unwrap(), 0.0);
    }

    #[test]
    fn edgeless_graph_scores_zero() {
        let g = graph_from(3, 2, &[]);
        let p = louvain(&g, &QualityConfig::default()).unwrap();
        assert_eq!(modularity(&g, &p, 1.0, true).unwrap(), 0.0);
        assert_eq!(p.n_communities, 6);
    }

    #[test]
    fn disconnected_blocks_are_found() {
        let g = two_blocks();
        for algorithm in [Algorithm::Louvain, Algorithm::Leiden] {
            let p = detect(&g, algorithm, &QualityConfig::default()).unwrap();
            assert_eq!(p.n_communities, 2, "{algorithm}");
            for (f, c) in &p.assignment {
                assert_eq!(*c, f.index / 3, "{algorithm}");
            }
        }
    }

    #[test]
    fn single_node() {
        let g = graph_from(1, 1, &[]);
        for algorithm in [Algorithm::Louvain, Algorithm::Leiden] {
            assert_eq!(
                detect(&g, algorithm, &QualityConfig::default()).unwrap().n_communities,
                1
            );
        }
        let empty = graph_from(0, 0, &[]);
        assert!(louvain(&empty, &QualityConfig::default()).is_err());
        assert!(QualityConfig {
            resolution: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn planted_communities_are_recovered_deterministically() {
        let spec = PlantedPartitionSpec {
            n_layers: 4,
            communities: 4,
            per_layer: 8,
            p_in: 0.5,
            ..Default::default()
        };
        let planted = planted_partition_graph(&spec).unwrap();
        let cfg = QualityConfig {
            seed: 3,
            ..Default::default()
        };
        for algorithm in [Algorithm::Louvain, Algorithm::Leiden] {
            let p = detect(&planted.graph, algorithm, &cfg).unwrap();
            let labels = p.labels_for(&planted.graph).unwrap();
            assert!(adjusted_rand_index(&labels, &planted.labels) > 0.9, "{algorithm}");
            assert_eq!(detect(&planted.graph, algorithm, &cfg).unwrap(), p);
        }
        let p = leiden(&planted.graph, &cfg).unwrap();
        assert!(disconnected_communities(&planted.graph, &p).unwrap().is_empty());
    }

    fn random_graph() -> impl Strategy<Value = FeatureGraph> {
        prop::collection::vec(((0u32..3, 0u32..6, 0u32..6), 0.1f64..1.0), 0..40).prop_map(|raw| {
            let mut seen = std::collections::BTreeSet::new();
            let edges: Vec<_> = raw
                .into_iter()
                .filter(|&((l, i, j), _)| seen.insert((l, i, j)))
                .map(|((l, i, j), w)| ((l, i), (l + 1, j), w))
                .collect();
            graph_from(6, 4, &edges)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn detection_beats_singletons_and_leiden_is_connected(g in random_graph(), seed in 0u64..1000) {
            let cfg = QualityConfig { seed, ..Default::default() };
            let singletons: Vec<usize> = (0..g.n_nodes()).collect();
            let p0 = Partition::from_labels(&g, &singletons, None, cfg).unwrap();
            let q0 = modularity(&g, &p0, 1.0, true).unwrap();
            for algorithm in [Algorithm::Louvain, Algorithm::Leiden] {
                let p = detect(&g, algorithm, &cfg).unwrap();
                prop_assert_eq!(p.assignment.len(), g.n_nodes());
                prop_assert!(modularity(&g, &p, 1.0, true).unwrap() >= q0 - 1e-12);
                let labels = p.labels_for(&g).unwrap();
                prop_assert!(modularity_oracle_or_zero(&g, &labels) >= q0 - 1e-9);
            }
            let p = leiden(&g, &cfg).unwrap();
            prop_assert!(disconnected_communities(&g, &p).unwrap().is_empty());
        }

        #[test]
        fn modularity_agrees_with_oracle(g in random_graph(), labels in prop::collection::vec(0usize..4, 24)) {
            let p = Partition::from_labels(&g, &labels, None, QualityConfig::default()).unwrap();
            let q = modularity(&g, &p, 0.7, true).unwrap();
            let oracle = if g.n_edges() == 0 { 0.0 } else { modularity_oracle(&g, &labels, 0.7) };
            prop_assert!((q - oracle).abs() < 1e-12);
        }
    }

    fn modularity_oracle_or_zero(g: &FeatureGraph, labels: &[usize]) -> f64 {
        if g.n_edges() == 0 {
            0.0
        } else {
            modularity_oracle(g, labels, 1.0)
        }
    }
}
