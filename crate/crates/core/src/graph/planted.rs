//! Random multipartite graphs with planted communities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Edge, FeatureGraph, GraphConfig, NodeRule};
use crate::sim::MeasureKind;
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartitionSpec {
    pub n_layers: u32,
    pub communities: u32,
    /// Members of each community in each layer.
    pub per_layer: u32,
    /// Edge probability between adjacent-layer members of one community.
    pub p_in: f64,
    /// Edge probability between adjacent-layer nodes of different
    /// communities.
    pub p_out: f64,
    /// Edge weights are uniform in this range.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for PlantedPartitionSpec {
    fn default() -> Self {
        Self {
            n_layers: 6,
            communities: 8,
            per_layer: 16,
            p_in: 0.4,
            p_out: 0.02,
            weight_range: (0.2, 1.0),
            seed: 0,
        }
    }
}

pub struct PlantedPartition {
    pub graph: FeatureGraph,
    /// Planted community of each node, aligned with `graph.nodes()`.
    pub labels: Vec<usize>,
}

/// Every node of every layer is kept, so labels cover isolated nodes too.
/// Feature indices are shuffled within each layer so communities are not
/// contiguous index ranges.
pub fn planted_partition_graph(spec: &PlantedPartitionSpec) -> Result<PlantedPartition> {
    let (lo, hi) = spec.weight_range;
    if !(0.0..=1.0).contains(&spec.p_in) || !(0.0..=1.0).contains(&spec.p_out) || !(lo > 0.0 && hi >= lo) {
        return Err(Error::Invalid(
            "planted partition probabilities or weights out of range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.communities * spec.per_layer;
    // community of (layer, index)
    let mut community = Vec::with_capacity(spec.n_layers as usize);
    for _ in 0..spec.n_layers {
        let mut labels: Vec<usize> = (0..width).map(|k| (k / spec.per_layer) as usize).collect();
        labels.shuffle(&mut rng);
        community.push(labels);
    }
    let mut edges = Vec::new();
    for layer in 0..spec.n_layers.saturating_sub(1) {
        for i in 0..width {
            for j in 0..width {
                let same = community[layer as usize][i as usize] == community[layer as usize + 1][j as usize];
                let p = if same { spec.p_in } else { spec.p_out };
                if rng.random_bool(p) {
                    let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
                    edges.push(Edge {
                        u: FeatureId::new(layer, i),
                        v: FeatureId::new(layer + 1, j),
                        w,
                        value: w,
                    });
                }
            }
        }
    }
    let nodes: Vec<FeatureId> = (0..spec.n_layers)
        .flat_map(|l| (0..width).map(move |i| FeatureId::new(l, i)))
        .collect();
    let labels = nodes
        .iter()
        .map(|f| community[f.layer as usize][f.index as usize])
        .collect();
    let config = GraphConfig {
        measure: MeasureKind::Jaccard,
        threshold: 0.0,
        weighted: true,
        nodes: NodeRule::All,
    };
    Ok(PlantedPartition {
        graph: FeatureGraph::from_parts(config, nodes, edges)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_graph_shape() {
        let spec = PlantedPartitionSpec {
            n_layers: 3,
            communities: 2,
            per_layer: 4,
            ..Default::default()
        };
        let p = planted_partition_graph(&spec).unwrap();
        assert_eq!(p.graph.n_nodes(), 24);
        assert_eq!(p.labels.len(), 24);
        assert_eq!(p.labels.iter().filter(|&&c| c == 0).count(), 12);
        assert!(p.graph.edges().iter().all(|e| e.v.layer == e.u.layer + 1));
        let again = planted_partition_graph(&spec).unwrap();
        assert_eq!(again.graph, p.graph);
    }
}
