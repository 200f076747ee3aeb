//! Multipartite feature graphs: one node per feature, edges only between
//! adjacent layers.

mod document;
mod planted;

pub use document::{export_graph, DocEdge, DocNode, GraphDocument};
pub use planted::{planted_partition_graph, PlantedPartition, PlantedPartitionSpec};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sim::{MeasureKind, SimilarityMatrix};
use crate::store::{Binarizer, FrameSource, TokenFrame};
use crate::{Error, FeatureId, Result};

/// Which nodes a graph carries besides edge endpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum NodeRule {
    /// Every feature of every covered layer, isolated or not.
    All,
    /// Only features with at least one edge.
    #[default]
    Connected,
    /// Exactly these features; edges are restricted to them.
    Explicit { nodes: Vec<FeatureId> },
    /// Features binarize-active at one token.
    TokenActive { position: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub measure: MeasureKind,
    /// Edges need `value > threshold`.
    pub threshold: f64,
    /// When false every edge has weight 1 and keeps its value separately.
    pub weighted: bool,
    pub nodes: NodeRule,
}

impl GraphConfig {
    pub fn new(measure: MeasureKind, threshold: f64) -> Self {
        Self {
            measure,
            threshold,
            weighted: true,
            nodes: NodeRule::Connected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Upstream endpoint.
    pub u: FeatureId,
    /// Downstream endpoint, one layer above `u`.
    pub v: FeatureId,
    pub w: f64,
    /// Similarity the edge was admitted on.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    config: GraphConfig,
    nodes: Vec<FeatureId>,
    edges: Vec<Edge>,
}

impl FeatureGraph {
    /// Assembles a graph, checking that edges join adjacent layers, endpoints
    /// are nodes, there are no duplicates and every weight is positive.
    pub fn from_parts(config: GraphConfig, mut nodes: Vec<FeatureId>, mut edges: Vec<Edge>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        edges.sort_unstable_by_key(|e| (e.u, e.v));
        for pair in edges.windows(2) {
            if (pair[0].u, pair[0].v) == (pair[1].u, pair[1].v) {
                return Err(Error::Invalid(format!("duplicate edge {} -> {}", pair[0].u, pair[0].v)));
            }
        }
        for e in &edges {
            if e.v.layer != e.u.layer + 1 {
                return Err(Error::Invalid(format!(
                    "edge {} -> {} does not join adjacent layers",
                    e.u, e.v
                )));
            }
            if nodes.binary_search(&e.u).is_err() || nodes.binary_search(&e.v).is_err() {
                return Err(Error::Invalid(format!(
                    "edge {} -> {} has an endpoint outside the node set",
                    e.u, e.v
                )));
            }
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(Error::Invalid(format!("edge {} -> {} has weight {}", e.u, e.v, e.w)));
            }
        }
        Ok(Self { config, nodes, edges })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    /// Sorted by layer, then index.
    pub fn nodes(&self) -> &[FeatureId] {
        &self.nodes
    }

    /// Sorted by (upstream, downstream).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, f: FeatureId) -> Option<usize> {
        self.nodes.binary_search(&f).ok()
    }

    pub fn contains(&self, f: FeatureId) -> bool {
        self.node_index(f).is_some()
    }

    /// Edges as node-index pairs with weights.
    pub fn indexed_edges(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .map(|e| (self.node_index(e.u).unwrap(), self.node_index(e.v).unwrap(), e.w))
            .collect()
    }

    /// Incident edges of `f` with the other endpoint.
    pub fn neighbors(&self, f: FeatureId) -> impl Iterator<Item = (FeatureId, &Edge)> {
        self.edges.iter().filter_map(move |e| {
            if e.u == f {
                Some((e.v, e))
            } else if e.v == f {
                Some((e.u, e))
            } else {
                None
            }
        })
    }

    /// Keeps only edges with `value > threshold`. Under the connected-node
    /// rule, nodes left without edges are dropped.
    pub fn raise_threshold(&self, threshold: f64) -> Result<Self> {
        if threshold < self.config.threshold {
            return Err(Error::Invalid(format!(
                "threshold {threshold} is below the build threshold {}",
                self.config.threshold
            )));
        }
        let edges: Vec<Edge> = self.edges.iter().filter(|e| e.value > threshold).copied().collect();
        let nodes = match self.config.nodes {
            NodeRule::Connected => endpoints(&edges),
            _ => self.nodes.clone(),
        };
        let config = GraphConfig {
            threshold,
            ..self.config.clone()
        };
        Ok(Self { config, nodes, edges })
    }
}

fn endpoints(edges: &[Edge]) -> Vec<FeatureId> {
    edges
        .iter()
        .flat_map(|e| [e.u, e.v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Builds the graph of all pairs whose similarity is strictly above the
/// configured threshold. `matrices` must share the configured measure and
/// cover a contiguous run of layer pairs.
pub fn build_graph(matrices: &[&SimilarityMatrix], config: &GraphConfig) -> Result<FeatureGraph> {
    if !config.threshold.is_finite() || config.threshold < 0.0 {
        return Err(Error::Invalid(format!(
            "graph threshold {} must be finite and non-negative",
            config.threshold
        )));
    }
    let mut sorted: Vec<&SimilarityMatrix> = matrices.to_vec();
    sorted.sort_by_key(|m| m.upstream_layer);
    for m in &sorted {
        if m.measure != config.measure {
            return Err(Error::Incompatible(format!(
                "matrix for layer {} holds {}, graph is built on {}",
                m.upstream_layer, m.measure, config.measure
            )));
        }
        if let Some(floor) = m.floor {
            if config.threshold < floor {
                return Err(Error::Invalid(format!(
                    "threshold {} is below the sparsification floor {floor} of layer {}",
                    config.threshold, m.upstream_layer
                )));
            }
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].upstream_layer != pair[0].upstream_layer + 1 {
            return Err(Error::Incompatible(format!(
                "layer pairs {} and {} are not contiguous",
                pair[0].upstream_layer, pair[1].upstream_layer
            )));
        }
        if pair[1].n_up != pair[0].n_down {
            return Err(Error::Dimension(format!(
                "layer {} has {} features downstream but {} upstream",
                pair[1].upstream_layer, pair[0].n_down, pair[1].n_up
            )));
        }
    }
    let explicit: Option<BTreeSet<FeatureId>> = match &config.nodes {
        NodeRule::Explicit { nodes } => Some(nodes.iter().copied().collect()),
        _ => None,
    };
    let mut edges = Vec::new();
    for m in &sorted {
        let (lu, ld) = (m.upstream_layer, m.downstream_layer());
        for e in m.entries().iter().filter(|e| e.value > config.threshold) {
            let (u, v) = (FeatureId::new(lu, e.up), FeatureId::new(ld, e.down));
            if explicit
                .as_ref()
                .is_some_and(|set| !(set.contains(&u) && set.contains(&v)))
            {
                continue;
            }
            edges.push(Edge {
                u,
                v,
                w: if config.weighted { e.value } else { 1.0 },
                value: e.value,
            });
        }
    }
    let nodes = match &config.nodes {
        NodeRule::Connected => endpoints(&edges),
        NodeRule::All => {
            let mut nodes = Vec::new();
            if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
                nodes.extend((0..first.n_up).map(|i| FeatureId::new(first.upstream_layer, i)));
                for m in &sorted {
                    nodes.extend((0..m.n_down).map(|i| FeatureId::new(m.downstream_layer(), i)));
                }
                debug_assert!(last.downstream_layer() >= first.upstream_layer);
            }
            nodes
        }
        NodeRule::Explicit { nodes } => {
            if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
                let span = first.upstream_layer..=last.downstream_layer();
                if let Some(f) = nodes.iter().find(|f| !span.contains(&f.layer) || f.index >= first.n_up) {
                    return Err(Error::Invalid(format!("explicit node {f} is outside the matrices")));
                }
            }
            nodes.clone()
        }
        NodeRule::TokenActive { .. } => {
            return Err(Error::Invalid(
                "token-active graphs are built with token_subgraph".into(),
            ))
        }
    };
    FeatureGraph::from_parts(config.clone(), nodes, edges)
}

/// Standard induced subgraph on `nodes`, which must all belong to `graph`.
pub fn induced_subgraph(graph: &FeatureGraph, nodes: &[FeatureId]) -> Result<FeatureGraph> {
    if let Some(f) = nodes.iter().find(|f| !graph.contains(**f)) {
        return Err(Error::Invalid(format!("{f} is not a node of the graph")));
    }
    let set: BTreeSet<FeatureId> = nodes.iter().copied().collect();
    let edges = graph
        .edges
        .iter()
        .filter(|e| set.contains(&e.u) && set.contains(&e.v))
        .copied()
        .collect();
    Ok(FeatureGraph {
        config: graph.config.clone(),
        nodes: set.into_iter().collect(),
        edges,
    })
}

/// Features binarize-active at `position`, in every layer.
pub fn active_features(source: &dyn FrameSource, position: u64, binarizer: &Binarizer) -> Result<Vec<FeatureId>> {
    if position >= source.n_tokens() {
        return Err(Error::Invalid(format!(
            "token {position} outside the dataset's {} tokens",
            source.n_tokens()
        )));
    }
    let mut frame = TokenFrame::default();
    source.for_each_frame(position..position + 1, &mut |f| {
        frame = f.clone();
        Ok(())
    })?;
    let mut active = Vec::new();
    for (layer, acts) in frame.layers.iter().enumerate() {
        for (index, value) in acts.iter() {
            if binarizer.is_active(layer, index, value) {
                active.push(FeatureId::new(layer as u32, index));
            }
        }
    }
    Ok(active)
}

/// The features active at one token, with every edge of `graph` joining two
/// of them. Active features without edges are kept.
pub fn token_subgraph(
    source: &dyn FrameSource,
    position: u64,
    binarizer: &Binarizer,
    graph: &FeatureGraph,
) -> Result<FeatureGraph> {
    let active = active_features(source, position, binarizer)?;
    let set: BTreeSet<FeatureId> = active.iter().copied().collect();
    let edges = graph
        .edges
        .iter()
        .filter(|e| set.contains(&e.u) && set.contains(&e.v))
        .copied()
        .collect();
    Ok(FeatureGraph {
        config: GraphConfig {
            nodes: NodeRule::TokenActive { position },
            ..graph.config.clone()
        },
        nodes: active,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MatrixEntry;

    fn matrix(layer: u32, entries: &[(u32, u32, f64)]) -> SimilarityMatrix {
        SimilarityMatrix::new(
            MeasureKind::Jaccard,
            layer,
            4,
            4,
            entries
                .iter()
                .map(|&(up, down, value)| MatrixEntry { up, down, value })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn admission_is_strictly_above_threshold() {
        let m = matrix(0, &[(0, 0, 0.05), (1, 1, 0.1), (2, 2, 0.2)]);
        let g = build_graph(&[&m], &GraphConfig::new(MeasureKind::Jaccard, 0.1)).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.edges()[0].u, FeatureId::new(0, 2));
        assert_eq!(g.nodes(), &[FeatureId::new(0, 2), FeatureId::new(1, 2)]);
    }

    #[test]
    fn empty_matrices_give_no_edges() {
        let m = matrix(0, &[]);
        let g = build_graph(&[&m], &GraphConfig::new(MeasureKind::Jaccard, 0.1)).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges()), (0, 0));
        let all = GraphConfig {
            nodes: NodeRule::All,
            ..GraphConfig::new(MeasureKind::Jaccard, 0.1)
        };
        assert_eq!(build_graph(&[&m], &all).unwrap().n_nodes(), 8);
        assert_eq!(build_graph(&[], &all).unwrap().n_nodes(), 0);
    }

    #[test]
    fn chain_matrices_give_a_path() {
        let ms: Vec<SimilarityMatrix> = (0..3).map(|l| matrix(l, &[(l, l + 1, 0.9), (0, 3, 0.05)])).collect();
        let refs: Vec<&SimilarityMatrix> = ms.iter().rev().collect();
        let g = build_graph(&refs, &GraphConfig::new(MeasureKind::Jaccard, 0.1)).unwrap();
        assert_eq!(g.n_nodes(), 4);
        assert_eq!(g.n_edges(), 3);
        for (l, e) in g.edges().iter().enumerate() {
            assert_eq!(e.v.layer, e.u.layer + 1);
            assert_eq!(
                (e.u, e.v),
                (
                    FeatureId::new(l as u32, l as u32),
                    FeatureId::new(l as u32 + 1, l as u32 + 1)
                )
            );
        }
    }

    #[test]
    fn mixed_measures_gaps_and_low_thresholds_are_rejected() {
        let a = matrix(0, &[]);
        let c = matrix(2, &[]);
        let cfg = GraphConfig::new(MeasureKind::Jaccard, 0.1);
        assert!(build_graph(&[&a, &c], &cfg).is_err());
        assert!(build_graph(&[&a], &GraphConfig::new(MeasureKind::Pearson, 0.1)).is_err());
        let sparse = a.sparsify(0.2);
        assert!(build_graph(&[&sparse], &cfg).is_err());
    }

    #[test]
    fn unweighted_keeps_values() {
        let m = matrix(0, &[(0, 1, 0.7)]);
        let cfg = GraphConfig {
            weighted: false,
            ..GraphConfig::new(MeasureKind::Jaccard, 0.1)
        };
        let g = build_graph(&[&m], &cfg).unwrap();
        assert_eq!((g.edges()[0].w, g.edges()[0].value), (1.0, 0.7));
    }

    #[test]
    fn induced_subgraph_of_a_path() {
        let ms: Vec<SimilarityMatrix> = (0..4).map(|l| matrix(l, &[(0, 0, 0.9)])).collect();
        let refs: Vec<&SimilarityMatrix> = ms.iter().collect();
        let g = build_graph(&refs, &GraphConfig::new(MeasureKind::Jaccard, 0.1)).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges()), (5, 4));
        let sub = induced_subgraph(&g, &[FeatureId::new(0, 0), FeatureId::new(1, 0), FeatureId::new(3, 0)]).unwrap();
        assert_eq!((sub.n_nodes(), sub.n_edges()), (3, 1));
        assert_eq!(induced_subgraph(&g, g.nodes()).unwrap(), g);
        assert_eq!(induced_subgraph(&g, &[]).unwrap().n_nodes(), 0);
        assert!(induced_subgraph(&g, &[FeatureId::new(9, 0)]).is_err());
    }

    #[test]
    fn raising_the_threshold_equals_rebuilding() {
        let m0 = matrix(0, &[(0, 0, 0.3), (1, 2, 0.6), (3, 3, 0.51)]);
        let m1 = matrix(1, &[(0, 1, 0.5), (2, 2, 0.9)]);
        let cfg = GraphConfig::new(MeasureKind::Jaccard, 0.1);
        let g = build_graph(&[&m0, &m1], &cfg).unwrap();
        for t in [0.1, 0.3, 0.5, 0.55, 1.1] {
            let rebuilt = build_graph(
                &[&m0, &m1],
                &GraphConfig {
                    threshold: t,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert_eq!(g.raise_threshold(t).unwrap(), rebuilt);
        }
        assert!(g.raise_threshold(0.05).is_err());
    }
}
