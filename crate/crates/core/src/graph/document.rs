//! Portable JSON graph document consumed by the service and the explorer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, FeatureGraph, GraphConfig, NodeRule};
use crate::annotations::Annotations;
use crate::error::IoContext;
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocNode {
    pub id: FeatureId,
    pub layer: u32,
    pub explanation: Option<String>,
    pub community: Option<u32>,
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEdge {
    pub u: FeatureId,
    pub v: FeatureId,
    pub w: f64,
    /// Similarity, present when it differs from `w` (unweighted graphs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl DocEdge {
    pub fn similarity(&self) -> f64 {
        self.value.unwrap_or(self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<DocNode>,
    pub edges: Vec<DocEdge>,
    pub config: GraphConfig,
}

/// Document for `graph` with explanations filled from `annotations`;
/// features without one get a null explanation.
pub fn export_graph(graph: &FeatureGraph, annotations: &Annotations) -> GraphDocument {
    GraphDocument {
        nodes: graph
            .nodes()
            .iter()
            .map(|&id| DocNode {
                id,
                layer: id.layer,
                explanation: annotations.get(id).map(str::to_owned),
                community: None,
                class: None,
            })
            .collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| DocEdge {
                u: e.u,
                v: e.v,
                w: e.w,
                value: (e.value != e.w).then_some(e.value),
            })
            .collect(),
        config: graph.config().clone(),
    }
}

impl GraphDocument {
    pub fn with_communities(mut self, communities: &BTreeMap<FeatureId, u32>) -> Self {
        for node in &mut self.nodes {
            node.community = communities.get(&node.id).copied();
        }
        self
    }

    pub fn with_classes(mut self, classes: &BTreeMap<FeatureId, String>) -> Self {
        for node in &mut self.nodes {
            node.class = classes.get(&node.id).cloned();
        }
        self
    }

    pub fn to_graph(&self) -> Result<FeatureGraph> {
        for n in &self.nodes {
            if n.layer != n.id.layer {
                return Err(Error::Format(format!("node {} declares layer {}", n.id, n.layer)));
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                u: e.u,
                v: e.v,
                w: e.w,
                value: e.similarity(),
            })
            .collect();
        FeatureGraph::from_parts(self.config.clone(), self.nodes.iter().map(|n| n.id).collect(), edges)
    }

    /// The document a rebuild at `threshold` would give: edges with
    /// similarity `> threshold`; under the connected-node rule, nodes left
    /// without edges are dropped. Node decorations are kept.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < self.config.threshold {
            return Err(Error::Invalid(format!(
                "threshold {threshold} is below the build threshold {}",
                self.config.threshold
            )));
        }
        let edges: Vec<DocEdge> = self
            .edges
            .iter()
            .filter(|e| e.similarity() > threshold)
            .cloned()
            .collect();
        let nodes = match self.config.nodes {
            NodeRule::Connected => {
                let keep: BTreeSet<FeatureId> = edges.iter().flat_map(|e| [e.u, e.v]).collect();
                self.nodes.iter().filter(|n| keep.contains(&n.id)).cloned().collect()
            }
            _ => self.nodes.clone(),
        };
        Ok(Self {
            nodes,
            edges,
            config: GraphConfig {
                threshold,
                ..self.config.clone()
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph documents always serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).at(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::sim::{MatrixEntry, MeasureKind, SimilarityMatrix};

    fn graph(weighted: bool) -> FeatureGraph {
        let m = SimilarityMatrix::new(
            MeasureKind::Jaccard,
            2,
            3,
            3,
            vec![
                MatrixEntry {
                    up: 0,
                    down: 1,
                    value: 0.25,
                },
                MatrixEntry {
                    up: 2,
                    down: 2,
                    value: 0.75,
                },
            ],
        )
        .unwrap();
        let cfg = GraphConfig {
            weighted,
            ..GraphConfig::new(MeasureKind::Jaccard, 0.1)
        };
        build_graph(&[&m], &cfg).unwrap()
    }

    #[test]
    fn weights_survive_json_bit_exactly() {
        let m = SimilarityMatrix::new(
            MeasureKind::Jaccard,
            0,
            1,
            1,
            vec![MatrixEntry {
                up: 0,
                down: 0,
                value: 164.0 / 781.0,
            }],
        )
        .unwrap();
        let g = build_graph(&[&m], &GraphConfig::new(MeasureKind::Jaccard, 0.1)).unwrap();
        let doc = export_graph(&g, &Annotations::new());
        let back: GraphDocument = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(back.edges[0].similarity().to_bits(), (164.0f64 / 781.0).to_bits());
        assert_eq!(back.to_json(), doc.to_json());
    }

    #[test]
    fn empty_graph_document() {
        let g = FeatureGraph::from_parts(GraphConfig::new(MeasureKind::Pearson, 0.95), vec![], vec![]).unwrap();
        let doc = export_graph(&g, &Annotations::new());
        let json: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(json["nodes"], serde_json::json!([]));
        assert_eq!(json["edges"], serde_json::json!([]));
        assert_eq!(json["config"]["measure"], "pearson");
    }

    #[test]
    fn round_trip_and_partial_annotations() {
        for weighted in [true, false] {
            let g = graph(weighted);
            let mut notes = Annotations::new();
            notes.insert(FeatureId::new(2, 0), "numbers");
            let doc = export_graph(&g, &notes);
            assert_eq!(doc.nodes[0].explanation.as_deref(), Some("numbers"));
            assert_eq!(doc.nodes[1].explanation, None);
            let parsed: GraphDocument = serde_json::from_str(&doc.to_json()).unwrap();
            assert_eq!(parsed, doc);
            assert_eq!(parsed.to_graph().unwrap(), g);
        }
        let json: serde_json::Value =
            serde_json::from_str(&export_graph(&graph(true), &Annotations::new()).to_json()).unwrap();
        assert_eq!(json["nodes"][0]["id"], "2/0");
        assert!(json["nodes"][1]["explanation"].is_null());
        assert_eq!(json["edges"][0]["u"], "2/0");
        assert!(json["edges"][0].get("value").is_none());
    }

    #[test]
    fn threshold_override_matches_rebuild() {
        let g = graph(false);
        let doc = export_graph(&g, &Annotations::new());
        let rebuilt = export_graph(&g.raise_threshold(0.5).unwrap(), &Annotations::new());
        assert_eq!(doc.with_threshold(0.5).unwrap().to_json(), rebuilt.to_json());
        assert!(doc.with_threshold(1.1).unwrap().edges.is_empty());
        assert_eq!(doc.with_threshold(0.1).unwrap(), doc);
        assert!(doc.with_threshold(0.0).is_err());
    }
}
