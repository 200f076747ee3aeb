use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Algorithm, Partition};
use crate::graph::FeatureGraph;
use crate::sae::SaeWeights;
use crate::sim::MeasureKind;
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommunityFilter {
    pub min_size: Option<usize>,
    pub max_size: Option<usize>,
    /// Minimum number of distinct layers among the members.
    pub min_layers: Option<usize>,
}

impl CommunityFilter {
    pub fn admits(&self, size: usize, n_layers: usize) -> bool {
        self.min_size.is_none_or(|m| size >= m)
            && self.max_size.is_none_or(|m| size <= m)
            && self.min_layers.is_none_or(|m| n_layers >= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRecord {
    /// `<measure>_<algorithm>[_modularity]_threshold_<t>_size_<n>_<id>`.
    pub name: String,
    pub measure: MeasureKind,
    pub algorithm: Algorithm,
    pub quality: String,
    pub threshold: f64,
    /// Community id within the partition.
    pub id: u32,
    pub size: usize,
    pub members: Vec<FeatureId>,
    /// Minimum pairwise decoder cosine within any layer holding at least two
    /// members.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_layer_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub intra_layer_cosine_by_layer: BTreeMap<u32, f64>,
}

pub fn community_name(measure: MeasureKind, algorithm: Algorithm, threshold: f64, size: usize, id: u32) -> String {
    let quality = match algorithm {
        Algorithm::Leiden => "_modularity",
        Algorithm::Louvain => "",
    };
    format!("{measure}_{algorithm}{quality}_threshold_{threshold}_size_{size}_{id}")
}

/// Records of the communities of `partition` that pass `filter`, in id
/// order.
pub fn extract_communities(
    partition: &Partition,
    graph: &FeatureGraph,
    filter: &CommunityFilter,
) -> Result<Vec<CommunityRecord>> {
    let algorithm = partition
        .algorithm
        .ok_or_else(|| Error::Invalid("partition was not produced by a detection algorithm".into()))?;
    if let Some(f) = graph.nodes().iter().find(|f| partition.community_of(**f).is_none()) {
        return Err(Error::Invalid(format!("node {f} has no community")));
    }
    let config = graph.config();
    let mut out = Vec::new();
    for (id, members) in partition.communities().into_iter().enumerate() {
        let layers: BTreeSet<u32> = members.iter().map(|f| f.layer).collect();
        if !filter.admits(members.len(), layers.len()) {
            continue;
        }
        out.push(CommunityRecord {
            name: community_name(config.measure, algorithm, config.threshold, members.len(), id as u32),
            measure: config.measure,
            algorithm,
            quality: "modularity".into(),
            threshold: config.threshold,
            id: id as u32,
            size: members.len(),
            members,
            intra_layer_cosine: None,
            intra_layer_cosine_by_layer: BTreeMap::new(),
        });
    }
    Ok(out)
}

/// Fills the intra-layer decoder cosine statistic. Layers with a single
/// member contribute nothing; a layer with two or more members needs its
/// weights in `saes`.
pub fn annotate_intra_layer_cosine(
    record: &CommunityRecord,
    saes: &BTreeMap<u32, SaeWeights>,
) -> Result<CommunityRecord> {
    let mut by_layer: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for f in &record.members {
        by_layer.entry(f.layer).or_default().push(f.index);
    }
    let mut out = record.clone();
    out.intra_layer_cosine_by_layer.clear();
    for (layer, indices) in by_layer.into_iter().filter(|(_, v)| v.len() >= 2) {
        let sae = saes
            .get(&layer)
            .ok_or_else(|| Error::Missing(format!("SAE weights for layer {layer}")))?;
        out.intra_layer_cosine_by_layer
            .insert(layer, sae.intra_layer_cosine(&indices)?);
    }
    out.intra_layer_cosine = out.intra_layer_cosine_by_layer.values().copied().reduce(f64::min);
    Ok(out)
}
