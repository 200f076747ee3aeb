use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use saegraph_core::annotations::Annotations;
use saegraph_core::community::{detect, CommunityRecord, Partition, QualityConfig};
use saegraph_core::graph::{build_graph, export_graph, token_subgraph, FeatureGraph, GraphConfig, GraphDocument};
use saegraph_core::motifs::{ClassificationReport, FeatureClassification};
use saegraph_core::sim::{MeasureKind, SimilarityMatrix};
use saegraph_core::store::{BinarizationRule, Binarizer, Dataset, FrameSource, MaxActivationTable};
use saegraph_core::FeatureId;

use crate::config::{PresetConfig, ServeConfig};
use crate::ServeError;

pub(crate) struct Preset {
    pub doc: GraphDocument,
    /// `doc.to_json()`, served verbatim when no override is given.
    pub json: String,
    pub graph: FeatureGraph,
    pub communities: BTreeMap<FeatureId, u32>,
}

pub(crate) struct DatasetEntry {
    pub source: Dataset,
    pub binarizer: Binarizer,
    pub preset: String,
}

/// Everything the service reads, loaded once at startup.
pub struct AppState {
    pub(crate) presets: BTreeMap<String, Preset>,
    pub(crate) annotations: Annotations,
    pub(crate) max: Option<MaxActivationTable>,
    pub(crate) classes: BTreeMap<FeatureId, FeatureClassification>,
    pub(crate) matrices: BTreeMap<(MeasureKind, u32), SimilarityMatrix>,
    pub(crate) dims: Option<(u32, u32)>,
    pub(crate) neighbor_cap: usize,
    pub(crate) communities: Vec<CommunityRecord>,
    pub(crate) datasets: BTreeMap<String, DatasetEntry>,
    pub(crate) cors_origins: Vec<String>,
}

fn core(path: &Path) -> impl Fn(saegraph_core::Error) -> ServeError + '_ {
    move |e| ServeError::Artifact(format!("{}: {e}", path.display()))
}

fn matrix_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, ServeError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| ServeError::Artifact(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "saem"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_matrices(paths: &[PathBuf]) -> Result<Vec<SimilarityMatrix>, ServeError> {
    matrix_files(paths)?
        .iter()
        .map(|f| SimilarityMatrix::read(f).map_err(core(f)))
        .collect()
}

/// Sets explanations, communities and classes on the nodes that have one in
/// the given tables and leaves the rest as they are.
pub fn merge_decorations(
    mut doc: GraphDocument,
    annotations: &Annotations,
    communities: &BTreeMap<FeatureId, u32>,
    classes: &BTreeMap<FeatureId, String>,
) -> GraphDocument {
    for n in &mut doc.nodes {
        if let Some(e) = annotations.get(n.id) {
            n.explanation = Some(e.to_owned());
        }
        if let Some(&c) = communities.get(&n.id) {
            n.community = Some(c);
        }
        if let Some(c) = classes.get(&n.id) {
            n.class = Some(c.clone());
        }
    }
    doc
}

/// The document served for `graph`.
pub fn decorate(
    graph: &FeatureGraph,
    annotations: &Annotations,
    communities: &BTreeMap<FeatureId, u32>,
    classes: &BTreeMap<FeatureId, String>,
) -> GraphDocument {
    merge_decorations(export_graph(graph, annotations), annotations, communities, classes)
}

impl AppState {
    /// Loads every artifact of `config`. Missing files are listed together
    /// before anything is parsed.
    pub fn load(config: &ServeConfig) -> Result<Self, ServeError> {
        let missing = config.missing_artifacts();
        if !missing.is_empty() {
            return Err(ServeError::MissingArtifacts(missing));
        }
        let annotations = match &config.annotations {
            Some(p) => Annotations::load(p).map_err(core(p))?,
            None => Annotations::new(),
        };
        let max = match &config.max_activations {
            Some(p) => Some(MaxActivationTable::load(p).map_err(core(p))?),
            None => None,
        };
        let classes: BTreeMap<FeatureId, FeatureClassification> = match &config.classification {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| ServeError::Artifact(format!("{}: {e}", p.display())))?;
                let report: ClassificationReport =
                    serde_json::from_str(&text).map_err(|e| ServeError::Artifact(format!("{}: {e}", p.display())))?;
                report.features.into_iter().map(|c| (c.feature, c)).collect()
            }
            None => BTreeMap::new(),
        };
        let class_names: BTreeMap<FeatureId, String> =
            classes.iter().map(|(f, c)| (*f, c.forward.name().to_owned())).collect();

        let mut matrices = BTreeMap::new();
        for m in load_matrices(&config.matrices)? {
            let key = (m.measure, m.upstream_layer);
            if matrices.insert(key, m).is_some() {
                return Err(ServeError::Artifact(format!(
                    "two {} matrices for layer {}",
                    key.0, key.1
                )));
            }
        }

        let mut presets = BTreeMap::new();
        for p in &config.presets {
            let preset = load_preset(p, &annotations, &class_names)?;
            if presets.insert(p.name.clone(), preset).is_some() {
                return Err(ServeError::Config(format!("preset {:?} is defined twice", p.name)));
            }
        }

        let mut communities = Vec::new();
        for p in &config.communities {
            let text = std::fs::read_to_string(p).map_err(|e| ServeError::Artifact(format!("{}: {e}", p.display())))?;
            let records: Vec<CommunityRecord> =
                serde_json::from_str(&text).map_err(|e| ServeError::Artifact(format!("{}: {e}", p.display())))?;
            communities.extend(records);
        }

        let mut datasets = BTreeMap::new();
        for d in &config.datasets {
            if !presets.contains_key(&d.preset) {
                return Err(ServeError::Config(format!(
                    "dataset {:?} refers to unknown preset {:?}",
                    d.id, d.preset
                )));
            }
            let source = Dataset::open(&d.manifest).map_err(core(&d.manifest))?;
            let table = MaxActivationTable::load(&d.max_activations).map_err(core(&d.max_activations))?;
            let rule = BinarizationRule::new(d.theta).map_err(|e| ServeError::Config(e.to_string()))?;
            let entry = DatasetEntry {
                source,
                binarizer: Binarizer::new(&table, rule),
                preset: d.preset.clone(),
            };
            if datasets.insert(d.id.clone(), entry).is_some() {
                return Err(ServeError::Config(format!("dataset {:?} is defined twice", d.id)));
            }
        }

        let dims = max
            .as_ref()
            .map(|t| (t.n_layers(), t.n_features()))
            .or_else(|| {
                let n_layers = matrices.keys().map(|&(_, l)| l + 2).max()?;
                let n_features = matrices.values().map(|m| m.n_up.max(m.n_down)).max()?;
                Some((n_layers, n_features))
            })
            .or_else(|| {
                let nodes = presets.values().flat_map(|p| p.doc.nodes.iter().map(|n| n.id));
                nodes.fold(None, |acc: Option<(u32, u32)>, f| {
                    let (l, i) = acc.unwrap_or((0, 0));
                    Some((l.max(f.layer + 1), i.max(f.index + 1)))
                })
            });

        Ok(Self {
            presets,
            annotations,
            max,
            classes,
            matrices,
            dims,
            neighbor_cap: config.neighbor_cap,
            communities,
            datasets,
            cors_origins: config.cors_origins.clone(),
        })
    }

    pub fn preset_names(&self) -> Vec<String> {
        self.presets.keys().cloned().collect()
    }

    /// Document of one preset with edges `> threshold`, exactly as
    /// [`GraphDocument::with_threshold`] gives offline.
    pub fn graph_json(&self, preset: &str, threshold: Option<f64>) -> Result<String, crate::ApiError> {
        let p = self
            .presets
            .get(preset)
            .ok_or_else(|| crate::ApiError::not_found(format!("unknown preset {preset:?}")))?;
        match threshold {
            None => Ok(p.json.clone()),
            Some(t) if t.is_nan() || t < p.doc.config.threshold => Err(crate::ApiError::bad_request(format!(
                "threshold {t} is below the preset's build threshold {}",
                p.doc.config.threshold
            ))),
            Some(t) => p
                .doc
                .with_threshold(t)
                .map(|d| d.to_json())
                .map_err(|e| crate::ApiError::bad_request(e.to_string())),
        }
    }

    /// Token subgraph of a dataset's preset graph.
    pub fn token_document(&self, dataset: &str, position: u64) -> Result<GraphDocument, crate::ApiError> {
        let d = self
            .datasets
            .get(dataset)
            .ok_or_else(|| crate::ApiError::not_found(format!("unknown dataset {dataset:?}")))?;
        if position >= d.source.n_tokens() {
            return Err(crate::ApiError::not_found(format!(
                "token {position} outside dataset {dataset:?} of {} tokens",
                d.source.n_tokens()
            )));
        }
        let preset = &self.presets[&d.preset];
        let sub = token_subgraph(&d.source, position, &d.binarizer, &preset.graph)
            .map_err(|e| crate::ApiError::internal(e.to_string()))?;
        let class_names = self
            .classes
            .iter()
            .map(|(f, c)| (*f, c.forward.name().to_owned()))
            .collect();
        Ok(decorate(&sub, &self.annotations, &preset.communities, &class_names))
    }
}

fn load_preset(
    p: &PresetConfig,
    annotations: &Annotations,
    classes: &BTreeMap<FeatureId, String>,
) -> Result<Preset, ServeError> {
    let partition = match &p.partition {
        Some(path) => Some(Partition::load(path).map_err(core(path))?),
        None => None,
    };
    let (base, graph, mut communities) = match (&p.graph, &p.recipe) {
        (Some(path), None) => {
            let doc = GraphDocument::load(path).map_err(core(path))?;
            let graph = doc.to_graph().map_err(core(path))?;
            let stored = doc.nodes.iter().filter_map(|n| Some((n.id, n.community?))).collect();
            (Some(doc), graph, stored)
        }
        (None, Some(r)) => {
            let matrices = load_matrices(&r.matrices)?;
            let selected: Vec<&SimilarityMatrix> = matrices.iter().filter(|m| m.measure == r.measure).collect();
            if selected.is_empty() {
                return Err(ServeError::Artifact(format!(
                    "preset {:?}: no {} matrices among {:?}",
                    p.name, r.measure, r.matrices
                )));
            }
            let cfg = GraphConfig {
                measure: r.measure,
                threshold: r.threshold,
                weighted: r.weighted,
                nodes: r.nodes.clone(),
            };
            let graph =
                build_graph(&selected, &cfg).map_err(|e| ServeError::Artifact(format!("preset {:?}: {e}", p.name)))?;
            let communities = match r.algorithm {
                Some(algo) => {
                    let q = QualityConfig {
                        seed: r.seed,
                        ..QualityConfig::default()
                    };
                    detect(&graph, algo, &q)
                        .map_err(|e| ServeError::Artifact(format!("preset {:?}: {e}", p.name)))?
                        .assignment
                }
                None => BTreeMap::new(),
            };
            (None, graph, communities)
        }
        _ => {
            return Err(ServeError::Config(format!(
                "preset {:?} needs exactly one of `graph` and `recipe`",
                p.name
            )))
        }
    };
    if let Some(part) = partition {
        communities = part.assignment;
    }
    let nodes: BTreeSet<FeatureId> = graph.nodes().iter().copied().collect();
    communities.retain(|f, _| nodes.contains(f));
    let doc = match base {
        Some(doc) => merge_decorations(doc, annotations, &communities, classes),
        None => decorate(&graph, annotations, &communities, classes),
    };
    let json = doc.to_json();
    Ok(Preset {
        doc,
        json,
        graph,
        communities,
    })
}
