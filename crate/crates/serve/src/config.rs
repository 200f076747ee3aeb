use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use saegraph_core::community::Algorithm;
use saegraph_core::graph::NodeRule;
use saegraph_core::sim::MeasureKind;
use saegraph_core::store::DEFAULT_RELATIVE_THRESHOLD;

use crate::ServeError;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const BIND_ENV: &str = "SAEGRAPH_BIND";

/// Service configuration, read from TOML or JSON. Relative paths are taken
/// relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    pub annotations: Option<PathBuf>,
    /// Maximum activation table, shown in feature details.
    pub max_activations: Option<PathBuf>,
    /// Classification report, shown in feature details and node classes.
    pub classification: Option<PathBuf>,
    /// Matrix files, or directories scanned for `*.saem`, used for neighbor
    /// lists.
    pub matrices: Vec<PathBuf>,
    /// Neighbors listed per direction and measure.
    pub neighbor_cap: usize,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
    pub presets: Vec<PresetConfig>,
    /// Community record files (JSON arrays).
    pub communities: Vec<PathBuf>,
    pub datasets: Vec<DatasetConfig>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: None,
            annotations: None,
            max_activations: None,
            classification: None,
            matrices: Vec::new(),
            neighbor_cap: 10,
            cors_origins: Vec::new(),
            presets: Vec::new(),
            communities: Vec::new(),
            datasets: Vec::new(),
        }
    }
}

/// A named graph: either a stored document or a recipe built at startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub name: String,
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub recipe: Option<Recipe>,
    /// Partition file whose community ids color the nodes.
    #[serde(default)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub matrices: Vec<PathBuf>,
    pub measure: MeasureKind,
    pub threshold: f64,
    #[serde(default = "yes")]
    pub weighted: bool,
    #[serde(default)]
    pub nodes: NodeRule,
    /// Detect communities at startup with this algorithm.
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

/// An activation dataset for token subgraphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub manifest: PathBuf,
    pub max_activations: PathBuf,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Preset whose graph the token subgraph is cut from.
    pub preset: String,
}

fn default_theta() -> f64 {
    DEFAULT_RELATIVE_THRESHOLD
}

impl ServeConfig {
    /// Reads `.json` as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ServeConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    /// Makes every relative path relative to `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.annotations.iter_mut().for_each(fix);
        self.max_activations.iter_mut().for_each(fix);
        self.classification.iter_mut().for_each(fix);
        self.matrices.iter_mut().for_each(fix);
        self.communities.iter_mut().for_each(fix);
        for p in &mut self.presets {
            p.graph.iter_mut().for_each(fix);
            p.partition.iter_mut().for_each(fix);
            if let Some(r) = &mut p.recipe {
                r.matrices.iter_mut().for_each(fix);
            }
        }
        for d in &mut self.datasets {
            fix(&mut d.manifest);
            fix(&mut d.max_activations);
        }
    }

    /// Every file or directory the configuration refers to.
    pub fn artifact_paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        out.extend(self.annotations.as_deref());
        out.extend(self.max_activations.as_deref());
        out.extend(self.classification.as_deref());
        out.extend(self.matrices.iter().map(PathBuf::as_path));
        out.extend(self.communities.iter().map(PathBuf::as_path));
        for p in &self.presets {
            out.extend(p.graph.as_deref());
            out.extend(p.partition.as_deref());
            if let Some(r) = &p.recipe {
                out.extend(r.matrices.iter().map(PathBuf::as_path));
            }
        }
        for d in &self.datasets {
            out.push(&d.manifest);
            out.push(&d.max_activations);
        }
        out
    }

    /// Referenced paths that do not exist.
    pub fn missing_artifacts(&self) -> Vec<PathBuf> {
        self.artifact_paths()
            .into_iter()
            .filter(|p| !p.exists())
            .map(Path::to_path_buf)
            .collect()
    }
}

/// `--bind` beats the environment, which beats the file.
pub fn resolve_bind(flag: Option<&str>, env: Option<&str>, file: Option<&str>) -> String {
    flag.or(env).or(file).unwrap_or(DEFAULT_BIND).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_precedence() {
        assert_eq!(resolve_bind(Some("a:1"), Some("b:2"), Some("c:3")), "a:1");
        assert_eq!(resolve_bind(None, Some("b:2"), Some("c:3")), "b:2");
        assert_eq!(resolve_bind(None, None, Some("c:3")), "c:3");
        assert_eq!(resolve_bind(None, None, None), DEFAULT_BIND);
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("serve.toml");
        std::fs::write(
            &toml_path,
            r#"
annotations = "ann.csv"
neighbor_cap = 3

[[presets]]
name = "p"
graph = "/abs/graph.json"

[[presets]]
name = "q"
[presets.recipe]
matrices = ["m"]
measure = "jaccard"
threshold = 0.1
nodes = { rule = "all" }
algorithm = "leiden"
"#,
        )
        .unwrap();
        let t = ServeConfig::load(&toml_path).unwrap();
        assert_eq!(t.annotations, Some(dir.path().join("ann.csv")));
        assert_eq!(t.presets[0].graph, Some(PathBuf::from("/abs/graph.json")));
        let r = t.presets[1].recipe.as_ref().unwrap();
        assert_eq!(r.nodes, NodeRule::All);
        assert!(r.weighted);

        let json_path = dir.path().join("serve.json");
        std::fs::write(&json_path, serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(ServeConfig::load(&json_path).unwrap(), t);

        assert_eq!(t.missing_artifacts().len(), 3);
        std::fs::write(dir.path().join("bad.toml"), "colour = 1").unwrap();
        assert!(ServeConfig::load(dir.path().join("bad.toml")).is_err());
    }
}
