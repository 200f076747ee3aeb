use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use saegraph_core::community::{Algorithm, CommunityFilter, QualityConfig};
use saegraph_core::graph::NodeRule;
use saegraph_core::motifs::{CalibrationConfig, DEFAULT_CLASSIFY_THRESHOLD, DEFAULT_GATE_MIN_SIM};
use saegraph_core::sim::{MeasureKind, DEFAULT_FLOOR, DEFAULT_MIN_CO, DEFAULT_TILE_EDGE};
use saegraph_core::store::synth::PlantedLayout;
use saegraph_core::store::DEFAULT_RELATIVE_THRESHOLD;

use crate::CliError;

/// Every setting of a run. Read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// 0 means one worker per core.
    pub workers: usize,
    pub data: DataConfig,
    pub sims: SimsConfig,
    pub graph: GraphSection,
    pub community: CommunitySection,
    pub motifs: MotifSection,
    pub calibrate: CalibrationConfig,
    pub synth: PlantedLayout,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            workers: 0,
            data: DataConfig::default(),
            sims: SimsConfig::default(),
            graph: GraphSection::default(),
            community: CommunitySection::default(),
            motifs: MotifSection::default(),
            calibrate: CalibrationConfig::default(),
            synth: PlantedLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset manifest, or the directory holding `manifest.json`.
    pub dataset: Option<PathBuf>,
    pub max_activations: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Relative binarization threshold.
    pub theta: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            max_activations: None,
            annotations: None,
            theta: DEFAULT_RELATIVE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimsConfig {
    pub measures: Vec<MeasureKind>,
    /// Pairs with at most this many co-activations are absent.
    pub min_co: u64,
    pub disable_min_co: bool,
    /// Entries with magnitude below this are dropped; 0 keeps everything.
    pub floor: f64,
    pub tile_edge: usize,
    pub memory_budget_mb: Option<u64>,
    pub layers: Option<Vec<u32>>,
    pub never_threshold: u64,
    pub histogram_bins: usize,
}

impl Default for SimsConfig {
    fn default() -> Self {
        Self {
            measures: MeasureKind::STANDARD.to_vec(),
            min_co: DEFAULT_MIN_CO,
            disable_min_co: false,
            floor: DEFAULT_FLOOR,
            tile_edge: DEFAULT_TILE_EDGE,
            memory_budget_mb: None,
            layers: None,
            never_threshold: DEFAULT_MIN_CO,
            histogram_bins: 20,
        }
    }
}

impl SimsConfig {
    pub fn min_co(&self) -> Option<u64> {
        (!self.disable_min_co).then_some(self.min_co)
    }

    pub fn floor(&self) -> Option<f64> {
        (self.floor > 0.0).then_some(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub measure: MeasureKind,
    pub threshold: f64,
    pub weighted: bool,
    pub nodes: NodeRule,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            measure: MeasureKind::Jaccard,
            threshold: DEFAULT_FLOOR,
            weighted: true,
            nodes: NodeRule::Connected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunitySection {
    pub algorithm: Algorithm,
    pub quality: QualityConfig,
    pub filter: CommunityFilter,
}

impl Default for CommunitySection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Leiden,
            quality: QualityConfig::default(),
            filter: CommunityFilter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifSection {
    pub classify_measure: MeasureKind,
    pub classify_threshold: f64,
    pub curve_thresholds: Vec<f64>,
    pub gate_min_sim: f64,
    pub gate_arity: usize,
    pub gate_max_arity: usize,
    pub necessity_max: f64,
    pub act_min_frac: f64,
    pub fire_frac: f64,
    pub ablation_bins: usize,
}

impl Default for MotifSection {
    fn default() -> Self {
        Self {
            classify_measure: MeasureKind::Pearson,
            classify_threshold: DEFAULT_CLASSIFY_THRESHOLD,
            curve_thresholds: (0..=20).map(|k| f64::from(k) * 0.05).collect(),
            gate_min_sim: DEFAULT_GATE_MIN_SIM,
            gate_arity: 2,
            gate_max_arity: 2,
            necessity_max: 0.4,
            act_min_frac: 0.001,
            fire_frac: 0.1,
            ablation_bins: 10,
        }
    }
}

/// A threshold above the top of the range is allowed; it selects nothing.
fn in_range(name: &str, value: f64, measure: MeasureKind) -> Result<(), CliError> {
    let ok = match measure.range() {
        Some((lo, _)) => value.is_finite() && value >= lo,
        None => value.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} = {value} is outside the range of {measure}"
        )))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Missing(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.data.theta > 0.0 && self.data.theta <= 1.0) {
            return bad(format!("theta = {} must lie in (0, 1]", self.data.theta));
        }
        if self.sims.measures.is_empty() {
            return bad("no measures selected".into());
        }
        if !(self.sims.floor >= 0.0 && self.sims.floor.is_finite()) {
            return bad(format!("floor = {} must be finite and non-negative", self.sims.floor));
        }
        if self.sims.tile_edge == 0 || self.sims.histogram_bins == 0 || self.motifs.ablation_bins == 0 {
            return bad("tile_edge and bin counts must be positive".into());
        }
        in_range("graph.threshold", self.graph.threshold, self.graph.measure)?;
        if self.graph.threshold < 0.0 {
            return bad(format!(
                "graph.threshold = {} must be non-negative",
                self.graph.threshold
            ));
        }
        in_range(
            "motifs.classify_threshold",
            self.motifs.classify_threshold,
            self.motifs.classify_measure,
        )?;
        in_range("motifs.gate_min_sim", self.motifs.gate_min_sim, MeasureKind::Necessity)?;
        if self.motifs.gate_arity < 2 || self.motifs.gate_max_arity < self.motifs.gate_arity {
            return bad("gate arity must be at least 2 and not above gate_max_arity".into());
        }
        for (name, v) in [
            ("necessity_max", self.motifs.necessity_max),
            ("act_min_frac", self.motifs.act_min_frac),
            ("fire_frac", self.motifs.fire_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("motifs.{name} = {v} must lie in [0, 1]"));
            }
        }
        let resolution = self.community.quality.resolution;
        if resolution.is_nan() || resolution <= 0.0 {
            return bad("community resolution must be positive".into());
        }
        Ok(())
    }

    pub fn dataset_manifest(&self) -> PathBuf {
        match &self.data.dataset {
            Some(p) if p.is_dir() => p.join(saegraph_core::store::synth::MANIFEST_FILE),
            Some(p) => p.clone(),
            None => self
                .out_dir
                .join("data")
                .join(saegraph_core::store::synth::MANIFEST_FILE),
        }
    }

    pub fn max_path(&self) -> PathBuf {
        self.data
            .max_activations
            .clone()
            .unwrap_or_else(|| self.out_dir.join("max.json"))
    }

    pub fn sims_dir(&self) -> PathBuf {
        self.out_dir.join("sims")
    }

    pub fn graph_stem(&self) -> String {
        format!("{}_threshold_{}", self.graph.measure, self.graph.threshold)
    }

    pub fn graph_path(&self) -> PathBuf {
        self.out_dir.join("graphs").join(format!("{}.json", self.graph_stem()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("[graph]\nthreshold = 0.3\n[sims]\nmeasures = [\"pearson\"]\n").unwrap();
        assert_eq!(c.graph.threshold, 0.3);
        assert_eq!(c.graph.measure, MeasureKind::Jaccard);
        assert_eq!(c.sims.measures, vec![MeasureKind::Pearson]);
        assert_eq!(c.sims.min_co(), Some(10));
        assert_eq!(c.sims.floor(), Some(0.1));
        assert!(toml::from_str::<RunConfig>("[graph]\nthreshhold = 0.3\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.data.theta = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.graph.threshold = -0.1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.motifs.gate_arity = 1;
        assert!(c.validate().is_err());
    }
}
