use serde::{Deserialize, Serialize};

use crate::sim::{MeasureKind, SimilarityMatrix};
use crate::{Error, FeatureId, Result};

pub const DEFAULT_GATE_MIN_SIM: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Or,
    /// Found with a measure other than necessity or sufficiency.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOptions {
    pub min_sim: f64,
    pub min_arity: usize,
    pub max_arity: usize,
    /// Permit Pearson, Jaccard and the other measures for comparison runs.
    pub allow_any_measure: bool,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            min_sim: DEFAULT_GATE_MIN_SIM,
            min_arity: 2,
            max_arity: 2,
            allow_any_measure: false,
        }
    }
}

impl GateOptions {
    /// Exactly `arity` qualifying parents.
    pub fn exact(min_sim: f64, arity: usize) -> Self {
        Self {
            min_sim,
            min_arity: arity,
            max_arity: arity,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCandidate {
    pub child: FeatureId,
    pub parents: Vec<FeatureId>,
    pub measure: MeasureKind,
    pub min_similarity: f64,
    pub kind: GateKind,
}

/// Downstream features with between `min_arity` and `max_arity` upstream
/// neighbors at value ≥ `min_sim`. Output is ordered by child, parents by
/// index.
pub fn find_gates(matrix: &SimilarityMatrix, opts: &GateOptions) -> Result<Vec<GateCandidate>> {
    let kind = match matrix.measure {
        MeasureKind::Necessity => GateKind::And,
        MeasureKind::Sufficiency => GateKind::Or,
        m if opts.allow_any_measure => {
            log::debug!("gate search over {m}");
            GateKind::Other
        }
        m => {
            return Err(Error::Invalid(format!(
                "gate search needs necessity or sufficiency, got {m}"
            )))
        }
    };
    if opts.min_arity < 2 || opts.max_arity < opts.min_arity {
        return Err(Error::Invalid(format!(
            "gate arity range {}..={} must start at 2 or more",
            opts.min_arity, opts.max_arity
        )));
    }
    if !opts.min_sim.is_finite() {
        return Err(Error::Invalid("gate min_sim must be finite".into()));
    }
    let mut parents: Vec<Vec<(u32, f64)>> = vec![Vec::new(); matrix.n_down as usize];
    for e in matrix.entries().iter().filter(|e| e.value >= opts.min_sim) {
        parents[e.down as usize].push((e.up, e.value));
    }
    let child_layer = matrix.downstream_layer();
    Ok(parents
        .into_iter()
        .enumerate()
        .filter(|(_, p)| (opts.min_arity..=opts.max_arity).contains(&p.len()))
        .map(|(down, mut p)| {
            p.sort_by_key(|&(up, _)| up);
            GateCandidate {
                child: FeatureId::new(child_layer, down as u32),
                parents: p
                    .iter()
                    .map(|&(up, _)| FeatureId::new(matrix.upstream_layer, up))
                    .collect(),
                measure: matrix.measure,
                min_similarity: p.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min),
                kind,
            }
        })
        .collect())
}
