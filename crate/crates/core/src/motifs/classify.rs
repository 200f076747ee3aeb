//! Pass-through, disappearing and appearing features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{MeasureKind, SimilarityMatrix};
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardClass {
    PassedThrough,
    Disappearing,
    /// Last layer: there is no next layer.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardClass {
    Continued,
    Appearing,
    /// First layer: there is no previous layer.
    NotApplicable,
}

impl ForwardClass {
    pub fn name(self) -> &'static str {
        match self {
            ForwardClass::PassedThrough => "passed_through",
            ForwardClass::Disappearing => "disappearing",
            ForwardClass::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub feature: FeatureId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClassification {
    pub feature: FeatureId,
    pub forward: ForwardClass,
    pub backward: BackwardClass,
    pub best_next: Option<Neighbor>,
    pub best_prev: Option<Neighbor>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub layer: u32,
    pub n_features: u32,
    pub passed_through: u32,
    pub disappearing: u32,
    pub continued: u32,
    pub appearing: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub measure: MeasureKind,
    pub threshold: f64,
    pub layers: Vec<LayerCounts>,
    pub features: Vec<FeatureClassification>,
}

impl ClassificationReport {
    pub fn get(&self, f: FeatureId) -> Option<&FeatureClassification> {
        let first = self.layers.first()?.layer;
        let n = self.layers.first()?.n_features;
        let k = (f.layer.checked_sub(first)? * n + f.index) as usize;
        self.features.get(k).filter(|c| c.feature == f)
    }

    /// Forward class names by feature, for graph documents.
    pub fn classes(&self) -> BTreeMap<FeatureId, String> {
        self.features
            .iter()
            .map(|c| (c.feature, c.forward.name().to_owned()))
            .collect()
    }

    /// `layer,n_features,passed_through,disappearing,continued,appearing`.
    pub fn counts_table(&self) -> String {
        let mut out = String::from("layer,n_features,passed_through,disappearing,continued,appearing\n");
        for c in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.layer, c.n_features, c.passed_through, c.disappearing, c.continued, c.appearing
            ));
        }
        out
    }
}

fn best(entries: impl Iterator<Item = (u32, f64)>) -> Option<(u32, f64)> {
    // highest value; lowest index among ties
    entries.fold(None, |acc, (i, v)| match acc {
        Some((_, bv)) if bv >= v => acc,
        _ => Some((i, v)),
    })
}

/// Classifies every feature of the covered layers against threshold `t`
/// (inclusive). Absent entries count as below every threshold.
pub fn classify_features(matrices: &[&SimilarityMatrix], threshold: f64) -> Result<ClassificationReport> {
    let mut sorted = matrices.to_vec();
    sorted.sort_by_key(|m| m.upstream_layer);
    let first = sorted
        .first()
        .ok_or_else(|| Error::Invalid("classification needs at least one matrix".into()))?;
    let measure = first.measure;
    let n = first.n_up;
    for pair in sorted.windows(2) {
        if pair[1].upstream_layer != pair[0].upstream_layer + 1 {
            return Err(Error::Incompatible(
                "matrices do not cover contiguous layer pairs".into(),
            ));
        }
    }
    if let Some(m) = sorted
        .iter()
        .find(|m| m.measure != measure || m.n_up != n || m.n_down != n)
    {
        return Err(Error::Incompatible(format!(
            "matrix for layer {} differs in measure or dimensions",
            m.upstream_layer
        )));
    }
    let first_layer = first.upstream_layer;
    let n_layers = sorted.len() as u32 + 1;
    let mut features = Vec::with_capacity((n_layers * n) as usize);
    for l in 0..n_layers {
        let layer = first_layer + l;
        let next = sorted.get(l as usize);
        let prev = l.checked_sub(1).map(|p| sorted[p as usize]);
        let mut best_prev: Vec<Option<(u32, f64)>> = vec![None; n as usize];
        if let Some(prev) = prev {
            for e in prev.entries() {
                let slot = &mut best_prev[e.down as usize];
                if slot.is_none_or(|(i, v)| e.value > v || (e.value == v && e.up < i)) {
                    *slot = Some((e.up, e.value));
                }
            }
        }
        for i in 0..n {
            let feature = FeatureId::new(layer, i);
            let best_next = next.and_then(|m| best(m.row(i).iter().map(|e| (e.down, e.value))));
            let forward = match (next, best_next) {
                (None, _) => ForwardClass::NotApplicable,
                (Some(_), Some((_, v))) if v >= threshold => ForwardClass::PassedThrough,
                _ => ForwardClass::Disappearing,
            };
            let bp = best_prev[i as usize];
            let backward = match (prev, bp) {
                (None, _) => BackwardClass::NotApplicable,
                (Some(_), Some((_, v))) if v >= threshold => BackwardClass::Continued,
                _ => BackwardClass::Appearing,
            };
            features.push(FeatureClassification {
                feature,
                forward,
                backward,
                best_next: best_next.map(|(j, value)| Neighbor {
                    feature: FeatureId::new(layer + 1, j),
                    value,
                }),
                best_prev: bp.map(|(j, value)| Neighbor {
                    feature: FeatureId::new(layer - 1, j),
                    value,
                }),
            });
        }
    }
    let layers = (0..n_layers)
        .map(|l| {
            let slice = &features[(l * n) as usize..((l + 1) * n) as usize];
            let count = |p: &dyn Fn(&FeatureClassification) -> bool| slice.iter().filter(|c| p(c)).count() as u32;
            LayerCounts {
                layer: first_layer + l,
                n_features: n,
                passed_through: count(&|c| c.forward == ForwardClass::PassedThrough),
                disappearing: count(&|c| c.forward == ForwardClass::Disappearing),
                continued: count(&|c| c.backward == BackwardClass::Continued),
                appearing: count(&|c| c.backward == BackwardClass::Appearing),
            }
        })
        .collect();
    Ok(ClassificationReport {
        measure,
        threshold,
        layers,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MatrixEntry;
    use proptest::prelude::*;

    fn matrix(layer: u32, entries: &[(u32, u32, f64)]) -> SimilarityMatrix {
        SimilarityMatrix::new(
            MeasureKind::Pearson,
            layer,
            3,
            3,
            entries
                .iter()
                .map(|&(up, down, value)| MatrixEntry { up, down, value })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chain_and_absent_rows() {
        let m0 = matrix(0, &[(0, 0, 1.0), (1, 1, 0.94), (1, 2, 0.95)]);
        let m1 = matrix(1, &[(0, 0, 0.99)]);
        let r = classify_features(&[&m0, &m1], 0.95).unwrap();
        let f = FeatureId::new;
        assert_eq!(r.get(f(0, 0)).unwrap().forward, ForwardClass::PassedThrough);
        assert_eq!(r.get(f(0, 1)).unwrap().forward, ForwardClass::PassedThrough);
        assert_eq!(r.get(f(0, 1)).unwrap().best_next.unwrap().feature, f(1, 2));
        assert_eq!(r.get(f(0, 2)).unwrap().forward, ForwardClass::Disappearing);
        assert_eq!(r.get(f(0, 2)).unwrap().best_next, None);
        assert_eq!(r.get(f(2, 0)).unwrap().forward, ForwardClass::NotApplicable);
        assert_eq!(r.get(f(0, 0)).unwrap().backward, BackwardClass::NotApplicable);
        assert_eq!(r.get(f(1, 1)).unwrap().backward, BackwardClass::Appearing);
        assert_eq!(r.get(f(1, 2)).unwrap().backward, BackwardClass::Continued);
        assert_eq!(r.layers[0].passed_through, 2);
        assert_eq!(r.layers[2].continued, 1);
        assert!(r.counts_table().starts_with("layer,n_features"));
    }

    #[test]
    fn threshold_above_one_passes_nothing() {
        let m0 = matrix(0, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let r = classify_features(&[&m0], 1.0 + 1e-9).unwrap();
        assert_eq!(r.layers[0].passed_through, 0);
    }

    proptest! {
        #[test]
        fn counts_sum_and_monotone(values in prop::collection::vec(-1.0f64..1.0, 9), t in 0.0f64..1.0, dt in 0.0f64..0.5) {
            let entries: Vec<(u32, u32, f64)> = values.iter().enumerate().map(|(k, &v)| (k as u32 / 3, k as u32 % 3, v)).collect();
            let m = matrix(0, &entries);
            let lo = classify_features(&[&m], t).unwrap();
            let hi = classify_features(&[&m], t + dt).unwrap();
            prop_assert_eq!(lo.layers[0].passed_through + lo.layers[0].disappearing, 3);
            prop_assert_eq!(lo.layers[1].continued + lo.layers[1].appearing, 3);
            prop_assert!(hi.layers[0].passed_through <= lo.layers[0].passed_through);
        }
    }
}
