use serde::{Deserialize, Serialize};

use super::maxscan::MaxActivationTable;
use super::shard::TokenFrame;
use crate::{Error, Result};

/// A feature counts as active when it reaches at least this fraction of its
/// dataset maximum.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarizationRule {
    pub theta: f64,
}

impl Default for BinarizationRule {
    fn default() -> Self {
        Self {
            theta: DEFAULT_RELATIVE_THRESHOLD,
        }
    }
}

impl BinarizationRule {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Invalid(format!("relative threshold {theta} outside [0, 1]")));
        }
        Ok(Self { theta })
    }

    /// `value / max >= theta`, inclusive. Zero-max features are never active.
    #[inline]
    pub fn is_active(&self, value: f32, max: f32) -> bool {
        max > 0.0 && value > 0.0 && f64::from(value) / f64::from(max) >= self.theta
    }
}

/// A max table paired with a rule, with the per-feature maxima widened once.
#[derive(Debug, Clone)]
pub struct Binarizer {
    rule: BinarizationRule,
    n_features: usize,
    max: Vec<f64>,
    fingerprint: u64,
}

impl Binarizer {
    pub fn new(table: &MaxActivationTable, rule: BinarizationRule) -> Self {
        let max: Vec<f64> = (0..table.n_layers())
            .flat_map(|l| table.layer(l).iter().map(|&v| f64::from(v)))
            .collect();
        // FNV-1a over the raw bits; used to refuse merging accumulators that
        // were binarized against different tables.
        let mut fingerprint: u64 = 0xcbf2_9ce4_8422_2325;
        for bits in max.iter().map(|v| v.to_bits()).chain([rule.theta.to_bits()]) {
            for byte in bits.to_le_bytes() {
                fingerprint ^= u64::from(byte);
                fingerprint = fingerprint.wrapping_mul(0x0100_0000_01b3);
            }
        }
        Self {
            rule,
            n_features: table.n_features() as usize,
            max,
            fingerprint,
        }
    }

    pub fn rule(&self) -> BinarizationRule {
        self.rule
    }

    pub fn n_layers(&self) -> usize {
        self.max.len() / self.n_features.max(1)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    #[inline]
    pub fn is_active(&self, layer: usize, index: u32, value: f32) -> bool {
        let max = self.max[layer * self.n_features + index as usize];
        max > 0.0 && value > 0.0 && f64::from(value) / max >= self.rule.theta
    }
}

/// Active feature indices per layer for one frame.
pub fn binarize(frame: &TokenFrame, table: &MaxActivationTable, rule: BinarizationRule) -> Vec<Vec<u32>> {
    frame
        .layers
        .iter()
        .enumerate()
        .map(|(layer, acts)| {
            let max = table.layer(layer as u32);
            acts.iter()
                .filter(|&(index, value)| rule.is_active(value, max[index as usize]))
                .map(|(index, _)| index)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::LayerActivations;
    use proptest::prelude::*;

    fn one_feature(value: f32, max: f32, theta: f64) -> bool {
        let table = MaxActivationTable::from_layers(vec![vec![max]]).unwrap();
        let frame = TokenFrame {
            position: 0,
            layers: vec![LayerActivations::from_pairs([(0, value)])],
        };
        let active = binarize(&frame, &table, BinarizationRule::new(theta).unwrap());
        let via_binarizer = Binarizer::new(&table, BinarizationRule::new(theta).unwrap()).is_active(0, 0, value);
        assert_eq!(active[0].contains(&0), via_binarizer);
        via_binarizer
    }

    #[test]
    fn boundary_is_inclusive() {
        assert!(one_feature(2.0, 10.0, 0.2));
        assert!(!one_feature(1.99, 10.0, 0.2));
        assert!(one_feature(3.0, 10.0, 0.3));
        assert!(one_feature(7.0, 10.0, 0.7));
    }

    #[test]
    fn zero_threshold_activates_every_listed_value() {
        assert!(one_feature(1e-6, 10.0, 0.0));
    }

    #[test]
    fn zero_max_is_never_active() {
        assert!(!one_feature(1.0, 0.0, 0.0));
    }

    #[test]
    fn rule_rejects_out_of_range_theta() {
        assert!(BinarizationRule::new(-0.1).is_err());
        assert!(BinarizationRule::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn raising_theta_never_adds_active_features(
            values in prop::collection::vec(0.001f32..10.0, 1..20),
            lo in 0.0f64..1.0,
            delta in 0.0f64..0.5,
        ) {
            let hi = (lo + delta).min(1.0);
            let max = values.iter().cloned().fold(0.0f32, f32::max);
            let n = values.len();
            let table = MaxActivationTable::from_layers(vec![vec![max; n]]).unwrap();
            let frame = TokenFrame {
                position: 0,
                layers: vec![LayerActivations::from_pairs(values.iter().enumerate().map(|(i, &v)| (i as u32, v)))],
            };
            let low = binarize(&frame, &table, BinarizationRule::new(lo).unwrap());
            let high = binarize(&frame, &table, BinarizationRule::new(hi).unwrap());
            prop_assert!(high[0].iter().all(|i| low[0].contains(i)));
        }
    }
}
