use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::SimilarityMatrix;

/// Distribution of per-feature high-similarity neighbor counts at one
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// neighbor count -> number of upstream features with that count
    pub distribution: BTreeMap<u32, u32>,
    pub mean: f64,
    /// Upstream features with at least one neighbor.
    pub with_any: u32,
}

/// For each threshold, counts every upstream feature's downstream neighbors
/// with value ≥ threshold.
pub fn neighbor_threshold_curve(matrix: &SimilarityMatrix, thresholds: &[f64]) -> Vec<CurvePoint> {
    // Per row, values sorted descending so each threshold is a binary search.
    let rows: Vec<Vec<f64>> = (0..matrix.n_up)
        .map(|i| {
            let mut v: Vec<f64> = matrix.row(i).iter().map(|e| e.value).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect();
    thresholds
        .iter()
        .map(|&t| {
            let mut distribution = BTreeMap::new();
            let mut total = 0u64;
            let mut with_any = 0;
            for row in &rows {
                let c = row.partition_point(|&v| v >= t) as u32;
                *distribution.entry(c).or_insert(0) += 1;
                total += u64::from(c);
                with_any += u32::from(c > 0);
            }
            CurvePoint {
                threshold: t,
                distribution,
                mean: if rows.is_empty() {
                    0.0
                } else {
                    total as f64 / rows.len() as f64
                },
                with_any,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{MatrixEntry, MeasureKind};
    use proptest::prelude::*;

    fn dense(values: &[f64], n: u32) -> SimilarityMatrix {
        let entries = values
            .iter()
            .enumerate()
            .map(|(k, &value)| MatrixEntry {
                up: k as u32 / n,
                down: k as u32 % n,
                value,
            })
            .collect();
        SimilarityMatrix::new(MeasureKind::Jaccard, 0, n, n, entries).unwrap()
    }

    #[test]
    fn extremes() {
        let m = dense(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], 3);
        let c = neighbor_threshold_curve(&m, &[0.0, 0.95]);
        assert_eq!(c[0].distribution, BTreeMap::from([(3, 3)]));
        assert_eq!(c[0].mean, 3.0);
        assert_eq!(c[1].distribution, BTreeMap::from([(0, 3)]));
        assert_eq!(c[1].with_any, 0);
    }

    proptest! {
        #[test]
        fn matches_direct_scan(values in prop::collection::vec(0.0f64..1.0, 16), t in 0.0f64..1.0) {
            let m = dense(&values, 4);
            let point = &neighbor_threshold_curve(&m, &[t])[0];
            let mut direct = BTreeMap::new();
            for i in 0..4 {
                let c = values[i * 4..i * 4 + 4].iter().filter(|&&v| v >= t).count() as u32;
                *direct.entry(c).or_insert(0u32) += 1;
            }
            prop_assert_eq!(&point.distribution, &direct);
        }
    }
}
