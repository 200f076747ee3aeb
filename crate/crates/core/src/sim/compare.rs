use serde::{Deserialize, Serialize};

use super::binning::bin_index;
use super::matrix::SimilarityMatrix;
use crate::{Error, Result};

/// Presence of each pair in the first and second matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub both_present: u64,
    pub first_only: u64,
    pub second_only: u64,
    pub both_absent: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.both_present + self.first_only + self.second_only + self.both_absent
    }

    /// Fraction of pairs on which the two matrices agree about presence.
    pub fn agreement(&self) -> f64 {
        match self.total() {
            0 => 1.0,
            t => (self.both_present + self.both_absent) as f64 / t as f64,
        }
    }

    /// Intersection over union of the two absent sets.
    pub fn absent_overlap(&self) -> f64 {
        let union = self.both_absent + self.first_only + self.second_only;
        match union {
            0 => 1.0,
            u => self.both_absent as f64 / u as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixComparison {
    pub confusion: Confusion,
    pub agreement: f64,
    pub absent_overlap: f64,
    /// Mean |a - b| over mutually present entries (0 when there are none).
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    /// Histogram of `a - b` over mutually present entries, equal-width bins
    /// spanning `[-diff_range, diff_range]`.
    pub diff_range: f64,
    pub diff_counts: Vec<u64>,
}

pub fn compare_matrices(a: &SimilarityMatrix, b: &SimilarityMatrix, n_bins: usize) -> Result<MatrixComparison> {
    if a.measure != b.measure || a.upstream_layer != b.upstream_layer || a.n_up != b.n_up || a.n_down != b.n_down {
        return Err(Error::Incompatible(format!(
            "cannot compare {} L{} {}x{} with {} L{} {}x{}",
            a.measure, a.upstream_layer, a.n_up, a.n_down, b.measure, b.upstream_layer, b.n_up, b.n_down
        )));
    }
    if n_bins == 0 {
        return Err(Error::Invalid("difference histogram needs at least one bin".into()));
    }
    let mut confusion = Confusion::default();
    let mut diffs = Vec::new();
    let (ea, eb) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    while i < ea.len() || j < eb.len() {
        let ka = ea.get(i).map(|e| (e.up, e.down));
        let kb = eb.get(j).map(|e| (e.up, e.down));
        match (ka, kb) {
            (Some(x), Some(y)) if x == y => {
                diffs.push(ea[i].value - eb[j].value);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                confusion.first_only += 1;
                i += 1;
            }
            (Some(_), None) => {
                confusion.first_only += 1;
                i += 1;
            }
            _ => {
                confusion.second_only += 1;
                j += 1;
            }
        }
    }
    confusion.both_present = diffs.len() as u64;
    confusion.both_absent = a.total_pairs() - confusion.both_present - confusion.first_only - confusion.second_only;

    let max_abs_diff = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mean_abs_diff = if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64
    };
    let diff_range = match a.measure.range() {
        Some((lo, hi)) => hi - lo,
        None => max_abs_diff.max(f64::MIN_POSITIVE),
    };
    let mut diff_counts = vec![0u64; n_bins];
    for d in &diffs {
        diff_counts[bin_index(*d, -diff_range, diff_range, n_bins)] += 1;
    }
    Ok(MatrixComparison {
        agreement: confusion.agreement(),
        absent_overlap: confusion.absent_overlap(),
        confusion,
        mean_abs_diff,
        max_abs_diff,
        diff_range,
        diff_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{MatrixEntry, MeasureKind};

    fn matrix(entries: &[(u32, u32, f64)]) -> SimilarityMatrix {
        SimilarityMatrix::new(
            MeasureKind::Pearson,
            0,
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
    fn self_comparison() {
        let m = matrix(&[(0, 0, 0.5), (1, 2, -0.3), (3, 3, 0.9)]);
        let c = compare_matrices(&m, &m, 10).unwrap();
        assert_eq!(c.agreement, 1.0);
        assert_eq!(c.mean_abs_diff, 0.0);
        assert_eq!(c.confusion.both_present, 3);
        assert_eq!(c.confusion.both_absent, 13);
    }

    #[test]
    fn against_empty() {
        let m = matrix(&[(0, 0, 0.5), (1, 2, -0.3)]);
        let e = matrix(&[]);
        let c = compare_matrices(&m, &e, 10).unwrap();
        assert_eq!(c.confusion.first_only, 2);
        assert_eq!(c.confusion.both_present, 0);
        assert_eq!(c.confusion.second_only, 0);
        assert_eq!(c.confusion.both_absent, 14);
    }

    #[test]
    fn differences() {
        let a = matrix(&[(0, 0, 0.5), (1, 1, 0.2), (2, 2, 0.1)]);
        let b = matrix(&[(0, 0, 0.4), (1, 1, 0.4), (3, 3, 0.1)]);
        let c = compare_matrices(&a, &b, 4).unwrap();
        assert!((c.mean_abs_diff - 0.15).abs() < 1e-12);
        assert!((c.max_abs_diff - 0.2).abs() < 1e-12);
        assert_eq!(
            c.confusion,
            Confusion {
                both_present: 2,
                first_only: 1,
                second_only: 1,
                both_absent: 12
            }
        );
        assert_eq!(c.diff_counts.iter().sum::<u64>(), 2);
        assert!((c.absent_overlap - 12.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = matrix(&[]);
        let b = SimilarityMatrix::empty(MeasureKind::Jaccard, 0, 4, 4);
        assert!(compare_matrices(&a, &b, 4).is_err());
    }
}
