use serde::{Deserialize, Serialize};

use super::binning::bin_index;
use super::matrix::SimilarityMatrix;
use super::measure::MeasureKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub measure: MeasureKind,
    pub upstream_layer: u32,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Stored entries (sum of `counts`).
    pub present: u64,
    /// Pairs with no stored entry.
    pub absent: u64,
}

impl SimilarityHistogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64)
            .collect()
    }
}

/// Equal-width histogram of the stored entries over the measure's range.
/// Unbounded measures use the observed range.
pub fn similarity_histogram(matrix: &SimilarityMatrix, n_bins: usize) -> Result<SimilarityHistogram> {
    if n_bins == 0 {
        return Err(Error::Invalid("histogram needs at least one bin".into()));
    }
    let (lo, hi) = matrix.measure.range().unwrap_or_else(|| {
        let (lo, hi) = matrix
            .entries()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                (lo.min(e.value), hi.max(e.value))
            });
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        }
    });
    let mut counts = vec![0u64; n_bins];
    for e in matrix.entries() {
        counts[bin_index(e.value, lo, hi, n_bins)] += 1;
    }
    Ok(SimilarityHistogram {
        measure: matrix.measure,
        upstream_layer: matrix.upstream_layer,
        lo,
        hi,
        counts,
        present: matrix.len() as u64,
        absent: matrix.n_absent(),
    })
}
