//! Turning accumulated statistics into similarity values.

use serde::{Deserialize, Serialize};

use super::accum::{PairCell, PairStatsAccumulator};
use super::matrix::{AbsenceCounts, MatrixEntry, SimilarityMatrix};
use super::measure::MeasureKind;
use crate::{Error, Result};

/// Pairs with this many co-activations or fewer are treated as never
/// co-firing and left out of every matrix.
pub const DEFAULT_MIN_CO: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalizeOptions {
    /// `None` disables the co-activation rule.
    pub min_co: Option<u64>,
    /// Sparsification floor applied after finalizing.
    pub floor: Option<f64>,
}

impl Default for FinalizeOptions {
    fn default() -> Self {
        Self {
            min_co: Some(DEFAULT_MIN_CO),
            floor: None,
        }
    }
}

impl FinalizeOptions {
    pub fn with_min_co(min_co: Option<u64>) -> Self {
        Self { min_co, floor: None }
    }
}

/// Per-pair inputs shared by all measures.
struct PairInputs {
    n: f64,
    a: u64,
    b: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    cell: PairCell,
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

/// Measure value, or `None` when undefined for this pair.
fn value(measure: MeasureKind, p: &PairInputs) -> Option<f64> {
    let c = p.cell.co;
    match measure {
        MeasureKind::Pearson => {
            let cov = p.n * p.cell.cross - p.sx * p.sy;
            let vx = p.n * p.sxx - p.sx * p.sx;
            let vy = p.n * p.syy - p.sy * p.sy;
            (vx > 0.0 && vy > 0.0).then(|| clamp(cov / (vx * vy).sqrt(), -1.0, 1.0))
        }
        MeasureKind::Jaccard => {
            let union = p.a + p.b - c;
            (union > 0).then(|| c as f64 / union as f64)
        }
        MeasureKind::Sufficiency => (p.a > 0).then(|| c as f64 / p.a as f64),
        MeasureKind::Necessity => (p.b > 0).then(|| c as f64 / p.b as f64),
        MeasureKind::Uncentered => {
            (p.sxx > 0.0 && p.syy > 0.0).then(|| clamp(p.cell.cross / (p.sxx * p.syy).sqrt(), -1.0, 1.0))
        }
        MeasureKind::UncenteredMean => Some(p.cell.cross / p.n),
        MeasureKind::DecoderCosine => unreachable!("rejected before finalizing"),
    }
}

/// Entries and absence counts over the tiles `acc` owns, in tile order.
pub(crate) fn finalize_parts(
    acc: &PairStatsAccumulator,
    measure: MeasureKind,
    min_co: Option<u64>,
) -> Result<(Vec<MatrixEntry>, AbsenceCounts)> {
    if !measure.is_streamed() {
        return Err(Error::Invalid(format!(
            "{measure} is computed from SAE weights, not activation statistics"
        )));
    }
    if acc.n_tokens() < 2 {
        return Err(Error::Invalid(format!(
            "finalizing needs at least 2 tokens, got {}",
            acc.n_tokens()
        )));
    }
    let layout = acc.layout();
    let (up, down) = (acc.up(), acc.down());
    let n = acc.n_tokens() as f64;
    let mut entries = Vec::new();
    let mut absent = AbsenceCounts::default();
    for (tile, cells) in acc.owned_tiles() {
        let width = layout.width(tile.col);
        for (k, &cell) in cells.iter().enumerate() {
            let i = tile.row * layout.edge + k / width;
            let j = tile.col * layout.edge + k % width;
            if min_co.is_some_and(|m| cell.co <= m) {
                absent.low_coactivation += 1;
                continue;
            }
            let inputs = PairInputs {
                n,
                a: up.active[i],
                b: down.active[j],
                sx: up.sum[i],
                sy: down.sum[j],
                sxx: up.sum_sq[i],
                syy: down.sum_sq[j],
                cell,
            };
            match value(measure, &inputs) {
                Some(v) => entries.push(MatrixEntry {
                    up: i as u32,
                    down: j as u32,
                    value: v,
                }),
                None => absent.undefined += 1,
            }
        }
    }
    Ok((entries, absent))
}

/// Finalizes one measure over the pairs the accumulator owns. Pairs in
/// tiles it does not own are neither stored nor counted as absent.
pub fn finalize(acc: &PairStatsAccumulator, measure: MeasureKind, opts: FinalizeOptions) -> Result<SimilarityMatrix> {
    let (mut entries, absent) = finalize_parts(acc, measure, opts.min_co)?;
    entries.sort_unstable_by_key(|e| (e.up, e.down));
    let matrix = SimilarityMatrix::from_sorted_parts(
        measure,
        acc.upstream_layer(),
        acc.n_up() as u32,
        acc.n_down() as u32,
        opts.min_co,
        None,
        absent,
        entries,
    );
    Ok(match opts.floor {
        Some(floor) => matrix.sparsify(floor),
        None => matrix,
    })
}

pub fn finalize_pearson(acc: &PairStatsAccumulator, min_co: Option<u64>) -> Result<SimilarityMatrix> {
    finalize(acc, MeasureKind::Pearson, FinalizeOptions::with_min_co(min_co))
}

pub fn finalize_jaccard(acc: &PairStatsAccumulator, min_co: Option<u64>) -> Result<SimilarityMatrix> {
    finalize(acc, MeasureKind::Jaccard, FinalizeOptions::with_min_co(min_co))
}

pub fn finalize_sufficiency(acc: &PairStatsAccumulator, min_co: Option<u64>) -> Result<SimilarityMatrix> {
    finalize(acc, MeasureKind::Sufficiency, FinalizeOptions::with_min_co(min_co))
}

pub fn finalize_necessity(acc: &PairStatsAccumulator, min_co: Option<u64>) -> Result<SimilarityMatrix> {
    finalize(acc, MeasureKind::Necessity, FinalizeOptions::with_min_co(min_co))
}

pub fn finalize_uncentered(acc: &PairStatsAccumulator, min_co: Option<u64>) -> Result<SimilarityMatrix> {
    finalize(acc, MeasureKind::Uncentered, FinalizeOptions::with_min_co(min_co))
}

/// How many pairs of a layer pair "never" co-fire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoactivationStats {
    pub upstream_layer: u32,
    pub threshold: u64,
    /// Pairs examined (all pairs when the accumulator owns every tile).
    pub n_pairs: u64,
    /// Pairs with at most `threshold` co-activations.
    pub never: u64,
    pub fraction: f64,
}

impl CoactivationStats {
    pub(crate) fn combine(&mut self, other: &Self) {
        self.n_pairs += other.n_pairs;
        self.never += other.never;
        self.fraction = if self.n_pairs == 0 {
            1.0
        } else {
            self.never as f64 / self.n_pairs as f64
        };
    }
}

pub fn co_activation_stats(acc: &PairStatsAccumulator, threshold: u64) -> CoactivationStats {
    let mut n_pairs = 0u64;
    let mut never = 0u64;
    for (_, cells) in acc.owned_tiles() {
        n_pairs += cells.len() as u64;
        never += cells.iter().filter(|c| c.co <= threshold).count() as u64;
    }
    CoactivationStats {
        upstream_layer: acc.upstream_layer(),
        threshold,
        n_pairs,
        never,
        fraction: if n_pairs == 0 {
            1.0
        } else {
            never as f64 / n_pairs as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{BinarizationRule, Binarizer, LayerActivations, MaxActivationTable, TokenFrame};

    fn binarizer(n: usize) -> Binarizer {
        let table = MaxActivationTable::from_layers(vec![vec![1.0; n], vec![1.0; n]]).unwrap();
        Binarizer::new(&table, BinarizationRule::default())
    }

    /// Accumulator over frames given as (up active set, down active set),
    /// every firing at value 1.
    fn from_sets(n: usize, frames: &[(&[u32], &[u32])]) -> PairStatsAccumulator {
        let b = binarizer(n);
        let mut acc = PairStatsAccumulator::new(0, n, n, &b, 3).unwrap();
        for (up, down) in frames {
            let frame = TokenFrame {
                position: 0,
                layers: vec![
                    LayerActivations::from_pairs(up.iter().map(|&i| (i, 1.0))),
                    LayerActivations::from_pairs(down.iter().map(|&i| (i, 1.0))),
                ],
            };
            acc.accumulate(&frame, &b).unwrap();
        }
        acc
    }

    #[test]
    fn jaccard_by_hand() {
        // up fires on tokens {1,2,3}, down on {2,3,4}
        let acc = from_sets(2, &[(&[], &[]), (&[0], &[]), (&[0], &[0]), (&[0], &[0]), (&[], &[0])]);
        let m = finalize_jaccard(&acc, Some(0)).unwrap();
        assert_eq!(m.get(0, 0), Some(0.5));
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.absent.low_coactivation, 3);
        // without the co-activation rule disjoint pairs are stored as 0 and
        // a pair of silent features is undefined
        let m = finalize_jaccard(&acc, None).unwrap();
        assert_eq!(m.get(0, 1), Some(0.0));
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.absent.undefined, 1);
    }

    #[test]
    fn sufficiency_and_necessity_by_hand() {
        // a_0 = 4 with c = 3; b_0 = 8 with c = 2 from up feature 1
        let mut frames: Vec<(&[u32], &[u32])> = vec![(&[0, 1], &[0]), (&[0, 1], &[0]), (&[0], &[0]), (&[0], &[])];
        frames.extend(std::iter::repeat_n((&[][..], &[0u32][..]), 5));
        let acc = from_sets(2, &frames);
        let s = finalize_sufficiency(&acc, Some(0)).unwrap();
        let n = finalize_necessity(&acc, Some(0)).unwrap();
        assert_eq!(s.get(0, 0), Some(0.75));
        assert_eq!(n.get(1, 0), Some(0.25));
        assert_eq!(s.get(1, 1), None);
        for i in 0..2 {
            let c = acc.pair(i, 0).unwrap().co as f64;
            assert_eq!(n.get(i as u32, 0).unwrap() * acc.down().active[0] as f64, c);
            assert_eq!(s.get(i as u32, 0).unwrap() * acc.up().active[i] as f64, c);
        }
    }

    #[test]
    fn min_co_boundary() {
        let mut frames: Vec<(&[u32], &[u32])> = vec![(&[0], &[0]); 10];
        frames.extend(vec![(&[1u32][..], &[1u32][..]); 11]);
        frames.push((&[], &[]));
        let acc = from_sets(2, &frames);
        for measure in [
            MeasureKind::Pearson,
            MeasureKind::Jaccard,
            MeasureKind::Sufficiency,
            MeasureKind::Necessity,
            MeasureKind::Uncentered,
            MeasureKind::UncenteredMean,
        ] {
            let m = finalize(&acc, measure, FinalizeOptions::default()).unwrap();
            assert_eq!(m.get(0, 0), None, "{measure}");
            assert!(m.get(1, 1).is_some(), "{measure}");
            assert_eq!(m.absent.low_coactivation, 3);
        }
    }

    #[test]
    fn weight_measures_and_tiny_streams_are_rejected() {
        let acc = from_sets(2, &[(&[0], &[0])]);
        assert!(finalize_pearson(&acc, None).is_err());
        let acc = from_sets(2, &[(&[0], &[0]), (&[], &[])]);
        assert!(finalize(&acc, MeasureKind::DecoderCosine, FinalizeOptions::default()).is_err());
        assert!(finalize_pearson(&acc, None).is_ok());
    }

    #[test]
    fn copies_are_perfectly_similar() {
        let frames: Vec<(&[u32], &[u32])> = vec![(&[0], &[0]), (&[], &[]), (&[0], &[0]), (&[], &[])];
        let acc = from_sets(1, &frames);
        for measure in [
            MeasureKind::Pearson,
            MeasureKind::Jaccard,
            MeasureKind::Sufficiency,
            MeasureKind::Necessity,
            MeasureKind::Uncentered,
        ] {
            let m = finalize(&acc, measure, FinalizeOptions::with_min_co(None)).unwrap();
            assert_eq!(m.get(0, 0), Some(1.0), "{measure}");
        }
    }

    #[test]
    fn silent_stream_never_co_fires() {
        let silent: Vec<(&[u32], &[u32])> = vec![(&[], &[]); 20];
        let acc = from_sets(4, &silent);
        let stats = co_activation_stats(&acc, 10);
        assert_eq!(stats.n_pairs, 16);
        assert_eq!(stats.fraction, 1.0);
    }
}
