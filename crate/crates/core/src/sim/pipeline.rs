//! Tiled, multi-worker accumulation over a frame source.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::accum::{PairStatsAccumulator, PreparedEntry, TileCoord, TileLayout};
use super::finalize::{co_activation_stats, finalize_parts, CoactivationStats, DEFAULT_MIN_CO};
use super::matrix::{AbsenceCounts, MatrixEntry, SimilarityMatrix};
use super::measure::MeasureKind;
use crate::store::{Binarizer, FrameSource, TokenFrame};
use crate::{Error, Result};

pub const DEFAULT_TILE_EDGE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub measures: Vec<MeasureKind>,
    pub min_co: Option<u64>,
    /// Sparsification floor; `None` keeps every valid entry.
    pub floor: Option<f64>,
    pub tile_edge: usize,
    /// Upper bound on pair-state bytes held at once across all workers.
    /// Tiles that do not fit are deferred to further passes over the stream.
    pub memory_budget: Option<u64>,
    /// 0 means one worker per available core.
    pub workers: usize,
    /// Upstream layers to process; `None` means every adjacent pair.
    pub layers: Option<Vec<u32>>,
    /// Co-activation count at or below which a pair "never" co-fires, for
    /// the summary statistics.
    pub never_threshold: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            measures: MeasureKind::STANDARD.to_vec(),
            min_co: Some(DEFAULT_MIN_CO),
            floor: None,
            tile_edge: DEFAULT_TILE_EDGE,
            memory_budget: None,
            workers: 0,
            layers: None,
            never_threshold: DEFAULT_MIN_CO,
        }
    }
}

impl SimConfig {
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub n_tokens: u64,
    pub passes: usize,
    pub workers: usize,
    /// Largest pair-state allocation of any pass, summed over workers.
    pub peak_pair_bytes: u64,
    pub matrices: Vec<SimilarityMatrix>,
    pub coactivation: Vec<CoactivationStats>,
}

impl SimRun {
    pub fn matrix(&self, measure: MeasureKind, upstream_layer: u32) -> Option<&SimilarityMatrix> {
        self.matrices
            .iter()
            .find(|m| m.measure == measure && m.upstream_layer == upstream_layer)
    }
}

/// Widens one layer of a frame and binarizes it.
pub fn prepare_layer(frame: &TokenFrame, layer: usize, binarizer: &Binarizer) -> Vec<PreparedEntry> {
    let mut out = Vec::with_capacity(frame.layers[layer].len());
    prepare_layer_into(frame, layer, binarizer, &mut out);
    out
}

fn prepare_layer_into(frame: &TokenFrame, layer: usize, binarizer: &Binarizer, out: &mut Vec<PreparedEntry>) {
    out.clear();
    out.extend(frame.layers[layer].iter().map(|(index, value)| PreparedEntry {
        index,
        value: f64::from(value),
        active: binarizer.is_active(layer, index, value),
    }));
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    layer: u32,
    tile: TileCoord,
    bytes: u64,
}

fn plan_passes(units: Vec<Unit>, per_pass: Option<u64>) -> Result<Vec<Vec<Unit>>> {
    let Some(limit) = per_pass else {
        return Ok(vec![units]);
    };
    let mut passes: Vec<Vec<Unit>> = Vec::new();
    let mut current = Vec::new();
    let mut used = 0u64;
    for unit in units {
        if unit.bytes > limit {
            return Err(Error::Invalid(format!(
                "a {}-byte tile does not fit the memory budget; lower the tile edge",
                unit.bytes
            )));
        }
        if used + unit.bytes > limit {
            passes.push(std::mem::take(&mut current));
            used = 0;
        }
        used += unit.bytes;
        current.push(unit);
    }
    if !current.is_empty() || passes.is_empty() {
        passes.push(current);
    }
    Ok(passes)
}

/// Accumulates every requested layer pair over `source` and finalizes the
/// configured measures.
pub fn compute_similarities(source: &dyn FrameSource, binarizer: &Binarizer, config: &SimConfig) -> Result<SimRun> {
    let dims = source.dims();
    if dims.n_layers as usize != binarizer.n_layers() || dims.n_features as usize != binarizer.n_features() {
        return Err(Error::Dimension(format!(
            "source is {}x{} but the max table is {}x{}",
            dims.n_layers,
            dims.n_features,
            binarizer.n_layers(),
            binarizer.n_features()
        )));
    }
    if dims.n_layers < 2 {
        return Err(Error::Dimension("need at least two layers".into()));
    }
    if let Some(m) = config.measures.iter().find(|m| !m.is_streamed()) {
        return Err(Error::Invalid(format!("{m} is not an activation measure")));
    }
    let layers: Vec<u32> = match &config.layers {
        Some(layers) => {
            if let Some(&bad) = layers.iter().find(|&&l| l + 1 >= dims.n_layers) {
                return Err(Error::Dimension(format!("layer {bad} has no downstream layer")));
            }
            let mut layers = layers.clone();
            layers.sort_unstable();
            layers.dedup();
            layers
        }
        None => (0..dims.n_layers - 1).collect(),
    };
    let n = dims.n_features as usize;
    let layout = TileLayout::new(n, n, config.tile_edge)?;
    let workers = config.effective_workers();
    let partitions = source.partitions(workers);
    let n_workers = partitions.len() as u64;

    let units = layers
        .iter()
        .flat_map(|&layer| {
            layout.all_tiles().into_iter().map(move |tile| Unit {
                layer,
                tile,
                bytes: layout.bytes(tile) as u64,
            })
        })
        .collect();
    let passes = plan_passes(units, config.memory_budget.map(|b| b / n_workers))?;
    log::info!(
        "{} layer pairs, {} tokens, {} workers, {} pass(es)",
        layers.len(),
        source.n_tokens(),
        n_workers,
        passes.len()
    );

    let mut collected: BTreeMap<(MeasureKind, u32), (Vec<MatrixEntry>, AbsenceCounts)> = BTreeMap::new();
    let mut coactivation: BTreeMap<u32, CoactivationStats> = BTreeMap::new();
    let mut peak_pair_bytes = 0u64;
    for (p, pass) in passes.iter().enumerate() {
        let mut by_layer: BTreeMap<u32, Vec<TileCoord>> = BTreeMap::new();
        for unit in pass {
            by_layer.entry(unit.layer).or_default().push(unit.tile);
        }
        let pass_bytes: u64 = pass.iter().map(|u| u.bytes).sum();
        peak_pair_bytes = peak_pair_bytes.max(pass_bytes * n_workers);
        log::debug!("pass {}: {} tiles, {} bytes per worker", p + 1, pass.len(), pass_bytes);

        let results: Vec<Result<Vec<PairStatsAccumulator>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = partitions
                .iter()
                .map(|range| {
                    let by_layer = &by_layer;
                    let range = range.clone();
                    scope.spawn(move || run_worker(source, binarizer, layout, by_layer, range))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("similarity worker panicked"))
                .collect()
        });
        let mut merged: Option<Vec<PairStatsAccumulator>> = None;
        for result in results {
            let accs = result?;
            match merged.as_mut() {
                None => merged = Some(accs),
                Some(total) => {
                    for (t, a) in total.iter_mut().zip(&accs) {
                        t.merge_from(a)?;
                    }
                }
            }
        }
        for acc in merged.unwrap_or_default() {
            let layer = acc.upstream_layer();
            let stats = co_activation_stats(&acc, config.never_threshold);
            coactivation
                .entry(layer)
                .and_modify(|s| s.combine(&stats))
                .or_insert(stats);
            for &measure in &config.measures {
                let (mut entries, mut absent) = finalize_parts(&acc, measure, config.min_co)?;
                if let Some(floor) = config.floor {
                    let before = entries.len();
                    entries.retain(|e| e.value.abs() >= floor);
                    absent.below_floor += (before - entries.len()) as u64;
                }
                let slot = collected.entry((measure, layer)).or_default();
                slot.0.extend(entries);
                slot.1.add(&absent);
            }
        }
    }

    let mut matrices = Vec::new();
    for &layer in &layers {
        for &measure in &config.measures {
            let (mut entries, absent) = collected.remove(&(measure, layer)).unwrap_or_default();
            entries.sort_unstable_by_key(|e| (e.up, e.down));
            matrices.push(SimilarityMatrix::from_sorted_parts(
                measure,
                layer,
                n as u32,
                n as u32,
                config.min_co,
                config.floor.filter(|&f| f > 0.0),
                absent,
                entries,
            ));
        }
    }
    Ok(SimRun {
        n_tokens: source.n_tokens(),
        passes: passes.len(),
        workers: n_workers as usize,
        peak_pair_bytes,
        matrices,
        coactivation: coactivation.into_values().collect(),
    })
}

fn run_worker(
    source: &dyn FrameSource,
    binarizer: &Binarizer,
    layout: TileLayout,
    by_layer: &BTreeMap<u32, Vec<TileCoord>>,
    range: std::ops::Range<u64>,
) -> Result<Vec<PairStatsAccumulator>> {
    let mut accs = by_layer
        .iter()
        .map(|(&layer, tiles)| PairStatsAccumulator::with_tiles(layer, layout, binarizer, tiles))
        .collect::<Result<Vec<_>>>()?;
    let n_layers = binarizer.n_layers();
    let mut needed = vec![false; n_layers];
    for &layer in by_layer.keys() {
        needed[layer as usize] = true;
        needed[layer as usize + 1] = true;
    }
    let mut prepared: Vec<Vec<PreparedEntry>> = vec![Vec::new(); n_layers];
    source.for_each_frame(range, &mut |frame| {
        for (layer, buf) in prepared.iter_mut().enumerate() {
            if needed[layer] {
                prepare_layer_into(frame, layer, binarizer, buf);
            }
        }
        for acc in accs.iter_mut() {
            let k = acc.upstream_layer() as usize;
            acc.accumulate_prepared(&prepared[k], &prepared[k + 1]);
        }
        Ok(())
    })?;
    Ok(accs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{finalize, FinalizeOptions};
    use crate::store::{scan_max, BinarizationRule, LayerActivations, ShardDims, VecSource};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_source(seed: u64, n_tokens: usize) -> VecSource {
        let dims = ShardDims {
            n_layers: 3,
            n_features: 9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n_tokens)
            .map(|t| TokenFrame {
                position: t as u64,
                layers: (0..3)
                    .map(|_| {
                        let mut pairs = Vec::new();
                        for i in 0..9u32 {
                            if rng.random_bool(0.3) {
                                pairs.push((i, rng.random_range(0.1f32..4.0)));
                            }
                        }
                        LayerActivations::from_pairs(pairs)
                    })
                    .collect(),
            })
            .collect();
        VecSource::new(dims, frames).unwrap()
    }

    #[test]
    fn tiling_passes_and_workers_do_not_change_results() {
        let source = random_source(7, 400);
        let table = scan_max(&source, 1).unwrap();
        let binarizer = Binarizer::new(&table, BinarizationRule::default());
        let base = SimConfig {
            measures: MeasureKind::ALL[..6].to_vec(),
            min_co: Some(3),
            workers: 1,
            ..SimConfig::default()
        };
        let reference = compute_similarities(&source, &binarizer, &base).unwrap();
        assert_eq!(reference.passes, 1);
        assert_eq!(reference.matrices.len(), 12);

        let tiled = SimConfig {
            tile_edge: 4,
            memory_budget: Some(2 * 16 * 16 * 3),
            workers: 3,
            ..base.clone()
        };
        let run = compute_similarities(&source, &binarizer, &tiled).unwrap();
        assert!(run.passes > 1);
        for (a, b) in reference.matrices.iter().zip(&run.matrices) {
            assert_eq!(a.entries().len(), b.entries().len());
            assert_eq!(a.absent, b.absent);
            for (x, y) in a.entries().iter().zip(b.entries()) {
                assert_eq!((x.up, x.down), (y.up, y.down));
                assert!((x.value - y.value).abs() < 1e-12);
            }
        }
        assert_eq!(reference.coactivation, run.coactivation);
    }

    #[test]
    fn pipeline_agrees_with_direct_accumulation() {
        let source = random_source(3, 300);
        let table = scan_max(&source, 1).unwrap();
        let binarizer = Binarizer::new(&table, BinarizationRule::default());
        let mut acc = PairStatsAccumulator::new(1, 9, 9, &binarizer, 5).unwrap();
        for frame in source.frames() {
            acc.accumulate(frame, &binarizer).unwrap();
        }
        let config = SimConfig {
            layers: Some(vec![1]),
            workers: 1,
            floor: Some(0.1),
            ..SimConfig::default()
        };
        let run = compute_similarities(&source, &binarizer, &config).unwrap();
        for m in MeasureKind::STANDARD {
            let opts = FinalizeOptions {
                min_co: Some(10),
                floor: Some(0.1),
            };
            assert_eq!(run.matrix(m, 1).unwrap(), &finalize(&acc, m, opts).unwrap());
        }
        assert!(run.matrix(MeasureKind::Pearson, 0).is_none());
    }

    #[test]
    fn impossible_budget_and_bad_layers_are_errors() {
        let source = random_source(1, 10);
        let table = scan_max(&source, 1).unwrap();
        let binarizer = Binarizer::new(&table, BinarizationRule::default());
        let tight = SimConfig {
            memory_budget: Some(8),
            workers: 1,
            ..SimConfig::default()
        };
        assert!(compute_similarities(&source, &binarizer, &tight).is_err());
        let bad = SimConfig {
            layers: Some(vec![2]),
            ..SimConfig::default()
        };
        assert!(compute_similarities(&source, &binarizer, &bad).is_err());
        let weights = SimConfig {
            measures: vec![MeasureKind::DecoderCosine],
            ..SimConfig::default()
        };
        assert!(compute_similarities(&source, &binarizer, &weights).is_err());
    }
}
