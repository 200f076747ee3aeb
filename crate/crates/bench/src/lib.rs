//! Fixtures shared by the benchmarks.

use saegraph_core::graph::{planted_partition_graph, FeatureGraph, PlantedPartitionSpec};
use saegraph_core::sim::{prepare_layer, PairStatsAccumulator, PreparedEntry};
use saegraph_core::store::synth::{PlantedLayout, SynthSource};
use saegraph_core::store::{scan_max, BinarizationRule, Binarizer, FrameSource};

/// Binarized frames of one layer pair, ready for accumulation.
pub struct PreparedPair {
    pub binarizer: Binarizer,
    pub n_features: usize,
    pub frames: Vec<(Vec<PreparedEntry>, Vec<PreparedEntry>)>,
}

pub fn synth_source(n_features: u32, n_tokens: u64, background_rate: f64) -> SynthSource {
    let spec = PlantedLayout {
        n_layers: 2,
        n_features,
        n_tokens,
        background_rate,
        chains: 8,
        and_gates: 2,
        or_gates: 2,
        blocks: 2,
        seed: 1,
        ..PlantedLayout::default()
    }
    .build()
    .expect("valid layout");
    SynthSource::new(spec).expect("valid spec")
}

pub fn prepared_pair(n_features: u32, n_tokens: u64, background_rate: f64) -> PreparedPair {
    let source = synth_source(n_features, n_tokens, background_rate);
    let max = scan_max(&source, 1).expect("scan");
    let binarizer = Binarizer::new(&max, BinarizationRule::default());
    let mut frames = Vec::with_capacity(n_tokens as usize);
    source
        .for_each_frame(0..n_tokens, &mut |f| {
            frames.push((prepare_layer(f, 0, &binarizer), prepare_layer(f, 1, &binarizer)));
            Ok(())
        })
        .expect("stream");
    PreparedPair {
        binarizer,
        n_features: n_features as usize,
        frames,
    }
}

impl PreparedPair {
    pub fn accumulate(&self, tile_edge: usize) -> PairStatsAccumulator {
        let mut acc = PairStatsAccumulator::new(0, self.n_features, self.n_features, &self.binarizer, tile_edge)
            .expect("accumulator");
        for (up, down) in &self.frames {
            acc.accumulate_prepared(up, down);
        }
        acc
    }
}

pub fn planted_graph(per_layer: u32) -> FeatureGraph {
    planted_partition_graph(&PlantedPartitionSpec {
        per_layer,
        ..PlantedPartitionSpec::default()
    })
    .expect("planted graph")
    .graph
}
