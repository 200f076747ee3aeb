//! Streaming similarity statistics between features of adjacent layers.

mod accum;
mod binning;
mod compare;
mod finalize;
mod histogram;
mod matrix;
mod measure;
mod pipeline;

pub use accum::{merge, FeatureSums, PairCell, PairStatsAccumulator, PreparedEntry, TileCoord, TileLayout};
pub use binning::bin_index;
pub use compare::{compare_matrices, Confusion, MatrixComparison};
pub use finalize::{
    co_activation_stats, finalize, finalize_jaccard, finalize_necessity, finalize_pearson, finalize_sufficiency,
    finalize_uncentered, CoactivationStats, FinalizeOptions, DEFAULT_MIN_CO,
};
pub use histogram::{similarity_histogram, SimilarityHistogram};
pub use matrix::{AbsenceCounts, MatrixEntry, SimilarityMatrix, DEFAULT_FLOOR, MATRIX_MAGIC};
pub use measure::MeasureKind;
pub use pipeline::{compute_similarities, prepare_layer, SimConfig, SimRun, DEFAULT_TILE_EDGE};
