//! Cross-layer feature statistics for sparse autoencoders.
//!
//! The crate is organised as a pipeline:
//!
//! - [`store`]: the on-disk activation stream, per-feature maxima, relative
//!   binarization and a synthetic generator with planted ground truth.
//! - [`sim`]: streaming pair statistics for adjacent layers and the similarity
//!   measures finalized from them (Pearson, Jaccard, sufficiency, necessity,
//!   uncentered correlation), plus sparsification, histograms and matrix
//!   comparison.
//! - [`sae`]: encoder/decoder algebra, reconstruction error and its projection
//!   onto decoder directions, decoder cosine similarity.
//! - [`graph`]: multipartite feature graphs built from similarity matrices and
//!   the portable JSON graph document.
//! - [`community`]: modularity, Louvain and Leiden.
//! - [`motifs`]: pass-through classification, threshold curves and
//!   calibration, logic-gate search, error projection of disappearing features
//!   and ablation-effect binning.

pub mod annotations;
pub mod community;
pub mod error;
pub mod feature;
pub mod graph;
pub mod motifs;
pub mod sae;
pub mod sim;
pub mod store;

pub use error::{Error, Result};
pub use feature::FeatureId;
