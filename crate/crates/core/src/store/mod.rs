//! Activation stream storage and the operations that only need the raw stream.

mod binarize;
mod dataset;
mod maxscan;
mod shard;
mod source;
pub mod synth;

pub use binarize::{binarize, BinarizationRule, Binarizer, DEFAULT_RELATIVE_THRESHOLD};
pub use dataset::{Dataset, DatasetManifest, ShardEntry, DEFAULT_DATASET_TOKENS};
pub use maxscan::{scan_max, MaxActivationTable};
pub use shard::{
    read_shard, write_shard, LayerActivations, ShardDims, ShardReader, ShardWriter, TokenFrame, SHARD_MAGIC,
    SHARD_VERSION,
};
pub use source::{FrameSource, VecSource};
