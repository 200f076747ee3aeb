use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::shard::{ShardDims, ShardReader, TokenFrame};
use super::source::FrameSource;
use crate::error::IoContext;
use crate::{Error, Result};

/// Default token budget for similarity statistics.
pub const DEFAULT_DATASET_TOKENS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub n_tokens: u64,
}

/// JSON description of a sharded activation dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_layers: u32,
    pub n_features_per_layer: u32,
    pub n_tokens: u64,
    pub shards: Vec<ShardEntry>,
    #[serde(default)]
    pub provenance: String,
}

impl DatasetManifest {
    pub fn dims(&self) -> ShardDims {
        ShardDims {
            n_layers: self.n_layers,
            n_features: self.n_features_per_layer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.shards.iter().map(|s| s.n_tokens).sum();
        if total != self.n_tokens {
            return Err(Error::Format(format!(
                "manifest declares {} tokens but its shards hold {total}",
                self.n_tokens
            )));
        }
        if self.n_layers == 0 || self.n_features_per_layer == 0 {
            return Err(Error::Format(
                "manifest must declare at least one layer and one feature".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).at(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).at(path)
    }
}

/// A manifest together with the directory its shard paths resolve against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    root: PathBuf,
    /// Global position of the first token of each shard.
    offsets: Vec<u64>,
}

impl Dataset {
    /// Loads a manifest and checks every shard header against it. A
    /// directory is taken to hold `manifest.json`.
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let joined;
        let mut manifest_path = manifest_path.as_ref();
        if manifest_path.is_dir() {
            joined = manifest_path.join(super::synth::MANIFEST_FILE);
            manifest_path = &joined;
        }
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_manifest(manifest, root)
    }

    pub fn from_manifest(manifest: DatasetManifest, root: impl Into<PathBuf>) -> Result<Self> {
        manifest.validate()?;
        let root = root.into();
        let mut offsets = Vec::with_capacity(manifest.shards.len());
        let mut next = 0;
        for shard in &manifest.shards {
            let path = root.join(&shard.path);
            let reader = ShardReader::open(&path)?;
            if reader.dims() != manifest.dims() {
                return Err(Error::Incompatible(format!(
                    "{}: shard dims {:?} differ from manifest {:?}",
                    path.display(),
                    reader.dims(),
                    manifest.dims()
                )));
            }
            if reader.n_tokens() != shard.n_tokens {
                return Err(Error::Incompatible(format!(
                    "{}: shard holds {} tokens, manifest says {}",
                    path.display(),
                    reader.n_tokens(),
                    shard.n_tokens
                )));
            }
            offsets.push(next);
            next += shard.n_tokens;
        }
        Ok(Self {
            manifest,
            root,
            offsets,
        })
    }

    pub fn shard_path(&self, shard: usize) -> PathBuf {
        self.root.join(&self.manifest.shards[shard].path)
    }

    /// Every path the dataset depends on, manifest-relative paths resolved.
    pub fn shard_paths(&self) -> Vec<PathBuf> {
        (0..self.manifest.shards.len()).map(|i| self.shard_path(i)).collect()
    }

    /// Returns the frame at a global token position.
    pub fn frame_at(&self, position: u64) -> Result<TokenFrame> {
        if position >= self.manifest.n_tokens {
            return Err(Error::Invalid(format!(
                "token {position} out of range (dataset has {} tokens)",
                self.manifest.n_tokens
            )));
        }
        let shard = self.offsets.partition_point(|&o| o <= position) - 1;
        let mut reader = ShardReader::open_at(self.shard_path(shard), self.offsets[shard])?;
        let mut frame = TokenFrame::default();
        while reader.read_into(&mut frame)? {
            if frame.position == position {
                return Ok(frame);
            }
        }
        Err(Error::Format(format!(
            "token {position} missing from shard {}",
            self.shard_path(shard).display()
        )))
    }
}

impl FrameSource for Dataset {
    fn dims(&self) -> ShardDims {
        self.manifest.dims()
    }

    fn n_tokens(&self) -> u64 {
        self.manifest.n_tokens
    }

    /// Parts are aligned to shard boundaries so that each worker only opens
    /// whole shards.
    fn partitions(&self, n: usize) -> Vec<Range<u64>> {
        let n_shards = self.manifest.shards.len();
        if n_shards == 0 {
            return std::iter::once(0..0).collect();
        }
        let n = n.clamp(1, n_shards);
        let per = n_shards.div_ceil(n);
        (0..n_shards)
            .step_by(per)
            .map(|first| {
                let last = (first + per).min(n_shards);
                let start = self.offsets[first];
                let end = self.offsets[last - 1] + self.manifest.shards[last - 1].n_tokens;
                start..end
            })
            .collect()
    }

    fn for_each_frame(&self, range: Range<u64>, f: &mut dyn FnMut(&TokenFrame) -> Result<()>) -> Result<()> {
        let mut frame = TokenFrame::default();
        for (shard, &offset) in self.offsets.iter().enumerate() {
            let end = offset + self.manifest.shards[shard].n_tokens;
            if end <= range.start || offset >= range.end {
                continue;
            }
            let mut reader = ShardReader::open_at(self.shard_path(shard), offset)?;
            while reader.read_into(&mut frame)? {
                if frame.position >= range.end {
                    break;
                }
                if frame.position >= range.start {
                    f(&frame)?;
                }
            }
        }
        Ok(())
    }
}
