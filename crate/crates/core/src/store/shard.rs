//! Token-major sparse activation shards.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    "SAEA"
//! version  u32
//! n_layers u32
//! n_feat   u32
//! n_tokens u64
//! n_tokens records, each: for every layer
//!     count u32, then count x (index u32, value f32)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::IoContext;
use crate::{Error, Result};

pub const SHARD_MAGIC: [u8; 4] = *b"SAEA";
pub const SHARD_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 4 + 4 + 8;
const TOKEN_COUNT_OFFSET: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardDims {
    pub n_layers: u32,
    pub n_features: u32,
}

/// Nonzero activations of one layer at one token, sorted by feature index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerActivations {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl LayerActivations {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f32)>) -> Self {
        let (indices, values) = pairs.into_iter().unzip();
        Self { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: u32) -> Option<f32> {
        self.indices.binary_search(&index).ok().map(|pos| self.values[pos])
    }

    pub fn clear(&mut self) {
        self.indices.clear();
        self.values.clear();
    }

    pub fn push(&mut self, index: u32, value: f32) {
        self.indices.push(index);
        self.values.push(value);
    }
}

/// All SAE activations recorded for one token position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenFrame {
    pub position: u64,
    pub layers: Vec<LayerActivations>,
}

impl TokenFrame {
    pub fn empty(position: u64, n_layers: u32) -> Self {
        Self {
            position,
            layers: vec![LayerActivations::default(); n_layers as usize],
        }
    }

    /// Checks the frame against the shard dimensions: strictly increasing
    /// indices below `n_features` and strictly positive finite values.
    pub fn validate(&self, dims: ShardDims) -> Result<()> {
        if self.layers.len() != dims.n_layers as usize {
            return Err(Error::Dimension(format!(
                "token {} has {} layers, expected {}",
                self.position,
                self.layers.len(),
                dims.n_layers
            )));
        }
        for (layer, acts) in self.layers.iter().enumerate() {
            if acts.indices.len() != acts.values.len() {
                return Err(Error::Format(format!(
                    "token {} layer {layer}: index/value length mismatch",
                    self.position
                )));
            }
            let mut prev: Option<u32> = None;
            for (index, value) in acts.iter() {
                if index >= dims.n_features {
                    return Err(Error::Dimension(format!(
                        "token {} layer {layer}: feature index {index} >= n_features {}",
                        self.position, dims.n_features
                    )));
                }
                if prev.is_some_and(|p| p >= index) {
                    return Err(Error::Format(format!(
                        "token {} layer {layer}: feature indices not strictly increasing at {index}",
                        self.position
                    )));
                }
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Format(format!(
                        "token {} layer {layer}: activation {value} of feature {index} is not a positive finite value",
                        self.position
                    )));
                }
                prev = Some(index);
            }
        }
        Ok(())
    }
}

/// Streaming shard writer. The token count in the header is patched on
/// [`ShardWriter::finish`].
pub struct ShardWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dims: ShardDims,
    n_tokens: u64,
}

impl ShardWriter {
    pub fn create(path: impl AsRef<Path>, dims: ShardDims) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).at(&path)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(&SHARD_MAGIC);
        header.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        header.extend_from_slice(&dims.n_layers.to_le_bytes());
        header.extend_from_slice(&dims.n_features.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        out.write_all(&header).at(&path)?;
        Ok(Self {
            path,
            out,
            dims,
            n_tokens: 0,
        })
    }

    pub fn push(&mut self, frame: &TokenFrame) -> Result<()> {
        frame.validate(self.dims)?;
        let mut buf = Vec::with_capacity(64);
        for acts in &frame.layers {
            buf.extend_from_slice(&(acts.len() as u32).to_le_bytes());
            for (index, value) in acts.iter() {
                buf.extend_from_slice(&index.to_le_bytes());
                buf.extend_from_slice(&value.to_le_bytes());
            }
        }
        self.out.write_all(&buf).at(&self.path)?;
        self.n_tokens += 1;
        Ok(())
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn finish(self) -> Result<u64> {
        let path = self.path;
        let mut file = self.out.into_inner().map_err(|e| Error::Io {
            path: path.clone(),
            source: e.into_error(),
        })?;
        file.seek(SeekFrom::Start(TOKEN_COUNT_OFFSET)).at(&path)?;
        file.write_all(&self.n_tokens.to_le_bytes()).at(&path)?;
        file.sync_all().at(&path)?;
        Ok(self.n_tokens)
    }
}

/// Writes `frames` as one shard. On a validation failure the partial file is
/// removed.
pub fn write_shard<'a>(
    path: impl AsRef<Path>,
    dims: ShardDims,
    frames: impl IntoIterator<Item = &'a TokenFrame>,
) -> Result<u64> {
    let path = path.as_ref();
    let mut writer = ShardWriter::create(path, dims)?;
    for frame in frames {
        if let Err(e) = writer.push(frame) {
            drop(writer);
            let _ = std::fs::remove_file(path);
            return Err(e);
        }
    }
    writer.finish()
}

/// Sequential shard reader. Memory use is independent of shard size.
pub struct ShardReader {
    path: PathBuf,
    input: BufReader<File>,
    dims: ShardDims,
    n_tokens: u64,
    read: u64,
    first_position: u64,
    failed: bool,
}

impl ShardReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_at(path, 0)
    }

    /// Opens a shard whose first token has global position `first_position`.
    pub fn open_at(path: impl AsRef<Path>, first_position: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).at(&path)?;
        let mut input = BufReader::with_capacity(1 << 20, file);
        let mut header = [0u8; HEADER_LEN as usize];
        input.read_exact(&mut header).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                path: path.clone(),
                detail: "header shorter than 24 bytes".into(),
            },
            _ => Error::Io {
                path: path.clone(),
                source: e,
            },
        })?;
        if header[0..4] != SHARD_MAGIC {
            return Err(Error::BadMagic {
                path,
                expected: "SAEA".into(),
            });
        }
        let u32_at = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != SHARD_VERSION {
            return Err(Error::UnsupportedVersion { path, version });
        }
        let dims = ShardDims {
            n_layers: u32_at(8),
            n_features: u32_at(12),
        };
        let n_tokens = u64::from_le_bytes(header[16..24].try_into().unwrap());
        Ok(Self {
            path,
            input,
            dims,
            n_tokens,
            read: 0,
            first_position,
            failed: false,
        })
    }

    pub fn dims(&self) -> ShardDims {
        self.dims
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads the next record into `frame`, reusing its buffers. Returns
    /// `Ok(false)` once all records declared in the header are consumed.
    pub fn read_into(&mut self, frame: &mut TokenFrame) -> Result<bool> {
        if self.failed {
            return Ok(false);
        }
        let result = self.read_record(frame);
        if result.is_err() {
            self.failed = true;
        }
        result
    }

    fn read_record(&mut self, frame: &mut TokenFrame) -> Result<bool> {
        if self.read == self.n_tokens {
            let mut probe = [0u8; 1];
            return match self.input.read(&mut probe).at(&self.path)? {
                0 => Ok(false),
                _ => Err(Error::Format(format!(
                    "{}: trailing bytes after {} declared tokens",
                    self.path.display(),
                    self.n_tokens
                ))),
            };
        }
        frame.position = self.first_position + self.read;
        frame.layers.resize_with(self.dims.n_layers as usize, Default::default);
        let mut word = [0u8; 4];
        let mut pair = [0u8; 8];
        for layer in 0..self.dims.n_layers as usize {
            self.fill(&mut word)?;
            let count = u32::from_le_bytes(word);
            if count > self.dims.n_features {
                return Err(Error::Format(format!(
                    "{}: token {} layer {layer} lists {count} features (> {})",
                    self.path.display(),
                    frame.position,
                    self.dims.n_features
                )));
            }
            let acts = &mut frame.layers[layer];
            acts.clear();
            for _ in 0..count {
                self.fill(&mut pair)?;
                acts.push(
                    u32::from_le_bytes(pair[0..4].try_into().unwrap()),
                    f32::from_le_bytes(pair[4..8].try_into().unwrap()),
                );
            }
        }
        frame.validate(self.dims)?;
        self.read += 1;
        Ok(true)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.input.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                path: self.path.clone(),
                detail: format!("ended inside token record {} of {}", self.read, self.n_tokens),
            },
            _ => Error::Io {
                path: self.path.clone(),
                source: e,
            },
        })
    }
}

impl Iterator for ShardReader {
    type Item = Result<TokenFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut frame = TokenFrame::default();
        match self.read_into(&mut frame) {
            Ok(true) => Some(Ok(frame)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

/// Opens a shard for streaming; the header is validated eagerly.
pub fn read_shard(path: impl AsRef<Path>) -> Result<ShardReader> {
    ShardReader::open(path)
}
