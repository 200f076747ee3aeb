//! Dense residual-stream records for one layer.
//!
//! ```text
//! magic    "SAER"
//! version  u32
//! layer    u32
//! d_model  u32
//! count    u64
//! count x (position u64, d_model x f32)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::IoContext;
use crate::{Error, Result};

pub const RESIDUAL_MAGIC: [u8; 4] = *b"SAER";
const RESIDUAL_VERSION: u32 = 1;
const COUNT_OFFSET: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFrame {
    pub position: u64,
    pub layer: u32,
    pub x: Vec<f32>,
}

impl ResidualFrame {
    pub fn as_f64(&self) -> Vec<f64> {
        self.x.iter().map(|&v| f64::from(v)).collect()
    }
}

pub struct ResidualWriter {
    path: PathBuf,
    out: BufWriter<File>,
    layer: u32,
    d_model: u32,
    count: u64,
}

impl ResidualWriter {
    pub fn create(path: impl AsRef<Path>, layer: u32, d_model: u32) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut out = BufWriter::new(File::create(&path).at(&path)?);
        let mut header = Vec::with_capacity(24);
        header.extend_from_slice(&RESIDUAL_MAGIC);
        header.extend_from_slice(&RESIDUAL_VERSION.to_le_bytes());
        header.extend_from_slice(&layer.to_le_bytes());
        header.extend_from_slice(&d_model.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        out.write_all(&header).at(&path)?;
        Ok(Self {
            path,
            out,
            layer,
            d_model,
            count: 0,
        })
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn push(&mut self, position: u64, x: &[f32]) -> Result<()> {
        if x.len() != self.d_model as usize {
            return Err(Error::Dimension(format!(
                "residual of length {} in a d={} stream",
                x.len(),
                self.d_model
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite residual at position {position}")));
        }
        self.out.write_all(&position.to_le_bytes()).at(&self.path)?;
        for v in x {
            self.out.write_all(&v.to_le_bytes()).at(&self.path)?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush().at(&self.path)?;
        let mut file = self.out.into_inner().map_err(|e| e.into_error()).at(&self.path)?;
        file.seek(SeekFrom::Start(COUNT_OFFSET)).at(&self.path)?;
        file.write_all(&self.count.to_le_bytes()).at(&self.path)?;
        file.sync_all().at(&self.path)?;
        Ok(self.count)
    }
}

/// Streams residual records in stored order.
pub struct ResidualReader {
    path: PathBuf,
    input: BufReader<File>,
    layer: u32,
    d_model: u32,
    count: u64,
    read: u64,
    buf: Vec<u8>,
}

impl ResidualReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut input = BufReader::new(File::open(&path).at(&path)?);
        let mut header = [0u8; 24];
        input.read_exact(&mut header).map_err(|_| Error::Truncated {
            path: path.clone(),
            detail: "residual header".into(),
        })?;
        if header[..4] != RESIDUAL_MAGIC {
            return Err(Error::BadMagic {
                path,
                expected: "SAER".into(),
            });
        }
        let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
        if word(4) != RESIDUAL_VERSION {
            return Err(Error::UnsupportedVersion { path, version: word(4) });
        }
        let d_model = word(12);
        Ok(Self {
            layer: word(8),
            d_model,
            count: u64::from_le_bytes(header[16..24].try_into().unwrap()),
            read: 0,
            buf: vec![0; 8 + 4 * d_model as usize],
            path,
            input,
        })
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn d_model(&self) -> usize {
        self.d_model as usize
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn read_one(&mut self) -> Result<Option<ResidualFrame>> {
        if self.read == self.count {
            let mut probe = [0u8; 1];
            return match self.input.read(&mut probe).at(&self.path)? {
                0 => Ok(None),
                _ => Err(Error::Format(format!("{}: trailing bytes", self.path.display()))),
            };
        }
        self.input.read_exact(&mut self.buf).map_err(|_| Error::Truncated {
            path: self.path.clone(),
            detail: format!("record {} of {}", self.read, self.count),
        })?;
        self.read += 1;
        let position = u64::from_le_bytes(self.buf[..8].try_into().unwrap());
        let x: Vec<f32> = self.buf[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite residual at position {position}")));
        }
        Ok(Some(ResidualFrame {
            position,
            layer: self.layer,
            x,
        }))
    }
}

impl Iterator for ResidualReader {
    type Item = Result<ResidualFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_one().transpose()
    }
}

pub fn read_residuals(path: impl AsRef<Path>) -> Result<Vec<ResidualFrame>> {
    ResidualReader::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.saer");
        let mut w = ResidualWriter::create(&path, 5, 3).unwrap();
        w.push(10, &[1.0, -2.0, 0.5]).unwrap();
        w.push(11, &[0.0, 0.0, 3.0]).unwrap();
        assert!(w.push(12, &[1.0]).is_err());
        assert_eq!(w.finish().unwrap(), 2);
        let frames = read_residuals(&path).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(
            frames[1],
            ResidualFrame {
                position: 11,
                layer: 5,
                x: vec![0.0, 0.0, 3.0]
            }
        );

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_residuals(&path), Err(Error::Truncated { .. })));
        std::fs::write(&path, b"SAEA").unwrap();
        assert!(ResidualReader::open(&path).is_err());
    }
}
