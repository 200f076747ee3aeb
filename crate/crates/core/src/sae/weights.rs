//! SAE weight container.
//!
//! ```text
//! header_len  u64
//! header      JSON {"layer", "d_model", "n_features"}
//! W_enc       d_model x n_features f32, row-major
//! b_enc       n_features f32
//! W_dec       n_features x d_model f32, row-major
//! b_dec       d_model f32
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    #[default]
    Relu,
    /// No nonlinearity: `x W_enc + b_enc`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaeHeader {
    pub layer: u32,
    pub d_model: u32,
    pub n_features: u32,
}

/// Weights of one layer's SAE, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeWeights {
    header: SaeHeader,
    w_enc: Vec<f64>,
    b_enc: Vec<f64>,
    w_dec: Vec<f64>,
    b_dec: Vec<f64>,
    dec_norms: Vec<f64>,
}

impl SaeWeights {
    pub fn new(
        layer: u32,
        d_model: usize,
        n_features: usize,
        w_enc: Vec<f64>,
        b_enc: Vec<f64>,
        w_dec: Vec<f64>,
        b_dec: Vec<f64>,
    ) -> Result<Self> {
        let shapes = [
            ("W_enc", w_enc.len(), d_model * n_features),
            ("b_enc", b_enc.len(), n_features),
            ("W_dec", w_dec.len(), n_features * d_model),
            ("b_dec", b_dec.len(), d_model),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} has {got} values, expected {want} for d={d_model}, F={n_features}"
                )));
            }
        }
        if [&w_enc, &b_enc, &w_dec, &b_dec]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Format("SAE weights contain non-finite values".into()));
        }
        let dec_norms: Vec<f64> = if d_model == 0 {
            vec![0.0; n_features]
        } else {
            w_dec
                .chunks_exact(d_model)
                .map(|row| row.iter().map(|w| w * w).sum::<f64>().sqrt())
                .collect()
        };
        if let Some(i) = dec_norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNormDecoder(FeatureId::new(layer, i as u32)));
        }
        Ok(Self {
            header: SaeHeader {
                layer,
                d_model: d_model as u32,
                n_features: n_features as u32,
            },
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            dec_norms,
        })
    }

    pub fn layer(&self) -> u32 {
        self.header.layer
    }

    pub fn d_model(&self) -> usize {
        self.header.d_model as usize
    }

    pub fn n_features(&self) -> usize {
        self.header.n_features as usize
    }

    pub fn header(&self) -> SaeHeader {
        self.header
    }

    pub fn w_enc(&self) -> &[f64] {
        &self.w_enc
    }

    pub fn b_enc(&self) -> &[f64] {
        &self.b_enc
    }

    pub fn w_dec(&self) -> &[f64] {
        &self.w_dec
    }

    pub fn b_dec(&self) -> &[f64] {
        &self.b_dec
    }

    pub fn decoder_norms(&self) -> &[f64] {
        &self.dec_norms
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path).at(path)?.read_to_end(&mut bytes).at(path)?;
        let truncated = |detail: &str| Error::Truncated {
            path: path.to_path_buf(),
            detail: detail.into(),
        };
        let header_len = bytes
            .get(..8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| truncated("missing header length"))?;
        let header_bytes = bytes.get(8..8 + header_len).ok_or_else(|| truncated("header"))?;
        let header: SaeHeader = serde_json::from_slice(header_bytes)?;
        let (d, f) = (header.d_model as usize, header.n_features as usize);
        let n_floats = 2 * d * f + d + f;
        let body = &bytes[8 + header_len..];
        if body.len() < n_floats * 4 {
            return Err(truncated("weight blobs"));
        }
        if body.len() > n_floats * 4 {
            return Err(Error::Format(format!(
                "{}: trailing bytes after weights",
                path.display()
            )));
        }
        let mut floats = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
        let mut take = |n: usize| floats.by_ref().take(n).collect::<Vec<f64>>();
        let w_enc = take(d * f);
        let b_enc = take(f);
        let w_dec = take(f * d);
        let b_dec = take(d);
        Self::new(header.layer, d, f, w_enc, b_enc, w_dec, b_dec)
    }

    /// Writes the container. Values are narrowed to f32.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&self.header)?;
        let mut out = BufWriter::new(File::create(path).at(path)?);
        out.write_all(&(header.len() as u64).to_le_bytes()).at(path)?;
        out.write_all(&header).at(path)?;
        for blob in [&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec] {
            for &v in blob.iter() {
                out.write_all(&(v as f32).to_le_bytes()).at(path)?;
            }
        }
        out.flush().at(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trips_f32_values() {
        let sae = SaeWeights::new(
            3,
            2,
            3,
            vec![0.5, -1.0, 2.0, 0.25, 0.0, 1.5],
            vec![0.0, -0.5, 0.125],
            vec![1.0, 0.0, 0.0, 1.0, 3.0, 4.0],
            vec![0.75, -0.25],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l3.sae");
        sae.save(&path).unwrap();
        assert_eq!(SaeWeights::load(&path).unwrap(), sae);
    }

    #[test]
    fn shape_mismatch_and_truncation() {
        assert!(SaeWeights::new(0, 2, 2, vec![0.0; 3], vec![0.0; 2], vec![1.0; 4], vec![0.0; 2]).is_err());
        let sae = SaeWeights::new(0, 1, 1, vec![1.0], vec![0.0], vec![1.0], vec![0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.sae");
        sae.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(SaeWeights::load(&path), Err(Error::Truncated { .. })));
    }
}
