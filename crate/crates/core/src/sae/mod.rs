//! SAE encode/decode algebra on a single layer's weights.

mod residual;
mod weights;

pub use residual::{read_residuals, ResidualFrame, ResidualReader, ResidualWriter, RESIDUAL_MAGIC};
pub use weights::{EncodeMode, SaeHeader, SaeWeights};

use crate::sim::{MatrixEntry, MeasureKind, SimilarityMatrix};
use crate::{Error, FeatureId, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} has length {got}, expected {want}")))
    }
}

impl SaeWeights {
    /// `relu(x W_enc + b_enc)`, or without the relu in linear mode.
    pub fn encode(&self, x: &[f64], mode: EncodeMode) -> Result<Vec<f64>> {
        check_len("residual vector", x.len(), self.d_model())?;
        let f = self.n_features();
        let mut a = self.b_enc().to_vec();
        for (xi, row) in x.iter().zip(self.w_enc().chunks_exact(f)) {
            if *xi != 0.0 {
                for (aj, w) in a.iter_mut().zip(row) {
                    *aj += xi * w;
                }
            }
        }
        if mode == EncodeMode::Relu {
            for v in &mut a {
                *v = v.max(0.0);
            }
        }
        Ok(a)
    }

    /// `a W_dec + b_dec`.
    pub fn decode(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("activation vector", a.len(), self.n_features())?;
        let mut x = self.b_dec().to_vec();
        for (aj, row) in a.iter().zip(self.w_dec().chunks_exact(self.d_model())) {
            if *aj != 0.0 {
                for (xi, w) in x.iter_mut().zip(row) {
                    *xi += aj * w;
                }
            }
        }
        Ok(x)
    }

    /// `x - decode(encode(x))`.
    pub fn recon_error(&self, x: &[f64], mode: EncodeMode) -> Result<Vec<f64>> {
        let recon = self.decode(&self.encode(x, mode)?)?;
        Ok(x.iter().zip(recon).map(|(x, r)| x - r).collect())
    }

    /// Decoder row `i`.
    pub fn decoder_row(&self, i: usize) -> &[f64] {
        let d = self.d_model();
        &self.w_dec()[i * d..(i + 1) * d]
    }

    fn checked_index(&self, index: u32) -> Result<usize> {
        if (index as usize) < self.n_features() {
            Ok(index as usize)
        } else {
            Err(Error::Dimension(format!(
                "feature {index} outside {} features of layer {}",
                self.n_features(),
                self.layer()
            )))
        }
    }

    /// Component of `err` along the unit decoder direction of `index`.
    pub fn project_error(&self, err: &[f64], index: u32) -> Result<f64> {
        check_len("error vector", err.len(), self.d_model())?;
        let i = self.checked_index(index)?;
        let norm = self.decoder_norms()[i];
        if norm == 0.0 {
            return Err(Error::ZeroNormDecoder(FeatureId::new(self.layer(), index)));
        }
        Ok(dot(err, self.decoder_row(i)) / norm)
    }

    fn decoder_cos(&self, i: usize, other: &SaeWeights, j: usize) -> f64 {
        let c = dot(self.decoder_row(i), other.decoder_row(j)) / (self.decoder_norms()[i] * other.decoder_norms()[j]);
        c.clamp(-1.0, 1.0)
    }

    /// Minimum pairwise decoder cosine among `indices`.
    pub fn intra_layer_cosine(&self, indices: &[u32]) -> Result<f64> {
        if indices.len() < 2 {
            return Err(Error::Invalid(format!(
                "intra-layer cosine needs at least 2 features, got {}",
                indices.len()
            )));
        }
        let idx = indices
            .iter()
            .map(|&i| self.checked_index(i))
            .collect::<Result<Vec<_>>>()?;
        let mut min = f64::INFINITY;
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                min = min.min(self.decoder_cos(i, self, j));
            }
        }
        Ok(min)
    }
}

/// Cosine of every decoder row of `up` with every decoder row of `down`.
/// No co-activation rule applies; `floor` optionally sparsifies.
pub fn decoder_cosine(up: &SaeWeights, down: &SaeWeights, floor: Option<f64>) -> Result<SimilarityMatrix> {
    if up.d_model() != down.d_model() {
        return Err(Error::Dimension(format!(
            "model dimensions differ: {} vs {}",
            up.d_model(),
            down.d_model()
        )));
    }
    if down.layer() != up.layer() + 1 {
        return Err(Error::Incompatible(format!(
            "layers {} and {} are not adjacent",
            up.layer(),
            down.layer()
        )));
    }
    let mut entries = Vec::with_capacity(up.n_features() * down.n_features());
    for i in 0..up.n_features() {
        for j in 0..down.n_features() {
            entries.push(MatrixEntry {
                up: i as u32,
                down: j as u32,
                value: up.decoder_cos(i, down, j),
            });
        }
    }
    let matrix = SimilarityMatrix::new(
        MeasureKind::DecoderCosine,
        up.layer(),
        up.n_features() as u32,
        down.n_features() as u32,
        entries,
    )?;
    Ok(match floor {
        Some(f) => matrix.sparsify(f),
        None => matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// d = 2, F = 3.
    fn toy(layer: u32) -> SaeWeights {
        SaeWeights::new(
            layer,
            2,
            3,
            vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.5],
            vec![0.0, 0.0, -0.1],
            vec![1.0, 0.0, 0.0, 1.0, 3.0, 4.0],
            vec![0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn encode_by_hand() {
        let sae = toy(0);
        assert_eq!(sae.encode(&[0.0, 0.0], EncodeMode::Relu).unwrap(), vec![0.0, 0.0, 0.0]);
        let a = sae.encode(&[2.0, -1.0], EncodeMode::Relu).unwrap();
        assert_eq!(a, vec![2.0, 0.0, 0.4]);
        let lin = sae.encode(&[2.0, -1.0], EncodeMode::Linear).unwrap();
        assert_eq!(lin, vec![2.0, -1.0, 0.4]);
        assert!(sae.encode(&[1.0], EncodeMode::Relu).is_err());
    }

    #[test]
    fn negative_bias_clips_everything() {
        let sae = SaeWeights::new(0, 2, 2, vec![1.0; 4], vec![-100.0; 2], vec![1.0; 4], vec![0.0; 2]).unwrap();
        assert_eq!(sae.encode(&[1.0, 1.0], EncodeMode::Relu).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn decode_by_hand() {
        let sae = toy(0);
        assert_eq!(sae.decode(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sae.decode(&[0.0, 0.0, 2.0]).unwrap(), vec![6.0, 8.0]);
        assert_eq!(sae.decode(&[1.0, 2.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn identity_like_sae_error() {
        let sae = SaeWeights::new(
            0,
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
        )
        .unwrap();
        // negative coordinates are clipped by the relu and left in the error
        assert_eq!(
            sae.recon_error(&[3.0, -2.0], EncodeMode::Relu).unwrap(),
            vec![0.0, -2.0]
        );
        assert_eq!(
            sae.recon_error(&[3.0, -2.0], EncodeMode::Linear).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn projection_examples() {
        let sae = toy(0);
        // row 2 is (3, 4), unit (0.6, 0.8)
        assert!((sae.project_error(&[1.2, 1.6], 2).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(sae.project_error(&[4.0, -3.0], 2).unwrap(), 0.0);
        // 3 * unit + 4 * orthogonal
        let e = [3.0 * 0.6 + 4.0 * 0.8, 3.0 * 0.8 - 4.0 * 0.6];
        assert!((sae.project_error(&e, 2).unwrap() - 3.0).abs() < 1e-12);
        assert!(sae.project_error(&e, 3).is_err());
    }

    #[test]
    fn zero_norm_rows_are_rejected() {
        let err = SaeWeights::new(
            4,
            2,
            2,
            vec![0.0; 4],
            vec![0.0; 2],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0; 2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroNormDecoder(f) if f == FeatureId::new(4, 1)));
    }

    #[test]
    fn decoder_cosine_examples() {
        let a = toy(0);
        let b = toy(1);
        let m = decoder_cosine(&a, &b, None).unwrap();
        for i in 0..3 {
            assert!((m.get(i, i).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(m.get(0, 1), Some(0.0));
        assert!((m.get(0, 2).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(m.min_co, None);
        assert_eq!(m.measure, MeasureKind::DecoderCosine);
        assert!(decoder_cosine(&a, &a, None).is_err());
    }

    #[test]
    fn intra_layer_cosine_examples() {
        let dup = SaeWeights::new(
            0,
            2,
            2,
            vec![0.0; 4],
            vec![0.0; 2],
            vec![1.0, 2.0, 1.0, 2.0],
            vec![0.0; 2],
        )
        .unwrap();
        assert!((dup.intra_layer_cosine(&[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        let sae = toy(0);
        assert_eq!(sae.intra_layer_cosine(&[0, 1, 2]).unwrap(), 0.0);
        assert!(sae.intra_layer_cosine(&[0]).is_err());
    }

    proptest! {
        #[test]
        fn encode_is_nonnegative(x in prop::collection::vec(-5.0f64..5.0, 2)) {
            prop_assert!(toy(0).encode(&x, EncodeMode::Relu).unwrap().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn projection_ignores_decoder_scale(e in prop::collection::vec(-5.0f64..5.0, 2), s in 0.01f64..100.0) {
            let sae = toy(0);
            let mut w_dec = sae.w_dec().to_vec();
            w_dec[4] *= s;
            w_dec[5] *= s;
            let scaled = SaeWeights::new(0, 2, 3, sae.w_enc().to_vec(), sae.b_enc().to_vec(), w_dec, sae.b_dec().to_vec()).unwrap();
            let p = sae.project_error(&e, 2).unwrap();
            prop_assert!((p - scaled.project_error(&e, 2).unwrap()).abs() < 1e-9 * (1.0 + p.abs()));
        }

        #[test]
        fn reconstruction_plus_error_is_the_input(x in prop::collection::vec(-5.0f64..5.0, 2)) {
            let sae = toy(0);
            let err = sae.recon_error(&x, EncodeMode::Relu).unwrap();
            let recon = sae.decode(&sae.encode(&x, EncodeMode::Relu).unwrap()).unwrap();
            for k in 0..2 {
                prop_assert!((err[k] + recon[k] - x[k]).abs() <= 1e-12 * (1.0 + x[k].abs()));
            }
        }
    }
}
