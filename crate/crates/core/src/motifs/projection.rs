//! Does a feature that has no counterpart in the next layer survive in that
//! layer's reconstruction error?

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::sae::{EncodeMode, ResidualFrame, SaeWeights};
use crate::sim::{MeasureKind, SimilarityMatrix};
use crate::store::{FrameSource, MaxActivationTable};
use crate::{Error, FeatureId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionOptions {
    /// A feature is studied when its necessity with every next-layer feature
    /// is below this.
    pub necessity_max: f64,
    /// Samples need an activation of at least this fraction of the max.
    pub act_min_frac: f64,
    /// Tokens are used where the feature reaches this fraction of its max.
    pub fire_frac: f64,
    pub mode: EncodeMode,
    /// Study these layer-k indices instead of the necessity selection.
    pub features: Option<Vec<u32>>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            necessity_max: 0.4,
            act_min_frac: 0.001,
            fire_frac: 0.1,
            mode: EncodeMode::Relu,
            features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisappearanceSample {
    pub feature: FeatureId,
    pub position: u64,
    pub activation: f64,
    pub projection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSlope {
    pub feature: FeatureId,
    pub n_samples: usize,
    /// Least-squares slope through the origin; None without samples.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub layer: u32,
    pub selected: Vec<FeatureId>,
    pub samples: Vec<DisappearanceSample>,
    pub slopes: Vec<FeatureSlope>,
}

impl ProjectionReport {
    pub fn slope(&self, feature: FeatureId) -> Option<f64> {
        self.slopes.iter().find(|s| s.feature == feature)?.slope
    }
}

/// Layer-k features whose necessity with every next-layer feature is below
/// `necessity_max`; absent entries count as zero.
pub fn select_disappearing(necessity: &SimilarityMatrix, necessity_max: f64) -> Result<Vec<u32>> {
    if necessity.measure != MeasureKind::Necessity {
        return Err(Error::Invalid(format!(
            "feature selection needs a necessity matrix, got {}",
            necessity.measure
        )));
    }
    Ok((0..necessity.n_up)
        .filter(|&i| necessity.row(i).iter().all(|e| e.value < necessity_max))
        .collect())
}

/// Slope of `y = b x` by least squares.
pub fn slope_through_origin(points: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (sxy, sxx) = points
        .into_iter()
        .fold((0.0, 0.0), |(sxy, sxx), (x, y)| (sxy + x * y, sxx + x * x));
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Projects the layer-(k+1) reconstruction error onto the decoder directions
/// of disappearing layer-k features at the tokens where they fire.
///
/// `residuals` are layer-(k+1) residual vectors keyed by token position; every
/// token that yields a sample must have one.
pub fn disappearance_projection(
    source: &dyn FrameSource,
    max: &MaxActivationTable,
    residuals: &[ResidualFrame],
    sae: &SaeWeights,
    next_sae: &SaeWeights,
    necessity: &SimilarityMatrix,
    opts: &ProjectionOptions,
) -> Result<ProjectionReport> {
    let k = sae.layer();
    if next_sae.layer() != k + 1 || necessity.upstream_layer != k {
        return Err(Error::Incompatible(format!(
            "need SAEs and a necessity matrix for layers {k} -> {}, got SAE {} and matrix {} -> {}",
            k + 1,
            next_sae.layer(),
            necessity.upstream_layer,
            necessity.downstream_layer()
        )));
    }
    if sae.d_model() != next_sae.d_model() {
        return Err(Error::Dimension(format!(
            "SAEs disagree on d_model ({} vs {})",
            sae.d_model(),
            next_sae.d_model()
        )));
    }
    if let Some(r) = residuals
        .iter()
        .find(|r| r.layer != k + 1 || r.x.len() != sae.d_model())
    {
        return Err(Error::Incompatible(format!(
            "residual at position {} is layer {} with {} dims, expected layer {} with {}",
            r.position,
            r.layer,
            r.x.len(),
            k + 1,
            sae.d_model()
        )));
    }
    let dims = source.dims();
    if k >= dims.n_layers || sae.n_features() != dims.n_features as usize {
        return Err(Error::Dimension(format!(
            "SAE for layer {k} with {} features does not match the activation stream",
            sae.n_features()
        )));
    }

    let mut selected = match &opts.features {
        Some(f) => f.clone(),
        None => select_disappearing(necessity, opts.necessity_max)?,
    };
    selected.sort_unstable();
    selected.dedup();
    if let Some(&i) = selected.iter().find(|&&i| i >= dims.n_features) {
        return Err(Error::Dimension(format!("feature {k}/{i} out of range")));
    }
    let mut wanted = vec![false; dims.n_features as usize];
    for &i in &selected {
        wanted[i as usize] = true;
    }
    let maxima: Vec<f64> = max.layer(k).iter().map(|&m| f64::from(m)).collect();
    let by_position: HashMap<u64, &ResidualFrame> = residuals.iter().map(|r| (r.position, r)).collect();

    let mut samples = Vec::new();
    source.for_each_frame(0..source.n_tokens(), &mut |frame| {
        let acts = &frame.layers[k as usize];
        let mut err: Option<Vec<f64>> = None;
        for (&i, &v) in acts.indices.iter().zip(&acts.values) {
            let m = maxima[i as usize];
            let v = f64::from(v);
            if !wanted[i as usize] || m <= 0.0 || v < opts.fire_frac * m || v < opts.act_min_frac * m {
                continue;
            }
            if err.is_none() {
                let r = by_position.get(&frame.position).ok_or_else(|| {
                    Error::Missing(format!("residual for layer {} at position {}", k + 1, frame.position))
                })?;
                err = Some(next_sae.recon_error(&r.as_f64(), opts.mode)?);
            }
            samples.push(DisappearanceSample {
                feature: FeatureId::new(k, i),
                position: frame.position,
                activation: v,
                projection: sae.project_error(err.as_deref().unwrap(), i)?,
            });
        }
        Ok(())
    })?;
    samples.sort_by_key(|s| (s.feature, s.position));

    let slopes = selected
        .iter()
        .map(|&i| {
            let f = FeatureId::new(k, i);
            let lo = samples.partition_point(|s| s.feature < f);
            let hi = samples.partition_point(|s| s.feature <= f);
            let own = &samples[lo..hi];
            FeatureSlope {
                feature: f,
                n_samples: own.len(),
                slope: slope_through_origin(own.iter().map(|s| (s.activation, s.projection))),
            }
        })
        .collect();
    Ok(ProjectionReport {
        layer: k,
        selected: selected.iter().map(|&i| FeatureId::new(k, i)).collect(),
        samples,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MatrixEntry;
    use crate::store::{ShardDims, TokenFrame, VecSource};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const D: usize = 6;

    fn unit(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; D];
        v[i] = 1.0;
        v
    }

    /// Layer-1 SAE knows directions 1..4 but not 0. Feature 0 of layer 0 points
    /// along direction 0 and feature 1 along direction 1; the layer-1 residual
    /// carries both.
    fn fixture(
        scale0: f64,
    ) -> (
        VecSource,
        MaxActivationTable,
        Vec<ResidualFrame>,
        SaeWeights,
        SaeWeights,
    ) {
        let n = 3;
        let mut w_dec0: Vec<f64> = (0..n).flat_map(unit).collect();
        for w in &mut w_dec0[..D] {
            *w *= scale0;
        }
        let sae0 = SaeWeights::new(0, D, n, vec![0.0; D * n], vec![0.0; n], w_dec0, vec![0.0; D]).unwrap();
        let dirs = [1, 2, 3, 4];
        let w_dec1: Vec<f64> = dirs.iter().flat_map(|&i| unit(i)).collect();
        let mut w_enc1 = vec![0.0; D * dirs.len()];
        for (j, &i) in dirs.iter().enumerate() {
            w_enc1[i * dirs.len() + j] = 1.0;
        }
        let sae1 = SaeWeights::new(1, D, dirs.len(), w_enc1, vec![0.0; dirs.len()], w_dec1, vec![0.0; D]).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut frames = Vec::new();
        let mut residuals = Vec::new();
        for pos in 0..200u64 {
            let a0: f32 = if rng.random_bool(0.5) {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            };
            let a1: f32 = rng.random_range(0.05..1.0);
            let mut frame = TokenFrame::empty(pos, 2);
            for (i, a) in [(0u32, a0), (1, a1)] {
                if a > 0.0 {
                    frame.layers[0].indices.push(i);
                    frame.layers[0].values.push(a);
                }
            }
            frames.push(frame);
            let mut x = vec![0.0f32; D];
            x[0] = a0;
            x[1] = a1;
            residuals.push(ResidualFrame {
                position: pos,
                layer: 1,
                x,
            });
        }
        let src = VecSource::new(
            ShardDims {
                n_layers: 2,
                n_features: n as u32,
            },
            frames,
        )
        .unwrap();
        let max = crate::store::scan_max(&src, 1).unwrap();
        (src, max, residuals, sae0, sae1)
    }

    fn none_necessary() -> SimilarityMatrix {
        SimilarityMatrix::empty(MeasureKind::Necessity, 0, 3, 4)
    }

    #[test]
    fn carried_feature_has_unit_slope() {
        let (src, max, res, s0, s1) = fixture(1.0);
        let r = disappearance_projection(
            &src,
            &max,
            &res,
            &s0,
            &s1,
            &none_necessary(),
            &ProjectionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.selected.len(), 3);
        assert!((r.slope(FeatureId::new(0, 0)).unwrap() - 1.0).abs() < 1e-6);
        assert!(r.slope(FeatureId::new(0, 1)).unwrap().abs() < 1e-6);
        // never fires
        assert_eq!(r.slope(FeatureId::new(0, 2)), None);
        assert!(r
            .samples
            .iter()
            .all(|s| s.activation >= 0.1 * f64::from(max.get(s.feature))));
    }

    #[test]
    fn necessity_selection() {
        let (src, max, res, s0, s1) = fixture(1.0);
        let nec = SimilarityMatrix::new(
            MeasureKind::Necessity,
            0,
            3,
            4,
            vec![
                MatrixEntry {
                    up: 1,
                    down: 0,
                    value: 0.97,
                },
                MatrixEntry {
                    up: 2,
                    down: 3,
                    value: 0.3,
                },
            ],
        )
        .unwrap();
        assert_eq!(select_disappearing(&nec, 0.4).unwrap(), vec![0, 2]);
        let r = disappearance_projection(&src, &max, &res, &s0, &s1, &nec, &ProjectionOptions::default()).unwrap();
        assert_eq!(r.selected, vec![FeatureId::new(0, 0), FeatureId::new(0, 2)]);
    }

    #[test]
    fn missing_residual_is_an_error() {
        let (src, max, mut res, s0, s1) = fixture(1.0);
        res.retain(|r| r.position != 7);
        let e = disappearance_projection(
            &src,
            &max,
            &res,
            &s0,
            &s1,
            &none_necessary(),
            &ProjectionOptions::default(),
        );
        assert!(matches!(e, Err(Error::Missing(_))));
        assert!(disappearance_projection(
            &src,
            &max,
            &res,
            &s1,
            &s0,
            &none_necessary(),
            &ProjectionOptions::default()
        )
        .is_err());
    }

    #[test]
    fn high_admission_floor_empties_samples() {
        let (src, max, res, s0, s1) = fixture(1.0);
        let opts = ProjectionOptions {
            act_min_frac: 1.5,
            ..ProjectionOptions::default()
        };
        let r = disappearance_projection(&src, &max, &res, &s0, &s1, &none_necessary(), &opts).unwrap();
        assert!(r.samples.is_empty());
    }

    #[test]
    fn origin_slope() {
        assert_eq!(slope_through_origin([(1.0, 2.0), (2.0, 4.0)]), Some(2.0));
        assert_eq!(slope_through_origin([]), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn slope_ignores_decoder_scale(scale in 0.01f64..100.0) {
            let (src, max, res, s0, s1) = fixture(1.0);
            let base = disappearance_projection(&src, &max, &res, &s0, &s1, &none_necessary(), &ProjectionOptions::default()).unwrap();
            let (_, _, _, scaled, _) = fixture(scale);
            let r = disappearance_projection(&src, &max, &res, &scaled, &s1, &none_necessary(), &ProjectionOptions::default()).unwrap();
            let a = base.slope(FeatureId::new(0, 0)).unwrap();
            let b = r.slope(FeatureId::new(0, 0)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
