use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::sim::{bin_index, MeasureKind};
use crate::{Error, FeatureId, Result};

/// Effect of ablating one upstream feature on one downstream feature. `up` and
/// `down` are indices in layers `layer` and `layer + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub measure: MeasureKind,
    pub layer: u32,
    pub up: u32,
    pub down: u32,
    pub similarity: f64,
    /// Mean absolute change of the downstream activation.
    pub effect: f64,
}

impl AblationRecord {
    pub fn upstream(&self) -> FeatureId {
        FeatureId::new(self.layer, self.up)
    }

    pub fn downstream(&self) -> FeatureId {
        FeatureId::new(self.layer + 1, self.down)
    }

    fn validate(&self) -> Result<()> {
        let in_range = match self.measure.range() {
            Some((lo, hi)) => (lo..=hi).contains(&self.similarity),
            None => self.similarity.is_finite(),
        };
        if !in_range {
            return Err(Error::Format(format!(
                "{} -> {}: {} similarity {} outside the measure's range",
                self.upstream(),
                self.downstream(),
                self.measure,
                self.similarity
            )));
        }
        if !(self.effect >= 0.0 && self.effect.is_finite()) {
            return Err(Error::Format(format!(
                "{} -> {}: effect {} must be finite and non-negative",
                self.upstream(),
                self.downstream(),
                self.effect
            )));
        }
        Ok(())
    }
}

/// Reads `measure,layer,up,down,similarity,effect` rows.
pub fn read_ablation_records(input: impl Read) -> Result<Vec<AblationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: AblationRecord = row?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

pub fn load_ablation_records(path: impl AsRef<Path>) -> Result<Vec<AblationRecord>> {
    let path = path.as_ref();
    read_ablation_records(std::fs::File::open(path).at(path)?)
}

pub fn write_ablation_records(records: &[AblationRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Boxplot statistics of the effects in one similarity bin. Quantiles
/// interpolate linearly between order statistics; whiskers reach the most
/// extreme effects within 1.5 IQR of the quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub whisker_lo: Option<f64>,
    pub whisker_hi: Option<f64>,
    pub n_outliers: usize,
}

impl BinSummary {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub measure: MeasureKind,
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<BinSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Some(if i + 1 < n {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    })
}

fn summarize(lo: f64, hi: f64, mut effects: Vec<f64>) -> BinSummary {
    effects.sort_by(f64::total_cmp);
    let q1 = quantile(&effects, 0.25);
    let q3 = quantile(&effects, 0.75);
    let (mut whisker_lo, mut whisker_hi, mut n_outliers) = (None, None, 0);
    if let (Some(a), Some(b)) = (q1, q3) {
        let reach = 1.5 * (b - a);
        let inside: Vec<f64> = effects
            .iter()
            .copied()
            .filter(|&e| e >= a - reach && e <= b + reach)
            .collect();
        whisker_lo = inside.first().copied();
        whisker_hi = inside.last().copied();
        n_outliers = effects.len() - inside.len();
    }
    BinSummary {
        lo,
        hi,
        count: effects.len(),
        median: quantile(&effects, 0.5),
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        n_outliers,
    }
}

/// Bins records into `n_bins` equal-width similarity bins over the measure's
/// range (the observed range for unbounded measures). A similarity on an
/// inner boundary goes to the upper bin; the top of the range goes to the last.
pub fn ablation_bins(records: &[AblationRecord], n_bins: usize) -> Result<AblationSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Invalid("no ablation records".into()))?;
    let measure = first.measure;
    if let Some(r) = records.iter().find(|r| r.measure != measure) {
        return Err(Error::Incompatible(format!(
            "records mix measures {measure} and {}",
            r.measure
        )));
    }
    if n_bins == 0 {
        return Err(Error::Invalid("n_bins must be positive".into()));
    }
    for r in records {
        r.validate()?;
    }
    let (lo, hi) = measure.range().unwrap_or_else(|| {
        let lo = records.iter().map(|r| r.similarity).fold(f64::INFINITY, f64::min);
        let hi = records.iter().map(|r| r.similarity).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    });
    let mut effects = vec![Vec::new(); n_bins];
    for r in records {
        effects[bin_index(r.similarity, lo, hi, n_bins)].push(r.effect);
    }
    let width = (hi - lo) / n_bins as f64;
    let bins = effects
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let top = if k + 1 == n_bins {
                hi
            } else {
                lo + width * (k + 1) as f64
            };
            summarize(lo + width * k as f64, top, e)
        })
        .collect();
    Ok(AblationSummary { measure, lo, hi, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(similarity: f64, effect: f64) -> AblationRecord {
        AblationRecord {
            measure: MeasureKind::Jaccard,
            layer: 3,
            up: 1,
            down: 2,
            similarity,
            effect,
        }
    }

    #[test]
    fn one_bin_and_boundaries() {
        let s = ablation_bins(&[rec(0.55, 1.0), rec(0.56, 2.0), rec(0.59, 3.0)], 10).unwrap();
        assert_eq!(
            s.bins.iter().map(|b| b.count).collect::<Vec<_>>(),
            [0, 0, 0, 0, 0, 3, 0, 0, 0, 0]
        );
        assert_eq!(s.bins[5].median, Some(2.0));
        assert_eq!(s.bins[5].q1, Some(1.5));
        assert_eq!(s.bins[0].median, None);

        let s = ablation_bins(&[rec(0.3, 0.0), rec(1.0, 0.0), rec(0.0, 0.0)], 10).unwrap();
        assert_eq!((s.bins[3].count, s.bins[9].count, s.bins[0].count), (1, 1, 1));
    }

    #[test]
    fn outliers_and_whiskers() {
        let mut r: Vec<_> = (0..9).map(|k| rec(0.05, 1.0 + 0.01 * k as f64)).collect();
        r.push(rec(0.05, 50.0));
        let b = &ablation_bins(&r, 10).unwrap().bins[0];
        assert_eq!(b.n_outliers, 1);
        assert_eq!(b.whisker_hi, Some(1.08));
        assert_eq!(b.whisker_lo, Some(1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ablation_bins(&[], 10).is_err());
        let mut other = rec(0.5, 0.1);
        other.measure = MeasureKind::Pearson;
        assert!(ablation_bins(&[rec(0.5, 0.1), other], 10).is_err());
        assert!(ablation_bins(&[rec(1.5, 0.1)], 10).is_err());
        assert!(ablation_bins(&[rec(0.5, -0.1)], 10).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![
            rec(0.25, 0.5),
            AblationRecord {
                measure: MeasureKind::Pearson,
                ..rec(-0.5, 0.0)
            },
        ];
        let mut buf = Vec::new();
        write_ablation_records(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("measure,layer,up,down,similarity,effect\n"));
        assert!(text.contains("jaccard,3,1,2,0.25,0.5"));
        assert_eq!(read_ablation_records(&buf[..]).unwrap(), records);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
        assert_eq!(quantile(&[7.0], 0.25), Some(7.0));
        assert_eq!(quantile(&[], 0.5), None);
    }
}
