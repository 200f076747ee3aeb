use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shard::TokenFrame;
use super::source::FrameSource;
use crate::error::IoContext;
use crate::{Error, FeatureId, Result};

/// Per-feature maximum activation over a dataset. Features that never fired
/// have maximum 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct MaxActivationTable {
    n_layers: u32,
    n_features: u32,
    values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    n_layers: u32,
    n_features: u32,
    max: Vec<Vec<f32>>,
}

impl TryFrom<TableRepr> for MaxActivationTable {
    type Error = Error;

    fn try_from(repr: TableRepr) -> Result<Self> {
        if repr.max.len() != repr.n_layers as usize || repr.max.iter().any(|l| l.len() != repr.n_features as usize) {
            return Err(Error::Format("max table rows do not match declared dimensions".into()));
        }
        let values: Vec<f32> = repr.max.into_iter().flatten().collect();
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Format("max table holds a negative or non-finite value".into()));
        }
        Ok(Self {
            n_layers: repr.n_layers,
            n_features: repr.n_features,
            values,
        })
    }
}

impl From<MaxActivationTable> for TableRepr {
    fn from(table: MaxActivationTable) -> Self {
        let max = table
            .values
            .chunks(table.n_features.max(1) as usize)
            .map(<[f32]>::to_vec)
            .collect();
        Self {
            n_layers: table.n_layers,
            n_features: table.n_features,
            max,
        }
    }
}

impl MaxActivationTable {
    pub fn zeros(n_layers: u32, n_features: u32) -> Self {
        Self {
            n_layers,
            n_features,
            values: vec![0.0; n_layers as usize * n_features as usize],
        }
    }

    pub fn from_layers(layers: Vec<Vec<f32>>) -> Result<Self> {
        let n_features = layers.first().map_or(0, Vec::len) as u32;
        TableRepr {
            n_layers: layers.len() as u32,
            n_features,
            max: layers,
        }
        .try_into()
    }

    pub fn n_layers(&self) -> u32 {
        self.n_layers
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn get(&self, feature: FeatureId) -> f32 {
        self.layer(feature.layer)[feature.index as usize]
    }

    pub fn layer(&self, layer: u32) -> &[f32] {
        let n = self.n_features as usize;
        &self.values[layer as usize * n..(layer as usize + 1) * n]
    }

    pub fn observe(&mut self, frame: &TokenFrame) {
        let n = self.n_features as usize;
        for (layer, acts) in frame.layers.iter().enumerate() {
            let row = &mut self.values[layer * n..(layer + 1) * n];
            for (index, value) in acts.iter() {
                let slot = &mut row[index as usize];
                if value > *slot {
                    *slot = value;
                }
            }
        }
    }

    /// Element-wise maximum; commutative and associative.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.n_layers, self.n_features) != (other.n_layers, other.n_features) {
            return Err(Error::Incompatible("max tables of different shapes".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(*b);
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_vec(self)?).at(path)
    }
}

/// Exact per-feature maxima over every token of `source`, with the stream
/// split across `workers` threads and merged by element-wise max.
pub fn scan_max(source: &dyn FrameSource, workers: usize) -> Result<MaxActivationTable> {
    let dims = source.dims();
    let parts = source.partitions(workers);
    let tables: Vec<Result<MaxActivationTable>> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .into_iter()
            .map(|range| {
                scope.spawn(move || {
                    let mut table = MaxActivationTable::zeros(dims.n_layers, dims.n_features);
                    source.for_each_frame(range, &mut |frame| {
                        table.observe(frame);
                        Ok(())
                    })?;
                    Ok(table)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("max-scan worker panicked"))
            .collect()
    });
    let mut merged = MaxActivationTable::zeros(dims.n_layers, dims.n_features);
    for table in tables {
        merged.merge(&table?)?;
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{LayerActivations, ShardDims, VecSource};

    #[test]
    fn max_of_listed_values_and_zero_for_silent_features() {
        let dims = ShardDims {
            n_layers: 1,
            n_features: 3,
        };
        let frames = [vec![(0, 1.5)], vec![(0, 3.0), (2, 0.5)], vec![]]
            .into_iter()
            .enumerate()
            .map(|(i, l)| TokenFrame {
                position: i as u64,
                layers: vec![LayerActivations::from_pairs(l)],
            })
            .collect();
        let source = VecSource::new(dims, frames).unwrap();
        let table = scan_max(&source, 2).unwrap();
        assert_eq!(table.layer(0), &[3.0, 0.0, 0.5]);
    }

    #[test]
    fn json_round_trip_and_shape_check() {
        let table = MaxActivationTable::from_layers(vec![vec![1.0, 2.0], vec![0.0, 4.0]]).unwrap();
        let text = serde_json::to_string(&table).unwrap();
        assert_eq!(text, r#"{"n_layers":2,"n_features":2,"max":[[1.0,2.0],[0.0,4.0]]}"#);
        let back: MaxActivationTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back, table);
        assert!(
            serde_json::from_str::<MaxActivationTable>(r#"{"n_layers":2,"n_features":2,"max":[[1.0,2.0]]}"#).is_err()
        );
    }
}
