//! Feature explanations imported from `layer,index,explanation` CSV files.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::IoContext;
use crate::{FeatureId, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations {
    text: BTreeMap<FeatureId, String>,
}

#[derive(Deserialize)]
struct Row {
    layer: u32,
    index: u32,
    explanation: String,
}

impl Annotations {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, feature: FeatureId, explanation: impl Into<String>) -> Option<String> {
        self.text.insert(feature, explanation.into())
    }

    pub fn get(&self, feature: FeatureId) -> Option<&str> {
        self.text.get(&feature).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, &str)> {
        self.text.iter().map(|(&f, s)| (f, s.as_str()))
    }

    /// Reads a CSV with header `layer,index,explanation`. A later row for the
    /// same feature replaces an earlier one.
    pub fn from_reader(input: impl Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut out = Self::new();
        let mut replaced = 0usize;
        for row in reader.deserialize::<Row>() {
            let row = row?;
            if out
                .insert(FeatureId::new(row.layer, row.index), row.explanation)
                .is_some()
            {
                replaced += 1;
            }
        }
        if replaced > 0 {
            log::warn!("{replaced} duplicate annotation rows; the last row for each feature wins");
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(std::fs::File::open(path).at(path)?)
    }

    pub fn write_to(&self, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["layer", "index", "explanation"])?;
        for (f, text) in &self.text {
            writer.serialize((f.layer, f.index, text))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_to(std::fs::File::create(path).at(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_duplicates() {
        let text = "layer,index,explanation\n4,3465,\"Estonia, the country\"\n0,1,first\n0,1,second\n";
        let a = Annotations::from_reader(text.as_bytes()).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.get(FeatureId::new(4, 3465)), Some("Estonia, the country"));
        assert_eq!(a.get(FeatureId::new(0, 1)), Some("second"));
        assert_eq!(a.get(FeatureId::new(9, 9)), None);
        let mut out = Vec::new();
        a.write_to(&mut out).unwrap();
        assert_eq!(Annotations::from_reader(out.as_slice()).unwrap(), a);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(Annotations::from_reader("layer,index,explanation\n".as_bytes())
            .unwrap()
            .is_empty());
    }
}
