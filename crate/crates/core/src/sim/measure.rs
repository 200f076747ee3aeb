use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Pearson,
    Jaccard,
    Sufficiency,
    Necessity,
    /// `Σxy / sqrt(Σx² Σy²)`.
    Uncentered,
    /// `Σxy / N`, the literal mean product.
    UncenteredMean,
    DecoderCosine,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 7] = [
        MeasureKind::Pearson,
        MeasureKind::Jaccard,
        MeasureKind::Sufficiency,
        MeasureKind::Necessity,
        MeasureKind::Uncentered,
        MeasureKind::UncenteredMean,
        MeasureKind::DecoderCosine,
    ];

    /// The four measures computed by default.
    pub const STANDARD: [MeasureKind; 4] = [
        MeasureKind::Pearson,
        MeasureKind::Jaccard,
        MeasureKind::Necessity,
        MeasureKind::Sufficiency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Pearson => "pearson",
            MeasureKind::Jaccard => "jaccard",
            MeasureKind::Sufficiency => "sufficiency",
            MeasureKind::Necessity => "necessity",
            MeasureKind::Uncentered => "uncentered",
            MeasureKind::UncenteredMean => "uncentered_mean",
            MeasureKind::DecoderCosine => "decoder_cosine",
        }
    }

    /// Value range, or `None` when unbounded.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            MeasureKind::Pearson | MeasureKind::Uncentered | MeasureKind::DecoderCosine => Some((-1.0, 1.0)),
            MeasureKind::Jaccard | MeasureKind::Sufficiency | MeasureKind::Necessity => Some((0.0, 1.0)),
            MeasureKind::UncenteredMean => None,
        }
    }

    /// Whether the measure is computed from binarized activity.
    pub fn is_count_based(self) -> bool {
        matches!(
            self,
            MeasureKind::Jaccard | MeasureKind::Sufficiency | MeasureKind::Necessity
        )
    }

    /// Whether the measure comes from the activation stream (as opposed to
    /// SAE weights).
    pub fn is_streamed(self) -> bool {
        self != MeasureKind::DecoderCosine
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            MeasureKind::Pearson => 0,
            MeasureKind::Jaccard => 1,
            MeasureKind::Sufficiency => 2,
            MeasureKind::Necessity => 3,
            MeasureKind::Uncentered => 4,
            MeasureKind::UncenteredMean => 5,
            MeasureKind::DecoderCosine => 6,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown measure {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_tags_round_trip() {
        for m in MeasureKind::ALL {
            assert_eq!(m.name().parse::<MeasureKind>().unwrap(), m);
            assert_eq!(MeasureKind::from_tag(m.tag()), Some(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("mutual_information".parse::<MeasureKind>().is_err());
    }
}
