//! Sparse similarity matrices and their on-disk triplet format.
//!
//! ```text
//! magic       "SAEM"
//! version     u32
//! measure     u32 tag
//! up layer    u32      (downstream layer is up + 1)
//! n_up        u32
//! n_down      u32
//! min_co      u64      (u64::MAX: rule disabled)
//! floor       f64      (NaN: never sparsified)
//! absent      3 x u64  (low co-activation, undefined, below floor)
//! n_entries   u64
//! entries     n_entries x (up u32, down u32, value f64), sorted by (up, down)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::measure::MeasureKind;
use crate::error::IoContext;
use crate::{Error, Result};

pub const MATRIX_MAGIC: [u8; 4] = *b"SAEM";
const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: usize = 72;

/// Similarity scores below this are dropped before downstream processing.
pub const DEFAULT_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub up: u32,
    pub down: u32,
    pub value: f64,
}

/// Why pairs are missing from a matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsenceCounts {
    /// Co-activation count at or below the validity minimum.
    pub low_coactivation: u64,
    /// Measure undefined (zero variance, zero sum of squares, zero count).
    pub undefined: u64,
    /// Removed by sparsification.
    pub below_floor: u64,
}

impl AbsenceCounts {
    pub fn total(&self) -> u64 {
        self.low_coactivation + self.undefined + self.below_floor
    }

    pub(crate) fn add(&mut self, other: &Self) {
        self.low_coactivation += other.low_coactivation;
        self.undefined += other.undefined;
        self.below_floor += other.below_floor;
    }
}

/// Finalized values of one measure for one adjacent layer pair. Pairs not
/// stored are absent; [`SimilarityMatrix::absent`] records why.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub measure: MeasureKind,
    pub upstream_layer: u32,
    pub n_up: u32,
    pub n_down: u32,
    /// Pairs with at most this many co-activations are invalid.
    pub min_co: Option<u64>,
    /// Sparsification floor applied so far.
    pub floor: Option<f64>,
    pub absent: AbsenceCounts,
    entries: Vec<MatrixEntry>,
}

impl SimilarityMatrix {
    /// Builds a matrix from unordered entries. Duplicate or out-of-range
    /// pairs are rejected.
    pub fn new(
        measure: MeasureKind,
        upstream_layer: u32,
        n_up: u32,
        n_down: u32,
        mut entries: Vec<MatrixEntry>,
    ) -> Result<Self> {
        entries.sort_unstable_by_key(|e| (e.up, e.down));
        for w in entries.windows(2) {
            if (w[0].up, w[0].down) == (w[1].up, w[1].down) {
                return Err(Error::Format(format!("duplicate entry ({}, {})", w[0].up, w[0].down)));
            }
        }
        if let Some(e) = entries.iter().find(|e| e.up >= n_up || e.down >= n_down) {
            return Err(Error::Dimension(format!(
                "entry ({}, {}) outside {n_up}x{n_down}",
                e.up, e.down
            )));
        }
        if let Some(e) = entries.iter().find(|e| !e.value.is_finite()) {
            return Err(Error::Format(format!("entry ({}, {}) is not finite", e.up, e.down)));
        }
        Ok(Self {
            measure,
            upstream_layer,
            n_up,
            n_down,
            min_co: None,
            floor: None,
            absent: AbsenceCounts::default(),
            entries,
        })
    }

    pub fn empty(measure: MeasureKind, upstream_layer: u32, n_up: u32, n_down: u32) -> Self {
        Self {
            measure,
            upstream_layer,
            n_up,
            n_down,
            min_co: None,
            floor: None,
            absent: AbsenceCounts::default(),
            entries: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_sorted_parts(
        measure: MeasureKind,
        upstream_layer: u32,
        n_up: u32,
        n_down: u32,
        min_co: Option<u64>,
        floor: Option<f64>,
        absent: AbsenceCounts,
        entries: Vec<MatrixEntry>,
    ) -> Self {
        debug_assert!(entries.windows(2).all(|w| (w[0].up, w[0].down) < (w[1].up, w[1].down)));
        Self {
            measure,
            upstream_layer,
            n_up,
            n_down,
            min_co,
            floor,
            absent,
            entries,
        }
    }

    pub fn downstream_layer(&self) -> u32 {
        self.upstream_layer + 1
    }

    pub fn entries(&self) -> &[MatrixEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_pairs(&self) -> u64 {
        u64::from(self.n_up) * u64::from(self.n_down)
    }

    pub fn n_absent(&self) -> u64 {
        self.total_pairs() - self.entries.len() as u64
    }

    pub fn get(&self, up: u32, down: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&(up, down), |e| (e.up, e.down))
            .ok()
            .map(|k| self.entries[k].value)
    }

    /// Present entries of one upstream feature, by downstream index.
    pub fn row(&self, up: u32) -> &[MatrixEntry] {
        let start = self.entries.partition_point(|e| e.up < up);
        let end = self.entries.partition_point(|e| e.up <= up);
        &self.entries[start..end]
    }

    /// Present entries of one downstream feature, by upstream index.
    pub fn column(&self, down: u32) -> Vec<MatrixEntry> {
        self.entries.iter().filter(|e| e.down == down).copied().collect()
    }

    /// Drops entries with `|value| < floor`. A value exactly at the floor is
    /// kept.
    pub fn sparsify(&self, floor: f64) -> Self {
        let entries: Vec<MatrixEntry> = self
            .entries
            .iter()
            .filter(|e| e.value.abs() >= floor)
            .copied()
            .collect();
        let mut absent = self.absent;
        absent.below_floor += (self.entries.len() - entries.len()) as u64;
        let floor = match self.floor {
            Some(f) if f >= floor => Some(f),
            _ if floor > 0.0 => Some(floor),
            existing => existing,
        };
        Self {
            entries,
            absent,
            floor,
            ..self.clone()
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).at(path)?);
        self.write_to(&mut out).at(path)?;
        out.flush().at(path)
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&MATRIX_MAGIC)?;
        for word in [
            MATRIX_VERSION,
            self.measure.tag(),
            self.upstream_layer,
            self.n_up,
            self.n_down,
        ] {
            out.write_all(&word.to_le_bytes())?;
        }
        out.write_all(&self.min_co.unwrap_or(u64::MAX).to_le_bytes())?;
        out.write_all(&self.floor.unwrap_or(f64::NAN).to_le_bytes())?;
        for count in [
            self.absent.low_coactivation,
            self.absent.undefined,
            self.absent.below_floor,
            self.entries.len() as u64,
        ] {
            out.write_all(&count.to_le_bytes())?;
        }
        for e in &self.entries {
            out.write_all(&e.up.to_le_bytes())?;
            out.write_all(&e.down.to_le_bytes())?;
            out.write_all(&e.value.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut input = BufReader::new(File::open(path).at(path)?);
        let mut buf = Vec::new();
        input.read_to_end(&mut buf).at(path)?;
        let truncated = || Error::Truncated {
            path: path.to_path_buf(),
            detail: "matrix file ends early".into(),
        };
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let slice = buf.get(at..at + n).ok_or_else(truncated)?;
            at += n;
            Ok(slice)
        };
        if take(4)? != MATRIX_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "SAEM".into(),
            });
        }
        let mut u32_field = || -> Result<u32> { Ok(u32::from_le_bytes(take(4)?.try_into().unwrap())) };
        let version = u32_field()?;
        if version != MATRIX_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        let tag = u32_field()?;
        let measure = MeasureKind::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("{}: unknown measure tag {tag}", path.display())))?;
        let upstream_layer = u32_field()?;
        let n_up = u32_field()?;
        let n_down = u32_field()?;
        let mut u64_field = || -> Result<u64> { Ok(u64::from_le_bytes(take(8)?.try_into().unwrap())) };
        let min_co = match u64_field()? {
            u64::MAX => None,
            v => Some(v),
        };
        let floor = f64::from_bits(u64_field()?);
        let floor = (!floor.is_nan()).then_some(floor);
        let absent = AbsenceCounts {
            low_coactivation: u64_field()?,
            undefined: u64_field()?,
            below_floor: u64_field()?,
        };
        let n_entries = u64_field()? as usize;
        if buf.len() - HEADER_LEN != n_entries * 16 {
            return Err(if buf.len() - HEADER_LEN < n_entries * 16 {
                truncated()
            } else {
                Error::Format(format!("{}: trailing bytes after entries", path.display()))
            });
        }
        let entries = buf[HEADER_LEN..]
            .chunks_exact(16)
            .map(|c| MatrixEntry {
                up: u32::from_le_bytes(c[0..4].try_into().unwrap()),
                down: u32::from_le_bytes(c[4..8].try_into().unwrap()),
                value: f64::from_le_bytes(c[8..16].try_into().unwrap()),
            })
            .collect::<Vec<_>>();
        if !entries.windows(2).all(|w| (w[0].up, w[0].down) < (w[1].up, w[1].down)) {
            return Err(Error::Format(format!(
                "{}: entries are not strictly sorted",
                path.display()
            )));
        }
        let mut matrix = Self::new(measure, upstream_layer, n_up, n_down, entries)?;
        matrix.min_co = min_co;
        matrix.floor = floor;
        matrix.absent = absent;
        Ok(matrix)
    }

    /// `up,down,value` CSV for inspection.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["up", "down", "value"])?;
        for e in &self.entries {
            writer.serialize((e.up, e.down, e.value))?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Canonical file name for a matrix inside a similarity directory.
    pub fn file_name(measure: MeasureKind, upstream_layer: u32) -> String {
        format!("{}_L{:02}.saem", measure.name(), upstream_layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(up: u32, down: u32, value: f64) -> MatrixEntry {
        MatrixEntry { up, down, value }
    }

    fn sample() -> SimilarityMatrix {
        SimilarityMatrix::new(
            MeasureKind::Jaccard,
            3,
            4,
            4,
            vec![entry(2, 1, 0.05), entry(0, 0, 0.1), entry(1, 3, 0.2), entry(2, 0, -0.3)],
        )
        .unwrap()
    }

    #[test]
    fn entries_are_sorted_and_looked_up() {
        let m = sample();
        assert_eq!(m.get(1, 3), Some(0.2));
        assert_eq!(m.get(3, 3), None);
        assert_eq!(m.row(2).len(), 2);
        assert_eq!(m.column(0).len(), 2);
        assert_eq!(m.downstream_layer(), 4);
        assert_eq!(m.n_absent(), 12);
    }

    #[test]
    fn duplicates_and_out_of_range_are_rejected() {
        assert!(
            SimilarityMatrix::new(MeasureKind::Pearson, 0, 2, 2, vec![entry(0, 0, 0.1), entry(0, 0, 0.2)]).is_err()
        );
        assert!(SimilarityMatrix::new(MeasureKind::Pearson, 0, 2, 2, vec![entry(2, 0, 0.1)]).is_err());
    }

    #[test]
    fn sparsify_is_strict_below_floor() {
        let m = sample().sparsify(0.1);
        assert_eq!(m.get(2, 1), None);
        assert_eq!(m.get(0, 0), Some(0.1));
        assert_eq!(m.get(2, 0), Some(-0.3));
        assert_eq!(m.absent.below_floor, 1);
        assert_eq!(m.floor, Some(0.1));
        assert_eq!(sample().sparsify(0.0), sample());
    }

    #[test]
    fn binary_format_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.saem");
        let mut m = sample().sparsify(0.1);
        m.min_co = Some(10);
        m.write(&path).unwrap();
        assert_eq!(SimilarityMatrix::read(&path).unwrap(), m);

        let empty = SimilarityMatrix::empty(MeasureKind::Necessity, 0, 3, 5);
        empty.write(&path).unwrap();
        assert_eq!(SimilarityMatrix::read(&path).unwrap(), empty);
    }

    #[test]
    fn corrupt_matrix_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.saem");
        sample().write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(SimilarityMatrix::read(&path), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(SimilarityMatrix::read(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn csv_export() {
        let mut out = Vec::new();
        sample().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("up,down,value"));
        assert_eq!(text.lines().count(), 5);
    }

    proptest! {
        #[test]
        fn sparsify_leaves_nothing_strictly_between_zero_and_floor(
            values in prop::collection::vec(-1.0f64..1.0, 0..40),
            floor in 0.0f64..0.5,
        ) {
            let entries = values.iter().enumerate().map(|(k, &v)| entry(k as u32 / 8, k as u32 % 8, v)).collect();
            let m = SimilarityMatrix::new(MeasureKind::Pearson, 0, 8, 8, entries).unwrap();
            let s = m.sparsify(floor);
            prop_assert!(s.entries().iter().all(|e| e.value.abs() >= floor));
            prop_assert_eq!(s.len() as u64 + s.absent.below_floor, m.len() as u64);
        }
    }
}
