//! Mergeable per-layer-pair statistics.
//!
//! Per-feature state is dense. Per-pair state (co-activation counts and raw
//! cross-products) is held in square tiles of the `n_up x n_down` pair grid;
//! an accumulator owns any subset of tiles, which lets the pair grid be swept
//! over several passes when it does not fit in memory at once.

use serde::{Deserialize, Serialize};

use crate::store::{Binarizer, TokenFrame};
use crate::{Error, Result};

/// Co-activation count and cross-product sum of one feature pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[repr(C)]
pub struct PairCell {
    /// Tokens on which both features were binarize-active.
    pub co: u64,
    /// Σ x·y over raw activations.
    pub cross: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSums {
    /// Tokens on which the feature was binarize-active.
    pub active: Vec<u64>,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl FeatureSums {
    fn zeros(n: usize) -> Self {
        Self {
            active: vec![0; n],
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.active.iter_mut().zip(&other.active) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    #[inline]
    fn observe(&mut self, entries: &[PreparedEntry]) {
        for e in entries {
            let i = e.index as usize;
            self.sum[i] += e.value;
            self.sum_sq[i] += e.value * e.value;
            self.active[i] += u64::from(e.active);
        }
    }
}

/// One nonzero activation widened to f64, with its binarized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedEntry {
    pub index: u32,
    pub value: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileCoord {
    pub row: usize,
    pub col: usize,
}

/// Partition of an `n_up x n_down` grid into tiles of edge `edge` (the last
/// row/column of tiles may be narrower).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileLayout {
    pub n_up: usize,
    pub n_down: usize,
    pub edge: usize,
}

impl TileLayout {
    pub fn new(n_up: usize, n_down: usize, edge: usize) -> Result<Self> {
        if edge == 0 {
            return Err(Error::Invalid("tile edge must be positive".into()));
        }
        Ok(Self { n_up, n_down, edge })
    }

    pub fn rows(&self) -> usize {
        self.n_up.div_ceil(self.edge)
    }

    pub fn cols(&self) -> usize {
        self.n_down.div_ceil(self.edge)
    }

    pub fn height(&self, row: usize) -> usize {
        self.edge.min(self.n_up - row * self.edge)
    }

    pub fn width(&self, col: usize) -> usize {
        self.edge.min(self.n_down - col * self.edge)
    }

    pub fn cells(&self, tile: TileCoord) -> usize {
        self.height(tile.row) * self.width(tile.col)
    }

    pub fn bytes(&self, tile: TileCoord) -> usize {
        self.cells(tile) * std::mem::size_of::<PairCell>()
    }

    pub fn all_tiles(&self) -> Vec<TileCoord> {
        (0..self.rows())
            .flat_map(|row| (0..self.cols()).map(move |col| TileCoord { row, col }))
            .collect()
    }
}

/// Streaming statistics for upstream layer `k` and downstream layer `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStatsAccumulator {
    upstream_layer: u32,
    theta: f64,
    binarizer_fingerprint: u64,
    n_tokens: u64,
    up: FeatureSums,
    down: FeatureSums,
    layout: TileLayout,
    tiles: Vec<Option<Box<[PairCell]>>>,
    scratch: Scratch,
}

impl PairStatsAccumulator {
    /// Accumulator owning the whole pair grid.
    pub fn new(
        upstream_layer: u32,
        n_up: usize,
        n_down: usize,
        binarizer: &Binarizer,
        tile_edge: usize,
    ) -> Result<Self> {
        let layout = TileLayout::new(n_up, n_down, tile_edge)?;
        let all = layout.all_tiles();
        Self::with_tiles(upstream_layer, layout, binarizer, &all)
    }

    /// Accumulator owning only `tiles` of the grid; updates to pairs outside
    /// them are skipped.
    pub fn with_tiles(
        upstream_layer: u32,
        layout: TileLayout,
        binarizer: &Binarizer,
        tiles: &[TileCoord],
    ) -> Result<Self> {
        if upstream_layer as usize + 1 >= binarizer.n_layers() {
            return Err(Error::Dimension(format!(
                "layer pair ({upstream_layer}, {}) outside the {} binarized layers",
                upstream_layer + 1,
                binarizer.n_layers()
            )));
        }
        if layout.n_up != binarizer.n_features() || layout.n_down != binarizer.n_features() {
            return Err(Error::Dimension(format!(
                "accumulator grid {}x{} does not match the max table ({} features)",
                layout.n_up,
                layout.n_down,
                binarizer.n_features()
            )));
        }
        let mut grid = vec![None; layout.rows() * layout.cols()];
        for &t in tiles {
            if t.row >= layout.rows() || t.col >= layout.cols() {
                return Err(Error::Invalid(format!("tile {t:?} outside the grid")));
            }
            grid[t.row * layout.cols() + t.col] = Some(vec![PairCell::default(); layout.cells(t)].into_boxed_slice());
        }
        Ok(Self {
            upstream_layer,
            theta: binarizer.rule().theta,
            binarizer_fingerprint: binarizer.fingerprint(),
            n_tokens: 0,
            up: FeatureSums::zeros(layout.n_up),
            down: FeatureSums::zeros(layout.n_down),
            layout,
            tiles: grid,
            scratch: Scratch::default(),
        })
    }

    pub fn upstream_layer(&self) -> u32 {
        self.upstream_layer
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn n_up(&self) -> usize {
        self.layout.n_up
    }

    pub fn n_down(&self) -> usize {
        self.layout.n_down
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn layout(&self) -> TileLayout {
        self.layout
    }

    pub fn up(&self) -> &FeatureSums {
        &self.up
    }

    pub fn down(&self) -> &FeatureSums {
        &self.down
    }

    pub fn owned_tiles(&self) -> impl Iterator<Item = (TileCoord, &[PairCell])> + '_ {
        let cols = self.layout.cols();
        self.tiles.iter().enumerate().filter_map(move |(k, t)| {
            t.as_deref().map(|cells| {
                (
                    TileCoord {
                        row: k / cols,
                        col: k % cols,
                    },
                    cells,
                )
            })
        })
    }

    pub fn owns_all_tiles(&self) -> bool {
        self.tiles.iter().all(Option::is_some)
    }

    /// Pair state, or `None` when the pair's tile is not owned.
    pub fn pair(&self, up: usize, down: usize) -> Option<PairCell> {
        let edge = self.layout.edge;
        let (row, col) = (up / edge, down / edge);
        let cells = self.tiles[row * self.layout.cols() + col].as_deref()?;
        Some(cells[(up % edge) * self.layout.width(col) + down % edge])
    }

    /// Adds one token. `frame` must carry both layers of the pair.
    pub fn accumulate(&mut self, frame: &TokenFrame, binarizer: &Binarizer) -> Result<()> {
        if binarizer.fingerprint() != self.binarizer_fingerprint {
            return Err(Error::Incompatible(
                "binarizer differs from the one the accumulator was built with".into(),
            ));
        }
        let k = self.upstream_layer as usize;
        if frame.layers.len() <= k + 1 {
            return Err(Error::Dimension(format!(
                "frame has {} layers, pair needs layer {}",
                frame.layers.len(),
                k + 1
            )));
        }
        let check = |layer: usize, n: usize| match frame.layers[layer].indices.last() {
            Some(&last) if last as usize >= n => Err(Error::Dimension(format!(
                "feature {last} in layer {layer} exceeds {n} features"
            ))),
            _ => Ok(()),
        };
        check(k, self.layout.n_up)?;
        check(k + 1, self.layout.n_down)?;
        let up = crate::sim::prepare_layer(frame, k, binarizer);
        let down = crate::sim::prepare_layer(frame, k + 1, binarizer);
        self.accumulate_prepared(&up, &down);
        Ok(())
    }

    /// Adds one token from already binarized entries. Indices must be in
    /// range; callers going through [`PairStatsAccumulator::accumulate`] get
    /// that checked.
    pub fn accumulate_prepared(&mut self, up: &[PreparedEntry], down: &[PreparedEntry]) {
        self.n_tokens += 1;
        self.up.observe(up);
        self.down.observe(down);
        if up.is_empty() || down.is_empty() {
            return;
        }
        let edge = self.layout.edge;
        let cols = self.layout.cols();
        let n_down = self.layout.n_down;
        // (tile column, row stride in that tile, offset, value, active)
        let slots = &mut self.scratch.0;
        slots.clear();
        for d in down {
            let col = d.index as usize / edge;
            let width = n_down.min((col + 1) * edge) - col * edge;
            slots.push((col, width, d.index as usize % edge, d.value, d.active));
        }
        for u in up {
            let row = u.index as usize / edge;
            let row_off = u.index as usize % edge;
            let tiles = &mut self.tiles[row * cols..(row + 1) * cols];
            for &(col, width, off, value, active) in slots.iter() {
                if let Some(cells) = tiles[col].as_deref_mut() {
                    let cell = &mut cells[row_off * width + off];
                    cell.cross += u.value * value;
                    cell.co += u64::from(u.active & active);
                }
            }
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.upstream_layer != other.upstream_layer
            || self.layout != other.layout
            || self.theta.to_bits() != other.theta.to_bits()
            || self.binarizer_fingerprint != other.binarizer_fingerprint
        {
            return Err(Error::Incompatible(
                "accumulators differ in layer pair, dimensions or binarization".into(),
            ));
        }
        if self
            .tiles
            .iter()
            .zip(&other.tiles)
            .any(|(a, b)| a.is_some() != b.is_some())
        {
            return Err(Error::Incompatible("accumulators own different tiles".into()));
        }
        Ok(())
    }

    /// Field-wise sum of `other` into `self`.
    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        self.n_tokens += other.n_tokens;
        self.up.add(&other.up);
        self.down.add(&other.down);
        for (a, b) in self.tiles.iter_mut().zip(&other.tiles) {
            if let (Some(a), Some(b)) = (a.as_deref_mut(), b.as_deref()) {
                for (x, y) in a.iter_mut().zip(b) {
                    x.co += y.co;
                    x.cross += y.cross;
                }
            }
        }
        Ok(())
    }
}

/// Field-wise sum of two compatible accumulators.
pub fn merge(a: &PairStatsAccumulator, b: &PairStatsAccumulator) -> Result<PairStatsAccumulator> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Reusable buffer for the downstream slots of one token. Carries no state
/// between calls, so it is ignored by equality and not cloned.
#[derive(Debug, Default)]
struct Scratch(Vec<(usize, usize, usize, f64, bool)>);

impl Clone for Scratch {
    fn clone(&self) -> Self {
        Self::default()
    }
}

impl PartialEq for Scratch {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
