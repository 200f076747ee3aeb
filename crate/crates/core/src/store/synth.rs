//! Synthetic activation datasets with planted ground truth.
//!
//! Every token is generated from its own RNG stream (seed, position), so any
//! position range can be regenerated independently and in parallel.
//!
//! Magnitudes are drawn so that binarization at the default relative
//! threshold is decided at generation time: a "strong" firing lies in
//! `[0.5, 1.0] * scale` and a "weak" (sub-threshold) firing in
//! `[0.01, 0.09] * scale`, where `scale` is a fixed per-feature factor in
//! `[1, 10)`. Once a feature has fired strongly its maximum is at least
//! `0.5 * scale`, so strong firings are always active and weak ones never are
//! for any threshold in `(0.18, 0.5]`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use super::binarize::Binarizer;
use super::dataset::{DatasetManifest, ShardEntry};
use super::shard::{ShardDims, ShardWriter, TokenFrame};
use super::source::FrameSource;
use crate::error::IoContext;
use crate::{Error, FeatureId, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

fn default_tokens_per_shard() -> u64 {
    100_000
}

/// One planted structure. Features of different motifs are disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motif {
    /// One feature per consecutive layer; each member copies the previous
    /// member's activation plus Gaussian noise.
    Chain {
        features: Vec<FeatureId>,
        rate: f64,
        noise_sigma: f64,
    },
    /// Child (next layer) fires exactly when both parents are active.
    AndGate {
        parents: [FeatureId; 2],
        child: FeatureId,
        parent_rate: f64,
        #[serde(default)]
        parent_weak_rate: f64,
    },
    /// Child (next layer) fires when at least one parent is active.
    OrGate {
        parents: [FeatureId; 2],
        child: FeatureId,
        parent_rate: f64,
        #[serde(default)]
        parent_weak_rate: f64,
    },
    /// Members fire together, driven by a shared latent variable.
    Block {
        members: Vec<FeatureId>,
        latent_rate: f64,
        member_rate: f64,
    },
}

impl Motif {
    pub fn features(&self) -> Vec<FeatureId> {
        match self {
            Motif::Chain { features, .. } => features.clone(),
            Motif::AndGate { parents, child, .. } | Motif::OrGate { parents, child, .. } => {
                vec![parents[0], parents[1], *child]
            }
            Motif::Block { members, .. } => members.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_layers: u32,
    pub n_features: u32,
    pub n_tokens: u64,
    #[serde(default = "default_tokens_per_shard")]
    pub tokens_per_shard: u64,
    /// Per-feature firing probability of features outside every motif.
    pub background_rate: f64,
    /// Fraction of background firings that are sub-threshold.
    #[serde(default)]
    pub weak_fraction: f64,
    #[serde(default)]
    pub motifs: Vec<Motif>,
    pub seed: u64,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} = {p} is not in (0, 1)")))
    }
}

fn check_optional_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} = {p} is not in [0, 1)")))
    }
}

impl SynthSpec {
    pub fn dims(&self) -> ShardDims {
        ShardDims {
            n_layers: self.n_layers,
            n_features: self.n_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_features == 0 {
            return Err(Error::Invalid("synthetic dataset needs layers and features".into()));
        }
        if self.tokens_per_shard == 0 {
            return Err(Error::Invalid("tokens_per_shard must be positive".into()));
        }
        check_optional_probability("background_rate", self.background_rate)?;
        check_optional_probability("weak_fraction", self.weak_fraction)?;
        let mut used = BTreeSet::new();
        for motif in &self.motifs {
            for f in motif.features() {
                if f.layer >= self.n_layers || f.index >= self.n_features {
                    return Err(Error::Dimension(format!("motif feature {f} out of range")));
                }
                if !used.insert(f) {
                    return Err(Error::OverlappingMotif(f));
                }
            }
            match motif {
                Motif::Chain {
                    features,
                    rate,
                    noise_sigma,
                } => {
                    check_probability("chain rate", *rate)?;
                    if features.len() < 2 {
                        return Err(Error::Invalid("a chain needs at least two features".into()));
                    }
                    if features.windows(2).any(|w| w[1].layer != w[0].layer + 1) {
                        return Err(Error::Invalid("chain members must sit in consecutive layers".into()));
                    }
                    if !(*noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                        return Err(Error::Invalid(format!("chain noise {noise_sigma}")));
                    }
                }
                Motif::AndGate {
                    parents,
                    child,
                    parent_rate,
                    parent_weak_rate,
                }
                | Motif::OrGate {
                    parents,
                    child,
                    parent_rate,
                    parent_weak_rate,
                } => {
                    check_probability("gate parent_rate", *parent_rate)?;
                    check_optional_probability("gate parent_weak_rate", *parent_weak_rate)?;
                    if parents[0].layer != parents[1].layer || child.layer != parents[0].layer + 1 {
                        return Err(Error::Invalid(
                            "gate parents must share a layer and the child must be in the next one".into(),
                        ));
                    }
                }
                Motif::Block {
                    members,
                    latent_rate,
                    member_rate,
                } => {
                    check_probability("block latent_rate", *latent_rate)?;
                    if !(*member_rate > 0.0 && *member_rate <= 1.0) {
                        return Err(Error::Invalid(format!(
                            "block member_rate = {member_rate} is not in (0, 1]"
                        )));
                    }
                    if members.len() < 2 {
                        return Err(Error::Invalid("a block needs at least two members".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut truth = GroundTruth {
            seed: self.seed,
            ..GroundTruth::default()
        };
        for (label, motif) in self.motifs.iter().enumerate() {
            for f in motif.features() {
                truth.labels.insert(f, label);
            }
            match motif {
                Motif::Chain { features, .. } => truth.chains.push(features.clone()),
                Motif::AndGate { parents, child, .. } => truth.and_gates.push(GateTruth {
                    parents: *parents,
                    child: *child,
                }),
                Motif::OrGate { parents, child, .. } => truth.or_gates.push(GateTruth {
                    parents: *parents,
                    child: *child,
                }),
                Motif::Block { members, .. } => truth.blocks.push(members.clone()),
            }
        }
        truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTruth {
    pub parents: [FeatureId; 2],
    pub child: FeatureId,
}

/// Machine-readable record of what was planted. `labels` maps every motif
/// feature to the ordinal of its motif.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub chains: Vec<Vec<FeatureId>>,
    pub and_gates: Vec<GateTruth>,
    pub or_gates: Vec<GateTruth>,
    pub blocks: Vec<Vec<FeatureId>>,
    pub labels: BTreeMap<FeatureId, usize>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&std::fs::read_to_string(path).at(path)?)?)
    }
}

/// Frame generator for a validated [`SynthSpec`].
#[derive(Debug, Clone)]
pub struct SynthSource {
    spec: SynthSpec,
    owned: Vec<Vec<bool>>,
    background: Option<Geometric>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl SynthSource {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut owned = vec![vec![false; spec.n_features as usize]; spec.n_layers as usize];
        for f in spec.motifs.iter().flat_map(Motif::features) {
            owned[f.layer as usize][f.index as usize] = true;
        }
        let background = if spec.background_rate > 0.0 {
            Some(Geometric::new(spec.background_rate).map_err(|e| Error::Invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            spec,
            owned,
            background,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Fixed magnitude scale of a feature, in `[1, 10)`.
    pub fn scale(&self, f: FeatureId) -> f64 {
        let h = splitmix(self.spec.seed ^ (u64::from(f.layer) << 32 | u64::from(f.index)));
        1.0 + 9.0 * (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn strong(&self, rng: &mut ChaCha8Rng, f: FeatureId) -> f32 {
        (self.scale(f) * rng.random_range(0.5..=1.0)) as f32
    }

    fn weak(&self, rng: &mut ChaCha8Rng, f: FeatureId) -> f32 {
        (self.scale(f) * rng.random_range(0.01..=0.09)) as f32
    }

    /// Generates the frame at `position` into `frame`.
    pub fn generate_into(&self, position: u64, frame: &mut TokenFrame) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(position);
        frame.position = position;
        frame.layers.resize_with(self.spec.n_layers as usize, Default::default);
        for layer in &mut frame.layers {
            layer.clear();
        }
        let push = |frame: &mut TokenFrame, f: FeatureId, v: f32| {
            frame.layers[f.layer as usize].push(f.index, v);
        };

        for motif in &self.spec.motifs {
            match motif {
                Motif::Chain {
                    features,
                    rate,
                    noise_sigma,
                } => {
                    if !rng.random_bool(*rate) {
                        continue;
                    }
                    let mut value = f64::from(self.strong(&mut rng, features[0]));
                    push(frame, features[0], value as f32);
                    let noise = Normal::new(0.0, *noise_sigma).expect("validated sigma");
                    for &f in &features[1..] {
                        if *noise_sigma > 0.0 {
                            value += noise.sample(&mut rng);
                        }
                        if value <= 0.0 {
                            break;
                        }
                        push(frame, f, value as f32);
                    }
                }
                Motif::AndGate {
                    parents,
                    child,
                    parent_rate,
                    parent_weak_rate,
                }
                | Motif::OrGate {
                    parents,
                    child,
                    parent_rate,
                    parent_weak_rate,
                } => {
                    let mut active = [false; 2];
                    for (slot, &p) in parents.iter().enumerate() {
                        if rng.random_bool(*parent_rate) {
                            active[slot] = true;
                            let v = self.strong(&mut rng, p);
                            push(frame, p, v);
                        } else if *parent_weak_rate > 0.0 && rng.random_bool(*parent_weak_rate) {
                            let v = self.weak(&mut rng, p);
                            push(frame, p, v);
                        }
                    }
                    let fires = match motif {
                        Motif::AndGate { .. } => active[0] && active[1],
                        _ => active[0] || active[1],
                    };
                    if fires {
                        let v = self.strong(&mut rng, *child);
                        push(frame, *child, v);
                    }
                }
                Motif::Block {
                    members,
                    latent_rate,
                    member_rate,
                } => {
                    if !rng.random_bool(*latent_rate) {
                        continue;
                    }
                    for &m in members {
                        if *member_rate >= 1.0 || rng.random_bool(*member_rate) {
                            let v = self.strong(&mut rng, m);
                            push(frame, m, v);
                        }
                    }
                }
            }
        }

        if let Some(geometric) = &self.background {
            let n = u64::from(self.spec.n_features);
            for layer in 0..self.spec.n_layers {
                let owned = &self.owned[layer as usize];
                let mut index = geometric.sample(&mut rng);
                while index < n {
                    if !owned[index as usize] {
                        let f = FeatureId::new(layer, index as u32);
                        let v = if self.spec.weak_fraction > 0.0 && rng.random_bool(self.spec.weak_fraction) {
                            self.weak(&mut rng, f)
                        } else {
                            self.strong(&mut rng, f)
                        };
                        push(frame, f, v);
                    }
                    index = index.saturating_add(1 + geometric.sample(&mut rng));
                }
            }
        }

        for layer in &mut frame.layers {
            if layer.indices.windows(2).all(|w| w[0] < w[1]) {
                continue;
            }
            let mut pairs: Vec<(u32, f32)> = layer.iter().collect();
            pairs.sort_unstable_by_key(|&(i, _)| i);
            layer.clear();
            for (i, v) in pairs {
                layer.push(i, v);
            }
        }
    }

    pub fn frame(&self, position: u64) -> TokenFrame {
        let mut frame = TokenFrame::default();
        self.generate_into(position, &mut frame);
        frame
    }
}

impl FrameSource for SynthSource {
    fn dims(&self) -> ShardDims {
        self.spec.dims()
    }

    fn n_tokens(&self) -> u64 {
        self.spec.n_tokens
    }

    fn for_each_frame(&self, range: Range<u64>, f: &mut dyn FnMut(&TokenFrame) -> Result<()>) -> Result<()> {
        let mut frame = TokenFrame::default();
        for position in range.start..range.end.min(self.spec.n_tokens) {
            self.generate_into(position, &mut frame);
            f(&frame)?;
        }
        Ok(())
    }
}

/// Output of [`synth_generate`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: DatasetManifest,
    pub ground_truth: GroundTruth,
}

/// Writes shards, `manifest.json` and `ground_truth.json` into `out_dir`.
pub fn synth_generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    let out_dir = out_dir.as_ref();
    let source = SynthSource::new(spec.clone())?;
    std::fs::create_dir_all(out_dir).at(out_dir)?;
    let mut shards = Vec::new();
    let mut frame = TokenFrame::default();
    let mut start = 0;
    while start < spec.n_tokens || shards.is_empty() {
        let end = (start + spec.tokens_per_shard).min(spec.n_tokens);
        let name = format!("shard_{:05}.saea", shards.len());
        let mut writer = ShardWriter::create(out_dir.join(&name), spec.dims())?;
        for position in start..end {
            source.generate_into(position, &mut frame);
            writer.push(&frame)?;
        }
        shards.push(ShardEntry {
            path: name.into(),
            n_tokens: writer.finish()?,
        });
        start = end;
        if spec.n_tokens == 0 {
            break;
        }
    }
    let manifest = DatasetManifest {
        n_layers: spec.n_layers,
        n_features_per_layer: spec.n_features,
        n_tokens: spec.n_tokens,
        shards,
        provenance: format!(
            "synthetic: seed {}, {} motifs, background rate {}",
            spec.seed,
            spec.motifs.len(),
            spec.background_rate
        ),
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    let ground_truth = spec.ground_truth();
    let path = out_dir.join(GROUND_TRUTH_FILE);
    let mut text = serde_json::to_string_pretty(&ground_truth)?;
    text.push('\n');
    std::fs::write(&path, text).at(&path)?;
    Ok(SynthOutput { manifest, ground_truth })
}

/// Convenience description of a planted dataset; [`PlantedLayout::build`]
/// assigns disjoint features to each motif from a seeded shuffle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedLayout {
    pub n_layers: u32,
    pub n_features: u32,
    pub n_tokens: u64,
    pub tokens_per_shard: u64,
    pub background_rate: f64,
    pub weak_fraction: f64,
    pub chains: usize,
    pub chain_rate: f64,
    pub chain_sigma: f64,
    pub and_gates: usize,
    pub or_gates: usize,
    pub gate_rate: f64,
    pub gate_weak_rate: f64,
    pub blocks: usize,
    pub block_layers: u32,
    pub block_width: u32,
    pub block_latent_rate: f64,
    pub block_member_rate: f64,
    pub seed: u64,
}

impl Default for PlantedLayout {
    fn default() -> Self {
        Self {
            n_layers: 3,
            n_features: 64,
            n_tokens: 10_000,
            tokens_per_shard: default_tokens_per_shard(),
            background_rate: 0.02,
            weak_fraction: 0.2,
            chains: 2,
            chain_rate: 0.05,
            chain_sigma: 0.02,
            and_gates: 1,
            or_gates: 1,
            gate_rate: 0.2,
            gate_weak_rate: 0.1,
            blocks: 1,
            block_layers: 2,
            block_width: 2,
            block_latent_rate: 0.05,
            block_member_rate: 0.9,
            seed: 7,
        }
    }
}

impl PlantedLayout {
    pub fn build(&self) -> Result<SynthSpec> {
        if self.n_layers == 0 {
            return Err(Error::Invalid("layout needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_1a70);
        let mut pools: Vec<Vec<u32>> = (0..self.n_layers)
            .map(|_| {
                let mut pool: Vec<u32> = (0..self.n_features).collect();
                pool.shuffle(&mut rng);
                pool
            })
            .collect();
        let mut take = |layer: u32| -> Result<FeatureId> {
            pools[layer as usize]
                .pop()
                .map(|index| FeatureId::new(layer, index))
                .ok_or_else(|| Error::Invalid(format!("layer {layer} has no free features left")))
        };
        let mut motifs = Vec::new();
        for _ in 0..self.chains {
            let features = (0..self.n_layers).map(&mut take).collect::<Result<_>>()?;
            motifs.push(Motif::Chain {
                features,
                rate: self.chain_rate,
                noise_sigma: self.chain_sigma,
            });
        }
        let gate_layers = self.n_layers.saturating_sub(1).max(1);
        for (i, and) in (0..self.and_gates)
            .map(|i| (i, true))
            .chain((0..self.or_gates).map(|i| (i, false)))
        {
            if self.n_layers < 2 {
                return Err(Error::Invalid("gates need at least two layers".into()));
            }
            let layer = i as u32 % gate_layers;
            let parents = [take(layer)?, take(layer)?];
            let child = take(layer + 1)?;
            motifs.push(if and {
                Motif::AndGate {
                    parents,
                    child,
                    parent_rate: self.gate_rate,
                    parent_weak_rate: self.gate_weak_rate,
                }
            } else {
                Motif::OrGate {
                    parents,
                    child,
                    parent_rate: self.gate_rate,
                    parent_weak_rate: self.gate_weak_rate,
                }
            });
        }
        let span = self.block_layers.clamp(1, self.n_layers);
        for i in 0..self.blocks {
            let first = i as u32 % (self.n_layers - span + 1);
            let mut members = Vec::new();
            for layer in first..first + span {
                for _ in 0..self.block_width {
                    members.push(take(layer)?);
                }
            }
            motifs.push(Motif::Block {
                members,
                latent_rate: self.block_latent_rate,
                member_rate: self.block_member_rate,
            });
        }
        let spec = SynthSpec {
            n_layers: self.n_layers,
            n_features: self.n_features,
            n_tokens: self.n_tokens,
            tokens_per_shard: self.tokens_per_shard,
            background_rate: self.background_rate,
            weak_fraction: self.weak_fraction,
            motifs,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Result of re-deriving motif predicates from an activation stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifCheck {
    /// Consecutive chain members carry identical activations on every token.
    pub chains_exact: Vec<bool>,
    /// Child active iff both parents active, on every token.
    pub and_gates_exact: Vec<bool>,
    /// Child active iff at least one parent active, on every token.
    pub or_gates_exact: Vec<bool>,
}

impl MotifCheck {
    pub fn all_hold(&self) -> bool {
        self.chains_exact
            .iter()
            .chain(&self.and_gates_exact)
            .chain(&self.or_gates_exact)
            .all(|&ok| ok)
    }
}

/// Recomputes the planted predicates from the frames of `source`.
pub fn check_motifs(source: &dyn FrameSource, binarizer: &Binarizer, truth: &GroundTruth) -> Result<MotifCheck> {
    let mut check = MotifCheck {
        chains_exact: vec![true; truth.chains.len()],
        and_gates_exact: vec![true; truth.and_gates.len()],
        or_gates_exact: vec![true; truth.or_gates.len()],
    };
    let value = |frame: &TokenFrame, f: FeatureId| frame.layers[f.layer as usize].get(f.index);
    let active = |frame: &TokenFrame, f: FeatureId| {
        value(frame, f).is_some_and(|v| binarizer.is_active(f.layer as usize, f.index, v))
    };
    source.for_each_frame(0..source.n_tokens(), &mut |frame| {
        for (ok, chain) in check.chains_exact.iter_mut().zip(&truth.chains) {
            if chain.windows(2).any(|w| value(frame, w[0]) != value(frame, w[1])) {
                *ok = false;
            }
        }
        for (ok, gate) in check.and_gates_exact.iter_mut().zip(&truth.and_gates) {
            let expected = active(frame, gate.parents[0]) && active(frame, gate.parents[1]);
            if active(frame, gate.child) != expected {
                *ok = false;
            }
        }
        for (ok, gate) in check.or_gates_exact.iter_mut().zip(&truth.or_gates) {
            let expected = active(frame, gate.parents[0]) || active(frame, gate.parents[1]);
            if active(frame, gate.child) != expected {
                *ok = false;
            }
        }
        Ok(())
    })?;
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{scan_max, BinarizationRule, Dataset};

    fn small_layout() -> PlantedLayout {
        PlantedLayout {
            n_layers: 3,
            n_features: 32,
            n_tokens: 3_000,
            tokens_per_shard: 1_000,
            chains: 2,
            chain_sigma: 0.0,
            and_gates: 2,
            or_gates: 2,
            blocks: 1,
            ..PlantedLayout::default()
        }
    }

    #[test]
    fn overlapping_motifs_are_rejected() {
        let mut spec = small_layout().build().unwrap();
        let first = spec.motifs[0].features()[0];
        spec.motifs.push(Motif::Block {
            members: vec![first, FeatureId::new(first.layer, (first.index + 1) % 32)],
            latent_rate: 0.1,
            member_rate: 0.5,
        });
        assert!(matches!(
            spec.validate(),
            Err(Error::OverlappingMotif(f)) if f == first
        ));
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let mut spec = small_layout().build().unwrap();
        if let Motif::Chain { rate, .. } = &mut spec.motifs[0] {
            *rate = 1.0;
        }
        assert!(spec.validate().is_err());
    }

    #[test]
    fn frames_are_valid_and_position_deterministic() {
        let source = SynthSource::new(small_layout().build().unwrap()).unwrap();
        for position in [0, 1, 17, 2_999] {
            let a = source.frame(position);
            a.validate(source.dims()).unwrap();
            assert_eq!(a, source.frame(position));
        }
        assert_ne!(source.frame(1), source.frame(2));
    }

    #[test]
    fn same_seed_gives_byte_identical_shards() {
        let spec = small_layout().build().unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_generate(&spec, a.path()).unwrap();
        synth_generate(&spec, b.path()).unwrap();
        for name in ["shard_00000.saea", "shard_00002.saea", MANIFEST_FILE, GROUND_TRUTH_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn ground_truth_is_reproduced_from_emitted_shards() {
        let spec = small_layout().build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = synth_generate(&spec, dir.path()).unwrap();
        let dataset = Dataset::open(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(dataset.manifest.n_tokens, 3_000);
        assert_eq!(dataset.manifest.shards.len(), 3);
        assert_eq!(Dataset::open(dir.path()).unwrap().manifest, dataset.manifest);
        let table = scan_max(&dataset, 2).unwrap();
        let binarizer = Binarizer::new(&table, BinarizationRule::default());
        let check = check_motifs(&dataset, &binarizer, &out.ground_truth).unwrap();
        assert_eq!(check.chains_exact, vec![true; 2]);
        assert_eq!(check.and_gates_exact, vec![true; 2]);
        assert_eq!(check.or_gates_exact, vec![true; 2]);
        let reloaded = GroundTruth::load(dir.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(reloaded, out.ground_truth);
    }

    #[test]
    fn noisy_chains_are_not_exact_copies() {
        let spec = PlantedLayout {
            chain_sigma: 0.05,
            ..small_layout()
        }
        .build()
        .unwrap();
        let source = SynthSource::new(spec.clone()).unwrap();
        let table = scan_max(&source, 1).unwrap();
        let check = check_motifs(
            &source,
            &Binarizer::new(&table, BinarizationRule::default()),
            &spec.ground_truth(),
        )
        .unwrap();
        assert!(check.chains_exact.iter().all(|&ok| !ok));
    }

    #[test]
    fn zero_token_dataset_has_one_empty_shard() {
        let spec = SynthSpec {
            n_tokens: 0,
            ..small_layout().build().unwrap()
        };
        let dir = tempfile::tempdir().unwrap();
        let out = synth_generate(&spec, dir.path()).unwrap();
        assert_eq!(out.manifest.shards.len(), 1);
        assert_eq!(out.manifest.shards[0].n_tokens, 0);
        Dataset::open(dir.path().join(MANIFEST_FILE)).unwrap();
    }
}
