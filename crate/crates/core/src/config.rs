//! Experiment configuration: network topology, LIF constants, layer-wise
//! logical-to-hardware ratios (LHR), weight-memory plan and simulation knobs.
//!
//! The on-disk form is a TOML document; see `docs/config-format.md` for the
//! grammar. [`NetworkConfig::parse`] validates everything up front so the rest
//! of the crate can assume a consistent model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest chunk the priority encoder accepts.
pub const MAX_PENC_WIDTH: usize = 100;

/// Shape of a layer's spike vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Flat(usize),
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(channels, height, width)`; a flat vector is one channel of `1 × n`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match *self {
            Shape::Flat(n) => (1, 1, n),
            Shape::Map {
                channels,
                height,
                width,
            } => (channels, height, width),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Flat(n) => write!(f, "{n}"),
            Shape::Map {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetMode {
    /// Subtract the threshold from the membrane after a spike.
    Subtract,
    /// Clear the membrane after a spike.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub beta: f32,
    pub threshold: f32,
    pub reset_mode: ResetMode,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            threshold: 1.0,
            reset_mode: ResetMode::Subtract,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    FullyConnected,
    Conv {
        kernel: usize,
    },
    /// Non-overlapping OR-pooling; the window is always 2.
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    /// `None` for pooling layers, which carry no neurons.
    pub lif: Option<LifParams>,
}

impl LayerSpec {
    /// FC and CONV layers own Neural Units; pooling is fused combinational logic.
    pub fn is_mapped(&self) -> bool {
        !matches!(self.kind, LayerKind::MaxPool)
    }

    /// Units the LHR divides: neurons for FC, output channels for CONV.
    pub fn logical_units(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.output.len(),
            LayerKind::Conv { .. } | LayerKind::MaxPool => self.output.dims().0,
        }
    }

    /// Weight words stored per logical unit (the pre-synaptic `SIZE`).
    pub fn weights_per_unit(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.input.len(),
            LayerKind::Conv { kernel } => self.input.dims().0 * kernel * kernel,
            LayerKind::MaxPool => 0,
        }
    }

    fn token(&self) -> String {
        match self.kind {
            LayerKind::FullyConnected => self.output.len().to_string(),
            LayerKind::Conv { kernel } => format!("{}C{}", self.output.dims().0, kernel),
            LayerKind::MaxPool => "P2".to_string(),
        }
    }
}

/// Logical units per hardware Neural Unit, one ratio per mapped layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LhrConfig {
    pub ratios: Vec<usize>,
}

impl fmt::Display for LhrConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ratios.iter().map(|r| r.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub block_count: usize,
    pub neurons_per_block: usize,
}

/// Weight-memory layout. Without explicit blocks every NU gets its own block
/// holding exactly its LHR share of neurons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPlan {
    pub word_width: u32,
    pub blocks: Option<Vec<BlockSpec>>,
}

impl Default for MemoryPlan {
    fn default() -> Self {
        Self {
            word_width: 32,
            blocks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub lhr: LhrConfig,
    pub memory: MemoryPlan,
    pub timesteps: usize,
    pub pcr: usize,
    pub classes: usize,
    pub seed: u64,
    pub penc_chunk_width: usize,
    /// Spike trains an inter-layer buffer holds before the producer stalls.
    pub buffer_depth: usize,
    pub bias_every_timestep: bool,
}

/// Parse a topology string such as `784-500-500-300` or `2x128x128-32C3-P2-512-11`.
///
/// Returns the input shape and the layer list with default LIF constants.
pub fn parse_topology(topology: &str) -> Result<(Shape, Vec<LayerSpec>)> {
    let mut tokens = topology.split('-').map(str::trim);
    let first = tokens
        .next()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::Config("empty topology".into()))?;
    let input = parse_input_token(first)?;

    let mut layers = Vec::new();
    let mut current = input;
    for token in tokens {
        let layer = parse_layer_token(token, current)?;
        current = layer.output;
        layers.push(layer);
    }
    Ok((input, layers))
}

fn parse_count(token: &str, what: &str) -> Result<usize> {
    let n: usize = token
        .parse()
        .map_err(|_| Error::Config(format!("bad {what} `{token}` in topology")))?;
    if n == 0 {
        return Err(Error::Config(format!("{what} must be >= 1 in topology")));
    }
    Ok(n)
}

fn parse_input_token(token: &str) -> Result<Shape> {
    let parts: Vec<&str> = token.split(['x', 'X']).collect();
    match parts.as_slice() {
        [n] => Ok(Shape::Flat(parse_count(n, "input size")?)),
        [h, w] => Ok(Shape::Map {
            channels: 1,
            height: parse_count(h, "input height")?,
            width: parse_count(w, "input width")?,
        }),
        [c, h, w] => Ok(Shape::Map {
            channels: parse_count(c, "input channels")?,
            height: parse_count(h, "input height")?,
            width: parse_count(w, "input width")?,
        }),
        _ => Err(Error::Config(format!("bad input shape `{token}`"))),
    }
}

fn parse_layer_token(token: &str, input: Shape) -> Result<LayerSpec> {
    let upper = token.to_ascii_uppercase();
    if let Some(window) = upper.strip_prefix('P') {
        if window != "2" {
            return Err(Error::Config(format!(
                "pooling window must be 2, got `{token}`"
            )));
        }
        let Shape::Map {
            channels,
            height,
            width,
        } = input
        else {
            return Err(Error::Config(format!(
                "`{token}` needs a feature-map input, got flat {input}"
            )));
        };
        if height < 2 || width < 2 {
            return Err(Error::Config(format!(
                "`{token}` needs at least a 2x2 map, got {input}"
            )));
        }
        return Ok(LayerSpec {
            kind: LayerKind::MaxPool,
            input,
            output: Shape::Map {
                channels,
                height: height / 2,
                width: width / 2,
            },
            lif: None,
        });
    }

    if let Some((ch, k)) = upper.split_once('C') {
        let channels = parse_count(ch, "output channels")?;
        let kernel = parse_count(k, "kernel size")?;
        if kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel in `{token}` must be odd")));
        }
        let Shape::Map { height, width, .. } = input else {
            return Err(Error::Config(format!(
                "`{token}` needs a feature-map input, got flat {input}"
            )));
        };
        if kernel > height || kernel > width {
            return Err(Error::Config(format!(
                "kernel {kernel} larger than input map {input}"
            )));
        }
        return Ok(LayerSpec {
            kind: LayerKind::Conv { kernel },
            input,
            output: Shape::Map {
                channels,
                height: height - kernel + 1,
                width: width - kernel + 1,
            },
            lif: Some(LifParams::default()),
        });
    }

    let n = parse_count(token, "layer size")?;
    Ok(LayerSpec {
        kind: LayerKind::FullyConnected,
        input: Shape::Flat(input.len()),
        output: Shape::Flat(n),
        lif: Some(LifParams::default()),
    })
}

// ---------------------------------------------------------------------------
// document form

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); n]),
            OneOrMany::Many(vs) if vs.len() == n => Ok(vs.clone()),
            OneOrMany::Many(vs) => Err(Error::Config(format!(
                "[lif] {what} lists {} values but the network has {n} mapped layers",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    network: NetworkSection,
    #[serde(default)]
    lif: LifSection,
    #[serde(default)]
    lhr: LhrSection,
    #[serde(default)]
    memory: MemorySection,
    sim: SimSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    topology: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LifSection {
    beta: OneOrMany<f32>,
    threshold: OneOrMany<f32>,
    reset_mode: OneOrMany<ResetMode>,
    bias_every_timestep: bool,
}

impl Default for LifSection {
    fn default() -> Self {
        let d = LifParams::default();
        Self {
            beta: OneOrMany::One(d.beta),
            threshold: OneOrMany::One(d.threshold),
            reset_mode: OneOrMany::One(d.reset_mode),
            bias_every_timestep: true,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LhrSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemorySection {
    #[serde(default = "default_word_width")]
    word_width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<BlockSpec>>,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            word_width: default_word_width(),
            blocks: None,
        }
    }
}

fn default_word_width() -> u32 {
    32
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    #[serde(default = "default_timesteps")]
    timesteps: usize,
    classes: usize,
    pcr: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_chunk_width")]
    penc_chunk_width: usize,
    #[serde(default = "default_buffer_depth")]
    buffer_depth: usize,
}

fn default_timesteps() -> usize {
    10
}

fn default_chunk_width() -> usize {
    64
}

fn default_buffer_depth() -> usize {
    1
}

impl NetworkConfig {
    /// Build a config from a topology string with default knobs: LHR all ones,
    /// default memory plan, `T = 10`, seed 0, 64-bit PENC chunks, buffer depth 1.
    pub fn from_topology(topology: &str, classes: usize, pcr: usize) -> Result<Self> {
        let (input, layers) = parse_topology(topology)?;
        let mapped = layers.iter().filter(|l| l.is_mapped()).count();
        let config = Self {
            input,
            layers,
            lhr: LhrConfig {
                ratios: vec![1; mapped],
            },
            memory: MemoryPlan::default(),
            timesteps: default_timesteps(),
            pcr,
            classes,
            seed: 0,
            penc_chunk_width: default_chunk_width(),
            buffer_depth: default_buffer_depth(),
            bias_every_timestep: true,
        };
        config.validate()?;
        Ok(config)
    }

    /// Parse and validate a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ConfigDoc = toml::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
        let (input, mut layers) = parse_topology(&doc.network.topology)?;
        let mapped = layers.iter().filter(|l| l.is_mapped()).count();

        let betas = doc.lif.beta.expand(mapped, "beta")?;
        let thresholds = doc.lif.threshold.expand(mapped, "threshold")?;
        let resets = doc.lif.reset_mode.expand(mapped, "reset_mode")?;
        for (i, layer) in layers.iter_mut().filter(|l| l.is_mapped()).enumerate() {
            layer.lif = Some(LifParams {
                beta: betas[i],
                threshold: thresholds[i],
                reset_mode: resets[i],
            });
        }

        let config = Self {
            input,
            layers,
            lhr: LhrConfig {
                ratios: doc.lhr.ratios.unwrap_or_else(|| vec![1; mapped]),
            },
            memory: MemoryPlan {
                word_width: doc.memory.word_width,
                blocks: doc.memory.blocks,
            },
            timesteps: doc.sim.timesteps,
            pcr: doc.sim.pcr,
            classes: doc.sim.classes,
            seed: doc.sim.seed,
            penc_chunk_width: doc.sim.penc_chunk_width,
            buffer_depth: doc.sim.buffer_depth,
            bias_every_timestep: doc.lif.bias_every_timestep,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical document form. Per-layer LIF values are always written as lists.
    pub fn to_text(&self) -> String {
        let lifs: Vec<LifParams> = self.mapped_layers().filter_map(|(_, l)| l.lif).collect();
        let doc = ConfigDoc {
            network: NetworkSection {
                topology: self.topology_string(),
            },
            lif: LifSection {
                beta: OneOrMany::Many(lifs.iter().map(|l| l.beta).collect()),
                threshold: OneOrMany::Many(lifs.iter().map(|l| l.threshold).collect()),
                reset_mode: OneOrMany::Many(lifs.iter().map(|l| l.reset_mode).collect()),
                bias_every_timestep: self.bias_every_timestep,
            },
            lhr: LhrSection {
                ratios: Some(self.lhr.ratios.clone()),
            },
            memory: MemorySection {
                word_width: self.memory.word_width,
                blocks: self.memory.blocks.clone(),
            },
            sim: SimSection {
                timesteps: self.timesteps,
                classes: self.classes,
                pcr: self.pcr,
                seed: self.seed,
                penc_chunk_width: self.penc_chunk_width,
                buffer_depth: self.buffer_depth,
            },
        };
        toml::to_string(&doc).expect("config document always serializes")
    }

    pub fn topology_string(&self) -> String {
        let mut parts = vec![match self.input {
            Shape::Flat(n) => n.to_string(),
            Shape::Map {
                channels: 1,
                height,
                width,
            } => format!("{height}x{width}"),
            other => other.to_string(),
        }];
        parts.extend(self.layers.iter().map(LayerSpec::token));
        parts.join("-")
    }

    /// Sizes of the input and every layer, in order.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input.len())
            .chain(self.layers.iter().map(|l| l.output.len()))
            .collect()
    }

    /// `(layer index, spec)` for every FC/CONV layer.
    pub fn mapped_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_mapped())
    }

    pub fn mapped_count(&self) -> usize {
        self.mapped_layers().count()
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    /// Replace the LHR vector and re-validate.
    pub fn with_lhr(&self, ratios: &[usize]) -> Result<Self> {
        let mut next = self.clone();
        next.lhr = LhrConfig {
            ratios: ratios.to_vec(),
        };
        next.validate()?;
        Ok(next)
    }

    /// Set the population-coding ratio and resize a fully-connected output
    /// layer to `classes × pcr`.
    pub fn with_pcr_resized(&self, pcr: usize) -> Result<Self> {
        let mut next = self.clone();
        next.pcr = pcr;
        if let Some(last) = next.layers.last_mut() {
            if last.kind == LayerKind::FullyConnected && pcr >= 1 {
                last.output = Shape::Flat(next.classes * pcr);
            }
        }
        next.validate()?;
        Ok(next)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps must be >= 1".into()));
        }
        if self.classes == 0 || self.pcr == 0 {
            return Err(Error::Config("classes and pcr must be >= 1".into()));
        }
        if !(1..=MAX_PENC_WIDTH).contains(&self.penc_chunk_width) {
            return Err(Error::Config(format!(
                "penc_chunk_width must be in [1, {MAX_PENC_WIDTH}], got {}",
                self.penc_chunk_width
            )));
        }
        if self.buffer_depth == 0 {
            return Err(Error::Config("buffer_depth must be >= 1".into()));
        }
        if self.memory.word_width == 0 {
            return Err(Error::Config("memory word_width must be >= 1".into()));
        }
        let out = self.output_shape().len();
        if out != self.classes * self.pcr {
            return Err(Error::Config(format!(
                "output layer size {out} != classes ({}) x pcr ({})",
                self.classes, self.pcr
            )));
        }
        for (i, layer) in self.mapped_layers() {
            let lif = layer
                .lif
                .ok_or_else(|| Error::Config(format!("layer {i} has no LIF constants")))?;
            if !(0.0..1.0).contains(&lif.beta) {
                return Err(Error::Config(format!(
                    "layer {i}: beta must be in [0, 1), got {}",
                    lif.beta
                )));
            }
            if !(lif.threshold > 0.0 && lif.threshold.is_finite()) {
                return Err(Error::Config(format!(
                    "layer {i}: threshold must be > 0, got {}",
                    lif.threshold
                )));
            }
        }

        let mapped = self.mapped_count();
        if self.lhr.ratios.len() != mapped {
            return Err(Error::Config(format!(
                "LHR lists {} ratios but the network has {mapped} mapped layers",
                self.lhr.ratios.len()
            )));
        }
        if let Some(pos) = self.lhr.ratios.iter().position(|&r| r == 0) {
            return Err(Error::Config(format!("LHR ratio {pos} must be >= 1")));
        }

        if let Some(blocks) = &self.memory.blocks {
            if blocks.len() != mapped {
                return Err(Error::Config(format!(
                    "memory plan lists {} layers but the network has {mapped} mapped layers",
                    blocks.len()
                )));
            }
        }
        let plan = crate::mapping::build_mapping(self);
        for (m, lm) in plan.layers.iter().enumerate() {
            lm.check_capacity()
                .map_err(|e| Error::Config(format!("mapped layer {m}: {e}")))?;
        }
        Ok(())
    }
}
