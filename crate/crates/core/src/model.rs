//! Synaptic weights and the model interchange manifest.
//!
//! A model directory holds `manifest.json` plus raw little-endian `f32` blobs.
//! FC weights are row-major `[post][pre]`; CONV weights are `[out][in][K][K]`;
//! biases are one value per post-neuron (FC) or output channel (CONV). Each
//! blob reference may carry a SHA-256 hex digest, checked on load.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{LayerKind, LayerSpec, LifParams, NetworkConfig, ResetMode, Shape};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "snndse-model/1";

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Fc {
        post: usize,
        pre: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Conv {
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Pool,
}

impl LayerWeights {
    pub fn zeros_for(layer: &LayerSpec) -> Self {
        match layer.kind {
            LayerKind::FullyConnected => {
                let (post, pre) = (layer.output.len(), layer.input.len());
                LayerWeights::Fc {
                    post,
                    pre,
                    weights: vec![0.0; post * pre],
                    bias: vec![0.0; post],
                }
            }
            LayerKind::Conv { kernel } => {
                let out_channels = layer.output.dims().0;
                let in_channels = layer.input.dims().0;
                LayerWeights::Conv {
                    out_channels,
                    in_channels,
                    kernel,
                    weights: vec![0.0; out_channels * in_channels * kernel * kernel],
                    bias: vec![0.0; out_channels],
                }
            }
            LayerKind::MaxPool => LayerWeights::Pool,
        }
    }

    pub fn bias(&self) -> &[f32] {
        match self {
            LayerWeights::Fc { bias, .. } | LayerWeights::Conv { bias, .. } => bias,
            LayerWeights::Pool => &[],
        }
    }

    pub fn weights(&self) -> &[f32] {
        match self {
            LayerWeights::Fc { weights, .. } | LayerWeights::Conv { weights, .. } => weights,
            LayerWeights::Pool => &[],
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        match self {
            LayerWeights::Fc { weights, .. } | LayerWeights::Conv { weights, .. } => weights,
            LayerWeights::Pool => &mut [],
        }
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        match self {
            LayerWeights::Fc { bias, .. } | LayerWeights::Conv { bias, .. } => bias,
            LayerWeights::Pool => &mut [],
        }
    }

    fn matches(&self, layer: &LayerSpec) -> bool {
        let expect = Self::zeros_for(layer);
        match (self, &expect) {
            (
                LayerWeights::Fc {
                    post,
                    pre,
                    weights,
                    bias,
                },
                LayerWeights::Fc {
                    post: p2, pre: q2, ..
                },
            ) => post == p2 && pre == q2 && weights.len() == post * pre && bias.len() == *post,
            (
                LayerWeights::Conv {
                    out_channels,
                    in_channels,
                    kernel,
                    weights,
                    bias,
                },
                LayerWeights::Conv {
                    out_channels: o2,
                    in_channels: i2,
                    kernel: k2,
                    ..
                },
            ) => {
                out_channels == o2
                    && in_channels == i2
                    && kernel == k2
                    && weights.len() == out_channels * in_channels * kernel * kernel
                    && bias.len() == *out_channels
            }
            (LayerWeights::Pool, LayerWeights::Pool) => true,
            _ => false,
        }
    }
}

/// Weights for every entry of `NetworkConfig::layers` (pool layers hold `Pool`).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

impl NetworkWeights {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            layers: config.layers.iter().map(LayerWeights::zeros_for).collect(),
        }
    }

    pub fn check(&self, config: &NetworkConfig) -> Result<()> {
        if self.layers.len() != config.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight layers for {} network layers",
                self.layers.len(),
                config.layers.len()
            )));
        }
        for (i, (w, l)) in self.layers.iter().zip(&config.layers).enumerate() {
            if !w.matches(l) {
                return Err(Error::Shape(format!(
                    "layer {i}: weights do not match {:?} {} -> {}",
                    l.kind, l.input, l.output
                )));
            }
        }
        Ok(())
    }

    /// Deterministic random weights that keep a rate-coded input spiking
    /// through the network: uniform on `[-m, 3m]` with mean
    /// `m = threshold / (0.15 × fan_in)`, zero bias.
    pub fn synthetic(config: &NetworkConfig, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layers
            .iter()
            .map(|layer| {
                let mut w = LayerWeights::zeros_for(layer);
                let fan_in = match layer.kind {
                    LayerKind::FullyConnected => layer.input.len(),
                    LayerKind::Conv { kernel } => layer.input.dims().0 * kernel * kernel,
                    LayerKind::MaxPool => return w,
                };
                let thr = layer.lif.unwrap_or_default().threshold;
                let mean = thr / (0.15 * fan_in as f32);
                for x in w.weights_mut() {
                    *x = rng.gen_range(-mean..3.0 * mean);
                }
                w
            })
            .collect();
        Self { layers }
    }
}

// ---------------------------------------------------------------------------
// manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobRef {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestKind {
    Fc,
    Conv,
    Maxpool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLayer {
    pub kind: ManifestKind,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_mode: Option<ResetMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BlobRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub input: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcr: Option<usize>,
    #[serde(default = "yes")]
    pub bias_every_timestep: bool,
    pub layers: Vec<ManifestLayer>,
}

fn yes() -> bool {
    true
}

fn shape_from_dims(dims: &[usize]) -> Result<Shape> {
    match *dims {
        [n] => Ok(Shape::Flat(n)),
        [channels, height, width] => Ok(Shape::Map {
            channels,
            height,
            width,
        }),
        _ => Err(Error::format(
            "model manifest",
            format!("shape {dims:?} must have 1 or 3 dimensions"),
        )),
    }
}

fn dims_of(shape: Shape) -> Vec<usize> {
    match shape {
        Shape::Flat(n) => vec![n],
        Shape::Map {
            channels,
            height,
            width,
        } => vec![channels, height, width],
    }
}

/// A loaded model: layer specs (with trained LIF constants) plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub classes: Option<usize>,
    pub pcr: Option<usize>,
    pub bias_every_timestep: bool,
    pub weights: NetworkWeights,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_blob(dir: &Path, blob: &BlobRef, expected: usize) -> Result<Vec<f32>> {
    let path = dir.join(&blob.path);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if let Some(want) = &blob.sha256 {
        let got = sha256_hex(&bytes);
        if !got.eq_ignore_ascii_case(want) {
            return Err(Error::format(
                "model blob",
                format!("{}: checksum {got} != manifest {want}", blob.path),
            ));
        }
    }
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            "model blob",
            format!(
                "{}: {} bytes, expected {} floats",
                blob.path,
                bytes.len(),
                expected
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_blob(dir: &Path, name: &str, values: &[f32]) -> Result<BlobRef> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(name);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(BlobRef {
        path: name.to_string(),
        sha256: Some(sha256_hex(&bytes)),
    })
}

impl ModelBundle {
    pub fn from_config(config: &NetworkConfig, weights: NetworkWeights) -> Result<Self> {
        weights.check(config)?;
        Ok(Self {
            input: config.input,
            layers: config.layers.clone(),
            classes: Some(config.classes),
            pcr: Some(config.pcr),
            bias_every_timestep: config.bias_every_timestep,
            weights,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format("model manifest", e.to_string()))?;
        Self::from_manifest(dir, &manifest)
    }

    pub fn from_manifest(dir: &Path, manifest: &Manifest) -> Result<Self> {
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::format(
                "model manifest",
                format!("format `{}`, expected `{MANIFEST_FORMAT}`", manifest.format),
            ));
        }
        let input = shape_from_dims(&manifest.input)?;
        let mut layers = Vec::new();
        let mut weights = Vec::new();
        let mut prev = input;
        for (i, ml) in manifest.layers.iter().enumerate() {
            let in_shape = shape_from_dims(&ml.input)?;
            let out_shape = shape_from_dims(&ml.output)?;
            if in_shape.len() != prev.len() {
                return Err(Error::Shape(format!(
                    "manifest layer {i} input {in_shape} does not follow {prev}"
                )));
            }
            let kind = match ml.kind {
                ManifestKind::Fc => LayerKind::FullyConnected,
                ManifestKind::Conv => LayerKind::Conv {
                    kernel: ml.kernel.ok_or_else(|| {
                        Error::format("model manifest", format!("conv layer {i} has no kernel"))
                    })?,
                },
                ManifestKind::Maxpool => LayerKind::MaxPool,
            };
            let lif = match kind {
                LayerKind::MaxPool => None,
                _ => {
                    let d = LifParams::default();
                    Some(LifParams {
                        beta: ml.beta.unwrap_or(d.beta),
                        threshold: ml.threshold.unwrap_or(d.threshold),
                        reset_mode: ml.reset_mode.unwrap_or(d.reset_mode),
                    })
                }
            };
            let spec = LayerSpec {
                kind,
                input: in_shape,
                output: out_shape,
                lif,
            };
            let mut lw = LayerWeights::zeros_for(&spec);
            if spec.is_mapped() {
                let wref = ml.weights.as_ref().ok_or_else(|| {
                    Error::format("model manifest", format!("layer {i} has no weights blob"))
                })?;
                let n = lw.weights().len();
                lw.weights_mut().copy_from_slice(&read_blob(dir, wref, n)?);
                if let Some(bref) = &ml.bias {
                    let n = lw.bias().len();
                    lw.bias_mut().copy_from_slice(&read_blob(dir, bref, n)?);
                }
            }
            prev = out_shape;
            layers.push(spec);
            weights.push(lw);
        }
        Ok(Self {
            input,
            layers,
            classes: manifest.classes,
            pcr: manifest.pcr,
            bias_every_timestep: manifest.bias_every_timestep,
            weights: NetworkWeights { layers: weights },
        })
    }

    /// Write blobs and `manifest.json` into `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut layers = Vec::new();
        for (i, (spec, w)) in self.layers.iter().zip(&self.weights.layers).enumerate() {
            let (kind, kernel) = match spec.kind {
                LayerKind::FullyConnected => (ManifestKind::Fc, None),
                LayerKind::Conv { kernel } => (ManifestKind::Conv, Some(kernel)),
                LayerKind::MaxPool => (ManifestKind::Maxpool, None),
            };
            let (weights, bias) = if spec.is_mapped() {
                (
                    Some(write_blob(
                        dir,
                        &format!("layer{i}.weights.f32"),
                        w.weights(),
                    )?),
                    Some(write_blob(dir, &format!("layer{i}.bias.f32"), w.bias())?),
                )
            } else {
                (None, None)
            };
            layers.push(ManifestLayer {
                kind,
                input: dims_of(spec.input),
                output: dims_of(spec.output),
                kernel,
                beta: spec.lif.map(|l| l.beta),
                threshold: spec.lif.map(|l| l.threshold),
                reset_mode: spec.lif.map(|l| l.reset_mode),
                weights,
                bias,
            });
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            input: dims_of(self.input),
            classes: self.classes,
            pcr: self.pcr,
            bias_every_timestep: self.bias_every_timestep,
            layers,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// A config for this model with default hardware knobs (LHR all ones).
    pub fn default_config(&self) -> Result<NetworkConfig> {
        let out = self.layers.last().map_or(self.input, |l| l.output).len();
        let pcr = self.pcr.unwrap_or(1);
        let classes = self.classes.unwrap_or(out / pcr.max(1));
        let mapped = self.layers.iter().filter(|l| l.is_mapped()).count();
        let config = NetworkConfig {
            input: self.input,
            layers: self.layers.clone(),
            lhr: crate::config::LhrConfig {
                ratios: vec![1; mapped],
            },
            memory: Default::default(),
            timesteps: 10,
            pcr,
            classes,
            seed: 0,
            penc_chunk_width: 64,
            buffer_depth: 1,
            bias_every_timestep: self.bias_every_timestep,
        };
        config.validate()?;
        Ok(config)
    }

    /// Adopt this model's trained neuron constants into `config`, whose
    /// topology must be identical.
    pub fn apply_to(&self, config: &NetworkConfig) -> Result<NetworkConfig> {
        let same_shape = config.input == self.input
            && config.layers.len() == self.layers.len()
            && config
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(a, b)| a.kind == b.kind && a.input == b.input && a.output == b.output);
        if !same_shape {
            return Err(Error::Shape(format!(
                "config topology {} differs from model topology",
                config.topology_string()
            )));
        }
        let mut next = config.clone();
        for (dst, src) in next.layers.iter_mut().zip(&self.layers) {
            dst.lif = src.lif;
        }
        next.bias_every_timestep = self.bias_every_timestep;
        next.validate()?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> (NetworkConfig, ModelBundle) {
        let config = NetworkConfig::from_topology("1x6x6-2C3-P2-8", 4, 2).unwrap();
        let weights = NetworkWeights::synthetic(&config, 5);
        let b = ModelBundle::from_config(&config, weights).unwrap();
        (config, b)
    }

    #[test]
    fn save_load_float_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (config, b) = bundle();
        b.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.apply_to(&config).unwrap(), config);
        assert_eq!(back.default_config().unwrap().layers, config.layers);
    }

    #[test]
    fn checksum_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let (_, b) = bundle();
        b.save(dir.path()).unwrap();
        let blob = dir.path().join("layer0.weights.f32");
        let mut bytes = fs::read(&blob).unwrap();
        bytes[3] ^= 0x40;
        fs::write(&blob, bytes).unwrap();
        assert!(ModelBundle::load(dir.path()).is_err());
    }

    #[test]
    fn shape_checks() {
        let (config, b) = bundle();
        let mut w = b.weights.clone();
        w.layers[2] = LayerWeights::Fc {
            post: 8,
            pre: 7,
            weights: vec![0.0; 56],
            bias: vec![0.0; 8],
        };
        assert!(w.check(&config).is_err());

        let other = NetworkConfig::from_topology("36-8", 4, 2).unwrap();
        assert!(b.apply_to(&other).is_err());
    }
}
