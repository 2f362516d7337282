//! Resource (LUT/REG/BRAM) and energy estimation from a mapping plan and a
//! component-cost library.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{LayerKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::mapping::{LayerMapping, MappingPlan};

pub const DEFAULT_COST_LIBRARY: &str = include_str!("../data/default_cost_lib.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentCost {
    pub lut: u64,
    pub reg: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Resources {
    pub lut: u64,
    pub reg: u64,
    pub bram: u64,
}

impl From<ComponentCost> for Resources {
    fn from(c: ComponentCost) -> Self {
        Self {
            lut: c.lut,
            reg: c.reg,
            bram: 0,
        }
    }
}

impl Add for Resources {
    type Output = Resources;
    fn add(self, o: Resources) -> Resources {
        Resources {
            lut: self.lut + o.lut,
            reg: self.reg + o.reg,
            bram: self.bram + o.bram,
        }
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, o: Resources) {
        *self = *self + o;
    }
}

impl Mul<u64> for ComponentCost {
    type Output = Resources;
    fn mul(self, k: u64) -> Resources {
        Resources {
            lut: self.lut * k,
            reg: self.reg * k,
            bram: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcUnitCost {
    pub per_unit: ComponentCost,
    pub per_slot: ComponentCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvUnitCost {
    pub per_unit: ComponentCost,
    pub per_channel: ComponentCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub clock_period_s: f64,
    pub static_w: f64,
    pub lut_w: f64,
    pub reg_w: f64,
    pub bram_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        CostLibrary::default().power
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.clock_period_s > 0.0 && self.clock_period_s.is_finite()) {
            return Err(Error::Config("clock_period_s must be > 0".into()));
        }
        for (name, v) in [
            ("static_w", self.static_w),
            ("lut_w", self.lut_w),
            ("reg_w", self.reg_w),
            ("bram_w", self.bram_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "power coefficient {name} must be >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Average power draw of a design with `res` resources, in watts.
    pub fn power_w(&self, res: &Resources) -> f64 {
        self.static_w
            + self.lut_w * res.lut as f64
            + self.reg_w * res.reg as f64
            + self.bram_w * res.bram as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostLibrary {
    pub bram_capacity_bits: u64,
    pub nu_fc: FcUnitCost,
    pub nu_conv: ConvUnitCost,
    pub ecu: ComponentCost,
    pub memory_block: ComponentCost,
    pub maxpool: ComponentCost,
    pub wrapper: ComponentCost,
    /// Priority encoder cost keyed by chunk width.
    pub penc: BTreeMap<String, ComponentCost>,
    pub power: PowerModel,
}

impl Default for CostLibrary {
    fn default() -> Self {
        Self::parse(DEFAULT_COST_LIBRARY).expect("bundled cost library parses")
    }
}

impl CostLibrary {
    pub fn parse(text: &str) -> Result<Self> {
        let lib: CostLibrary = toml::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
        if lib.bram_capacity_bits == 0 {
            return Err(Error::Config("bram_capacity_bits must be > 0".into()));
        }
        for key in lib.penc.keys() {
            key.parse::<usize>()
                .map_err(|_| Error::Config(format!("penc key `{key}` is not a chunk width")))?;
        }
        lib.power.validate()?;
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn penc_cost(&self, width: usize) -> Result<ComponentCost> {
        self.penc
            .iter()
            .find(|(k, _)| k.parse::<usize>().ok() == Some(width))
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::MissingComponent(format!("PENC of width {width}")))
    }

    /// BRAM primitives for one block: `⌈depth × width / capacity⌉`.
    pub fn bram_blocks(&self, depth: usize, word_width: u32) -> u64 {
        (depth as u64 * word_width as u64).div_ceil(self.bram_capacity_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LayerResources {
    /// Index into `NetworkConfig::layers`.
    pub layer: usize,
    pub neural_units: Resources,
    pub ecu: Resources,
    pub penc: Resources,
    pub memory: Resources,
    pub total: Resources,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceReport {
    pub layers: Vec<LayerResources>,
    pub wrapper: Resources,
    pub total: Resources,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_per_inference_j: Option<f64>,
}

/// Resources of one mapped layer: NUs, its ECU, one PENC per input chunk and
/// its weight-memory blocks.
pub fn estimate_layer(
    config: &NetworkConfig,
    mapping: &LayerMapping,
    lib: &CostLibrary,
) -> Result<LayerResources> {
    let spec = &config.layers[mapping.layer];
    let nus = mapping.nu_count() as u64;
    let neural_units = match spec.kind {
        LayerKind::FullyConnected => {
            lib.nu_fc.per_unit * nus + lib.nu_fc.per_slot * mapping.logical_units as u64
        }
        LayerKind::Conv { .. } => {
            lib.nu_conv.per_unit * nus + lib.nu_conv.per_channel * mapping.logical_units as u64
        }
        LayerKind::MaxPool => Resources::default(),
    };
    let chunks = spec.input.len().div_ceil(config.penc_chunk_width) as u64;
    let penc = lib.penc_cost(config.penc_chunk_width)? * chunks;
    let blocks = mapping.memory.block_count as u64;
    let mut memory = lib.memory_block * blocks;
    memory.bram = blocks * lib.bram_blocks(mapping.memory.block_depth, mapping.memory.word_width);
    let ecu = Resources::from(lib.ecu);
    Ok(LayerResources {
        layer: mapping.layer,
        neural_units,
        ecu,
        penc,
        memory,
        total: neural_units + ecu + penc + memory,
    })
}

/// Sum of per-layer estimates, pooling layers and the top-level wrapper.
pub fn estimate_resources(
    config: &NetworkConfig,
    mapping: &MappingPlan,
    lib: &CostLibrary,
) -> Result<ResourceReport> {
    let mut layers = Vec::with_capacity(config.layers.len());
    let mut by_layer = mapping.layers.iter().peekable();
    for (i, spec) in config.layers.iter().enumerate() {
        if spec.kind == LayerKind::MaxPool {
            let pool = Resources::from(lib.maxpool);
            layers.push(LayerResources {
                layer: i,
                total: pool,
                ..Default::default()
            });
            continue;
        }
        let lm = by_layer
            .next_if(|m| m.layer == i)
            .ok_or_else(|| Error::Shape(format!("mapping plan has no entry for layer {i}")))?;
        layers.push(estimate_layer(config, lm, lib)?);
    }
    let wrapper = Resources::from(lib.wrapper);
    let total = layers.iter().fold(wrapper, |acc, l| acc + l.total);
    Ok(ResourceReport {
        layers,
        wrapper,
        total,
        energy_per_inference_j: None,
    })
}

/// `E = cycles × clock_period × power(resources)`, in joules.
pub fn estimate_energy(total_cycles: f64, report: &ResourceReport, power: &PowerModel) -> f64 {
    total_cycles * power.clock_period_s * power.power_w(&report.total)
}
