//! Layer-wise partitioning of logical neurons (or output channels) onto
//! Neural Units, and of Neural Units onto weight-memory blocks.

use serde::Serialize;

use crate::config::{LayerSpec, NetworkConfig};

/// One hardware Neural Unit: it serves logical units
/// `base_address .. base_address + neural_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NuDescriptor {
    pub base_address: usize,
    pub neural_size: usize,
    /// Weight-memory block this NU reads from.
    pub block: usize,
}

impl NuDescriptor {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.base_address..self.base_address + self.neural_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerMemory {
    pub block_count: usize,
    pub neurons_per_block: usize,
    /// `neurons_per_block × SIZE` words.
    pub block_depth: usize,
    pub word_width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerMapping {
    /// Index into `NetworkConfig::layers`.
    pub layer: usize,
    pub logical_units: usize,
    pub units: Vec<NuDescriptor>,
    pub memory: LayerMemory,
}

impl LayerMapping {
    pub fn nu_count(&self) -> usize {
        self.units.len()
    }

    /// Neurons (channels) the busiest NU processes serially.
    pub fn max_neural_size(&self) -> usize {
        self.units.iter().map(|u| u.neural_size).max().unwrap_or(0)
    }

    fn nus_per_block(&self) -> Vec<usize> {
        let mut counts = vec![0; self.memory.block_count];
        for u in &self.units {
            counts[u.block] += 1;
        }
        counts
    }

    /// Read serialization factor: the largest number of NUs sharing one
    /// single-ported block, at least 1.
    pub fn contention(&self) -> usize {
        self.nus_per_block().into_iter().max().unwrap_or(0).max(1)
    }

    /// Every block must hold the weights of all NUs assigned to it.
    pub fn check_capacity(&self) -> Result<(), String> {
        let m = &self.memory;
        if m.block_count == 0 || m.neurons_per_block == 0 {
            return Err("block_count and neurons_per_block must be >= 1".into());
        }
        if m.block_count * m.neurons_per_block < self.logical_units {
            return Err(format!(
                "{} blocks x {} neurons cannot hold {} logical units",
                m.block_count, m.neurons_per_block, self.logical_units
            ));
        }
        let mut load = vec![0; m.block_count];
        for u in &self.units {
            load[u.block] += u.neural_size;
        }
        if let Some((b, &l)) = load
            .iter()
            .enumerate()
            .find(|(_, &l)| l > m.neurons_per_block)
        {
            return Err(format!(
                "block {b} is assigned {l} neurons but holds only {}",
                m.neurons_per_block
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingPlan {
    /// One entry per mapped (FC/CONV) layer, in network order.
    pub layers: Vec<LayerMapping>,
}

impl MappingPlan {
    pub fn total_nus(&self) -> usize {
        self.layers.iter().map(LayerMapping::nu_count).sum()
    }
}

/// Split `n` logical units into NUs of `ratio` units each; the last NU takes
/// the remainder when `ratio` does not divide `n`.
pub fn partition(n: usize, ratio: usize) -> Vec<(usize, usize)> {
    let ratio = ratio.max(1);
    (0..n.div_ceil(ratio))
        .map(|i| {
            let base = i * ratio;
            (base, ratio.min(n - base))
        })
        .collect()
}

fn map_layer(
    index: usize,
    layer: &LayerSpec,
    ratio: usize,
    blocks: Option<crate::config::BlockSpec>,
    word_width: u32,
) -> LayerMapping {
    let n = layer.logical_units();
    let parts = partition(n, ratio);
    let (block_count, neurons_per_block) = match blocks {
        Some(b) => (b.block_count, b.neurons_per_block),
        None => (parts.len(), ratio.min(n)),
    };
    let units = parts
        .into_iter()
        .enumerate()
        .map(|(i, (base_address, neural_size))| NuDescriptor {
            base_address,
            neural_size,
            block: if block_count == 0 { 0 } else { i % block_count },
        })
        .collect();
    LayerMapping {
        layer: index,
        logical_units: n,
        units,
        memory: LayerMemory {
            block_count,
            neurons_per_block,
            block_depth: neurons_per_block * layer.weights_per_unit(),
            word_width,
        },
    }
}

/// Assign NUs and memory blocks for every mapped layer.
///
/// Blocks are handed to NUs round-robin. The config is assumed to have passed
/// [`NetworkConfig::validate`].
pub fn build_mapping(config: &NetworkConfig) -> MappingPlan {
    let layers = config
        .mapped_layers()
        .enumerate()
        .map(|(m, (index, layer))| {
            let ratio = config.lhr.ratios.get(m).copied().unwrap_or(1);
            let blocks = config
                .memory
                .blocks
                .as_ref()
                .and_then(|b| b.get(m).copied());
            map_layer(index, layer, ratio, blocks, config.memory.word_width)
        })
        .collect();
    MappingPlan { layers }
}
