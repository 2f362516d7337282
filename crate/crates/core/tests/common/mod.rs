#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use snndse::config::{BlockSpec, LayerKind, LifParams, NetworkConfig, ResetMode};
use snndse::model::NetworkWeights;
use snndse::spike_io::SpikeTensor;

pub const RATIOS: [usize; 4] = [1, 2, 4, 8];

/// Small random topology: FC stacks or CONV/pool front ends, at most four
/// layers, ending in a `classes × pcr` FC output.
pub fn random_topology(rng: &mut ChaCha8Rng) -> (String, usize, usize) {
    let classes = rng.gen_range(1..=4);
    let pcr = rng.gen_range(1..=4);
    let mut parts = Vec::new();
    if rng.gen_bool(0.5) {
        parts.push(rng.gen_range(4..=64).to_string());
        for _ in 0..rng.gen_range(0..=3) {
            parts.push(rng.gen_range(2..=64).to_string());
        }
    } else {
        let (c, h, w) = (
            rng.gen_range(1..=2),
            rng.gen_range(4..=8),
            rng.gen_range(4..=8),
        );
        parts.push(format!("{c}x{h}x{w}"));
        let (mut h, mut w) = (h, w);
        let k = *[1, 3].choose(rng).unwrap();
        parts.push(format!("{}C{k}", rng.gen_range(1..=4)));
        h -= k - 1;
        w -= k - 1;
        match rng.gen_range(0..3) {
            0 if h >= 2 && w >= 2 => parts.push("P2".into()),
            1 if h >= 3 && w >= 3 => parts.push(format!("{}C3", rng.gen_range(1..=4))),
            _ => {}
        }
    }
    parts.push((classes * pcr).to_string());
    (parts.join("-"), classes, pcr)
}

/// Random LIF constants, LHR, chunk width, buffer depth and timesteps.
pub fn random_network(rng: &mut ChaCha8Rng, memory_plans: bool) -> NetworkConfig {
    let (topo, classes, pcr) = random_topology(rng);
    let mut config = NetworkConfig::from_topology(&topo, classes, pcr).unwrap();
    for layer in config.layers.iter_mut().filter(|l| l.is_mapped()) {
        layer.lif = Some(LifParams {
            beta: rng.gen_range(0.5..=1.0),
            threshold: rng.gen_range(0.5..2.0),
            reset_mode: if rng.gen_bool(0.5) {
                ResetMode::Subtract
            } else {
                ResetMode::Zero
            },
        });
    }
    config.lhr.ratios = (0..config.mapped_count())
        .map(|_| *RATIOS.choose(rng).unwrap())
        .collect();
    config.timesteps = rng.gen_range(1..=16);
    config.penc_chunk_width = rng.gen_range(1..=100);
    config.buffer_depth = rng.gen_range(1..=3);
    config.bias_every_timestep = rng.gen_bool(0.5);
    if memory_plans && rng.gen_bool(0.5) {
        config.memory.blocks = Some(random_blocks(rng, &config));
    }
    config.validate().unwrap();
    config
}

/// A memory plan per mapped layer that satisfies the capacity rules:
/// round-robin places at most `⌈nus / blocks⌉` units of at most `r`
/// neurons in any block.
pub fn random_blocks(rng: &mut ChaCha8Rng, config: &NetworkConfig) -> Vec<BlockSpec> {
    config
        .mapped_layers()
        .zip(&config.lhr.ratios)
        .map(|((_, l), &r)| {
            let n = l.logical_units();
            let nus = n.div_ceil(r);
            let block_count = rng.gen_range(1..=nus);
            BlockSpec {
                block_count,
                neurons_per_block: nus.div_ceil(block_count) * r.min(n) + rng.gen_range(0..3),
            }
        })
        .collect()
}

/// Synthetic weights with small random biases.
pub fn random_weights(rng: &mut ChaCha8Rng, config: &NetworkConfig) -> NetworkWeights {
    let mut w = NetworkWeights::synthetic(config, rng.gen());
    for (layer, spec) in w.layers.iter_mut().zip(&config.layers) {
        if spec.kind == LayerKind::MaxPool {
            continue;
        }
        let thr = spec.lif.unwrap().threshold;
        for b in layer.bias_mut() {
            *b = rng.gen_range(-0.2..0.2) * thr;
        }
    }
    w
}

pub fn random_spikes(
    rng: &mut ChaCha8Rng,
    timesteps: usize,
    size: usize,
    density: f64,
) -> SpikeTensor {
    let mut t = SpikeTensor::zeros(timesteps, size);
    for s in 0..timesteps {
        for i in 0..size {
            if rng.gen_bool(density) {
                t.set(s, i, true);
            }
        }
    }
    t
}

/// Exactly `count` spikes per timestep at random positions.
pub fn spikes_with_count(
    rng: &mut ChaCha8Rng,
    timesteps: usize,
    size: usize,
    count: usize,
) -> SpikeTensor {
    let mut t = SpikeTensor::zeros(timesteps, size);
    let idx: Vec<usize> = (0..size).collect();
    for s in 0..timesteps {
        for &i in idx.choose_multiple(rng, count) {
            t.set(s, i, true);
        }
    }
    t
}
