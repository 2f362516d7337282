//! Cycle-count-accurate accelerator model.
//!
//! Each mapped layer is an ECU plus its Neural Units. Per timestep the ECU
//! compresses the incoming spike train with a chunked priority encoder, the
//! NUs accumulate weights for every emitted address and then run the LIF
//! activation. Phases are sequential within a layer-timestep; layers are
//! pipelined across timesteps through bounded buffers.
//!
//! Costs per layer-timestep:
//!
//! * compression: `popcount + ⌈n / W⌉`
//! * FC accumulation: `spikes × max_NU_size × contention`
//! * CONV accumulation: `Σ_spikes max_NU_channels × |affected| × contention`
//! * FC activation: `max_NU_size`; CONV activation: `max_NU_channels × out_h × out_w`
//! * 2×2 OR-pooling: free (combinational)

use serde::Serialize;

use crate::config::{LayerKind, LayerSpec, NetworkConfig};
use crate::error::{Error, Result};
use crate::golden::{lif_neuron, or_pool, pack, LayerSpikeTrace, LifState};
use crate::mapping::{build_mapping, LayerMapping, MappingPlan};
use crate::model::{LayerWeights, NetworkWeights};
use crate::spike_io::SpikeTensor;

/// Output of the priority encoder for one spike train.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompressedSpikes {
    /// Set-bit positions, strictly ascending.
    pub addresses: Vec<usize>,
    /// Index into `addresses` where each chunk's output begins.
    pub chunk_starts: Vec<usize>,
}

/// Up to 128 bits starting at `start` from a packed word slice.
fn extract_bits(words: &[u64], start: usize, len: usize) -> u128 {
    debug_assert!(len <= 128);
    let mut out = 0u128;
    let mut got = 0;
    while got < len {
        let pos = start + got;
        let (w, off) = (pos / 64, pos % 64);
        let take = (64 - off).min(len - got);
        let bits = (words[w] >> off) as u128 & ((1u128 << take) - 1);
        out |= bits << got;
        got += take;
    }
    out
}

/// Compress an `n`-bit spike train in chunks of `chunk_width` bits. Each cycle
/// the encoder emits the lowest set bit and clears it; each chunk costs one
/// extra cycle to load.
pub fn compress_spikes(bits: &[u64], n: usize, chunk_width: usize) -> (CompressedSpikes, u64) {
    assert!(
        (1..=crate::config::MAX_PENC_WIDTH).contains(&chunk_width),
        "chunk width {chunk_width} out of range"
    );
    let chunks = n.div_ceil(chunk_width);
    let mut out = CompressedSpikes {
        addresses: Vec::new(),
        chunk_starts: Vec::with_capacity(chunks),
    };
    for k in 0..chunks {
        let start = k * chunk_width;
        let len = chunk_width.min(n - start);
        out.chunk_starts.push(out.addresses.len());
        let mut chunk = extract_bits(bits, start, len);
        while chunk != 0 {
            let first = chunk.trailing_zeros() as usize;
            out.addresses.push(start + first);
            chunk &= chunk - 1;
        }
    }
    let cycles = (out.addresses.len() + chunks) as u64;
    (out, cycles)
}

/// Output neurons touched by an input spike under a valid, stride-1 `K×K`
/// correlation, as ascending 1-D addresses into the `out_h × out_w` frame.
pub fn affected_addresses(
    spike_addr: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
) -> Result<Vec<usize>> {
    if spike_addr >= in_h * in_w {
        return Err(Error::InvalidArgument(format!(
            "spike address {spike_addr} outside {in_h}x{in_w} frame"
        )));
    }
    if kernel == 0 || kernel > in_h || kernel > in_w {
        return Err(Error::InvalidArgument(format!(
            "kernel {kernel} does not fit {in_h}x{in_w} frame"
        )));
    }
    let (out_h, out_w) = (in_h - kernel + 1, in_w - kernel + 1);
    let (r, c) = (spike_addr / in_w, spike_addr % in_w);
    let rows = r.saturating_sub(kernel - 1)..=r.min(out_h - 1);
    let cols = c.saturating_sub(kernel - 1)..=c.min(out_w - 1);
    Ok(rows
        .flat_map(|i| cols.clone().map(move |j| i * out_w + j))
        .collect())
}

/// Number of affected outputs without materializing them.
fn affected_count(spike_addr: usize, in_h: usize, in_w: usize, kernel: usize) -> usize {
    let (out_h, out_w) = (in_h - kernel + 1, in_w - kernel + 1);
    let (r, c) = (spike_addr / in_w, spike_addr % in_w);
    let rows = r.min(out_h - 1) + 1 - r.saturating_sub(kernel - 1);
    let cols = c.min(out_w - 1) + 1 - c.saturating_sub(kernel - 1);
    rows * cols
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LayerCycleCost {
    pub compression: u64,
    pub accumulation: u64,
    pub activation: u64,
}

impl LayerCycleCost {
    pub fn total(&self) -> u64 {
        self.compression + self.accumulation + self.activation
    }
}

/// Phase costs for one layer-timestep given the compressed input.
pub fn stage_cost(
    spec: &LayerSpec,
    mapping: &LayerMapping,
    compressed: &CompressedSpikes,
    compression_cycles: u64,
) -> LayerCycleCost {
    let per_unit = mapping.max_neural_size() as u64;
    let contention = mapping.contention() as u64;
    match spec.kind {
        LayerKind::FullyConnected => LayerCycleCost {
            compression: compression_cycles,
            accumulation: compressed.addresses.len() as u64 * per_unit * contention,
            activation: per_unit,
        },
        LayerKind::Conv { kernel } => {
            let (_, h, w) = spec.input.dims();
            let (_, oh, ow) = spec.output.dims();
            let affected: u64 = compressed
                .addresses
                .iter()
                .map(|&a| affected_count(a % (h * w), h, w, kernel) as u64)
                .sum();
            LayerCycleCost {
                compression: compression_cycles,
                accumulation: affected * per_unit * contention,
                activation: per_unit * (oh * ow) as u64,
            }
        }
        LayerKind::MaxPool => LayerCycleCost::default(),
    }
}

/// Result of one layer-timestep on the NUs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub spikes: Vec<bool>,
    pub cost: LayerCycleCost,
    pub memory_reads: u64,
}

fn check_state(state: &LifState, spec: &LayerSpec) -> Result<()> {
    if state.membrane.len() != spec.output.len() {
        return Err(Error::Shape(format!(
            "LIF state of {} neurons for a layer of {}",
            state.membrane.len(),
            spec.output.len()
        )));
    }
    Ok(())
}

/// One timestep of an FC layer. Every NU walks the address list and adds the
/// weight of each of its neurons, then fires its neurons serially.
pub fn fc_timestep(
    spec: &LayerSpec,
    mapping: &LayerMapping,
    weights: &LayerWeights,
    compressed: &CompressedSpikes,
    compression_cycles: u64,
    add_bias: bool,
    state: &mut LifState,
) -> Result<StepOutcome> {
    check_state(state, spec)?;
    let LayerWeights::Fc {
        pre, weights, bias, ..
    } = weights
    else {
        return Err(Error::Shape("FC layer given non-FC weights".into()));
    };
    let lif = spec.lif.unwrap_or_default();
    let mut spikes = vec![false; spec.output.len()];
    let mut acc = vec![0.0f32; spec.output.len()];
    let mut reads = 0u64;
    for nu in &mapping.units {
        for &addr in &compressed.addresses {
            for j in nu.range() {
                acc[j] += weights[j * pre + addr];
            }
            reads += nu.neural_size as u64;
        }
        for j in nu.range() {
            let b = if add_bias { bias[j] } else { 0.0 };
            spikes[j] = lif_neuron(&mut state.membrane[j], acc[j], b, &lif).ok_or(
                Error::NumericOverflow {
                    layer: state.layer,
                    neuron: j,
                },
            )?;
        }
    }
    Ok(StepOutcome {
        spikes,
        cost: stage_cost(spec, mapping, compressed, compression_cycles),
        memory_reads: reads,
    })
}

/// One timestep of a CONV layer. Each NU owns a range of output channels and
/// serially scatters every input spike, input channel by input channel, into
/// the affected membranes before activating its channels.
pub fn conv_timestep(
    spec: &LayerSpec,
    mapping: &LayerMapping,
    weights: &LayerWeights,
    compressed: &CompressedSpikes,
    compression_cycles: u64,
    add_bias: bool,
    state: &mut LifState,
) -> Result<StepOutcome> {
    check_state(state, spec)?;
    let (
        LayerKind::Conv { kernel },
        LayerWeights::Conv {
            in_channels,
            weights,
            bias,
            ..
        },
    ) = (spec.kind, weights)
    else {
        return Err(Error::Shape("CONV layer given non-CONV weights".into()));
    };
    let (_, h, w) = spec.input.dims();
    let (_, oh, ow) = spec.output.dims();
    let frame = oh * ow;
    let lif = spec.lif.unwrap_or_default();
    let mut spikes = vec![false; spec.output.len()];
    let mut acc = vec![0.0f32; spec.output.len()];
    let mut reads = 0u64;
    let kk = kernel * kernel;

    for nu in &mapping.units {
        // Addresses are ascending, so channel order falls out of the list order.
        for &addr in &compressed.addresses {
            let (c, local) = (addr / (h * w), addr % (h * w));
            let (r, col) = (local / w, local % w);
            let affected = affected_addresses(local, h, w, kernel)?;
            for o in nu.range() {
                let filter = &weights[(o * in_channels + c) * kk..(o * in_channels + c + 1) * kk];
                for &out in &affected {
                    let (i, j) = (out / ow, out % ow);
                    acc[o * frame + out] += filter[(r - i) * kernel + (col - j)];
                }
            }
            reads += (affected.len() * nu.neural_size) as u64;
        }
        for o in nu.range() {
            let b = if add_bias { bias[o] } else { 0.0 };
            for n in o * frame..(o + 1) * frame {
                spikes[n] = lif_neuron(&mut state.membrane[n], acc[n], b, &lif).ok_or(
                    Error::NumericOverflow {
                        layer: state.layer,
                        neuron: n,
                    },
                )?;
            }
        }
    }
    Ok(StepOutcome {
        spikes,
        cost: stage_cost(spec, mapping, compressed, compression_cycles),
        memory_reads: reads,
    })
}

/// Start/finish times of every (stage, timestep) item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub start: Vec<Vec<u64>>,
    pub finish: Vec<Vec<u64>>,
    pub total_cycles: u64,
}

/// Earliest-start schedule of `costs[stage][t]` through buffers of `depth`
/// spike trains:
///
/// ```text
/// start[l][t] = max(finish[l][t-1], finish[l-1][t], start[l+1][t-depth])
/// finish[l][t] = start[l][t] + costs[l][t]
/// ```
///
/// The last term is backpressure: stage `l` may begin item `t` only once the
/// consumer has taken item `t - depth` out of the buffer.
pub fn pipeline_schedule(costs: &[Vec<u64>], depth: usize) -> Schedule {
    assert!(depth >= 1, "buffer depth must be >= 1");
    let stages = costs.len();
    let steps = costs.first().map_or(0, Vec::len);
    assert!(
        costs.iter().all(|row| row.len() == steps),
        "cost matrix must be rectangular"
    );
    let mut start = vec![vec![0u64; steps]; stages];
    let mut finish = vec![vec![0u64; steps]; stages];
    for t in 0..steps {
        for l in 0..stages {
            let mut s = 0;
            if t > 0 {
                s = s.max(finish[l][t - 1]);
            }
            if l > 0 {
                s = s.max(finish[l - 1][t]);
            }
            if l + 1 < stages && t >= depth {
                s = s.max(start[l + 1][t - depth]);
            }
            start[l][t] = s;
            finish[l][t] = s + costs[l][t];
        }
    }
    let total_cycles = finish
        .last()
        .and_then(|row| row.last())
        .copied()
        .unwrap_or(0);
    Schedule {
        start,
        finish,
        total_cycles,
    }
}

/// Everything a simulation run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub total_cycles: u64,
    /// Layer index (into `NetworkConfig::layers`) of each pipeline stage.
    pub stage_layers: Vec<usize>,
    /// `costs[stage][t]`.
    pub costs: Vec<Vec<LayerCycleCost>>,
    pub schedule: Schedule,
    pub trace: LayerSpikeTrace,
    /// Weight reads per stage over the whole run.
    pub memory_reads: Vec<u64>,
}

impl SimResult {
    /// Spike events per layer per timestep.
    pub fn spike_events(&self) -> Vec<Vec<usize>> {
        (0..self.trace.layers.len())
            .map(|l| self.trace.counts(l))
            .collect()
    }

    pub fn cost_totals(&self) -> Vec<Vec<u64>> {
        self.costs
            .iter()
            .map(|row| row.iter().map(LayerCycleCost::total).collect())
            .collect()
    }
}

/// Timing-only result computed from a fixed spike trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timing {
    pub costs: Vec<Vec<LayerCycleCost>>,
    pub schedule: Schedule,
}

impl Timing {
    pub fn total_cycles(&self) -> u64 {
        self.schedule.total_cycles
    }
}

fn check_input(config: &NetworkConfig, input: &SpikeTensor) -> Result<()> {
    if input.size() != config.input.len() {
        return Err(Error::Shape(format!(
            "input tensor has {} neurons, network input is {}",
            input.size(),
            config.input.len()
        )));
    }
    if input.timesteps() == 0 {
        return Err(Error::Shape("input tensor has no timesteps".into()));
    }
    Ok(())
}

/// Simulate the accelerator on `input`, producing spikes and cycle counts.
pub fn simulate_network(
    config: &NetworkConfig,
    weights: &NetworkWeights,
    input: &SpikeTensor,
) -> Result<SimResult> {
    config.validate()?;
    weights.check(config)?;
    check_input(config, input)?;
    let plan = build_mapping(config);
    simulate_with_plan(config, &plan, weights, input)
}

#[allow(clippy::needless_range_loop)]
pub fn simulate_with_plan(
    config: &NetworkConfig,
    plan: &MappingPlan,
    weights: &NetworkWeights,
    input: &SpikeTensor,
) -> Result<SimResult> {
    let steps = input.timesteps();
    let mut trace: Vec<SpikeTensor> = config
        .layers
        .iter()
        .map(|l| SpikeTensor::zeros(steps, l.output.len()))
        .collect();
    let mut states: Vec<LifState> = config
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LifState::new(i, l.output.len()))
        .collect();
    let stage_of: Vec<Option<usize>> = {
        let mut m = 0;
        config
            .layers
            .iter()
            .map(|l| {
                l.is_mapped().then(|| {
                    m += 1;
                    m - 1
                })
            })
            .collect()
    };
    let stages = plan.layers.len();
    let mut costs = vec![vec![LayerCycleCost::default(); steps]; stages];
    let mut memory_reads = vec![0u64; stages];

    for t in 0..steps {
        for (l, spec) in config.layers.iter().enumerate() {
            let pre: Vec<u64> = if l == 0 {
                input.step(t).to_vec()
            } else {
                trace[l - 1].step(t).to_vec()
            };
            let spikes = match stage_of[l] {
                None => or_pool(spec.input.dims(), &pre),
                Some(m) => {
                    let (compressed, cc) =
                        compress_spikes(&pre, spec.input.len(), config.penc_chunk_width);
                    let add_bias = t == 0 || config.bias_every_timestep;
                    let step_fn = match spec.kind {
                        LayerKind::Conv { .. } => conv_timestep,
                        _ => fc_timestep,
                    };
                    let outcome = step_fn(
                        spec,
                        &plan.layers[m],
                        &weights.layers[l],
                        &compressed,
                        cc,
                        add_bias,
                        &mut states[l],
                    )?;
                    costs[m][t] = outcome.cost;
                    memory_reads[m] += outcome.memory_reads;
                    outcome.spikes
                }
            };
            pack(&spikes, trace[l].step_mut(t));
        }
    }

    let totals: Vec<Vec<u64>> = costs
        .iter()
        .map(|row| row.iter().map(LayerCycleCost::total).collect())
        .collect();
    let schedule = pipeline_schedule(&totals, config.buffer_depth);
    Ok(SimResult {
        total_cycles: schedule.total_cycles,
        stage_layers: plan.layers.iter().map(|m| m.layer).collect(),
        costs,
        schedule,
        trace: LayerSpikeTrace { layers: trace },
        memory_reads,
    })
}

/// Cycle counts for a frozen spike trace, independent of weights. `trace`
/// holds the output of every layer; pool layers are recomputed from their
/// producers so only mapped-layer outputs need to be meaningful.
pub fn timing_from_trace(
    config: &NetworkConfig,
    input: &SpikeTensor,
    trace: &LayerSpikeTrace,
) -> Result<Timing> {
    config.validate()?;
    check_input(config, input)?;
    if trace.layers.len() != config.layers.len() {
        return Err(Error::Shape(format!(
            "trace has {} layers, network has {}",
            trace.layers.len(),
            config.layers.len()
        )));
    }
    let plan = build_mapping(config);
    let steps = input.timesteps();
    let mut costs = Vec::with_capacity(plan.layers.len());
    for lm in &plan.layers {
        let spec = &config.layers[lm.layer];
        let mut row = Vec::with_capacity(steps);
        for t in 0..steps {
            let pre = stage_input(config, input, trace, lm.layer, t);
            let (compressed, cc) = compress_spikes(&pre, spec.input.len(), config.penc_chunk_width);
            row.push(stage_cost(spec, lm, &compressed, cc));
        }
        costs.push(row);
    }
    let totals: Vec<Vec<u64>> = costs
        .iter()
        .map(|row| row.iter().map(LayerCycleCost::total).collect())
        .collect();
    Ok(Timing {
        schedule: pipeline_schedule(&totals, config.buffer_depth),
        costs,
    })
}

/// Spike train entering layer `l` at `t`, re-deriving any pools in between.
fn stage_input(
    config: &NetworkConfig,
    input: &SpikeTensor,
    trace: &LayerSpikeTrace,
    l: usize,
    t: usize,
) -> Vec<u64> {
    if l == 0 {
        return input.step(t).to_vec();
    }
    let producer = &config.layers[l - 1];
    if producer.is_mapped() {
        return trace.layers[l - 1].step(t).to_vec();
    }
    let below = stage_input(config, input, trace, l - 1, t);
    let bits = or_pool(producer.input.dims(), &below);
    let mut words = vec![0u64; producer.output.len().div_ceil(64)];
    pack(&bits, &mut words);
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::golden::golden_forward;
    use crate::spike_io::rate_encode;

    fn words_from(bits: &[usize], n: usize) -> Vec<u64> {
        let mut w = vec![0u64; n.div_ceil(64)];
        for &b in bits {
            w[b / 64] |= 1 << (b % 64);
        }
        w
    }

    #[test]
    fn compress_small() {
        let (c, cycles) = compress_spikes(&[0b0001_0110], 8, 8);
        assert_eq!(c.addresses, [1, 2, 4]);
        assert_eq!(cycles, 4);
        assert_eq!(c.chunk_starts, [0]);
    }

    #[test]
    fn compress_empty_784() {
        let (c, cycles) = compress_spikes(&[0; 13], 784, 64);
        assert!(c.addresses.is_empty());
        assert_eq!(cycles, 13);
    }

    #[test]
    fn compress_95_of_784() {
        let bits: Vec<usize> = (0..95).map(|i| i * 8 + (i % 3)).collect();
        let (c, cycles) = compress_spikes(&words_from(&bits, 784), 784, 64);
        assert_eq!(c.addresses, bits);
        assert_eq!(cycles, 108);
    }

    #[test]
    fn compress_wide_chunks_cross_words() {
        let bits = [0, 63, 64, 99, 100, 127, 128, 199];
        let (c, cycles) = compress_spikes(&words_from(&bits, 200), 200, 100);
        assert_eq!(c.addresses, bits);
        assert_eq!(c.chunk_starts, [0, 4]);
        assert_eq!(cycles, 8 + 2);
    }

    #[test]
    fn affected_interior_and_corner() {
        assert_eq!(
            affected_addresses(12, 5, 5, 3).unwrap(),
            (0..9).collect::<Vec<_>>()
        );
        assert_eq!(affected_addresses(0, 5, 5, 3).unwrap(), [0]);
        assert_eq!(affected_addresses(24, 5, 5, 3).unwrap(), [8]);
        assert_eq!(affected_addresses(7, 4, 4, 1).unwrap(), [7]);
        assert!(affected_addresses(25, 5, 5, 3).is_err());
        for a in 0..25 {
            assert_eq!(
                affected_count(a, 5, 5, 3),
                affected_addresses(a, 5, 5, 3).unwrap().len()
            );
        }
    }

    #[test]
    fn fc_cost_500_lhr4() {
        let config = NetworkConfig::from_topology("784-500", 10, 50)
            .unwrap()
            .with_lhr(&[4])
            .unwrap();
        let plan = build_mapping(&config);
        let bits: Vec<usize> = (0..95).map(|i| i * 8).collect();
        let (c, cc) = compress_spikes(&words_from(&bits, 784), 784, 64);
        let cost = stage_cost(&config.layers[0], &plan.layers[0], &c, cc);
        assert_eq!(cost.accumulation, 380);
        assert_eq!(cost.activation, 4);
        assert_eq!(cost.compression, 108);
        assert_eq!(cost.total(), 492);
    }

    #[test]
    fn fc_cost_fully_parallel_and_contention() {
        let config = NetworkConfig::from_topology("16-8", 8, 1).unwrap();
        let plan = build_mapping(&config);
        let (c, cc) = compress_spikes(&[0b1011], 16, 16);
        let cost = stage_cost(&config.layers[0], &plan.layers[0], &c, cc);
        assert_eq!((cost.accumulation, cost.activation), (3, 1));

        let mut shared = config.with_lhr(&[4]).unwrap();
        let alone = stage_cost(&shared.layers[0], &build_mapping(&shared).layers[0], &c, cc);
        shared.memory.blocks = Some(vec![crate::config::BlockSpec {
            block_count: 1,
            neurons_per_block: 8,
        }]);
        let both = stage_cost(&shared.layers[0], &build_mapping(&shared).layers[0], &c, cc);
        assert_eq!(both.accumulation, 2 * alone.accumulation);
    }

    #[test]
    fn conv_costs() {
        let config = NetworkConfig::from_topology("1x5x5-1C3", 9, 1).unwrap();
        let plan = build_mapping(&config);
        let (c, cc) = compress_spikes(&words_from(&[12], 25), 25, 64);
        let cost = stage_cost(&config.layers[0], &plan.layers[0], &c, cc);
        assert_eq!(cost.accumulation, 9);
        assert_eq!(cost.activation, 9);

        let (z, zc) = compress_spikes(&[0], 25, 64);
        let idle = stage_cost(&config.layers[0], &plan.layers[0], &z, zc);
        assert_eq!(idle.accumulation, 0);
        assert_eq!(idle.activation, 9);
    }

    #[test]
    fn conv_lhr_halves_accumulation() {
        let base = NetworkConfig::from_topology("1x6x6-32C3", 32, 16).unwrap();
        let spike = words_from(&[14], 36);
        let (c, cc) = compress_spikes(&spike, 36, 64);
        let acc = |r: usize| {
            let cfg = base.with_lhr(&[r]).unwrap();
            stage_cost(&cfg.layers[0], &build_mapping(&cfg).layers[0], &c, cc).accumulation
        };
        assert_eq!(acc(16) * 2, acc(32));
        assert_eq!(
            build_mapping(&base.with_lhr(&[16]).unwrap()).layers[0].nu_count(),
            2
        );
    }

    #[test]
    fn pipeline_examples() {
        assert_eq!(pipeline_schedule(&[vec![5, 5, 5]], 1).total_cycles, 15);
        let s = pipeline_schedule(&[vec![10, 10], vec![10, 10]], 1);
        assert_eq!(s.finish, vec![vec![10, 20], vec![20, 30]]);
        assert_eq!(s.total_cycles, 30);
        let b = pipeline_schedule(&[vec![1, 1, 1], vec![100, 100, 100]], 1);
        assert_eq!(b.total_cycles, 301);
        assert_eq!(pipeline_schedule(&[], 1).total_cycles, 0);
    }

    #[test]
    fn backpressure_holds_fast_producer() {
        let b = pipeline_schedule(&[vec![1, 1, 1], vec![100, 100, 100]], 1);
        assert_eq!(b.start[0], vec![0, 1, 101]);
        let deep = pipeline_schedule(&[vec![1, 1, 1], vec![100, 100, 100]], 2);
        assert_eq!(deep.start[0], vec![0, 1, 2]);
        assert_eq!(deep.total_cycles, 301);
    }

    #[test]
    fn simulate_matches_golden_and_timing() {
        let config = NetworkConfig::from_topology("1x8x8-3C3-P2-2C3-10", 5, 2)
            .unwrap()
            .with_lhr(&[2, 1, 4])
            .unwrap();
        let weights = NetworkWeights::synthetic(&config, 3);
        let img: Vec<u8> = (0..64).map(|i| if i % 3 == 0 { 220 } else { 30 }).collect();
        let input = rate_encode(&img, 6, 11);
        let sim = simulate_network(&config, &weights, &input).unwrap();
        let gold = golden_forward(&config, &weights, &input).unwrap();
        assert_eq!(sim.trace, gold);
        assert!(sim.trace.layers[0].count() > 0);
        let timing = timing_from_trace(&config, &input, &gold).unwrap();
        assert_eq!(timing.costs, sim.costs);
        assert_eq!(timing.total_cycles(), sim.total_cycles);
        assert_eq!(sim.stage_layers, [0, 2, 3]);
    }

    #[test]
    fn zero_input_costs_only_floors() {
        let config = NetworkConfig::from_topology("100-20-10", 10, 1).unwrap();
        let weights = NetworkWeights::synthetic(&config, 3);
        let input = SpikeTensor::zeros(4, 100);
        let sim = simulate_network(&config, &weights, &input).unwrap();
        assert_eq!(sim.trace.output().count(), 0);
        // layer 0: 2 chunks + 1 activation; layer 1: 1 chunk + 1 activation
        for t in 0..4 {
            assert_eq!(sim.costs[0][t].total(), 3);
            assert_eq!(sim.costs[1][t].total(), 2);
        }
        assert_eq!(
            sim.total_cycles,
            pipeline_schedule(&sim.cost_totals(), 1).total_cycles
        );
        assert_eq!(sim.memory_reads, [0, 0]);
    }
}
