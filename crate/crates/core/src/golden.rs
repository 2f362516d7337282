//! Functional (untimed) reference simulator.
//!
//! Accumulation visits spiking pre-synaptic neurons in ascending address
//! order, the same order the cycle-level engine uses, so both produce
//! bit-identical `f32` membranes and spikes.

use serde::Serialize;

use crate::config::{LayerKind, LifParams, NetworkConfig, ResetMode};
use crate::error::{Error, Result};
use crate::model::{LayerWeights, NetworkWeights};
use crate::spike_io::SpikeTensor;

/// Membrane potentials of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub layer: usize,
    pub membrane: Vec<f32>,
}

impl LifState {
    pub fn new(layer: usize, size: usize) -> Self {
        Self {
            layer,
            membrane: vec![0.0; size],
        }
    }
}

/// Leak, integrate and fire one neuron. Returns whether it spiked, or `None`
/// when the new membrane is not finite.
#[inline]
pub fn lif_neuron(
    membrane: &mut f32,
    accumulated: f32,
    bias: f32,
    params: &LifParams,
) -> Option<bool> {
    let mut m = params.beta * *membrane + accumulated + bias;
    if !m.is_finite() {
        return None;
    }
    let spike = m >= params.threshold;
    if spike {
        match params.reset_mode {
            ResetMode::Subtract => m -= params.threshold,
            ResetMode::Zero => m = 0.0,
        }
    }
    *membrane = m;
    Some(spike)
}

/// `mem' = beta·mem + accumulated + bias`, spike where `mem' ≥ threshold`,
/// then reset. `bias = None` adds nothing.
pub fn lif_step(
    state: &mut LifState,
    accumulated: &[f32],
    bias: Option<&[f32]>,
    params: &LifParams,
) -> Result<Vec<bool>> {
    let n = state.membrane.len();
    if accumulated.len() != n || bias.is_some_and(|b| b.len() != n) {
        return Err(Error::Shape(format!(
            "LIF state of {n} neurons given {} inputs",
            accumulated.len()
        )));
    }
    let mut spikes = Vec::with_capacity(n);
    for i in 0..n {
        let b = bias.map_or(0.0, |b| b[i]);
        let s = lif_neuron(&mut state.membrane[i], accumulated[i], b, params).ok_or(
            Error::NumericOverflow {
                layer: state.layer,
                neuron: i,
            },
        )?;
        spikes.push(s);
    }
    Ok(spikes)
}

/// Emitted spikes of every layer (pool layers included), indexed like
/// `NetworkConfig::layers`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpikeTrace {
    pub layers: Vec<SpikeTensor>,
}

impl LayerSpikeTrace {
    /// Spike events per timestep for layer `l`.
    pub fn counts(&self, layer: usize) -> Vec<usize> {
        self.layers[layer].counts()
    }

    pub fn output(&self) -> &SpikeTensor {
        self.layers.last().expect("trace has at least one layer")
    }

    /// First `(layer, timestep, neuron)` where two traces differ.
    pub fn first_divergence(&self, other: &Self) -> Option<(usize, usize, usize)> {
        for (l, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if let Some((t, i)) = first_tensor_divergence(a, b) {
                return Some((l, t, i));
            }
        }
        None
    }
}

/// First `(timestep, neuron)` where two tensors differ, including a shape
/// mismatch (reported at the first out-of-range coordinate).
pub fn first_tensor_divergence(a: &SpikeTensor, b: &SpikeTensor) -> Option<(usize, usize)> {
    if a.size() != b.size() {
        return Some((0, a.size().min(b.size())));
    }
    let steps = a.timesteps().min(b.timesteps());
    for t in 0..steps {
        for (w, (x, y)) in a.step(t).iter().zip(b.step(t)).enumerate() {
            let diff = x ^ y;
            if diff != 0 {
                return Some((t, w * 64 + diff.trailing_zeros() as usize));
            }
        }
    }
    (a.timesteps() != b.timesteps()).then_some((steps, 0))
}

pub(crate) fn set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(w * 64 + b)
        })
    })
}

fn fc_accumulate(pre: usize, post: usize, weights: &[f32], spikes: &[u64]) -> Vec<f32> {
    let mut acc = vec![0.0f32; post];
    for (j, a) in acc.iter_mut().enumerate() {
        let row = &weights[j * pre..(j + 1) * pre];
        for i in set_bits(spikes) {
            *a += row[i];
        }
    }
    acc
}

/// Dense binary correlation, valid padding, stride 1. For each output the
/// terms are added in (input channel, row, column) order.
pub fn conv_correlate(
    input_dims: (usize, usize, usize),
    kernel: usize,
    out_channels: usize,
    weights: &[f32],
    is_spike: impl Fn(usize) -> bool,
) -> Vec<f32> {
    let (cin, h, w) = input_dims;
    let (oh, ow) = (h - kernel + 1, w - kernel + 1);
    let mut acc = vec![0.0f32; out_channels * oh * ow];
    for o in 0..out_channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut a = 0.0f32;
                for c in 0..cin {
                    for ki in 0..kernel {
                        for kj in 0..kernel {
                            if is_spike(c * h * w + (i + ki) * w + (j + kj)) {
                                a += weights[((o * cin + c) * kernel + ki) * kernel + kj];
                            }
                        }
                    }
                }
                acc[(o * oh + i) * ow + j] = a;
            }
        }
    }
    acc
}

/// Non-overlapping 2×2 OR pooling over `(channels, h, w)` packed spikes.
pub fn or_pool(input_dims: (usize, usize, usize), spikes: &[u64]) -> Vec<bool> {
    let (c, h, w) = input_dims;
    let (oh, ow) = (h / 2, w / 2);
    let bit = |i: usize| spikes[i / 64] >> (i % 64) & 1 == 1;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let base = ch * h * w + 2 * i * w + 2 * j;
                out.push(bit(base) || bit(base + 1) || bit(base + w) || bit(base + w + 1));
            }
        }
    }
    out
}

pub(crate) fn pack(bits: &[bool], dst: &mut [u64]) {
    for (i, &b) in bits.iter().enumerate() {
        if b {
            dst[i / 64] |= 1 << (i % 64);
        }
    }
}

/// Run the reference network over every timestep of `input`.
pub fn golden_forward(
    config: &NetworkConfig,
    weights: &NetworkWeights,
    input: &SpikeTensor,
) -> Result<LayerSpikeTrace> {
    weights.check(config)?;
    if input.size() != config.input.len() {
        return Err(Error::Shape(format!(
            "input tensor has {} neurons, network input is {}",
            input.size(),
            config.input.len()
        )));
    }
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

    for t in 0..steps {
        for (l, layer) in config.layers.iter().enumerate() {
            let pre: Vec<u64> = if l == 0 {
                input.step(t).to_vec()
            } else {
                trace[l - 1].step(t).to_vec()
            };
            let lw = &weights.layers[l];
            let spikes = match (layer.kind, lw) {
                (LayerKind::MaxPool, _) => or_pool(layer.input.dims(), &pre),
                (
                    LayerKind::FullyConnected,
                    LayerWeights::Fc {
                        post,
                        pre: n_pre,
                        weights,
                        bias,
                    },
                ) => {
                    let acc = fc_accumulate(*n_pre, *post, weights, &pre);
                    let b = (t == 0 || config.bias_every_timestep).then_some(bias.as_slice());
                    lif_step(&mut states[l], &acc, b, &layer.lif.unwrap_or_default())?
                }
                (
                    LayerKind::Conv { kernel },
                    LayerWeights::Conv {
                        out_channels,
                        weights,
                        bias,
                        ..
                    },
                ) => {
                    let bit = |i: usize| pre[i / 64] >> (i % 64) & 1 == 1;
                    let acc =
                        conv_correlate(layer.input.dims(), kernel, *out_channels, weights, bit);
                    let per_ch = layer.output.len() / out_channels;
                    let expanded: Vec<f32>;
                    let b = if t == 0 || config.bias_every_timestep {
                        expanded = (0..layer.output.len()).map(|i| bias[i / per_ch]).collect();
                        Some(expanded.as_slice())
                    } else {
                        None
                    };
                    lif_step(&mut states[l], &acc, b, &layer.lif.unwrap_or_default())?
                }
                _ => unreachable!("weights checked against config"),
            };
            pack(&spikes, trace[l].step_mut(t));
        }
    }
    Ok(LayerSpikeTrace { layers: trace })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub class: usize,
    pub scores: Vec<usize>,
}

/// Population decoding: sum spikes of each class's contiguous pool of `pcr`
/// neurons over all timesteps; the highest score wins, ties to the lowest class.
pub fn decode_population(output: &SpikeTensor, classes: usize, pcr: usize) -> Result<Decoded> {
    if classes == 0 || output.size() != classes * pcr {
        return Err(Error::Shape(format!(
            "output layer of {} neurons cannot hold {classes} classes x {pcr}",
            output.size()
        )));
    }
    let mut scores = vec![0usize; classes];
    for t in 0..output.timesteps() {
        for i in set_bits(output.step(t)) {
            scores[i / pcr] += 1;
        }
    }
    let class = scores
        .iter()
        .enumerate()
        .fold(0, |best, (c, &s)| if s > scores[best] { c } else { best });
    Ok(Decoded { class, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerWeights;
    use proptest::prelude::*;

    fn lif(beta: f32, threshold: f32, reset_mode: ResetMode) -> LifParams {
        LifParams {
            beta,
            threshold,
            reset_mode,
        }
    }

    #[test]
    fn below_threshold() {
        let mut s = LifState {
            layer: 0,
            membrane: vec![0.8],
        };
        let spikes = lif_step(
            &mut s,
            &[0.3],
            Some(&[0.0]),
            &lif(0.5, 1.0, ResetMode::Subtract),
        )
        .unwrap();
        assert_eq!(spikes, [false]);
        assert!((s.membrane[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn subtract_reset_residual() {
        let mut s = LifState {
            layer: 0,
            membrane: vec![0.9],
        };
        let spikes = lif_step(&mut s, &[0.6], None, &lif(0.5, 1.0, ResetMode::Subtract)).unwrap();
        assert_eq!(spikes, [true]);
        assert!((s.membrane[0] - 0.05).abs() < 1e-6);

        let mut z = LifState {
            layer: 0,
            membrane: vec![0.9],
        };
        lif_step(&mut z, &[0.6], None, &lif(0.5, 1.0, ResetMode::Zero)).unwrap();
        assert_eq!(z.membrane[0], 0.0);
    }

    #[test]
    fn memoryless_at_threshold() {
        let p = lif(0.0, 1.0, ResetMode::Subtract);
        let mut s = LifState::new(0, 1);
        for _ in 0..5 {
            assert_eq!(lif_step(&mut s, &[1.0], None, &p).unwrap(), [true]);
        }
    }

    #[test]
    fn non_finite_membrane_is_an_error() {
        let mut s = LifState::new(3, 2);
        let err = lif_step(
            &mut s,
            &[0.0, f32::INFINITY],
            None,
            &lif(0.5, 1.0, ResetMode::Zero),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NumericOverflow {
                layer: 3,
                neuron: 1
            }
        ));
    }

    #[test]
    fn two_input_fc_fires() {
        let mut c = NetworkConfig::from_topology("2-1", 1, 1).unwrap();
        c.layers[0].lif = Some(lif(0.0, 1.0, ResetMode::Subtract));
        let w = NetworkWeights {
            layers: vec![LayerWeights::Fc {
                post: 1,
                pre: 2,
                weights: vec![0.6, 0.5],
                bias: vec![0.0],
            }],
        };
        let input = SpikeTensor::from_coords(2, 2, [(0, 0), (0, 1), (1, 0)]);
        let trace = golden_forward(&c, &w, &input).unwrap();
        assert!(trace.output().get(0, 0));
        assert!(!trace.output().get(1, 0));
    }

    #[test]
    fn zero_input_zero_spikes() {
        let c = NetworkConfig::from_topology("1x8x8-2C3-P2-12-6", 3, 2).unwrap();
        let w = NetworkWeights::synthetic(&c, 1);
        let trace = golden_forward(&c, &w, &SpikeTensor::zeros(5, 64)).unwrap();
        assert!(trace.layers.iter().all(|t| t.count() == 0));
    }

    #[test]
    fn conv_single_patch() {
        let mut c = NetworkConfig::from_topology("1x5x5-1C3", 9, 1).unwrap();
        c.layers[0].lif = Some(lif(0.0, 8.5, ResetMode::Subtract));
        let w = NetworkWeights {
            layers: vec![LayerWeights::Conv {
                out_channels: 1,
                in_channels: 1,
                kernel: 3,
                weights: vec![1.0; 9],
                bias: vec![0.0],
            }],
        };
        // 3x3 block of spikes at rows 1..4, cols 2..5
        let coords = (1..4).flat_map(|r| (2..5).map(move |col| (0, r * 5 + col)));
        let input = SpikeTensor::from_coords(1, 25, coords);
        let trace = golden_forward(&c, &w, &input).unwrap();
        let out = trace.output();
        let fired: Vec<usize> = (0..9).filter(|&i| out.get(0, i)).collect();
        assert_eq!(fired, [5]);
    }

    #[test]
    fn or_pool_windows() {
        // 1x4x4 with spikes at (0,1) and (3,3)
        let mut words = [0u64; 1];
        words[0] |= 1 << 1;
        words[0] |= 1 << 15;
        assert_eq!(or_pool((1, 4, 4), &words), [true, false, false, true]);
        // odd size drops the last row/column
        let mut w5 = [0u64; 1];
        w5[0] |= 1 << 24;
        assert_eq!(or_pool((1, 5, 5), &w5), [false; 4]);
    }

    #[test]
    fn population_decoding() {
        let out = SpikeTensor::zeros(3, 300);
        assert_eq!(decode_population(&out, 10, 30).unwrap().scores.len(), 10);
        assert_eq!(decode_population(&out, 10, 30).unwrap().class, 0);

        let one = SpikeTensor::from_coords(2, 10, [(1, 7)]);
        assert_eq!(decode_population(&one, 10, 1).unwrap().class, 7);

        let tied = SpikeTensor::from_coords(1, 6, [(0, 1), (0, 4)]);
        assert_eq!(decode_population(&tied, 3, 2).unwrap().class, 0);

        assert!(decode_population(&one, 10, 2).is_err());
    }

    #[test]
    fn first_divergence_reports_coordinates() {
        let a = SpikeTensor::from_coords(3, 100, [(1, 70)]);
        let b = SpikeTensor::from_coords(3, 100, [(1, 70), (2, 65)]);
        assert_eq!(first_tensor_divergence(&a, &b), Some((2, 65)));
        assert_eq!(first_tensor_divergence(&a, &a), None);
    }

    fn unrolled(beta: f32, thr: f32, inputs: &[f32], bias: f32) -> (Vec<bool>, f32) {
        let mut m = 0.0f32;
        let mut spikes = Vec::new();
        for &x in inputs {
            m = beta * m + x + bias;
            let s = m >= thr;
            if s {
                m -= thr;
            }
            spikes.push(s);
        }
        (spikes, m)
    }

    proptest! {
        #[test]
        fn subtract_reset_matches_direct_recurrence(
            beta in 0.0f32..0.99,
            thr in 0.1f32..3.0,
            bias in -0.5f32..0.5,
            inputs in proptest::collection::vec(-1.0f32..2.0, 1..40),
        ) {
            let p = lif(beta, thr, ResetMode::Subtract);
            let mut s = LifState::new(0, 1);
            let mut spikes = Vec::new();
            for &x in &inputs {
                spikes.push(lif_step(&mut s, &[x], Some(&[bias]), &p).unwrap()[0]);
            }
            let (want, m) = unrolled(beta, thr, &inputs, bias);
            prop_assert_eq!(spikes, want);
            prop_assert_eq!(s.membrane[0].to_bits(), m.to_bits());
        }

        #[test]
        fn argmax_invariant_under_scaling(scores in proptest::collection::vec(0usize..5, 1..8), k in 1usize..5) {
            let classes = scores.len();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (c, &s) in scores.iter().enumerate() {
                for i in 0..s { a.push((i, c)); }
                for i in 0..s * k { b.push((i, c)); }
            }
            let steps = scores.iter().max().unwrap() * k + 1;
            let ta = SpikeTensor::from_coords(steps, classes, a);
            let tb = SpikeTensor::from_coords(steps, classes, b);
            prop_assert_eq!(
                decode_population(&ta, classes, 1).unwrap().class,
                decode_population(&tb, classes, 1).unwrap().class
            );
        }

        #[test]
        fn threshold_monotone(seed in any::<u64>(), scale in 1.0f32..3.0, zero in any::<bool>()) {
            // Excitatory weights: with mixed signs, fewer upstream spikes can
            // release downstream neurons from inhibition.
            let mut c = NetworkConfig::from_topology("20-12-6", 3, 2).unwrap();
            for l in c.layers.iter_mut() {
                if zero {
                    l.lif.as_mut().unwrap().reset_mode = ResetMode::Zero;
                }
            }
            let mut w = NetworkWeights::synthetic(&c, seed);
            for lw in &mut w.layers {
                lw.weights_mut().iter_mut().for_each(|x| *x = x.abs());
            }
            let img: Vec<u8> = (0..20).map(|i| (crate::spike_io::mix64(seed ^ i) & 0xff) as u8).collect();
            let input = crate::spike_io::rate_encode(&img, 12, seed);
            let mut hi = c.clone();
            for l in &mut hi.layers {
                l.lif.as_mut().unwrap().threshold *= scale;
            }
            let a = golden_forward(&c, &w, &input).unwrap();
            let b = golden_forward(&hi, &w, &input).unwrap();
            for l in 0..c.layers.len() {
                let (mut ca, mut cb) = (0, 0);
                for t in 0..12 {
                    ca += a.layers[l].count_step(t);
                    cb += b.layers[l].count_step(t);
                    prop_assert!(cb <= ca, "layer {} t {}: {} > {}", l, t, cb, ca);
                }
            }
        }
    }
}
