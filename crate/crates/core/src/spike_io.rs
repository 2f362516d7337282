//! Spike tensors, the SNNSPK1 spike-file format, IDX image loading and rate
//! encoding.
//!
//! SNNSPK1 layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SNNSPK1\0"
//! 8       4     u32 timesteps T
//! 12      4     u32 size n
//! 16      8·T·⌈n/64⌉  u64 words, timestep-major; bit i of a timestep is
//!                     bit (i mod 64) of word (i div 64); pad bits are zero
//! ```

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SPIKE_MAGIC: &[u8; 8] = b"SNNSPK1\0";

/// `T × n` spike bits, bit-packed into 64-bit words per timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTensor {
    timesteps: usize,
    size: usize,
    words: Vec<u64>,
}

pub fn words_for(size: usize) -> usize {
    size.div_ceil(64)
}

impl SpikeTensor {
    pub fn zeros(timesteps: usize, size: usize) -> Self {
        Self {
            timesteps,
            size,
            words: vec![0; timesteps * words_for(size)],
        }
    }

    /// Build from raw words; fails if the length is wrong or pad bits are set.
    pub fn from_words(timesteps: usize, size: usize, words: Vec<u64>) -> Result<Self> {
        let expected = timesteps * words_for(size);
        if words.len() != expected {
            return Err(Error::format(
                "spike tensor",
                format!(
                    "{} words for T={timesteps}, n={size}; expected {expected}",
                    words.len()
                ),
            ));
        }
        let t = Self {
            timesteps,
            size,
            words,
        };
        let mask = t.pad_mask();
        if mask != 0 {
            let wpt = words_for(size);
            for step in 0..timesteps {
                if t.words[step * wpt + wpt - 1] & mask != 0 {
                    return Err(Error::format(
                        "spike tensor",
                        format!("nonzero pad bits in timestep {step}"),
                    ));
                }
            }
        }
        Ok(t)
    }

    /// Build from `(timestep, neuron)` coordinates.
    pub fn from_coords(
        timesteps: usize,
        size: usize,
        coords: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut t = Self::zeros(timesteps, size);
        for (step, i) in coords {
            t.set(step, i, true);
        }
        t
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn pad_mask(&self) -> u64 {
        match self.size % 64 {
            0 => 0,
            r => !0u64 << r,
        }
    }

    pub fn words_per_step(&self) -> usize {
        words_for(self.size)
    }

    pub fn step(&self, t: usize) -> &[u64] {
        let w = self.words_per_step();
        &self.words[t * w..(t + 1) * w]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut [u64] {
        let w = self.words_per_step();
        &mut self.words[t * w..(t + 1) * w]
    }

    pub fn get(&self, t: usize, i: usize) -> bool {
        assert!(i < self.size, "neuron {i} out of range {}", self.size);
        self.step(t)[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, t: usize, i: usize, value: bool) {
        assert!(i < self.size, "neuron {i} out of range {}", self.size);
        let word = &mut self.step_mut(t)[i / 64];
        if value {
            *word |= 1 << (i % 64);
        } else {
            *word &= !(1 << (i % 64));
        }
    }

    pub fn count_step(&self, t: usize) -> usize {
        self.step(t).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Spike counts per timestep.
    pub fn counts(&self) -> Vec<usize> {
        (0..self.timesteps).map(|t| self.count_step(t)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.words.len());
        out.extend_from_slice(SPIKE_MAGIC);
        out.extend_from_slice(&(self.timesteps as u32).to_le_bytes());
        out.extend_from_slice(&(self.size as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::format(
                "spike file",
                "shorter than the 16-byte header",
            ));
        }
        if &bytes[..8] != SPIKE_MAGIC {
            return Err(Error::format("spike file", "bad magic"));
        }
        let timesteps = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload = &bytes[16..];
        let expected = timesteps * words_for(size) * 8;
        if payload.len() != expected {
            return Err(Error::format(
                "spike file",
                format!(
                    "header declares T={timesteps}, n={size} ({expected} payload bytes) but {} follow",
                    payload.len()
                ),
            ));
        }
        let words = payload
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_words(timesteps, size, words)
    }
}

pub fn read_spike_file(path: &Path) -> Result<SpikeTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SpikeTensor::from_bytes(&bytes)
}

pub fn write_spike_file(tensor: &SpikeTensor, path: &Path) -> Result<()> {
    if tensor.timesteps > u32::MAX as usize || tensor.size > u32::MAX as usize {
        return Err(Error::InvalidArgument(
            "tensor too large for SNNSPK1".into(),
        ));
    }
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// IDX

/// Decoded unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse an IDX container holding unsigned bytes (type code 0x08).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::format("IDX file", "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format("IDX file", "magic number mismatch"));
    }
    if bytes[2] != 0x08 {
        return Err(Error::format(
            "IDX file",
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if ndims == 0 || bytes.len() < header {
        return Err(Error::format("IDX file", "truncated header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let len: usize = dims.iter().product();
    let data = &bytes[header..];
    if data.len() < len {
        return Err(Error::format(
            "IDX file",
            format!("truncated: {} of {len} data bytes", data.len()),
        ));
    }
    Ok(IdxArray {
        dims,
        data: data[..len].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

/// Encode an IDX unsigned-byte array (used for fixtures and synthetic datasets).
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Grayscale images with optional labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageSet {
    pub height: usize,
    pub width: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn from_idx(images: IdxArray, labels: Option<IdxArray>) -> Result<Self> {
        let (count, height, width) = match images.dims.as_slice() {
            [n, h, w] => (*n, *h, *w),
            [n, p] => (*n, 1, *p),
            dims => {
                return Err(Error::format(
                    "IDX image file",
                    format!("expected 2 or 3 dimensions, got {}", dims.len()),
                ))
            }
        };
        let px = height * width;
        let imgs = (0..count)
            .map(|i| images.data[i * px..(i + 1) * px].to_vec())
            .collect();
        let labels = match labels {
            None => Vec::new(),
            Some(l) => {
                if l.dims.len() != 1 || l.dims[0] != count {
                    return Err(Error::format(
                        "IDX label file",
                        format!("{:?} labels for {count} images", l.dims),
                    ));
                }
                l.data
            }
        };
        Ok(Self {
            height,
            width,
            images: imgs,
            labels,
        })
    }

    pub fn load(images: &Path, labels: Option<&Path>) -> Result<Self> {
        let labels = labels.map(load_idx).transpose()?;
        Self::from_idx(load_idx(images)?, labels)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if let Some((i, l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= classes)
        {
            return Err(Error::Config(format!(
                "image {i} has label {l} but only {classes} classes exist"
            )));
        }
        Ok(())
    }

    /// Deterministic sparse random images with random labels, for runs
    /// without a dataset on disk.
    pub fn synthetic(count: usize, height: usize, width: usize, classes: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let images = (0..count)
            .map(|_| {
                (0..height * width)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            rng.gen_range(64..=255)
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        let labels = (0..count)
            .map(|_| rng.gen_range(0..classes.max(1)) as u8)
            .collect();
        Self {
            height,
            width,
            images,
            labels,
        }
    }
}

// ---------------------------------------------------------------------------
// rate coding

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One SplitMix64 step from `state`.
pub fn splitmix64(state: u64) -> u64 {
    mix64(state.wrapping_add(GOLDEN_GAMMA))
}

/// Uniform draw in `[0, 1)` for `(seed, pixel, t)`: SplitMix64 seeded with
/// `seed ^ mix64(pixel << 32 | t)`, top 53 bits over 2^53.
pub fn rate_uniform(seed: u64, pixel: u32, t: u32) -> f64 {
    let key = mix64(((pixel as u64) << 32) | t as u64);
    (splitmix64(seed ^ key) >> 11) as f64 / (1u64 << 53) as f64
}

/// Per-stream seed so different images draw independent spike patterns.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ stream.wrapping_mul(GOLDEN_GAMMA))
}

/// Bernoulli rate coding: pixel `p` fires at `t` iff `u(seed, pixel, t) < p / 255`.
pub fn rate_encode(image: &[u8], timesteps: usize, seed: u64) -> SpikeTensor {
    let mut out = SpikeTensor::zeros(timesteps, image.len());
    for t in 0..timesteps {
        for (i, &p) in image.iter().enumerate() {
            if p == 0 {
                continue;
            }
            if rate_uniform(seed, i as u32, t as u32) < p as f64 / 255.0 {
                out.set(t, i, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_round_trip() {
        let t = SpikeTensor::from_coords(2, 3, [(0, 1), (1, 2)]);
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 16 + 2 * 8);
        assert_eq!(t.words(), &[0b010, 0b100]);
        assert_eq!(SpikeTensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn pad_bits_rejected() {
        let t = SpikeTensor::from_coords(1, 3, [(0, 0)]);
        let mut bytes = t.to_bytes();
        bytes[16] |= 0b1000;
        assert!(SpikeTensor::from_bytes(&bytes).is_err());
    }

    #[test]
    fn payload_size_mismatch_rejected() {
        let t = SpikeTensor::zeros(2, 70);
        let mut bytes = t.to_bytes();
        bytes.pop();
        assert!(SpikeTensor::from_bytes(&bytes).is_err());
        let mut long = t.to_bytes();
        long.extend_from_slice(&[0; 8]);
        assert!(SpikeTensor::from_bytes(&long).is_err());
        assert!(SpikeTensor::from_bytes(b"SNNSPK2\0\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn dvs_frame_capacity() {
        let n = 128 * 128;
        let t = SpikeTensor::from_coords(3, n, [(0, 0), (1, n - 1), (2, 8191)]);
        let back = SpikeTensor::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back.size(), 16384);
        assert_eq!(back.words_per_step(), 256);
        assert_eq!(back, t);
    }

    #[test]
    fn idx_errors() {
        assert!(parse_idx(&[]).is_err());
        assert!(parse_idx(&[0, 0, 8, 3, 0, 0]).is_err());
        let mut bad = encode_idx(&[2, 2, 2], &[0; 8]);
        bad[1] = 1;
        assert!(parse_idx(&bad).is_err());
        let truncated = encode_idx(&[2, 2, 2], &[0; 7]);
        assert!(parse_idx(&truncated).is_err());
    }

    #[test]
    fn label_out_of_range() {
        let imgs = parse_idx(&encode_idx(&[1, 2, 2], &[0, 1, 2, 3])).unwrap();
        let labels = parse_idx(&encode_idx(&[1], &[12])).unwrap();
        let set = ImageSet::from_idx(imgs, Some(labels)).unwrap();
        assert!(set.validate(10).is_err());
        assert!(set.validate(13).is_ok());
    }

    #[test]
    fn full_and_zero_intensity() {
        let s = rate_encode(&[255, 0], 50, 9);
        for t in 0..50 {
            assert!(s.get(t, 0));
            assert!(!s.get(t, 1));
        }
    }

    #[test]
    fn golden_bits_pixel_128() {
        // Frozen from an independent Python evaluation of the SplitMix64 recurrence.
        let s = rate_encode(&[128], 10, 42);
        let bits: Vec<u8> = (0..10).map(|t| s.get(t, 0) as u8).collect();
        assert_eq!(bits, [0, 0, 1, 1, 1, 1, 0, 0, 0, 0]);
        assert!((rate_uniform(42, 0, 0) - 0.741_564_878_771_823_3).abs() < 1e-15);

        let mut img = [0u8; 6];
        img[5] = 128;
        let s = rate_encode(&img, 10, 42);
        let bits: Vec<u8> = (0..10).map(|t| s.get(t, 5) as u8).collect();
        assert_eq!(bits, [0, 1, 1, 1, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn firing_rate_within_three_sigma() {
        let steps = 10_000;
        for p in [1u8, 30, 64, 128, 200, 254] {
            let s = rate_encode(&[p], steps, 1234);
            let rate = p as f64 / 255.0;
            let sigma = (steps as f64 * rate * (1.0 - rate)).sqrt();
            let diff = (s.count() as f64 - steps as f64 * rate).abs();
            assert!(
                diff <= 3.0 * sigma,
                "p={p}: count {} vs {}",
                s.count(),
                steps as f64 * rate
            );
        }
    }

    proptest! {
        #[test]
        fn file_round_trip(t in 1usize..6, n in 0usize..200, seed in any::<u64>()) {
            let img: Vec<u8> = (0..n).map(|i| (mix64(seed ^ i as u64) & 0xff) as u8).collect();
            let s = rate_encode(&img, t, seed);
            prop_assert_eq!(SpikeTensor::from_bytes(&s.to_bytes()).unwrap(), s);
        }

        #[test]
        fn encoding_is_deterministic(seed in any::<u64>(), px in proptest::collection::vec(any::<u8>(), 1..50)) {
            prop_assert_eq!(rate_encode(&px, 4, seed), rate_encode(&px, 4, seed));
        }
    }
}
