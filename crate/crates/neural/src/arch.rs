//! Architecture description, flat parameter layout and initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub block_depths: Vec<usize>,
    pub latent_dim: usize,
    pub n_modes: usize,
    pub projection_depth: usize,
    pub projection_hidden: usize,
    pub seq_len: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ArchConfig {
    /// Depths (1, 2, 4), latent 32, 256 modes, 4×128 projections.
    pub fn paper(seq_len: usize, system_dim: usize) -> Self {
        ArchConfig {
            block_depths: vec![1, 2, 4],
            latent_dim: 32,
            n_modes: 256.min(seq_len / 2 + 1),
            projection_depth: 4,
            projection_hidden: 128,
            seq_len,
            in_channels: 3 + 2 * system_dim,
            out_channels: 2 * system_dim * system_dim,
        }
    }

    /// Depths (1, 2), latent 16, 64 modes, 2×32 projections.
    pub fn tiny(seq_len: usize, system_dim: usize) -> Self {
        ArchConfig {
            block_depths: vec![1, 2],
            latent_dim: 16,
            n_modes: 64.min(seq_len / 2 + 1),
            projection_depth: 2,
            projection_hidden: 32,
            seq_len,
            in_channels: 3 + 2 * system_dim,
            out_channels: 2 * system_dim * system_dim,
        }
    }

    pub fn system_dim(&self) -> usize {
        (self.out_channels as f64 / 2.0).sqrt().round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.latent_dim,
            self.n_modes,
            self.projection_depth,
            self.projection_hidden,
            self.seq_len,
            self.in_channels,
            self.out_channels,
        ];
        if positive.contains(&0) || self.block_depths.is_empty() || self.block_depths.contains(&0) {
            return Err(Error::Arch("all sizes must be positive".into()));
        }
        if self.block_depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Arch(format!("block depths {:?} are not strictly ascending", self.block_depths)));
        }
        if self.n_modes > self.seq_len / 2 + 1 {
            return Err(Error::Arch(format!("{} modes exceed N/2+1 = {}", self.n_modes, self.seq_len / 2 + 1)));
        }
        let d = self.system_dim();
        if 2 * d * d != self.out_channels || self.in_channels != 3 + 2 * d {
            return Err(Error::Arch("channel counts do not describe a square system".into()));
        }
        Ok(())
    }
}

/// Offsets of a dense `out × in` weight (row-major) and its bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearSlot {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Spectral weights `R[o][i][k]` as interleaved `(re, im)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpectralSlot {
    pub offset: usize,
    pub channels: usize,
    pub modes: usize,
}

impl SpectralSlot {
    pub fn len(&self) -> usize {
        2 * self.channels * self.channels * self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FourierSlot {
    pub spectral: SpectralSlot,
    pub pointwise: LinearSlot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub p_in: Vec<LinearSlot>,
    pub blocks: Vec<Vec<FourierSlot>>,
    pub p_out: Vec<LinearSlot>,
    pub total: usize,
}

fn linear(cursor: &mut usize, fan_in: usize, fan_out: usize) -> LinearSlot {
    let weight = *cursor;
    let bias = weight + fan_in * fan_out;
    *cursor = bias + fan_out;
    LinearSlot { weight, bias, fan_in, fan_out }
}

fn mlp(cursor: &mut usize, input: usize, hidden: usize, output: usize, depth: usize) -> Vec<LinearSlot> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(hidden, depth - 1));
    dims.push(output);
    dims.windows(2).map(|w| linear(cursor, w[0], w[1])).collect()
}

impl Layout {
    /// Declared parameter order: input projection, blocks in order (each
    /// layer: spectral weights, then pointwise kernel), output projection.
    pub fn new(arch: &ArchConfig) -> Self {
        let mut cursor = 0;
        let p_in = mlp(&mut cursor, arch.in_channels, arch.projection_hidden, arch.latent_dim, arch.projection_depth);
        let blocks = arch
            .block_depths
            .iter()
            .map(|&depth| {
                (0..depth)
                    .map(|_| {
                        let spectral = SpectralSlot { offset: cursor, channels: arch.latent_dim, modes: arch.n_modes };
                        cursor += spectral.len();
                        let pointwise = linear(&mut cursor, arch.latent_dim, arch.latent_dim);
                        FourierSlot { spectral, pointwise }
                    })
                    .collect()
            })
            .collect();
        let p_out = mlp(&mut cursor, arch.latent_dim, arch.projection_hidden, arch.out_channels, arch.projection_depth);
        Layout { p_in, blocks, p_out, total: cursor }
    }

    /// Named tensors in declared order, as `(name, offset, len)`.
    pub fn tensors(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let push_linear = |out: &mut Vec<_>, name: String, s: &LinearSlot| {
            out.push((format!("{name}.weight"), s.weight, s.fan_in * s.fan_out));
            out.push((format!("{name}.bias"), s.bias, s.fan_out));
        };
        for (i, s) in self.p_in.iter().enumerate() {
            push_linear(&mut out, format!("p_in.{i}"), s);
        }
        for (b, block) in self.blocks.iter().enumerate() {
            for (l, layer) in block.iter().enumerate() {
                out.push((format!("block{b}.layer{l}.spectral"), layer.spectral.offset, layer.spectral.len()));
                push_linear(&mut out, format!("block{b}.layer{l}.pointwise"), &layer.pointwise);
            }
        }
        for (i, s) in self.p_out.iter().enumerate() {
            push_linear(&mut out, format!("p_out.{i}"), s);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub theta: Vec<f64>,
    pub seed: u64,
}

impl ModelParams {
    /// Glorot-uniform dense weights, complex Gaussian spectral weights with
    /// `E|R|² = 1/(latent²·n_modes)`, zero biases.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        let mut theta = vec![0.0; layout.total];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let glorot = |theta: &mut [f64], s: &LinearSlot, rng: &mut ChaCha20Rng| {
            let a = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            for w in &mut theta[s.weight..s.weight + s.fan_in * s.fan_out] {
                *w = rng.gen_range(-a..a);
            }
        };
        for s in &layout.p_in {
            glorot(&mut theta, s, &mut rng);
        }
        let scale = 1.0 / (arch.latent_dim as f64 * (arch.n_modes as f64).sqrt());
        let normal = Normal::new(0.0, scale * std::f64::consts::FRAC_1_SQRT_2).expect("finite scale");
        for layer in layout.blocks.iter().flatten() {
            let sp = layer.spectral;
            for w in &mut theta[sp.offset..sp.offset + sp.len()] {
                *w = normal.sample(&mut rng);
            }
            glorot(&mut theta, &layer.pointwise, &mut rng);
        }
        for s in &layout.p_out {
            glorot(&mut theta, s, &mut rng);
        }
        Ok(ModelParams { arch: arch.clone(), theta, seed })
    }

    pub fn count(&self) -> usize {
        self.theta.len()
    }

    /// Same function on a wider spectrum: existing modes are kept and the new
    /// ones start at zero.
    pub fn extend_modes(&self, n_modes: usize) -> Result<Self> {
        if n_modes < self.arch.n_modes {
            return Err(Error::Arch("cannot drop spectral modes".into()));
        }
        let arch = ArchConfig { n_modes, ..self.arch.clone() };
        arch.validate()?;
        let old = Layout::new(&self.arch);
        let new = Layout::new(&arch);
        let mut theta = vec![0.0; new.total];
        let copy = |theta: &mut [f64], from: &LinearSlot, to: &LinearSlot| {
            let n = from.fan_in * from.fan_out;
            theta[to.weight..to.weight + n].copy_from_slice(&self.theta[from.weight..from.weight + n]);
            theta[to.bias..to.bias + from.fan_out].copy_from_slice(&self.theta[from.bias..from.bias + from.fan_out]);
        };
        for (a, b) in old.p_in.iter().zip(&new.p_in) {
            copy(&mut theta, a, b);
        }
        for (a, b) in old.p_out.iter().zip(&new.p_out) {
            copy(&mut theta, a, b);
        }
        for (a, b) in old.blocks.iter().flatten().zip(new.blocks.iter().flatten()) {
            copy(&mut theta, &a.pointwise, &b.pointwise);
            let (m0, m1) = (a.spectral.modes, b.spectral.modes);
            for oi in 0..a.spectral.channels * a.spectral.channels {
                let src = a.spectral.offset + 2 * oi * m0;
                let dst = b.spectral.offset + 2 * oi * m1;
                theta[dst..dst + 2 * m0].copy_from_slice(&self.theta[src..src + 2 * m0]);
            }
        }
        Ok(ModelParams { arch, theta, seed: self.seed })
    }

    /// First 16 hex digits of SHA-256 over the architecture and weights.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("serializable"));
        for x in &self.theta {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_parameter_count() {
        let arch = ArchConfig::paper(1000, 2);
        arch.validate().unwrap();
        let layout = Layout::new(&arch);
        let spectral = 7 * 2 * 32 * 32 * 256;
        let pointwise = 7 * (32 * 32 + 32);
        let p_in = 7 * 128 + 128 + 2 * (128 * 128 + 128) + 128 * 32 + 32;
        let p_out = 32 * 128 + 128 + 2 * (128 * 128 + 128) + 128 * 8 + 8;
        assert_eq!(layout.total, spectral + pointwise + p_in + p_out);
        assert!((1_000_000..=5_000_000).contains(&layout.total));
    }

    #[test]
    fn tensors_tile_the_parameter_vector() {
        let layout = Layout::new(&ArchConfig::tiny(64, 2));
        let mut cursor = 0;
        for (_, offset, len) in layout.tensors() {
            assert_eq!(offset, cursor);
            cursor += len;
        }
        assert_eq!(cursor, layout.total);
    }

    #[test]
    fn validation_rules() {
        let good = ArchConfig::tiny(64, 2);
        assert!(good.validate().is_ok());
        assert!(ArchConfig { n_modes: 34, ..good.clone() }.validate().is_err());
        assert!(ArchConfig { block_depths: vec![2, 2], ..good.clone() }.validate().is_err());
        assert!(ArchConfig { block_depths: vec![], ..good.clone() }.validate().is_err());
        assert!(ArchConfig { latent_dim: 0, ..good.clone() }.validate().is_err());
        assert!(ArchConfig { out_channels: 6, ..good }.validate().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let arch = ArchConfig::tiny(64, 2);
        let a = ModelParams::init(&arch, 3).unwrap();
        assert_eq!(a, ModelParams::init(&arch, 3).unwrap());
        assert_ne!(a.theta, ModelParams::init(&arch, 4).unwrap().theta);
        let layout = Layout::new(&arch);
        assert!(layout.p_in.iter().all(|s| a.theta[s.bias..s.bias + s.fan_out].iter().all(|&b| b == 0.0)));
        assert_eq!(a.id().len(), 16);
    }
}
