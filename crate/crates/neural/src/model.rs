//! Forward and reverse passes. Activations are channel-major `C × N`.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::arch::{ArchConfig, FourierSlot, Layout, LinearSlot, SpectralSlot};
use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Clone)]
pub struct Model {
    pub arch: ArchConfig,
    pub layout: Layout,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model").field("arch", &self.arch).finish()
    }
}

struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    spectra: Vec<C64>,
}

/// Intermediate values kept for the reverse pass.
pub struct Cache {
    p_in: MlpCache,
    blocks: Vec<Vec<LayerCache>>,
    p_out: MlpCache,
}

fn weight<'a>(theta: &'a [f64], s: &LinearSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((s.fan_out, s.fan_in), &theta[s.weight..s.weight + s.fan_in * s.fan_out]).expect("layout")
}

fn affine(theta: &[f64], s: &LinearSlot, x: &Array2<f64>) -> Array2<f64> {
    let n = x.ncols();
    let mut y = Array2::zeros((s.fan_out, n));
    for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(&theta[s.bias..s.bias + s.fan_out]) {
        row.fill(b);
    }
    general_mat_mul(1.0, &weight(theta, s), x, 1.0, &mut y);
    y
}

fn finite(x: &Array2<f64>, layer: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Forward { layer: layer() })
    }
}

/// Accumulates `dW += dz xᵀ`, `db += Σ_t dz` and returns `Wᵀ dz` when asked.
fn affine_backward(theta: &[f64], s: &LinearSlot, x: &Array2<f64>, dz: &Array2<f64>, grad: &mut [f64], want_dx: bool) -> Option<Array2<f64>> {
    {
        let mut gw = ArrayViewMut2::from_shape((s.fan_out, s.fan_in), &mut grad[s.weight..s.weight + s.fan_in * s.fan_out]).expect("layout");
        general_mat_mul(1.0, dz, &x.t(), 1.0, &mut gw);
    }
    for (g, row) in grad[s.bias..s.bias + s.fan_out].iter_mut().zip(dz.axis_iter(Axis(0))) {
        *g += row.sum();
    }
    want_dx.then(|| weight(theta, s).t().dot(dz))
}

impl Model {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Model {
            arch: arch.clone(),
            layout: Layout::new(arch),
            fwd: planner.plan_fft_forward(arch.seq_len),
            inv: planner.plan_fft_inverse(arch.seq_len),
        })
    }

    fn check(&self, theta: &[f64], input: &ArrayView2<f64>) -> Result<()> {
        if theta.len() != self.layout.total {
            return Err(Error::Shape(format!("{} parameters, layout needs {}", theta.len(), self.layout.total)));
        }
        if input.dim() != (self.arch.in_channels, self.arch.seq_len) {
            return Err(Error::Shape(format!(
                "input {:?}, expected ({}, {})",
                input.dim(),
                self.arch.in_channels,
                self.arch.seq_len
            )));
        }
        Ok(())
    }

    /// Hermitian half-spectrum weights: 1 at DC and Nyquist, 2 elsewhere.
    fn mode_weight(&self, k: usize) -> f64 {
        let n = self.arch.seq_len;
        if k == 0 || 2 * k == n {
            1.0
        } else {
            2.0
        }
    }

    /// `y += F⁻¹(R ⊙ truncate(F x))` with the forward transform unnormalized,
    /// the inverse carrying `1/N`, and the real part of the Hermitian
    /// extension taken.
    fn spectral_forward(&self, theta: &[f64], s: &SpectralSlot, x: &Array2<f64>, y: &mut Array2<f64>) -> Vec<C64> {
        let (c, n, m) = (s.channels, self.arch.seq_len, s.modes);
        let r = &theta[s.offset..s.offset + s.len()];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let mut spectra = vec![C64::new(0.0, 0.0); c * m];
        for i in 0..c {
            for (b, &v) in buf.iter_mut().zip(x.row(i)) {
                *b = C64::new(v, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            spectra[i * m..(i + 1) * m].copy_from_slice(&buf[..m]);
        }
        let scale = 1.0 / n as f64;
        for o in 0..c {
            buf.fill(C64::new(0.0, 0.0));
            for i in 0..c {
                let base = 2 * (o * c + i) * m;
                for k in 0..m {
                    buf[k] += C64::new(r[base + 2 * k], r[base + 2 * k + 1]) * spectra[i * m + k];
                }
            }
            for (k, b) in buf[..m].iter_mut().enumerate() {
                *b *= self.mode_weight(k) * scale;
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for (yv, b) in y.row_mut(o).iter_mut().zip(&buf) {
                *yv += b.re;
            }
        }
        spectra
    }

    /// Adds the spectral weight gradient to `grad` and `∂L/∂x` to `dx`.
    fn spectral_backward(&self, theta: &[f64], s: &SpectralSlot, spectra: &[C64], dy: &Array2<f64>, grad: &mut [f64], dx: &mut Array2<f64>) {
        let (c, n, m) = (s.channels, self.arch.seq_len, s.modes);
        let r = &theta[s.offset..s.offset + s.len()];
        let g = &mut grad[s.offset..s.offset + s.len()];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let mut gy = vec![C64::new(0.0, 0.0); c * m];
        let scale = 1.0 / n as f64;
        for o in 0..c {
            for (b, &v) in buf.iter_mut().zip(dy.row(o)) {
                *b = C64::new(v, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..m {
                gy[o * m + k] = buf[k] * (self.mode_weight(k) * scale);
            }
        }
        let mut gx = vec![C64::new(0.0, 0.0); m];
        for i in 0..c {
            gx.fill(C64::new(0.0, 0.0));
            for o in 0..c {
                let base = 2 * (o * c + i) * m;
                for k in 0..m {
                    let gyk = gy[o * m + k];
                    let gr = gyk * spectra[i * m + k].conj();
                    g[base + 2 * k] += gr.re;
                    g[base + 2 * k + 1] += gr.im;
                    gx[k] += C64::new(r[base + 2 * k], -r[base + 2 * k + 1]) * gyk;
                }
            }
            buf.fill(C64::new(0.0, 0.0));
            buf[..m].copy_from_slice(&gx);
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for (d, b) in dx.row_mut(i).iter_mut().zip(&buf) {
                *d += b.re;
            }
        }
    }

    fn mlp_forward(&self, theta: &[f64], slots: &[LinearSlot], x: Array2<f64>, name: &str) -> Result<(Array2<f64>, MlpCache)> {
        let mut cache = MlpCache { inputs: Vec::with_capacity(slots.len()), pre: Vec::with_capacity(slots.len()) };
        let mut a = x;
        for (l, s) in slots.iter().enumerate() {
            let z = affine(theta, s, &a);
            finite(&z, || format!("{name}.{l}"))?;
            let next = if l + 1 < slots.len() { z.mapv(gelu) } else { z.clone() };
            cache.inputs.push(std::mem::replace(&mut a, next));
            cache.pre.push(z);
        }
        Ok((a, cache))
    }

    fn mlp_backward(&self, theta: &[f64], slots: &[LinearSlot], cache: &MlpCache, d_out: Array2<f64>, grad: &mut [f64], want_dx: bool) -> Option<Array2<f64>> {
        let mut da = d_out;
        for l in (0..slots.len()).rev() {
            let dz = if l + 1 < slots.len() {
                let mut dz = da;
                dz.zip_mut_with(&cache.pre[l], |d, &z| *d *= gelu_grad(z));
                dz
            } else {
                da
            };
            {
                let dx = affine_backward(theta, &slots[l], &cache.inputs[l], &dz, grad, l > 0 || want_dx)?;
                da = dx
            }
        }
        Some(da)
    }

    fn fourier_forward(&self, theta: &[f64], slot: &FourierSlot, x: Array2<f64>, name: impl FnOnce() -> String) -> Result<(Array2<f64>, LayerCache)> {
        let mut pre = affine(theta, &slot.pointwise, &x);
        let spectra = self.spectral_forward(theta, &slot.spectral, &x, &mut pre);
        finite(&pre, name)?;
        let y = pre.mapv(gelu);
        Ok((y, LayerCache { input: x, pre, spectra }))
    }

    pub fn forward(&self, theta: &[f64], input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(theta, input)?.0)
    }

    /// Lift, run every block on the lifted input, sum, project.
    pub fn forward_cached(&self, theta: &[f64], input: ArrayView2<f64>) -> Result<(Array2<f64>, Cache)> {
        self.check(theta, &input)?;
        let (lifted, p_in) = self.mlp_forward(theta, &self.layout.p_in, input.to_owned(), "p_in")?;
        let mut sum = Array2::<f64>::zeros(lifted.dim());
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for (b, block) in self.layout.blocks.iter().enumerate() {
            let mut v = lifted.clone();
            let mut caches = Vec::with_capacity(block.len());
            for (l, slot) in block.iter().enumerate() {
                let (y, c) = self.fourier_forward(theta, slot, v, || format!("block{b}.layer{l}"))?;
                caches.push(c);
                v = y;
            }
            sum += &v;
            blocks.push(caches);
        }
        let (out, p_out) = self.mlp_forward(theta, &self.layout.p_out, sum, "p_out")?;
        Ok((out, Cache { p_in, blocks, p_out }))
    }

    /// Adds `∂L/∂θ` to `grad` given `∂L/∂out`.
    pub fn backward(&self, theta: &[f64], cache: &Cache, d_out: Array2<f64>, grad: &mut [f64]) {
        let d_sum = self.mlp_backward(theta, &self.layout.p_out, &cache.p_out, d_out, grad, true).expect("requested");
        let mut d_lift = Array2::<f64>::zeros(d_sum.dim());
        for (block, caches) in self.layout.blocks.iter().zip(&cache.blocks) {
            let mut dv = d_sum.clone();
            for (slot, c) in block.iter().zip(caches).rev() {
                let mut dpre = dv;
                dpre.zip_mut_with(&c.pre, |d, &z| *d *= gelu_grad(z));
                let mut dx = affine_backward(theta, &slot.pointwise, &c.input, &dpre, grad, true).expect("requested");
                self.spectral_backward(theta, &slot.spectral, &c.spectra, &dpre, grad, &mut dx);
                dv = dx;
            }
            d_lift += &dv;
        }
        self.mlp_backward(theta, &self.layout.p_in, &cache.p_in, d_lift, grad, false);
    }

    /// Reinterprets the `2·N_s²` output channels as row-major complex
    /// matrices, `U_n[i][j] = out[2(i·N_s+j)] + i·out[2(i·N_s+j)+1]`.
    pub fn operators(&self, out: &Array2<f64>) -> Vec<C64> {
        let d2 = self.arch.out_channels / 2;
        let n = out.ncols();
        let mut u = Vec::with_capacity(n * d2);
        for t in 0..n {
            for e in 0..d2 {
                u.push(C64::new(out[[2 * e, t]], out[[2 * e + 1, t]]));
            }
        }
        u
    }
}
