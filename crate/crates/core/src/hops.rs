//! Hierarchy of pure states: linear and nonlinear (Girsanov-shifted)
//! stochastic wavefunction propagation.
//!
//! Auxiliary states are stored rescaled, `φ_h = ψ_h / √(Π_k h_k! σ_k^{h_k})`
//! with `σ_k = |c_k|`, so the coupling coefficients read
//!
//! ```text
//! dφ_h = (−iH + z̃V − Σ_k h_kγ_k) φ_h
//!        + V Σ_k √(h_k/σ_k) c_k φ_{h−k}
//!        − (V† − ⟨V†⟩) Σ_k √((h_k+1)σ_k) φ_{h+k}
//! ```
//!
//! and `φ_0 = ψ_0` is the physical state.
//!
//! Time stepping is the integrating-factor (Lawson) form of classic RK4: the
//! diagonal decay `Σ_k h_kγ_k` is applied exactly and the remaining terms go
//! through the four RK4 stages. Deep hierarchy levels decay at rates far
//! beyond the explicit RK4 stability limit at `δt = 0.01`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::BathModes;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyIndexSet, TRUNCATED};
use crate::noise::{NoiseTrajectory, TimeGrid};
use crate::system::{matvec, SystemSpec};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopsMode {
    Linear,
    Nonlinear,
}

impl std::str::FromStr for HopsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(HopsMode::Linear),
            "nonlinear" => Ok(HopsMode::Nonlinear),
            other => Err(Error::Domain(format!("unknown HOPS mode '{other}'"))),
        }
    }
}

/// Norm window outside which a nonlinear trajectory is declared failed.
const NORM_BOUNDS: (f64, f64) = (1e-6, 1e6);

/// Physical states on the grid. A failed trajectory keeps the states up to
/// the last good grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub dim: usize,
    pub psi: Vec<C64>,
    pub seed: u64,
    pub label: String,
    pub mode: HopsMode,
    pub failed_at: Option<usize>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.psi.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn state(&self, n: usize) -> &[C64] {
        &self.psi[n * self.dim..(n + 1) * self.dim]
    }
}

/// One update of the shift accumulators by the exponential rule
/// `s_k ← e^{−γ_k* dt}(s_k + dt·c_k*·⟨V†⟩)`; returns `Σ_k s_k`.
pub fn shifted_noise_step(shift: &mut [C64], exp_v_adj: C64, modes: &BathModes, dt: f64) -> C64 {
    for ((s, c), g) in shift.iter_mut().zip(&modes.c).zip(&modes.g) {
        *s = (-g.conj() * dt).exp() * (*s + dt * c.conj() * exp_v_adj);
    }
    shift.iter().sum()
}

/// `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expectation(a: &[C64], psi: &[C64]) -> C64 {
    let n = psi.len();
    let mut num = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            num += psi[i].conj() * a[i * n + j] * psi[j];
        }
    }
    num / psi.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Linear interpolation of grid noise at time `t`.
pub fn interpolate_noise(z: &[C64], dt: f64, t: f64) -> C64 {
    let x = (t / dt).max(0.0);
    let i = (x.floor() as usize).min(z.len() - 1);
    if i + 1 >= z.len() {
        return z[z.len() - 1];
    }
    let f = x - i as f64;
    z[i] * (1.0 - f) + z[i + 1] * f
}

/// Precomputed hierarchy couplings for one system, bath and truncation.
#[derive(Clone, Debug)]
pub struct Hops {
    sys: SystemSpec,
    v_adj: Vec<C64>,
    modes: BathModes,
    set: HierarchyIndexSet,
    mode: HopsMode,
    decay: Vec<C64>,
    /// Coupling coefficients by `(mode, h_k)`, row length `depth + 1`.
    down_coef: Vec<C64>,
    up_coef: Vec<f64>,
    /// `[down_0, up_0, down_1, up_1, ...]` per index; truncated neighbours
    /// point at a padding block that stays zero.
    neighbours: Vec<u32>,
}

struct Work {
    k: [Vec<C64>; 4],
    ks: [Vec<C64>; 4],
    stage: Vec<C64>,
    stage_s: Vec<C64>,
    half: Vec<C64>,
}

impl Hops {
    pub fn new(sys: SystemSpec, modes: BathModes, depth: usize, mode: HopsMode) -> Result<Self> {
        let set = HierarchyIndexSet::new(modes.len(), depth)?;
        Self::with_index_set(sys, modes, set, mode)
    }

    pub fn with_index_set(sys: SystemSpec, modes: BathModes, set: HierarchyIndexSet, mode: HopsMode) -> Result<Self> {
        if set.modes() != modes.len() {
            return Err(Error::Shape(format!(
                "index set has {} modes, bath has {}",
                set.modes(),
                modes.len()
            )));
        }
        let k = modes.len();
        let sigma: Vec<f64> = modes.c.iter().map(|c| if c.norm() > 0.0 { c.norm() } else { 1.0 }).collect();
        let decay = (0..set.len())
            .map(|i| set.index(i).iter().zip(&modes.g).map(|(&n, g)| g * n as f64).sum())
            .collect();
        let mut down_coef = Vec::with_capacity(k * (set.depth() + 1));
        let mut up_coef = Vec::with_capacity(k * (set.depth() + 1));
        for m in 0..k {
            for n in 0..=set.depth() {
                down_coef.push(modes.c[m] * (n as f64 / sigma[m]).sqrt());
                up_coef.push(((n as f64 + 1.0) * sigma[m]).sqrt());
            }
        }
        let pad = set.len() as u32;
        let mut neighbours = Vec::with_capacity(set.len() * 2 * k);
        for i in 0..set.len() {
            for m in 0..k {
                for j in [set.down(i, m), set.up(i, m)] {
                    neighbours.push(if j == TRUNCATED { pad } else { j });
                }
            }
        }
        let v_adj = sys.v_adjoint();
        Ok(Hops { sys, v_adj, modes, set, mode, decay, down_coef, up_coef, neighbours })
    }

    pub fn index_set(&self) -> &HierarchyIndexSet {
        &self.set
    }

    pub fn modes(&self) -> &BathModes {
        &self.modes
    }

    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn mode(&self) -> HopsMode {
        self.mode
    }

    /// Number of complex entries in the hierarchy state.
    pub fn state_len(&self) -> usize {
        self.set.len() * self.sys.dim
    }

    /// Everything except the diagonal decay. `z` is the raw noise value; the
    /// conjugate and the shift are applied here.
    fn coupling(&self, z: C64, phi: &[C64], s: &[C64], dphi: &mut [C64], ds: &mut [C64]) {
        let ns = self.sys.dim;
        let kk = self.modes.len();
        let (z_tilde, exp_v) = match self.mode {
            HopsMode::Linear => (z.conj(), C64::new(0.0, 0.0)),
            HopsMode::Nonlinear => (z.conj() + s.iter().sum::<C64>(), expectation(&self.v_adj, &phi[..ns])),
        };
        match self.mode {
            HopsMode::Linear => ds.iter_mut().for_each(|d| *d = C64::new(0.0, 0.0)),
            HopsMode::Nonlinear => {
                for m in 0..kk {
                    ds[m] = -self.modes.g[m].conj() * s[m] + self.modes.c[m].conj() * exp_v;
                }
            }
        }

        let minus_i = C64::new(0.0, -1.0);
        let a: Vec<C64> = self.sys.h.iter().zip(&self.sys.v).map(|(h, v)| minus_i * h + z_tilde * v).collect();
        let mut w = self.v_adj.clone();
        for d in 0..ns {
            w[d * ns + d] -= exp_v;
        }

        if ns == 2 {
            self.coupling_2x2(&a, &w, phi, dphi);
            return;
        }
        let mut down = vec![C64::new(0.0, 0.0); ns];
        let mut up = vec![C64::new(0.0, 0.0); ns];
        let mut tmp = vec![C64::new(0.0, 0.0); ns];
        for i in 0..self.set.len() {
            down.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            up.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for m in 0..kk {
                let row = m * (self.set.depth() + 1) + self.set.index(i)[m] as usize;
                let j = self.set.down(i, m);
                if j != TRUNCATED {
                    let cf = self.down_coef[row];
                    for (d, p) in down.iter_mut().zip(&phi[j as usize * ns..(j as usize + 1) * ns]) {
                        *d += cf * p;
                    }
                }
                let j = self.set.up(i, m);
                if j != TRUNCATED {
                    let cf = self.up_coef[row];
                    for (u, p) in up.iter_mut().zip(&phi[j as usize * ns..(j as usize + 1) * ns]) {
                        *u += cf * p;
                    }
                }
            }
            let out = &mut dphi[i * ns..(i + 1) * ns];
            matvec(&a, &phi[i * ns..(i + 1) * ns], out);
            matvec(&self.sys.v, &down, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            matvec(&w, &up, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= t);
        }
    }

    fn coupling_2x2(&self, a: &[C64], w: &[C64], phi: &[C64], dphi: &mut [C64]) {
        let kk = self.modes.len();
        let v = &self.sys.v;
        let zero = C64::new(0.0, 0.0);
        let stride = self.set.depth() + 1;
        let diagonal = v[1] == zero && v[2] == zero && v[0].im == 0.0 && v[3].im == 0.0;
        let (v0, v1) = (v[0].re, v[3].re);
        let (p, _) = phi.as_chunks::<2>();
        let (out, _) = dphi.as_chunks_mut::<2>();
        let rows = self.neighbours.chunks_exact(2 * kk).zip(self.set.flat_indices().chunks_exact(kk));
        for (((nb, h), o), &[p0, p1]) in rows.zip(out.iter_mut()).zip(p.iter()) {
            let (mut d0, mut d1, mut u0, mut u1) = (zero, zero, zero, zero);
            for m in 0..kk {
                // SAFETY: neighbour entries are < len + 1 = p.len() by construction,
                // and h[m] <= depth so the table index stays below kk * stride.
                unsafe {
                    let hm = *h.get_unchecked(m) as usize;
                    let dcm = *self.down_coef.get_unchecked(m * stride + hm);
                    let ucm = *self.up_coef.get_unchecked(m * stride + hm);
                    let [x0, x1] = *p.get_unchecked(*nb.get_unchecked(2 * m) as usize);
                    let [y0, y1] = *p.get_unchecked(*nb.get_unchecked(2 * m + 1) as usize);
                    if dcm.im == 0.0 {
                        d0 += x0 * dcm.re;
                        d1 += x1 * dcm.re;
                    } else {
                        d0 += dcm * x0;
                        d1 += dcm * x1;
                    }
                    u0 += y0 * ucm;
                    u1 += y1 * ucm;
                }
            }
            if diagonal {
                o[0] = a[0] * p0 + a[1] * p1 + d0 * v0 - w[0] * u0;
                o[1] = a[2] * p0 + a[3] * p1 + d1 * v1 - w[3] * u1;
            } else {
                o[0] = a[0] * p0 + a[1] * p1 + v[0] * d0 + v[1] * d1 - w[0] * u0 - w[1] * u1;
                o[1] = a[2] * p0 + a[3] * p1 + v[2] * d0 + v[3] * d1 - w[2] * u0 - w[3] * u1;
            }
        }
    }

    /// Full time derivative of the hierarchy and shift accumulators.
    pub fn rhs(&self, z: C64, phi: &[C64], shift: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        if phi.len() != self.state_len() || shift.len() != self.modes.len() {
            return Err(Error::Shape("hierarchy state does not match the index set".into()));
        }
        if phi.iter().chain(shift).chain(std::iter::once(&z)).any(|x| !x.is_finite()) {
            return Err(Error::Integration { step: 0, reason: "non-finite input state".into() });
        }
        let mut padded = phi.to_vec();
        padded.resize(phi.len() + self.sys.dim, C64::new(0.0, 0.0));
        let mut dphi = vec![C64::new(0.0, 0.0); padded.len()];
        let mut ds = vec![C64::new(0.0, 0.0); shift.len()];
        self.coupling(z, &padded, shift, &mut dphi, &mut ds);
        dphi.truncate(phi.len());
        let ns = self.sys.dim;
        for (i, d) in self.decay.iter().enumerate() {
            for c in 0..ns {
                dphi[i * ns + c] -= d * phi[i * ns + c];
            }
        }
        Ok((dphi, ds))
    }

    fn work(&self) -> Work {
        let n = self.state_len() + self.sys.dim;
        let k = self.modes.len();
        let zeros = |len: usize| vec![C64::new(0.0, 0.0); len];
        Work {
            k: [zeros(n), zeros(n), zeros(n), zeros(n)],
            ks: [zeros(k), zeros(k), zeros(k), zeros(k)],
            stage: zeros(n),
            stage_s: zeros(k),
            half: vec![C64::new(1.0, 0.0); self.set.len() + 1],
        }
    }

    /// One integrating-factor RK4 step of size `h`; `zs` holds the noise at
    /// `t`, `t + h/2` and `t + h`.
    fn set_step(&self, h: f64, w: &mut Work) {
        for (e, d) in w.half.iter_mut().zip(&self.decay) {
            *e = (-d * (0.5 * h)).exp();
        }
    }

    /// Requires [`Hops::set_step`] with the same `h` beforehand.
    fn step(&self, h: f64, zs: [C64; 3], phi: &mut [C64], s: &mut [C64], w: &mut Work) {
        let ns = self.sys.dim;
        let Work { k, ks, stage, stage_s, half } = w;
        let [k1, k2, k3, k4] = k;
        let [ks1, ks2, ks3, ks4] = ks;

        self.coupling(zs[0], phi, s, k1, ks1);

        // E (φ + h/2 k1)
        for (((st, p), d), e) in stage.chunks_exact_mut(ns).zip(phi.chunks_exact(ns)).zip(k1.chunks_exact(ns)).zip(half.iter()) {
            for c in 0..ns {
                st[c] = (p[c] + d[c] * (0.5 * h)) * e;
            }
        }
        for j in 0..s.len() {
            stage_s[j] = s[j] + ks1[j] * (0.5 * h);
        }
        self.coupling(zs[1], stage, stage_s, k2, ks2);

        // E φ + h/2 k2
        for (((st, p), d), e) in stage.chunks_exact_mut(ns).zip(phi.chunks_exact(ns)).zip(k2.chunks_exact(ns)).zip(half.iter()) {
            for c in 0..ns {
                st[c] = p[c] * e + d[c] * (0.5 * h);
            }
        }
        for j in 0..s.len() {
            stage_s[j] = s[j] + ks2[j] * (0.5 * h);
        }
        self.coupling(zs[1], stage, stage_s, k3, ks3);

        // E² φ + h E k3
        for (((st, p), d), e) in stage.chunks_exact_mut(ns).zip(phi.chunks_exact(ns)).zip(k3.chunks_exact(ns)).zip(half.iter()) {
            for c in 0..ns {
                st[c] = (p[c] * e + d[c] * h) * e;
            }
        }
        for j in 0..s.len() {
            stage_s[j] = s[j] + ks3[j] * h;
        }
        self.coupling(zs[2], stage, stage_s, k4, ks4);

        // φ ← E²φ + h/6 (E² k1 + 2E(k2 + k3) + k4)
        let blocks = phi
            .chunks_exact_mut(ns)
            .zip(k1.chunks_exact(ns))
            .zip(k2.chunks_exact(ns))
            .zip(k3.chunks_exact(ns))
            .zip(k4.chunks_exact(ns))
            .zip(half.iter());
        for (((((p, a), b), c3), d), e) in blocks {
            for c in 0..ns {
                p[c] = ((p[c] + a[c] * (h / 6.0)) * e + (b[c] + c3[c]) * (h / 3.0)) * e + d[c] * (h / 6.0);
            }
        }
        for j in 0..s.len() {
            s[j] += (ks1[j] + (ks2[j] + ks3[j]) * 2.0 + ks4[j]) * (h / 6.0);
        }
    }

    /// Propagates `psi0` across `grid` with `substeps` integrator steps per
    /// grid interval. The noise lives on the grid and is interpolated
    /// linearly in between.
    pub fn propagate(&self, psi0: &[C64], z: &[C64], grid: &TimeGrid, substeps: usize) -> Result<StateTrajectory> {
        let ns = self.sys.dim;
        if psi0.len() != ns {
            return Err(Error::Shape(format!("initial state has {} entries, system has {ns}", psi0.len())));
        }
        let norm = psi0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("initial state has norm {norm}, expected 1")));
        }
        if z.len() != grid.points() {
            return Err(Error::Shape(format!("noise has {} points, grid has {}", z.len(), grid.points())));
        }
        if substeps == 0 {
            return Err(Error::Domain("substeps must be at least 1".into()));
        }

        let mut phi = vec![C64::new(0.0, 0.0); self.state_len() + ns];
        phi[..ns].copy_from_slice(psi0);
        let mut s = vec![C64::new(0.0, 0.0); self.modes.len()];
        let mut out = Vec::with_capacity(grid.points() * ns);
        out.extend_from_slice(psi0);
        let mut w = self.work();
        let h = grid.dt / substeps as f64;
        self.set_step(h, &mut w);
        let mut failed_at = None;

        'grid: for n in 0..grid.n_steps {
            for sub in 0..substeps {
                let t = grid.t(n) + sub as f64 * h;
                let zs = [
                    interpolate_noise(z, grid.dt, t),
                    interpolate_noise(z, grid.dt, t + 0.5 * h),
                    interpolate_noise(z, grid.dt, t + h),
                ];
                self.step(h, zs, &mut phi, &mut s, &mut w);
            }
            let psi = &phi[..ns];
            let norm = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let bad = !norm.is_finite()
                || (self.mode == HopsMode::Nonlinear && !(NORM_BOUNDS.0..=NORM_BOUNDS.1).contains(&norm));
            if bad {
                failed_at = Some(n + 1);
                break 'grid;
            }
            out.extend_from_slice(psi);
        }
        Ok(StateTrajectory {
            dim: ns,
            psi: out,
            seed: 0,
            label: String::new(),
            mode: self.mode,
            failed_at,
        })
    }
}

/// Trajectories for every (initial state, noise) pair with the failures
/// removed.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub records: Vec<StateTrajectory>,
    /// `(label, noise index, grid index)` of every dropped trajectory.
    pub failures: Vec<(String, u64, usize)>,
    /// Noise indices below this value form the training split.
    pub n_train: u64,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &StateTrajectory> {
        self.records.iter().filter(move |r| r.seed < self.n_train)
    }

    pub fn validation(&self) -> impl Iterator<Item = &StateTrajectory> {
        self.records.iter().filter(move |r| r.seed >= self.n_train)
    }
}

/// Training split size: 5 of every 7 noise trajectories.
pub fn train_count(n_noise: usize) -> u64 {
    (n_noise * 5 / 7) as u64
}

pub fn generate_dataset(
    hops: &Hops,
    inits: &[(String, Vec<C64>)],
    noise: &[NoiseTrajectory],
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Dataset> {
    let jobs: Vec<(&(String, Vec<C64>), &NoiseTrajectory)> =
        inits.iter().flat_map(|init| noise.iter().map(move |z| (init, z))).collect();
    run_jobs(hops, &jobs, grid, substeps, train_count(noise.len()))
}

/// Like [`generate_dataset`], but noise trajectory `z` is paired only with
/// initial state `z.index mod inits.len()`.
pub fn generate_dataset_cycled(
    hops: &Hops,
    inits: &[(String, Vec<C64>)],
    noise: &[NoiseTrajectory],
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Dataset> {
    if inits.is_empty() {
        return Err(Error::Domain("no initial states".into()));
    }
    let jobs: Vec<(&(String, Vec<C64>), &NoiseTrajectory)> =
        noise.iter().map(|z| (&inits[z.index as usize % inits.len()], z)).collect();
    run_jobs(hops, &jobs, grid, substeps, train_count(noise.len()))
}

fn run_jobs(
    hops: &Hops,
    jobs: &[(&(String, Vec<C64>), &NoiseTrajectory)],
    grid: &TimeGrid,
    substeps: usize,
    n_train: u64,
) -> Result<Dataset> {
    let results: Vec<StateTrajectory> = jobs
        .par_iter()
        .map(|((label, psi0), z)| {
            let mut traj = hops.propagate(psi0, &z.z, grid, substeps)?;
            traj.seed = z.index;
            traj.label = label.clone();
            Ok(traj)
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r.failed_at {
            Some(n) => failures.push((r.label.clone(), r.seed, n)),
            None => records.push(r),
        }
    }
    Ok(Dataset { records, failures, n_train })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{pade_decompose, BathSpec, SpectralDensity};
    use approx::assert_relative_eq;

    fn drude_modes() -> BathModes {
        let bath = BathSpec::new(SpectralDensity::drude(0.1, 1.0).unwrap(), 1.0).unwrap();
        pade_decompose(&bath, 2).unwrap()
    }

    fn up() -> Vec<C64> {
        vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    }

    #[test]
    fn shift_vanishes_without_expectation() {
        let modes = drude_modes();
        let mut s = vec![C64::new(0.0, 0.0); modes.len()];
        for _ in 0..100 {
            assert_eq!(shifted_noise_step(&mut s, C64::new(0.0, 0.0), &modes, 0.01), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn shift_converges_to_closed_form() {
        let c = C64::new(0.3, -0.2);
        let g = C64::new(1.5, 0.7);
        let modes = BathModes::new(vec![c], vec![g]).unwrap();
        let total_t = 2.0;
        let n = 200_000;
        let dt = total_t / n as f64;
        let mut s = vec![C64::new(0.0, 0.0)];
        let mut sum = C64::new(0.0, 0.0);
        for _ in 0..n {
            sum = shifted_noise_step(&mut s, C64::new(1.0, 0.0), &modes, dt);
        }
        let exact = c.conj() * (1.0 - (-g.conj() * total_t).exp()) / g.conj();
        assert!((sum - exact).norm() < 1e-4 * exact.norm());
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let z = vec![C64::new(0.0, 0.0), C64::new(2.0, -2.0), C64::new(4.0, 0.0)];
        assert_eq!(interpolate_noise(&z, 0.5, 0.25), C64::new(1.0, -1.0));
        assert_eq!(interpolate_noise(&z, 0.5, 1.0), z[2]);
        assert_eq!(interpolate_noise(&z, 0.5, 5.0), z[2]);
    }

    #[test]
    fn uncoupled_evolution_is_rabi() {
        let sys = SystemSpec::spin_boson(1.0, 0.5).uncoupled();
        let hops = Hops::new(sys, drude_modes(), 3, HopsMode::Nonlinear).unwrap();
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let z = vec![C64::new(0.0, 0.0); grid.points()];
        let traj = hops.propagate(&up(), &z, &grid, 1).unwrap();
        let r = 0.5f64.sqrt();
        for n in [0, 137, 500] {
            let t = grid.t(n);
            let p = traj.state(n)[0].norm_sqr();
            assert!((p - (1.0 - 0.5 * (r * t).sin().powi(2))).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn nonlinear_without_shift_equals_linear() {
        // with V = 0 the expectation value vanishes and both paths coincide
        let sys = SystemSpec::spin_boson(1.0, 0.5).uncoupled();
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let z: Vec<C64> = (0..grid.points()).map(|n| C64::new((n as f64).sin(), 0.3)).collect();
        let a = Hops::new(sys.clone(), drude_modes(), 2, HopsMode::Linear).unwrap();
        let b = Hops::new(sys, drude_modes(), 2, HopsMode::Nonlinear).unwrap();
        assert_eq!(a.propagate(&up(), &z, &grid, 1).unwrap().psi, b.propagate(&up(), &z, &grid, 1).unwrap().psi);
    }

    #[test]
    fn rejects_unnormalized_start_and_mismatched_noise() {
        let hops = Hops::new(SystemSpec::spin_boson(1.0, 0.5), drude_modes(), 1, HopsMode::Linear).unwrap();
        let grid = TimeGrid::new(0.01, 10).unwrap();
        let z = vec![C64::new(0.0, 0.0); grid.points()];
        let bad = vec![C64::new(2.0, 0.0), C64::new(0.0, 0.0)];
        assert!(matches!(hops.propagate(&bad, &z, &grid, 1), Err(Error::Domain(_))));
        assert!(matches!(hops.propagate(&up(), &z[1..], &grid, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn rhs_rejects_nan() {
        let hops = Hops::new(SystemSpec::spin_boson(1.0, 0.5), drude_modes(), 1, HopsMode::Linear).unwrap();
        let mut phi = vec![C64::new(0.0, 0.0); hops.state_len()];
        phi[1] = C64::new(f64::NAN, 0.0);
        let s = vec![C64::new(0.0, 0.0); 3];
        assert!(matches!(hops.rhs(C64::new(0.0, 0.0), &phi, &s), Err(Error::Integration { .. })));
    }

    #[test]
    fn blow_up_is_reported_as_failure() {
        let modes = BathModes::new(vec![C64::new(1.0, 0.0)], vec![C64::new(1.0, 0.0)]).unwrap();
        let hops = Hops::new(SystemSpec::spin_boson(1.0, 0.5), modes, 1, HopsMode::Nonlinear).unwrap();
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let z = vec![C64::new(1e4, 0.0); grid.points()];
        let traj = hops.propagate(&up(), &z, &grid, 1).unwrap();
        let n = traj.failed_at.expect("trajectory should fail");
        assert_eq!(traj.len(), n);
    }

    #[test]
    fn dataset_split_and_failures() {
        let hops = Hops::new(SystemSpec::spin_boson(1.0, 0.5), drude_modes(), 1, HopsMode::Nonlinear).unwrap();
        let grid = TimeGrid::new(0.01, 5).unwrap();
        let noise: Vec<NoiseTrajectory> = (0..7)
            .map(|i| NoiseTrajectory {
                z: vec![C64::new(if i == 3 { 1e5 } else { 0.1 }, 0.0); grid.points()],
                base_seed: 1,
                index: i,
                bath_id: String::new(),
            })
            .collect();
        let data = generate_dataset(&hops, &[("1".into(), up())], &noise, &grid, 1).unwrap();
        assert_eq!(data.records.len(), 6);
        assert_eq!(data.failures.len(), 1);
        assert_eq!(data.failures[0].1, 3);
        assert_eq!(data.n_train, 5);
        assert_eq!(data.train().count(), 4);
        assert_eq!(data.validation().count(), 2);
        let empty = generate_dataset(&hops, &[("1".into(), up())], &[], &grid, 1).unwrap();
        assert!(empty.records.is_empty());

        let down = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let inits = [("1".to_string(), up()), ("2".to_string(), down)];
        let cycled = generate_dataset_cycled(&hops, &inits, &noise, &grid, 1).unwrap();
        assert_eq!(cycled.records.len(), 6);
        assert!(cycled.records.iter().all(|r| r.label == if r.seed % 2 == 0 { "1" } else { "2" }));
        assert!(generate_dataset_cycled(&hops, &[], &noise, &grid, 1).is_err());
    }

    #[test]
    fn expectation_is_normalized() {
        let v = SystemSpec::spin_boson(1.0, 0.5).v;
        let psi = vec![C64::new(2.0, 0.0), C64::new(0.0, 0.0)];
        assert_relative_eq!(expectation(&v, &psi).re, 1.0);
    }
}
