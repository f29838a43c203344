//! Hierarchical equations of motion on the same index set and rescaling as
//! [`crate::hops`]:
//!
//! ```text
//! dρ_n = −i[H, ρ_n] − Σ_k n_kγ_k ρ_n
//!        − i Σ_k √(n_k/σ_k) (c_k V ρ_{n−k} − c̄_k ρ_{n−k} V)
//!        − i Σ_k √((n_k+1)σ_k) [V, ρ_{n+k}]
//! ```
//!
//! where `c̄_k` is the prefactor of `e^{−γ_k t}` in the expansion of `α*(t)`.

use serde::{Deserialize, Serialize};

use crate::bath::BathModes;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyIndexSet, TRUNCATED};
use crate::noise::TimeGrid;
use crate::system::{is_hermitian, SystemSpec};
use crate::C64;

/// Density matrices on a grid, each stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTrajectory {
    pub dim: usize,
    pub dt: f64,
    pub rho: Vec<C64>,
}

impl DensityTrajectory {
    pub fn len(&self) -> usize {
        self.rho.len() / (self.dim * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn at(&self, n: usize) -> &[C64] {
        let d2 = self.dim * self.dim;
        &self.rho[n * d2..(n + 1) * d2]
    }

    pub fn trace(&self, n: usize) -> C64 {
        let r = self.at(n);
        (0..self.dim).map(|i| r[i * self.dim + i]).sum()
    }
}

/// `Δ(t_n) = ρ_11 − ρ_22`.
pub fn population_difference(traj: &DensityTrajectory) -> Result<Vec<f64>> {
    if traj.dim != 2 {
        return Err(Error::Domain(format!("population difference needs a two-level system, got {}", traj.dim)));
    }
    Ok((0..traj.len()).map(|n| (traj.at(n)[0] - traj.at(n)[3]).re).collect())
}

#[derive(Clone, Debug)]
pub struct Heom {
    sys: SystemSpec,
    set: HierarchyIndexSet,
    decay: Vec<C64>,
    /// `−i √(n/σ_k) c_k` by `(mode, n)`.
    left: Vec<C64>,
    /// `+i √(n/σ_k) c̄_k` by `(mode, n)`.
    right: Vec<C64>,
    /// `√((n+1)σ_k)` by `(mode, n)`.
    up: Vec<f64>,
}

fn mat_mul(a: &[C64], b: &[C64], out: &mut [C64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
        }
    }
}

impl Heom {
    pub fn new(sys: SystemSpec, modes: &BathModes, depth: usize) -> Result<Self> {
        if !sys.v_is_hermitian() {
            return Err(Error::Domain("HEOM needs a Hermitian coupling operator".into()));
        }
        let set = HierarchyIndexSet::new(modes.len(), depth)?;
        let partners = modes.conjugate_partners()?;
        let k = modes.len();
        let sigma: Vec<f64> = modes.c.iter().map(|c| if c.norm() > 0.0 { c.norm() } else { 1.0 }).collect();
        let i = C64::new(0.0, 1.0);
        let mut left = Vec::with_capacity(k * (depth + 1));
        let mut right = Vec::with_capacity(k * (depth + 1));
        let mut up = Vec::with_capacity(k * (depth + 1));
        for m in 0..k {
            let c_bar = modes.c[partners[m]].conj();
            for n in 0..=depth {
                let f = (n as f64 / sigma[m]).sqrt();
                left.push(-i * modes.c[m] * f);
                right.push(i * c_bar * f);
                up.push(((n as f64 + 1.0) * sigma[m]).sqrt());
            }
        }
        let decay = (0..set.len())
            .map(|j| set.index(j).iter().zip(&modes.g).map(|(&n, g)| g * n as f64).sum())
            .collect();
        Ok(Heom { sys, set, decay, left, right, up })
    }

    pub fn index_set(&self) -> &HierarchyIndexSet {
        &self.set
    }

    fn coupling(&self, rho: &[C64], out: &mut [C64]) {
        let ns = self.sys.dim;
        let d2 = ns * ns;
        let kk = self.set.modes();
        let stride = self.set.depth() + 1;
        let minus_i = C64::new(0.0, -1.0);
        let zero = C64::new(0.0, 0.0);
        let (h, v) = (&self.sys.h, &self.sys.v);
        let mut dl = vec![zero; d2];
        let mut dr = vec![zero; d2];
        let mut u = vec![zero; d2];
        let mut t1 = vec![zero; d2];
        let mut t2 = vec![zero; d2];
        for idx in 0..self.set.len() {
            dl.fill(zero);
            dr.fill(zero);
            u.fill(zero);
            let hvec = self.set.index(idx);
            for m in 0..kk {
                let row = m * stride + hvec[m] as usize;
                let j = self.set.down(idx, m);
                if j != TRUNCATED {
                    let src = &rho[j as usize * d2..(j as usize + 1) * d2];
                    let (l, r) = (self.left[row], self.right[row]);
                    for e in 0..d2 {
                        dl[e] += l * src[e];
                        dr[e] += r * src[e];
                    }
                }
                let j = self.set.up(idx, m);
                if j != TRUNCATED {
                    let src = &rho[j as usize * d2..(j as usize + 1) * d2];
                    let f = self.up[row];
                    for e in 0..d2 {
                        u[e] += src[e] * f;
                    }
                }
            }
            let r = &rho[idx * d2..(idx + 1) * d2];
            let o = &mut out[idx * d2..(idx + 1) * d2];
            // −i(Hρ − ρH)
            mat_mul(h, r, &mut t1, ns);
            mat_mul(r, h, &mut t2, ns);
            for e in 0..d2 {
                o[e] = minus_i * (t1[e] - t2[e]);
            }
            // V dl + dr V
            mat_mul(v, &dl, &mut t1, ns);
            mat_mul(&dr, v, &mut t2, ns);
            for e in 0..d2 {
                o[e] += t1[e] + t2[e];
            }
            // −i [V, u]
            mat_mul(v, &u, &mut t1, ns);
            mat_mul(&u, v, &mut t2, ns);
            for e in 0..d2 {
                o[e] += minus_i * (t1[e] - t2[e]);
            }
        }
    }

    /// Full time derivative of the hierarchy (test support).
    pub fn rhs(&self, rho: &[C64]) -> Result<Vec<C64>> {
        let d2 = self.sys.dim * self.sys.dim;
        if rho.len() != self.set.len() * d2 {
            return Err(Error::Shape("hierarchy state does not match the index set".into()));
        }
        let mut out = vec![C64::new(0.0, 0.0); rho.len()];
        self.coupling(rho, &mut out);
        for (idx, g) in self.decay.iter().enumerate() {
            for e in 0..d2 {
                out[idx * d2 + e] -= g * rho[idx * d2 + e];
            }
        }
        Ok(out)
    }

    /// Integrating-factor RK4 on `grid` with `substeps` steps per interval.
    ///
    /// `rho0` need not be a density matrix; non-Hermitian or traceless
    /// operators are propagated as they are.
    pub fn propagate(&self, rho0: &[C64], grid: &TimeGrid, substeps: usize) -> Result<DensityTrajectory> {
        let ns = self.sys.dim;
        let d2 = ns * ns;
        if rho0.len() != d2 {
            return Err(Error::Shape(format!("initial operator has {} entries, expected {d2}", rho0.len())));
        }
        if substeps == 0 {
            return Err(Error::Domain("substeps must be at least 1".into()));
        }
        let len = self.set.len() * d2;
        let zero = C64::new(0.0, 0.0);
        let mut rho = vec![zero; len];
        rho[..d2].copy_from_slice(rho0);
        let mut k: [Vec<C64>; 4] = std::array::from_fn(|_| vec![zero; len]);
        let mut stage = vec![zero; len];
        let h = grid.dt / substeps as f64;
        let half: Vec<C64> = self.decay.iter().map(|g| (-g * (0.5 * h)).exp()).collect();

        let mut out = Vec::with_capacity(grid.points() * d2);
        out.extend_from_slice(rho0);
        for n in 0..grid.n_steps {
            for _ in 0..substeps {
                let [k1, k2, k3, k4] = &mut k;
                self.coupling(&rho, k1);
                for ((st, (r, d)), e) in stage.chunks_exact_mut(d2).zip(rho.chunks_exact(d2).zip(k1.chunks_exact(d2))).zip(&half) {
                    for c in 0..d2 {
                        st[c] = (r[c] + d[c] * (0.5 * h)) * e;
                    }
                }
                self.coupling(&stage, k2);
                for ((st, (r, d)), e) in stage.chunks_exact_mut(d2).zip(rho.chunks_exact(d2).zip(k2.chunks_exact(d2))).zip(&half) {
                    for c in 0..d2 {
                        st[c] = r[c] * e + d[c] * (0.5 * h);
                    }
                }
                self.coupling(&stage, k3);
                for ((st, (r, d)), e) in stage.chunks_exact_mut(d2).zip(rho.chunks_exact(d2).zip(k3.chunks_exact(d2))).zip(&half) {
                    for c in 0..d2 {
                        st[c] = (r[c] * e + d[c] * h) * e;
                    }
                }
                self.coupling(&stage, k4);
                let blocks = rho
                    .chunks_exact_mut(d2)
                    .zip(k1.chunks_exact(d2))
                    .zip(k2.chunks_exact(d2))
                    .zip(k3.chunks_exact(d2))
                    .zip(k4.chunks_exact(d2))
                    .zip(&half);
                for (((((r, a), b), c3), d), e) in blocks {
                    for c in 0..d2 {
                        r[c] = ((r[c] + a[c] * (h / 6.0)) * e + (b[c] + c3[c]) * (h / 3.0)) * e + d[c] * (h / 6.0);
                    }
                }
            }
            if rho[..d2].iter().any(|x| !x.is_finite()) {
                return Err(Error::Integration { step: n + 1, reason: "non-finite density matrix".into() });
            }
            out.extend_from_slice(&rho[..d2]);
        }
        Ok(DensityTrajectory { dim: ns, dt: grid.dt, rho: out })
    }
}

/// True when `rho` is Hermitian within `tol`.
pub fn is_hermitian_matrix(rho: &[C64], dim: usize, tol: f64) -> bool {
    is_hermitian(rho, dim, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{pade_decompose, BathSpec, SpectralDensity};
    use crate::system::unitary;

    fn projector(i: usize) -> Vec<C64> {
        let mut r = vec![C64::new(0.0, 0.0); 4];
        r[i * 3] = C64::new(1.0, 0.0);
        r
    }

    fn drude(lambda: f64) -> BathModes {
        let bath = BathSpec::new(SpectralDensity::drude(lambda, 1.0).unwrap(), 1.0).unwrap();
        pade_decompose(&bath, 2).unwrap()
    }

    #[test]
    fn population_difference_basics() {
        let t = DensityTrajectory { dim: 2, dt: 1.0, rho: projector(0) };
        assert_eq!(population_difference(&t).unwrap(), vec![1.0]);
        let half = C64::new(0.5, 0.0);
        let zero = C64::new(0.0, 0.0);
        let t = DensityTrajectory { dim: 2, dt: 1.0, rho: vec![half, zero, zero, half] };
        assert_eq!(population_difference(&t).unwrap(), vec![0.0]);
        let t = DensityTrajectory { dim: 3, dt: 1.0, rho: vec![zero; 9] };
        assert!(matches!(population_difference(&t), Err(Error::Domain(_))));
    }

    #[test]
    fn uncoupled_is_unitary() {
        let sys = SystemSpec::spin_boson(1.0, 0.5);
        let heom = Heom::new(sys.uncoupled(), &drude(0.1), 4).unwrap();
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let traj = heom.propagate(&projector(0), &grid, 1).unwrap();
        let delta = population_difference(&traj).unwrap();
        let r = 0.5f64.sqrt();
        for n in [0, 111, 300] {
            let t = grid.t(n);
            let p1 = 1.0 - 0.5 * (r * t).sin().powi(2);
            assert!((delta[n] - (2.0 * p1 - 1.0)).abs() < 1e-9);
            let u = unitary(&sys.h, 2, t);
            assert!((traj.at(n)[1] - u[0] * u[2].conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn trace_and_hermiticity_are_preserved() {
        let heom = Heom::new(SystemSpec::spin_boson(1.0, 0.5), &drude(0.1), 6).unwrap();
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let traj = heom.propagate(&projector(0), &grid, 1).unwrap();
        for n in 0..traj.len() {
            assert!((traj.trace(n) - 1.0).norm() < 1e-8);
            assert!(is_hermitian_matrix(traj.at(n), 2, 1e-10));
        }
        let delta = population_difference(&traj).unwrap();
        assert!(delta.iter().all(|d| d.abs() <= 1.0 + 1e-8));
    }

    #[test]
    fn weak_coupling_converges_linearly_to_unitary() {
        let sys = SystemSpec::spin_boson(1.0, 0.5);
        let grid = TimeGrid::new(0.01, 200).unwrap();
        let free = population_difference(&Heom::new(sys.uncoupled(), &drude(0.1), 3).unwrap().propagate(&projector(0), &grid, 1).unwrap()).unwrap();
        let dev = |lambda: f64| {
            let d = population_difference(&Heom::new(sys.clone(), &drude(lambda), 3).unwrap().propagate(&projector(0), &grid, 1).unwrap()).unwrap();
            d.iter().zip(&free).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (dev(1e-3), dev(2e-3));
        assert!(a > 0.0);
        assert!((b / a - 2.0).abs() < 0.02, "ratio {}", b / a);
    }

    #[test]
    fn rejects_non_hermitian_coupling_and_unpaired_rates() {
        let mut sys = SystemSpec::spin_boson(1.0, 0.5);
        sys.v[1] = C64::new(1.0, 0.0);
        assert!(matches!(Heom::new(sys, &drude(0.1), 2), Err(Error::Domain(_))));
        let modes = BathModes::new(vec![C64::new(1.0, 0.0)], vec![C64::new(1.0, 2.0)]).unwrap();
        assert!(matches!(Heom::new(SystemSpec::spin_boson(1.0, 0.5), &modes, 2), Err(Error::Domain(_))));
    }
}
