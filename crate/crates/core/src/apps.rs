//! Observables built from propagated states and operators: reduced
//! densities, dipole correlation functions and spectra, dynamical maps and
//! transfer tensors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heom::{DensityTrajectory, Heom};
use crate::hops::{HopsMode, StateTrajectory};
use crate::noise::TimeGrid;
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `U_n` for `n = 1..=N`, each row-major `dim × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTrajectory {
    pub dim: usize,
    pub u: Vec<C64>,
    pub label: String,
    pub seed: u64,
    pub mode: HopsMode,
}

impl OperatorTrajectory {
    pub fn len(&self) -> usize {
        self.u.len() / (self.dim * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn at(&self, n: usize) -> &[C64] {
        let d2 = self.dim * self.dim;
        &self.u[n * d2..(n + 1) * d2]
    }
}

/// `ψ_n = U_n ψ_0` with `ψ_0` prepended.
pub fn apply_operator(op: &OperatorTrajectory, psi0: &[C64]) -> Result<StateTrajectory> {
    let d = op.dim;
    if psi0.len() != d {
        return Err(Error::Shape(format!("operator dimension {d} but state has {} entries", psi0.len())));
    }
    let mut psi = Vec::with_capacity((op.len() + 1) * d);
    psi.extend_from_slice(psi0);
    for n in 0..op.len() {
        let u = op.at(n);
        for i in 0..d {
            psi.push((0..d).map(|j| u[i * d + j] * psi0[j]).sum());
        }
    }
    Ok(StateTrajectory { dim: d, psi, seed: op.seed, label: op.label.clone(), mode: op.mode, failed_at: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// `E[|ψ⟩⟨ψ| / ⟨ψ|ψ⟩]`
    Normalized,
    /// `E[|ψ⟩⟨ψ|]`
    Raw,
}

impl Estimator {
    pub fn for_mode(mode: HopsMode) -> Self {
        match mode {
            HopsMode::Linear => Estimator::Raw,
            HopsMode::Nonlinear => Estimator::Normalized,
        }
    }
}

fn projector(psi: &[C64], estimator: Estimator, out: &mut [C64]) {
    let d = psi.len();
    let scale = match estimator {
        Estimator::Raw => 1.0,
        Estimator::Normalized => 1.0 / psi.iter().map(|z| z.norm_sqr()).sum::<f64>(),
    };
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = psi[i] * psi[j].conj() * scale;
        }
    }
}

fn check_ensemble(ensemble: &[StateTrajectory]) -> Result<(usize, usize, HopsMode)> {
    let first = ensemble.first().ok_or_else(|| Error::Shape("empty ensemble".into()))?;
    for t in ensemble {
        if t.mode != first.mode {
            return Err(Error::Domain("ensemble mixes linear and nonlinear trajectories".into()));
        }
        if t.dim != first.dim || t.len() != first.len() {
            return Err(Error::Shape("trajectories in the ensemble have different shapes".into()));
        }
    }
    Ok((first.dim, first.len(), first.mode))
}

/// Ensemble average of projectors, with the estimator chosen by the mode
/// unless overridden.
pub fn reduced_density(ensemble: &[StateTrajectory], estimator: Option<Estimator>, dt: f64) -> Result<DensityTrajectory> {
    let (d, len, mode) = check_ensemble(ensemble)?;
    let est = estimator.unwrap_or(Estimator::for_mode(mode));
    let d2 = d * d;
    let mut rho = vec![ZERO; len * d2];
    let mut p = vec![ZERO; d2];
    for traj in ensemble {
        for n in 0..len {
            projector(traj.state(n), est, &mut p);
            for (r, x) in rho[n * d2..(n + 1) * d2].iter_mut().zip(&p) {
                *r += x;
            }
        }
    }
    let m = ensemble.len() as f64;
    rho.iter_mut().for_each(|r| *r /= m);
    Ok(DensityTrajectory { dim: d, dt, rho })
}

/// Mean and standard error of `Δ = ρ_11 − ρ_22` per grid point.
pub fn population_difference_stats(ensemble: &[StateTrajectory], estimator: Option<Estimator>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, len, mode) = check_ensemble(ensemble)?;
    if d != 2 {
        return Err(Error::Domain("population difference needs a two-level system".into()));
    }
    let est = estimator.unwrap_or(Estimator::for_mode(mode));
    let mut sum = vec![0.0; len];
    let mut sum2 = vec![0.0; len];
    for traj in ensemble {
        for n in 0..len {
            let p = traj.state(n);
            let (a, b) = (p[0].norm_sqr(), p[1].norm_sqr());
            let x = match est {
                Estimator::Raw => a - b,
                Estimator::Normalized => (a - b) / (a + b),
            };
            sum[n] += x;
            sum2[n] += x * x;
        }
    }
    let m = ensemble.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let se = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, mu)| if m > 1.0 { ((s2 / m - mu * mu).max(0.0) / (m - 1.0)).sqrt() } else { f64::INFINITY })
        .collect();
    Ok((mean, se))
}

/// The four `η ∈ {+1, −1, +i, −i}` states `(|1⟩ + η|2⟩)/√2`.
pub const ETA_LABELS: [&str; 4] = ["+1", "-1", "+i", "-i"];

pub fn eta_value(label: &str) -> Option<C64> {
    match label {
        "+1" => Some(C64::new(1.0, 0.0)),
        "-1" => Some(C64::new(-1.0, 0.0)),
        "+i" => Some(C64::new(0.0, 1.0)),
        "-i" => Some(C64::new(0.0, -1.0)),
        _ => None,
    }
}

pub fn eta_state(eta: C64) -> Vec<C64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    vec![C64::new(r, 0.0), eta * r]
}

/// `(η/2, ψ_0(η))` with `Σ_η (η/2)|ψ_0(η)⟩⟨ψ_0(η)| = |1⟩⟨2| = σ_x |2⟩⟨2|`.
pub fn dipole_decomposition(mu: &[C64], rho0: &[C64]) -> Result<Vec<(String, C64, Vec<C64>)>> {
    let one = C64::new(1.0, 0.0);
    let sigma_x = [ZERO, one, one, ZERO];
    let excited = [ZERO, ZERO, ZERO, one];
    let close = |a: &[C64], b: &[C64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-12);
    if !close(mu, &sigma_x) || !close(rho0, &excited) {
        return Err(Error::Domain("the η decomposition is implemented for μ = σ_x, ρ0 = |2⟩⟨2| only".into()));
    }
    Ok(ETA_LABELS
        .iter()
        .map(|l| {
            let eta = eta_value(l).unwrap();
            (l.to_string(), eta / 2.0, eta_state(eta))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// `Σ_η (η/2) E⟨ψ(t,η)|μ|ψ(t,η)⟩`
    MuInserted,
    /// `Σ_η (η/2) E⟨ψ(t,η)|ψ(t,η)⟩`
    PaperLiteral,
}

/// Dipole correlation from the four η ensembles, keyed by [`ETA_LABELS`].
pub fn correlation_function(
    sources: &BTreeMap<String, Vec<StateTrajectory>>,
    mu: &[C64],
    mode: CorrelationMode,
    estimator: Option<Estimator>,
) -> Result<Vec<C64>> {
    let mut total: Option<Vec<C64>> = None;
    for label in ETA_LABELS {
        let ens = sources
            .get(label)
            .ok_or_else(|| Error::Domain(format!("missing ensemble for η = {label}")))?;
        let rho = reduced_density(ens, estimator, 1.0)?;
        let d = rho.dim;
        if mu.len() != d * d {
            return Err(Error::Shape("dipole operator does not match the system".into()));
        }
        let w = eta_value(label).unwrap() / 2.0;
        let series: Vec<C64> = (0..rho.len())
            .map(|n| {
                let r = rho.at(n);
                match mode {
                    CorrelationMode::MuInserted => trace_product(mu, r, d) * w,
                    CorrelationMode::PaperLiteral => (0..d).map(|i| r[i * d + i]).sum::<C64>() * w,
                }
            })
            .collect();
        total = Some(match total {
            None => series,
            Some(acc) => {
                if acc.len() != series.len() {
                    return Err(Error::Shape("η ensembles have different lengths".into()));
                }
                acc.iter().zip(&series).map(|(a, b)| a + b).collect()
            }
        });
    }
    Ok(total.unwrap())
}

/// `tr{A B}` for row-major square matrices.
pub fn trace_product(a: &[C64], b: &[C64], d: usize) -> C64 {
    (0..d).flat_map(|i| (0..d).map(move |k| (i, k))).map(|(i, k)| a[i * d + k] * b[k * d + i]).sum()
}

/// `C(t_n) = tr{μ ρ(t_n)}` with `ρ(0) = μρ_0` propagated by HEOM.
pub fn heom_correlation(heom: &Heom, mu: &[C64], rho0: &[C64], dim: usize, grid: &TimeGrid, substeps: usize) -> Result<Vec<C64>> {
    let mu_rho = mat_mul(mu, rho0, dim);
    let traj = heom.propagate(&mu_rho, grid, substeps)?;
    Ok((0..traj.len()).map(|n| trace_product(mu, traj.at(n), dim)).collect())
}

fn mat_mul(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
    (0..d * d).map(|ij| (0..d).map(|k| a[(ij / d) * d + k] * b[k * d + ij % d]).sum()).collect()
}

/// `ω ∈ [−4, 4]` in steps of 0.005.
pub fn default_frequencies() -> Vec<f64> {
    (0..=1600).map(|i| -4.0 + 0.005 * i as f64).collect()
}

/// `C(ω) = Re Σ_n δt C(t_n) e^{−iωt_n}` over grid points `n < n_window`.
pub fn absorption_spectrum(c: &[C64], dt: f64, n_window: usize, omegas: &[f64]) -> Result<Vec<f64>> {
    if n_window == 0 || n_window > c.len() {
        return Err(Error::Domain(format!("window of {n_window} points on a series of {}", c.len())));
    }
    Ok(omegas
        .iter()
        .map(|&w| {
            c[..n_window]
                .iter()
                .enumerate()
                .map(|(n, cn)| cn * C64::from_polar(dt, -w * n as f64 * dt))
                .sum::<C64>()
                .re
        })
        .collect())
}

/// Dynamical maps `E_1..E_N` acting on row-major `vec(ρ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicalMap {
    pub dim: usize,
    pub maps: Vec<DMatrix<C64>>,
    pub source: String,
}

fn vec_of(m: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(m)
}

/// Conjugate transpose of a row-major matrix.
fn adjoint(m: &[C64], d: usize) -> Vec<C64> {
    (0..d * d).map(|ij| m[(ij % d) * d + ij / d].conj()).collect()
}

/// Columns `|1⟩⟨1|`, `|2⟩⟨2|`, `|1⟩⟨2|` from three propagated outputs and
/// `|2⟩⟨1|` by Hermiticity.
fn assemble(rho11: &DensityTrajectory, rho22: &DensityTrajectory, rho12: &[Vec<C64>], source: &str) -> Result<DynamicalMap> {
    let d = 2;
    let len = rho11.len().min(rho22.len()).min(rho12.len());
    let maps = (1..len)
        .map(|n| {
            let mut e = DMatrix::<C64>::zeros(4, 4);
            e.set_column(0, &vec_of(rho11.at(n)));
            e.set_column(3, &vec_of(rho22.at(n)));
            e.set_column(1, &vec_of(&rho12[n]));
            e.set_column(2, &vec_of(&adjoint(&rho12[n], d)));
            e
        })
        .collect();
    Ok(DynamicalMap { dim: d, maps, source: source.into() })
}

/// Maps from HEOM propagation of the basis operators.
pub fn heom_maps(heom: &Heom, grid: &TimeGrid, substeps: usize) -> Result<DynamicalMap> {
    let one = C64::new(1.0, 0.0);
    let rho11 = heom.propagate(&[one, ZERO, ZERO, ZERO], grid, substeps)?;
    let rho22 = heom.propagate(&[ZERO, ZERO, ZERO, one], grid, substeps)?;
    let rho12 = heom.propagate(&[ZERO, one, ZERO, ZERO], grid, substeps)?;
    let coh: Vec<Vec<C64>> = (0..rho12.len()).map(|n| rho12.at(n).to_vec()).collect();
    assemble(&rho11, &rho22, &coh, "heom")
}

/// Maps from stochastic ensembles labelled `"1"`, `"2"` and [`ETA_LABELS`].
pub fn ensemble_maps(sources: &BTreeMap<String, Vec<StateTrajectory>>, estimator: Option<Estimator>, dt: f64) -> Result<DynamicalMap> {
    let get = |l: &str| {
        sources
            .get(l)
            .ok_or_else(|| Error::Domain(format!("missing ensemble for initial state {l}")))
    };
    let rho11 = reduced_density(get("1")?, estimator, dt)?;
    let rho22 = reduced_density(get("2")?, estimator, dt)?;
    if rho11.dim != 2 {
        return Err(Error::Domain("dynamical maps are implemented for two-level systems".into()));
    }
    let mut coh = vec![vec![ZERO; 4]; rho11.len()];
    for label in ETA_LABELS {
        let r = reduced_density(get(label)?, estimator, dt)?;
        if r.len() != coh.len() {
            return Err(Error::Shape("ensembles have different lengths".into()));
        }
        let w = eta_value(label).unwrap() / 2.0;
        for (n, c) in coh.iter_mut().enumerate() {
            for (ci, ri) in c.iter_mut().zip(r.at(n)) {
                *ci += w * ri;
            }
        }
    }
    assemble(&rho11, &rho22, &coh, "ensemble")
}

/// `T_n = E_n − Σ_{k=1}^{n−1} T_{n−k} E_k` for `n = 1..=cutoff`.
pub fn transfer_tensors(maps: &DynamicalMap, cutoff: usize) -> Result<Vec<DMatrix<C64>>> {
    if cutoff == 0 || cutoff > maps.maps.len() {
        return Err(Error::Domain(format!("cutoff {cutoff} with {} maps available", maps.maps.len())));
    }
    let e = &maps.maps;
    let mut t: Vec<DMatrix<C64>> = Vec::with_capacity(cutoff);
    for n in 1..=cutoff {
        let mut tn = e[n - 1].clone();
        for k in 1..n {
            tn -= &t[n - k - 1] * &e[k - 1];
        }
        t.push(tn);
    }
    Ok(t)
}

/// `ρ_n = Σ_{k=1}^{min(n,K)} T_k ρ_{n−k}` for `n = 1..=n_long`, with `ρ_0`
/// prepended.
pub fn ttm_propagate(tensors: &[DMatrix<C64>], rho0: &[C64], n_long: usize, dt: f64) -> Result<DensityTrajectory> {
    let d2 = rho0.len();
    let dim = (d2 as f64).sqrt().round() as usize;
    if dim * dim != d2 || tensors.iter().any(|t| t.nrows() != d2 || t.ncols() != d2) {
        return Err(Error::Shape("transfer tensors do not match the initial state".into()));
    }
    let mut history: Vec<DVector<C64>> = vec![vec_of(rho0)];
    for n in 1..=n_long {
        let mut next = DVector::<C64>::zeros(d2);
        for (k, t) in tensors.iter().enumerate().take(n) {
            next += t * &history[n - k - 1];
        }
        history.push(next);
    }
    let rho = history.iter().flat_map(|v| v.iter().copied()).collect();
    Ok(DensityTrajectory { dim, dt, rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{unitary, SystemSpec};
    use approx::assert_relative_eq;

    fn traj(states: Vec<[C64; 2]>, mode: HopsMode) -> StateTrajectory {
        StateTrajectory {
            dim: 2,
            psi: states.into_iter().flatten().collect(),
            seed: 0,
            label: String::new(),
            mode,
            failed_at: None,
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn unitary_ops(n: usize, dt: f64) -> OperatorTrajectory {
        let sys = SystemSpec::spin_boson(1.0, 0.5);
        OperatorTrajectory {
            dim: 2,
            u: (1..=n).flat_map(|k| unitary(&sys.h, 2, k as f64 * dt)).collect(),
            label: String::new(),
            seed: 0,
            mode: HopsMode::Linear,
        }
    }

    #[test]
    fn apply_identity_is_constant() {
        let one = c(1.0, 0.0);
        let op = OperatorTrajectory { dim: 2, u: [one, ZERO, ZERO, one].repeat(5), label: "x".into(), seed: 3, mode: HopsMode::Nonlinear };
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let t = apply_operator(&op, &psi0).unwrap();
        assert_eq!(t.len(), 6);
        assert!((0..6).all(|n| t.state(n) == psi0));
        assert!(matches!(apply_operator(&op, &[one]), Err(Error::Shape(_))));
    }

    #[test]
    fn apply_unitary_gives_rabi() {
        let op = unitary_ops(100, 0.05);
        let t = apply_operator(&op, &[c(1.0, 0.0), ZERO]).unwrap();
        let r = 0.5f64.sqrt();
        for n in [10, 57, 100] {
            let time = n as f64 * 0.05;
            assert_relative_eq!(t.state(n)[0].norm_sqr(), 1.0 - 0.5 * (r * time).sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn reduced_density_examples() {
        let up = traj(vec![[c(1.0, 0.0), ZERO]; 3], HopsMode::Nonlinear);
        let down = traj(vec![[ZERO, c(1.0, 0.0)]; 3], HopsMode::Nonlinear);
        let rho = reduced_density(std::slice::from_ref(&up), None, 0.1).unwrap();
        assert_eq!(rho.at(2), &[c(1.0, 0.0), ZERO, ZERO, ZERO]);
        let rho = reduced_density(&[up.clone(), down], None, 0.1).unwrap();
        assert_eq!(rho.at(1), &[c(0.5, 0.0), ZERO, ZERO, c(0.5, 0.0)]);
        let lin = traj(vec![[c(1.0, 0.0), ZERO]; 3], HopsMode::Linear);
        assert!(matches!(reduced_density(&[up, lin], None, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn normalized_estimator_ignores_norm_and_phase() {
        let a = traj(vec![[c(2.0, 0.0), c(0.0, 2.0)]], HopsMode::Nonlinear);
        let b = traj(vec![[c(0.0, 1.0), c(-1.0, 0.0)]], HopsMode::Nonlinear);
        let ra = reduced_density(&[a], None, 1.0).unwrap();
        let rb = reduced_density(&[b], None, 1.0).unwrap();
        for (x, y) in ra.rho.iter().zip(&rb.rho) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn eta_decomposition_reconstructs_coherence() {
        let one = c(1.0, 0.0);
        let parts = dipole_decomposition(&[ZERO, one, one, ZERO], &[ZERO, ZERO, ZERO, one]).unwrap();
        let mut sum = [ZERO; 4];
        let mut weights = ZERO;
        for (_, w, psi) in &parts {
            assert_relative_eq!(psi.iter().map(|z| z.norm_sqr()).sum::<f64>(), 1.0, epsilon = 1e-15);
            weights += w;
            for i in 0..2 {
                for j in 0..2 {
                    sum[i * 2 + j] += w * psi[i] * psi[j].conj();
                }
            }
        }
        assert!(weights.norm() < 1e-15);
        let expected = [ZERO, one, ZERO, ZERO];
        assert!(sum.iter().zip(&expected).all(|(a, b)| (a - b).norm() < 1e-15));
        assert!(dipole_decomposition(&[one, ZERO, ZERO, one], &[ZERO, ZERO, ZERO, one]).is_err());
    }

    fn unitary_sources(n: usize, dt: f64) -> BTreeMap<String, Vec<StateTrajectory>> {
        let op = unitary_ops(n, dt);
        let mut map = BTreeMap::new();
        for l in ETA_LABELS {
            map.insert(l.to_string(), vec![apply_operator(&op, &eta_state(eta_value(l).unwrap())).unwrap()]);
        }
        map.insert("1".into(), vec![apply_operator(&op, &[c(1.0, 0.0), ZERO]).unwrap()]);
        map.insert("2".into(), vec![apply_operator(&op, &[ZERO, c(1.0, 0.0)]).unwrap()]);
        map
    }

    #[test]
    fn correlation_of_unitary_dynamics() {
        let one = c(1.0, 0.0);
        let mu = [ZERO, one, one, ZERO];
        let dt = 0.05;
        let sources = unitary_sources(200, dt);
        let corr = correlation_function(&sources, &mu, CorrelationMode::MuInserted, None).unwrap();
        assert!((corr[0] - 1.0).norm() < 1e-14);
        // closed form: tr{μ U |1⟩⟨2| U†}
        let sys = SystemSpec::spin_boson(1.0, 0.5);
        for n in [17, 120] {
            let u = unitary(&sys.h, 2, n as f64 * dt);
            let out = mat_mul(&mat_mul(&u, &[ZERO, one, ZERO, ZERO], 2), &adjoint(&u, 2), 2);
            assert!((corr[n] - trace_product(&mu, &out, 2)).norm() < 1e-12);
        }
        let literal = correlation_function(&sources, &mu, CorrelationMode::PaperLiteral, None).unwrap();
        assert!(literal.iter().all(|z| z.norm() < 1e-14));
        let mut missing = sources.clone();
        missing.remove("+i");
        assert!(correlation_function(&missing, &mu, CorrelationMode::MuInserted, None).is_err());
    }

    #[test]
    fn spectrum_of_single_tone() {
        let dt = 0.01;
        let w0 = 1.3;
        let series: Vec<C64> = (0..4000).map(|n| C64::from_polar(1.0, w0 * n as f64 * dt)).collect();
        let omegas = default_frequencies();
        let spec = absorption_spectrum(&series, dt, series.len(), &omegas).unwrap();
        let peak = omegas[spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert!((peak - w0).abs() < 0.01);
        assert!(absorption_spectrum(&series, dt, 0, &omegas).is_err());

        let even: Vec<C64> = (0..500).map(|n| c((-(n as f64) * dt).exp(), 0.0)).collect();
        let s = absorption_spectrum(&even, dt, 500, &[-0.7, 0.7]).unwrap();
        assert_relative_eq!(s[0], s[1], epsilon = 1e-12);
    }

    #[test]
    fn markovian_maps_have_single_tensor() {
        let m = DMatrix::from_fn(4, 4, |i, j| c(0.1 * (i as f64) - 0.05 * j as f64, 0.02 * (i * j) as f64)) + DMatrix::identity(4, 4) * c(0.7, 0.0);
        let mut maps = Vec::new();
        let mut p = DMatrix::<C64>::identity(4, 4);
        for _ in 0..20 {
            p = &m * p;
            maps.push(p.clone());
        }
        let map = DynamicalMap { dim: 2, maps, source: "test".into() };
        let t = transfer_tensors(&map, 10).unwrap();
        assert!((&t[0] - &m).norm() < 1e-14);
        assert!(t[1..].iter().all(|tk| tk.norm() < 1e-12));
        assert!((&t[1] - (&map.maps[1] - &t[0] * &map.maps[0])).norm() < 1e-15);

        let rho0 = [c(0.3, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.7, 0.0)];
        let out = ttm_propagate(&t[..1], &rho0, 5, 1.0).unwrap();
        let direct = &map.maps[4] * DVector::from_column_slice(&rho0);
        assert!(out.at(5).iter().zip(direct.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(transfer_tensors(&map, 0).is_err());
    }

    #[test]
    fn unitary_maps_are_unital() {
        let sources = unitary_sources(30, 0.1);
        let maps = ensemble_maps(&sources, Some(Estimator::Raw), 0.1).unwrap();
        let half = c(0.5, 0.0);
        let id = DVector::from_column_slice(&[half, ZERO, ZERO, half]);
        for e in &maps.maps {
            assert!((e * &id - &id).norm() < 1e-12);
        }
    }
}
