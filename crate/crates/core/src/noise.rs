//! Discretized complex Gaussian noise with `E[z_t z_s*] = α(t − s)` and
//! vanishing pseudo-covariance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::BathModes;
use crate::error::{Error, Result};
use crate::C64;

/// Uniform grid `t_n = n·dt`, `n = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    pub fn points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.n_steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points()).map(|n| self.t(n)).collect()
    }
}

/// `C_mn = α(t_m − t_n)` with the lower triangle computed from the modes and
/// the upper triangle its conjugate.
///
/// The diagonal is `Re Σ_k c_k`: the imaginary part of `α` is odd in `t` and
/// vanishes at the origin, while the `|t|` form of the modes leaves its
/// one-sided limit there.
pub fn build_covariance(modes: &BathModes, grid: &TimeGrid) -> DMatrix<C64> {
    let n = grid.points();
    let mut lags: Vec<C64> = (0..n).map(|d| modes.bcf(grid.t(d))).collect();
    lags[0].im = 0.0;
    DMatrix::from_fn(n, n, |m, k| if m >= k { lags[m - k] } else { lags[k - m].conj() })
}

/// Complex Cholesky that fails on a non-positive pivot. nalgebra takes the
/// complex square root of a negative pivot instead of failing.
fn cholesky(c: DMatrix<C64>) -> Option<DMatrix<C64>> {
    let l = c.cholesky()?.l();
    let ok = l.diagonal().iter().all(|d| d.re > 0.0 && d.im.abs() <= 1e-10 * d.re);
    ok.then_some(l)
}

/// Lower Cholesky factor of a covariance matrix with the diagonal shift that
/// was needed to obtain it.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    pub l: DMatrix<C64>,
    pub jitter: f64,
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}

pub fn factor_covariance(c: &DMatrix<C64>) -> Result<CovarianceFactor> {
    if !c.is_square() {
        return Err(Error::Shape(format!("covariance is {}x{}", c.nrows(), c.ncols())));
    }
    let n = c.nrows();
    let scale = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    for i in 0..n {
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)].conj()).norm() > 1e-12 * scale {
                return Err(Error::Domain(format!("covariance is not Hermitian at ({i}, {j})")));
            }
        }
    }
    if let Some(l) = cholesky(c.clone()) {
        return Ok(CovarianceFactor { l, jitter: 0.0 });
    }
    let mean_diag = c.diagonal().iter().map(|z| z.re).sum::<f64>() / n as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::Factorization { jitter: 0.0 });
    }
    let max_jitter = 1e-6 * mean_diag;
    let mut jitter = 1e-12 * mean_diag;
    while jitter <= max_jitter * (1.0 + 1e-12) {
        let mut shifted = c.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(shifted) {
            return Ok(CovarianceFactor { l, jitter });
        }
        jitter *= 2.0;
    }
    Err(Error::Factorization { jitter: jitter / 2.0 })
}

/// One sampled noise path with the key that regenerates it.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTrajectory {
    pub z: Vec<C64>,
    pub base_seed: u64,
    pub index: u64,
    pub bath_id: String,
}

/// Standard complex normals `ξ` with `E|ξ|² = 1`, `E[ξ²] = 0`, drawn from the
/// ChaCha20 stream selected by `(base_seed, index)`.
pub fn standard_complex_normals(base_seed: u64, index: u64, count: usize) -> Vec<C64> {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    (0..count)
        .map(|_| {
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            C64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
        })
        .collect()
}

/// `z = L ξ`.
pub fn sample_noise(factor: &CovarianceFactor, base_seed: u64, index: u64) -> Vec<C64> {
    let n = factor.dim();
    let xi = standard_complex_normals(base_seed, index, n);
    (0..n)
        .map(|i| (0..=i).map(|j| factor.l[(i, j)] * xi[j]).sum())
        .collect()
}

/// Trajectories `index = 0..count`, generated in parallel.
pub fn sample_batch(factor: &CovarianceFactor, base_seed: u64, count: usize, bath_id: &str) -> Vec<NoiseTrajectory> {
    (0..count as u64)
        .into_par_iter()
        .map(|index| NoiseTrajectory {
            z: sample_noise(factor, base_seed, index),
            base_seed,
            index,
            bath_id: bath_id.to_string(),
        })
        .collect()
}

/// Sample covariance `(1/M) Σ z z†` and pseudo-covariance `(1/M) Σ z zᵀ`.
pub fn empirical_covariance(samples: &[Vec<C64>]) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("no samples".into()))?;
    let n = first.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::Shape(format!("sample lengths {} and {} differ", n, bad.len())));
    }
    let mut cov = DMatrix::<C64>::zeros(n, n);
    let mut pseudo = DMatrix::<C64>::zeros(n, n);
    for z in samples {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += z[i] * z[j].conj();
                pseudo[(i, j)] += z[i] * z[j];
            }
        }
    }
    let m = samples.len() as f64;
    Ok((cov / C64::from(m), pseudo / C64::from(m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_mode(c: f64, g: f64) -> BathModes {
        BathModes::new(vec![C64::new(c, 0.0)], vec![C64::new(g, 0.0)]).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
        let g = TimeGrid::new(0.01, 1000).unwrap();
        assert_eq!(g.points(), 1001);
        assert_relative_eq!(g.t_max(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_entries() {
        let grid = TimeGrid::new(2f64.ln(), 3).unwrap();
        let c = build_covariance(&one_mode(1.0, 1.0), &grid);
        assert_relative_eq!(c[(1, 0)].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c[(3, 2)].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_eq!(c, c.adjoint());
    }

    #[test]
    fn factor_closed_forms() {
        let f = factor_covariance(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.l, DMatrix::identity(4, 4));
        assert_eq!(f.jitter, 0.0);

        let rho = C64::new(0.3, -0.4);
        let c = DMatrix::from_row_slice(2, 2, &[C64::from(1.0), rho, rho.conj(), C64::from(1.0)]);
        let f = factor_covariance(&c).unwrap();
        assert_relative_eq!((f.l[(1, 0)] - rho.conj()).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(f.l[(1, 1)].re, (1.0 - rho.norm_sqr()).sqrt(), epsilon = 1e-15);
        assert_eq!(f.l[(0, 1)], C64::from(0.0));
    }

    #[test]
    fn jitter_rescues_semidefinite_and_fails_on_indefinite() {
        let ones = DMatrix::from_element(3, 3, C64::from(1.0));
        let f = factor_covariance(&ones).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-6);
        let recon = &f.l * f.l.adjoint();
        assert!((recon - &ones).iter().all(|z| z.norm() <= f.jitter + 1e-12));

        let mut bad = DMatrix::<C64>::identity(3, 3);
        bad[(2, 2)] = C64::from(-1.0);
        assert!(matches!(factor_covariance(&bad), Err(Error::Factorization { .. })));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut c = DMatrix::<C64>::identity(2, 2);
        c[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(factor_covariance(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn sampling_is_deterministic_per_key() {
        let f = factor_covariance(&DMatrix::identity(8, 8)).unwrap();
        assert_eq!(sample_noise(&f, 7, 3), sample_noise(&f, 7, 3));
        assert_ne!(sample_noise(&f, 7, 3), sample_noise(&f, 7, 4));
        assert_ne!(sample_noise(&f, 7, 3), sample_noise(&f, 8, 3));
        let batch = sample_batch(&f, 7, 5, "x");
        assert_eq!(batch[3].z, sample_noise(&f, 7, 3));
    }

    #[test]
    fn white_noise_moments() {
        let m = 100_000;
        let xi = standard_complex_normals(11, 0, m);
        let mean: C64 = xi.iter().sum::<C64>() / m as f64;
        let second: f64 = xi.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
        let pseudo: C64 = xi.iter().map(|z| z * z).sum::<C64>() / m as f64;
        let bound = 5.0 / (m as f64).sqrt();
        assert!(mean.norm() < bound);
        assert!(pseudo.norm() < bound);
        assert!((second - 1.0).abs() < 2.0 * bound);
    }

    #[test]
    fn empirical_covariance_single_sample_is_rank_one() {
        let z = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3)];
        let (cov, pseudo) = empirical_covariance(std::slice::from_ref(&z)).unwrap();
        assert_eq!(cov[(0, 1)], z[0] * z[1].conj());
        assert_eq!(pseudo[(1, 1)], z[1] * z[1]);
        assert!(cov.determinant().norm() < 1e-12);
        assert!(matches!(empirical_covariance(&[z, vec![C64::from(0.0)]]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn covariance_is_hermitian_toeplitz(
            cre in 0.01f64..1.0, cim in -0.5f64..0.5, gre in 0.1f64..5.0, gim in -3.0f64..3.0,
            dt in 0.01f64..0.5, n in 1usize..12,
        ) {
            let modes = BathModes::new(vec![C64::new(cre, cim)], vec![C64::new(gre, gim)]).unwrap();
            let grid = TimeGrid::new(dt, n).unwrap();
            let c = build_covariance(&modes, &grid);
            prop_assert_eq!(&c, &c.adjoint());
            for i in 1..c.nrows() {
                for j in 1..c.ncols() {
                    prop_assert_eq!(c[(i, j)], c[(i - 1, j - 1)]);
                }
            }
        }

        #[test]
        fn factor_reconstructs(lambda in 0.01f64..0.5, gamma in 0.2f64..3.0, n in 1usize..30) {
            let modes = one_mode(lambda, gamma);
            let grid = TimeGrid::new(0.05, n).unwrap();
            let c = build_covariance(&modes, &grid);
            let f = factor_covariance(&c).unwrap();
            let recon = &f.l * f.l.adjoint();
            let cmax = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            for (a, b) in recon.iter().zip(c.iter()) {
                prop_assert!((a - b).norm() <= f.jitter + 1e-12 * cmax);
            }
        }
    }
}
