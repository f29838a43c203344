//! Spectral densities, the bath correlation function and its exponential-sum
//! decomposition.
//!
//! The correlation function is
//!
//! ```text
//! α(t) = 1/(2π) ∫_0^∞ dω J(ω) [coth(βω/2) cos(ωt) − i sin(ωt)]
//! ```
//!
//! and is decomposed as `α(t) = Σ_k c_k exp(−γ_k |t|)`. The decomposition
//! closes the frequency integral in the lower half plane: the poles of `J`
//! contribute one (Drude) or two (Brownian) modes and the poles of a
//! rational approximation of `coth` contribute the remaining ones.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Spectral density function `J(ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectralDensity {
    /// `J(ω) = 2λγω / (ω² + γ²)`
    Drude { lambda: f64, gamma: f64 },
    /// `J(ω) = 2λγω_b²ω / ((ω² − ω_b²)² + γ²ω²)`
    Brownian { lambda: f64, gamma: f64, omega_b: f64 },
}

impl SpectralDensity {
    pub fn drude(lambda: f64, gamma: f64) -> Result<Self> {
        let sdf = SpectralDensity::Drude { lambda, gamma };
        sdf.validate()?;
        Ok(sdf)
    }

    pub fn brownian(lambda: f64, gamma: f64, omega_b: f64) -> Result<Self> {
        let sdf = SpectralDensity::Brownian { lambda, gamma, omega_b };
        sdf.validate()?;
        Ok(sdf)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            SpectralDensity::Drude { lambda, gamma } => {
                positive("lambda", lambda)?;
                positive("gamma", gamma)
            }
            SpectralDensity::Brownian { lambda, gamma, omega_b } => {
                positive("lambda", lambda)?;
                positive("gamma", gamma)?;
                positive("omega_b", omega_b)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SpectralDensity::Drude { .. } => "drude",
            SpectralDensity::Brownian { .. } => "brownian",
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { lambda, .. } | SpectralDensity::Brownian { lambda, .. } => lambda,
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { gamma, .. } | SpectralDensity::Brownian { gamma, .. } => gamma,
        }
    }

    pub fn omega_b(&self) -> Option<f64> {
        match *self {
            SpectralDensity::Drude { .. } => None,
            SpectralDensity::Brownian { omega_b, .. } => Some(omega_b),
        }
    }

    /// `J(ω)` for `ω ≥ 0`.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::Domain(format!("spectral density needs omega >= 0, got {omega}")));
        }
        Ok(omega * self.over_omega(omega))
    }

    /// `J(ω)/ω`, finite at the origin.
    fn over_omega(&self, omega: f64) -> f64 {
        match *self {
            SpectralDensity::Drude { lambda, gamma } => 2.0 * lambda * gamma / (omega * omega + gamma * gamma),
            SpectralDensity::Brownian { lambda, gamma, omega_b } => {
                let d = omega * omega - omega_b * omega_b;
                2.0 * lambda * gamma * omega_b * omega_b / (d * d + gamma * gamma * omega * omega)
            }
        }
    }

    /// Analytic continuation of `J` to complex frequency.
    pub fn eval_complex(&self, w: C64) -> C64 {
        match *self {
            SpectralDensity::Drude { lambda, gamma } => 2.0 * lambda * gamma * w / (w * w + gamma * gamma),
            SpectralDensity::Brownian { lambda, gamma, omega_b } => {
                let d = w * w - omega_b * omega_b;
                2.0 * lambda * gamma * omega_b * omega_b * w / (d * d + gamma * gamma * w * w)
            }
        }
    }

    /// Poles of `J` in the lower half plane with their residues.
    pub fn lower_poles(&self) -> Result<Vec<(C64, C64)>> {
        match *self {
            SpectralDensity::Drude { lambda, gamma } => Ok(vec![(C64::new(0.0, -gamma), C64::new(lambda * gamma, 0.0))]),
            SpectralDensity::Brownian { lambda, gamma, omega_b } => {
                let disc = 4.0 * omega_b * omega_b - gamma * gamma;
                if disc.abs() < 1e-10 * omega_b * omega_b {
                    return Err(Error::Decomposition(
                        "critically damped Brownian density has a double pole".into(),
                    ));
                }
                let root = C64::new(disc, 0.0).sqrt();
                let poles = [(-I * gamma + root) * 0.5, (-I * gamma - root) * 0.5];
                Ok(poles
                    .iter()
                    .map(|&p| {
                        let num = 2.0 * lambda * gamma * omega_b * omega_b * p;
                        let dden = 4.0 * p * (p * p - omega_b * omega_b) + 2.0 * gamma * gamma * p;
                        (p, num / dden)
                    })
                    .collect())
            }
        }
    }
}

/// Spectral density together with the inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub sdf: SpectralDensity,
    pub beta: f64,
}

impl BathSpec {
    pub fn new(sdf: SpectralDensity, beta: f64) -> Result<Self> {
        sdf.validate()?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        Ok(BathSpec { sdf, beta })
    }
}

/// Outcome of [`bcf_quadrature_detailed`].
#[derive(Clone, Copy, Debug)]
pub struct BcfQuadrature {
    pub value: C64,
    pub error: f64,
    /// Real-axis cutoff beyond which the integral is taken along a rotated ray.
    pub cutoff: f64,
}

/// `x coth(x)`, regular at zero.
fn x_coth_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 3.0
    } else {
        x / x.tanh()
    }
}

/// `coth(z)` for `Re z > 0`, stable for large real part.
fn coth_right_half(z: C64) -> C64 {
    let e = (-2.0 * z).exp();
    (1.0 + e) / (1.0 - e)
}

/// `α(t)` by direct quadrature of the frequency integral.
pub fn bcf_quadrature(bath: &BathSpec, t: f64) -> Result<C64> {
    bcf_quadrature_detailed(bath, t, QuadOptions::default()).map(|q| q.value)
}

/// Quadrature of the correlation function with the error estimate and cutoff.
///
/// `[0, a]` is integrated on the real axis. Beyond `a` the integrand is split
/// into `J(coth − 1)e^{iωt}/2`, which is below `J(a)e^{−βa}` and dropped, and
/// `J(coth + 1)e^{−iωt}/2`, which is integrated along `ω = a − iy` where it
/// decays like `e^{−yt}`.
pub fn bcf_quadrature_detailed(bath: &BathSpec, t: f64, opts: QuadOptions) -> Result<BcfQuadrature> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("quadrature needs t > 0, got {t}")));
    }
    let sdf = bath.sdf;
    let beta = bath.beta;
    let scale = sdf.gamma().max(sdf.omega_b().unwrap_or(0.0)).max(1.0);
    let cutoff = (40.0 / beta).max(20.0 * scale);
    let norm = 1.0 / (2.0 * PI);

    let real_axis = |w: f64| {
        let j_coth = sdf.over_omega(w) * (2.0 / beta) * x_coth_x(0.5 * beta * w);
        let j = w * sdf.over_omega(w);
        let (s, c) = (w * t).sin_cos();
        C64::new(j_coth * c, -j * s) * norm
    };
    let panels = ((cutoff * t / PI).ceil() as usize).max(8);
    let opts_scaled = QuadOptions {
        abs_tol: opts.abs_tol * sdf.lambda(),
        ..opts
    };
    let head = quad::integrate(real_axis, &quad::linspace(0.0, cutoff, panels), opts_scaled)?;

    let phase = C64::new(0.0, -cutoff * t).exp();
    let rotated = |y: f64| {
        let w = C64::new(cutoff, -y);
        let j = sdf.eval_complex(w);
        let k = coth_right_half(0.5 * beta * w) + 1.0;
        -I * 0.5 * j * k * phase * (-y * t).exp() * norm
    };
    let y_max = 60.0 / t;
    let mut breaks = vec![0.0];
    let mut y = y_max;
    while y > cutoff.min(y_max) * 1e-3 {
        breaks.push(y);
        y *= 0.25;
    }
    breaks.sort_by(f64::total_cmp);
    let tail = quad::integrate(rotated, &breaks, opts_scaled)?;

    Ok(BcfQuadrature {
        value: head.value + tail.value,
        error: head.error + tail.error,
        cutoff,
    })
}

/// Rational approximation scheme for `coth(y) ≈ 1/y + Σ_j 2η_j y / (y² + (ξ_j/2)²)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `[N−1/N]` Padé approximant of the Bose function.
    Pade,
    /// Truncated Matsubara series, `ξ_j = 2πj`, `η_j = 1`.
    Matsubara,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Pade => "pade",
            Scheme::Matsubara => "matsubara",
        })
    }
}

/// Poles `ξ_j` and weights `η_j` of the `[N−1/N]` Padé approximant of the Bose
/// function `1/(1−e^{−x}) ≈ 1/x + 1/2 + Σ_j 2η_j x/(x² + ξ_j²)`.
pub fn pade_bose(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Ok((vec![], vec![]));
    }
    let b = |m: usize| (2 * m + 1) as f64;
    let tridiag = |size: usize, offset: usize| {
        let mut m = DMatrix::<f64>::zeros(size, size);
        for i in 0..size.saturating_sub(1) {
            let v = 1.0 / (b(i + offset) * b(i + offset + 1)).sqrt();
            m[(i, i + 1)] = v;
            m[(i + 1, i)] = v;
        }
        m
    };
    let largest = |m: DMatrix<f64>, count: usize| -> Result<Vec<f64>> {
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        if ev.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decomposition("non-finite eigenvalue in Padé pole solve".into()));
        }
        ev.sort_by(|a, b| b.total_cmp(a));
        let out: Vec<f64> = ev.into_iter().take(count).map(|v| 2.0 / v).collect();
        if out.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Decomposition("Padé poles are not positive".into()));
        }
        Ok(out)
    };
    let mut xi = largest(tridiag(2 * n, 1), n)?;
    xi.sort_by(f64::total_cmp);
    let zeta = largest(tridiag(2 * n - 1, 2), n - 1)?;

    let eta = (0..n)
        .map(|j| {
            let x2 = xi[j] * xi[j];
            let num: f64 = zeta.iter().map(|z| z * z - x2).product();
            let den: f64 = (0..n).filter(|&k| k != j).map(|k| xi[k] * xi[k] - x2).product();
            0.5 * n as f64 * b(n + 1) * num / den
        })
        .collect::<Vec<_>>();
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::Decomposition("non-finite Padé residue".into()));
    }
    Ok((xi, eta))
}

/// Poles/weights of the chosen `coth` expansion.
pub fn coth_expansion(scheme: Scheme, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match scheme {
        Scheme::Pade => pade_bose(n),
        Scheme::Matsubara => Ok(((1..=n).map(|j| 2.0 * PI * j as f64).collect(), vec![1.0; n])),
    }
}

/// Descriptive metadata carried alongside a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModesMeta {
    pub sdf: String,
    pub lambda: f64,
    pub gamma: f64,
    pub omega_b: Option<f64>,
    pub beta: f64,
    pub scheme: Scheme,
    pub n_poles: usize,
    pub residual: Option<f64>,
}

impl ModesMeta {
    pub fn bath(&self) -> Result<BathSpec> {
        let sdf = match (self.sdf.as_str(), self.omega_b) {
            ("drude", _) => SpectralDensity::drude(self.lambda, self.gamma)?,
            ("brownian", Some(wb)) => SpectralDensity::brownian(self.lambda, self.gamma, wb)?,
            (other, _) => return Err(Error::Format(format!("unknown spectral density '{other}'"))),
        };
        BathSpec::new(sdf, self.beta)
    }
}

/// Exponential decomposition `α(t) = Σ_k c_k e^{−γ_k|t|}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BathModes {
    pub c: Vec<C64>,
    pub g: Vec<C64>,
    pub meta: Option<ModesMeta>,
}

#[derive(Serialize, Deserialize)]
struct ModesFile {
    #[serde(rename = "K")]
    k: usize,
    c: Vec<[f64; 2]>,
    g: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ModesMeta>,
}

impl BathModes {
    pub fn new(c: Vec<C64>, g: Vec<C64>) -> Result<Self> {
        if c.len() != g.len() {
            return Err(Error::Shape(format!("{} prefactors but {} rates", c.len(), g.len())));
        }
        if let Some(bad) = g.iter().find(|g| !(g.re > 0.0)) {
            return Err(Error::Domain(format!("decay rate {bad} does not have a positive real part")));
        }
        if c.iter().chain(&g).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Domain("non-finite mode parameter".into()));
        }
        Ok(BathModes { c, g, meta: None })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// `Σ_k c_k e^{−γ_k|t|}`.
    pub fn bcf(&self, t: f64) -> C64 {
        let t = t.abs();
        self.c.iter().zip(&self.g).map(|(c, g)| c * (-g * t).exp()).sum()
    }

    /// For each mode, the index of the mode whose rate is its complex
    /// conjugate. Needed to expand `α*(t)` over the same exponentials.
    pub fn conjugate_partners(&self) -> Result<Vec<usize>> {
        self.g
            .iter()
            .map(|gk| {
                let target = gk.conj();
                self.g
                    .iter()
                    .position(|gj| (gj - target).norm() <= 1e-12 * (1.0 + target.norm()))
                    .ok_or_else(|| Error::Domain(format!("rate {gk} has no conjugate partner among the modes")))
            })
            .collect()
    }

    /// Content hash of the prefactors and rates.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        for z in self.c.iter().chain(&self.g) {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModesFile {
            k: self.len(),
            c: self.c.iter().map(|z| [z.re, z.im]).collect(),
            g: self.g.iter().map(|z| [z.re, z.im]).collect(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModesFile = serde_json::from_str(s)?;
        if file.k != file.c.len() {
            return Err(Error::Format(format!("K = {} but {} prefactors listed", file.k, file.c.len())));
        }
        let to_c = |v: Vec<[f64; 2]>| v.into_iter().map(|[re, im]| C64::new(re, im)).collect();
        let mut modes = BathModes::new(to_c(file.c), to_c(file.g))?;
        modes.meta = file.meta;
        Ok(modes)
    }
}

/// Decomposition with the requested `coth` expansion.
pub fn decompose(bath: &BathSpec, n_poles: usize, scheme: Scheme) -> Result<BathModes> {
    let (xi, eta) = coth_expansion(scheme, n_poles)?;
    let beta = bath.beta;
    let sdf = bath.sdf;
    let coth_approx = |y: C64| {
        xi.iter()
            .zip(&eta)
            .map(|(x, e)| 2.0 * e * y / (y * y + 0.25 * x * x))
            .sum::<C64>()
            + 1.0 / y
    };

    let mut c = Vec::with_capacity(n_poles + 2);
    let mut g = Vec::with_capacity(n_poles + 2);
    for (p, residue) in sdf.lower_poles()? {
        if xi.iter().any(|x| (p - C64::new(0.0, -x / beta)).norm() < 1e-8 * p.norm()) {
            return Err(Error::Decomposition(format!(
                "pole {p} of J coincides with a pole of the coth expansion"
            )));
        }
        c.push(-0.5 * I * residue * (coth_approx(0.5 * beta * p) + 1.0));
        g.push(I * p);
    }
    for (x, e) in xi.iter().zip(&eta) {
        let nu = x / beta;
        c.push(-I * (e / beta) * sdf.eval_complex(C64::new(0.0, -nu)));
        g.push(C64::new(nu, 0.0));
    }
    let mut modes = BathModes::new(c, g).map_err(|e| Error::Decomposition(e.to_string()))?;
    modes.meta = Some(ModesMeta {
        sdf: sdf.kind().into(),
        lambda: sdf.lambda(),
        gamma: sdf.gamma(),
        omega_b: sdf.omega_b(),
        beta,
        scheme,
        n_poles,
        residual: None,
    });
    Ok(modes)
}

/// Decomposition with `n_poles` Padé poles of `coth(βω/2)`.
///
/// `n_poles = 0` keeps only the poles of `J` with `coth(x) ≈ 1/x`, the
/// high-temperature form.
pub fn pade_decompose(bath: &BathSpec, n_poles: usize) -> Result<BathModes> {
    decompose(bath, n_poles, Scheme::Pade)
}

/// Maximum deviation between the modes and quadrature on `grid`, relative to
/// the largest quadrature magnitude on the grid.
pub fn validate_decomposition(modes: &BathModes, bath: &BathSpec, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Domain("validation grid is empty".into()));
    }
    let mut max_dev: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for &t in grid {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("validation grid point {t} is not positive")));
        }
        let reference = bcf_quadrature(bath, t)?;
        max_dev = max_dev.max((modes.bcf(t) - reference).norm());
        max_ref = max_ref.max(reference.norm());
    }
    Ok(max_dev / max_ref)
}

/// `points` evenly spaced times on `[t_min, t_max]`.
pub fn validation_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![t_min];
    }
    (0..points)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (points - 1) as f64)
        .collect()
}
