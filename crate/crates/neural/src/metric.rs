//! Training loss and the time-resolved overlap error.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::encode::Sample;
use crate::error::{Error, Result};

fn check(u: &[C64], sample: &Sample) -> Result<(usize, usize)> {
    let d = sample.dim();
    let n = sample.steps();
    if u.len() != n * d * d {
        return Err(Error::Shape(format!("{} operator entries for {n} steps of a {d}-level system", u.len())));
    }
    Ok((d, n))
}

fn residual(u: &[C64], sample: &Sample, t: usize, d: usize, out: &mut [C64]) {
    let un = &u[t * d * d..(t + 1) * d * d];
    for i in 0..d {
        let applied: C64 = (0..d).map(|j| un[i * d + j] * sample.psi0[j]).sum();
        out[i] = sample.target[t * d + i] - applied;
    }
}

/// `(1/N) Σ_n ‖ψ_n − U_n ψ0‖₂`.
pub fn sample_loss(u: &[C64], sample: &Sample) -> Result<f64> {
    let (d, n) = check(u, sample)?;
    let mut r = vec![C64::new(0.0, 0.0); d];
    let mut total = 0.0;
    for t in 0..n {
        residual(u, sample, t, d, &mut r);
        total += r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    Ok(total / n as f64)
}

/// Loss and its gradient with respect to the raw network output channels.
/// A vanishing residual contributes a zero subgradient.
pub fn loss_with_grad(out: &Array2<f64>, sample: &Sample) -> Result<(f64, Array2<f64>)> {
    let d = sample.dim();
    let n = sample.steps();
    if out.dim() != (2 * d * d, n) {
        return Err(Error::Shape(format!("output {:?} for {n} steps of a {d}-level system", out.dim())));
    }
    let mut grad = Array2::zeros(out.dim());
    let mut r = vec![C64::new(0.0, 0.0); d];
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for t in 0..n {
        for (i, ri) in r.iter_mut().enumerate() {
            let applied: C64 = (0..d).map(|j| C64::new(out[[2 * (i * d + j), t]], out[[2 * (i * d + j) + 1, t]]) * sample.psi0[j]).sum();
            *ri = sample.target[t * d + i] - applied;
        }
        let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        total += norm;
        if norm > 0.0 {
            for i in 0..d {
                let gr = r[i] * (inv_n / norm);
                for j in 0..d {
                    let gu = -gr * sample.psi0[j].conj();
                    grad[[2 * (i * d + j), t]] = gu.re;
                    grad[[2 * (i * d + j) + 1, t]] = gu.im;
                }
            }
        }
    }
    Ok((total * inv_n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Mean,
    Max,
}

impl std::str::FromStr for Reducer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            other => Err(format!("unknown reducer {other}, expected mean or max")),
        }
    }
}

/// Per-sample `|1 − ⟨ψ_n|U_nψ0⟩|` for `n = 1..N`, with both states
/// normalized unless `raw`. `None` when a state has zero norm.
pub fn overlap_errors(u: &[C64], sample: &Sample, raw: bool) -> Result<Option<Vec<f64>>> {
    let (d, n) = check(u, sample)?;
    let mut series = Vec::with_capacity(n);
    for t in 0..n {
        let un = &u[t * d * d..(t + 1) * d * d];
        let phi: Vec<C64> = (0..d).map(|i| (0..d).map(|j| un[i * d + j] * sample.psi0[j]).sum()).collect();
        let psi = &sample.target[t * d..(t + 1) * d];
        let mut overlap: C64 = psi.iter().zip(&phi).map(|(a, b)| a.conj() * b).sum();
        if !raw {
            let norms = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norms == 0.0 || !norms.is_finite() {
                return Ok(None);
            }
            overlap /= norms;
        }
        series.push((C64::new(1.0, 0.0) - overlap).norm());
    }
    Ok(Some(series))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: Vec<f64>,
    pub used: usize,
    pub excluded: usize,
}

pub fn reduce(per_sample: &[Vec<f64>], reducer: Reducer, excluded: usize) -> MetricReport {
    let n = per_sample.first().map_or(0, Vec::len);
    let values = (0..n)
        .map(|t| {
            let it = per_sample.iter().map(|s| s[t]);
            match reducer {
                Reducer::Mean => it.sum::<f64>() / per_sample.len() as f64,
                Reducer::Max => it.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    MetricReport { values, used: per_sample.len(), excluded }
}

/// `L(t_n)` over a set of operator sequences and their samples.
pub fn error_metric(ops: &[Vec<C64>], samples: &[Sample], reducer: Reducer, raw: bool) -> Result<MetricReport> {
    if ops.len() != samples.len() {
        return Err(Error::Shape(format!("{} operator sequences for {} samples", ops.len(), samples.len())));
    }
    let mut kept = Vec::with_capacity(samples.len());
    let mut excluded = 0;
    for (u, s) in ops.iter().zip(samples) {
        match overlap_errors(u, s, raw)? {
            Some(series) => kept.push(series),
            None => excluded += 1,
        }
    }
    Ok(reduce(&kept, reducer, excluded))
}
