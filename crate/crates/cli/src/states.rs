//! Textual initial states: `1`, `+i`, `0.6,0.8i`, `diag:1,0`, `pure:+1`.

use nmqd_core::apps::{eta_state, eta_value, ETA_LABELS};
use nmqd_core::C64;

use crate::error::{CliError, Result};

fn bad(s: &str, what: &str) -> CliError {
    CliError::Domain(format!("cannot parse '{s}' as {what}"))
}

/// `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t = s.trim();
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad(s, "a complex number"));
    };
    let split = body
        .char_indices()
        .skip(1)
        .filter(|&(k, c)| (c == '+' || c == '-') && !matches!(body.as_bytes()[k - 1], b'e' | b'E'))
        .map(|(k, _)| k)
        .last();
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse::<f64>().map_err(|_| bad(s, "a complex number"))?,
    };
    let re = re.parse::<f64>().map_err(|_| bad(s, "a complex number"))?;
    Ok(C64::new(re, im))
}

pub fn parse_vector(s: &str) -> Result<Vec<C64>> {
    s.split(',').map(parse_complex).collect()
}

/// Canonical label of a known state, if `psi` is one.
pub fn canonical_label(psi: &[C64]) -> Option<String> {
    let close = |a: &[C64], b: &[C64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-12);
    for k in 0..psi.len() {
        let mut e = vec![C64::new(0.0, 0.0); psi.len()];
        e[k] = C64::new(1.0, 0.0);
        if close(psi, &e) {
            return Some((k + 1).to_string());
        }
    }
    if psi.len() == 2 {
        for label in ETA_LABELS {
            if close(psi, &eta_state(eta_value(label).unwrap())) {
                return Some(label.to_string());
            }
        }
    }
    None
}

/// A pure state and its label. Bare tokens name basis states (`1`, `2`, ...)
/// or the η states; comma lists give the amplitudes.
pub fn parse_state(s: &str, dim: usize) -> Result<(String, Vec<C64>)> {
    let s = s.trim();
    let psi = if s.contains(',') {
        parse_vector(s)?
    } else if let Some(eta) = eta_value(s).filter(|_| dim == 2) {
        eta_state(eta)
    } else {
        let k: usize = s.parse().map_err(|_| bad(s, "an initial state"))?;
        if k == 0 || k > dim {
            return Err(CliError::Domain(format!("basis state {k} outside 1..={dim}")));
        }
        let mut e = vec![C64::new(0.0, 0.0); dim];
        e[k - 1] = C64::new(1.0, 0.0);
        e
    };
    if psi.len() != dim {
        return Err(CliError::Domain(format!("state '{s}' has {} entries, system dimension is {dim}", psi.len())));
    }
    let label = canonical_label(&psi).unwrap_or_else(|| s.to_string());
    Ok((label, psi))
}

/// A row-major density matrix: `diag:a,b`, `pure:<state>`, `full:<d² entries>`
/// or a bare state.
pub fn parse_density(s: &str, dim: usize) -> Result<Vec<C64>> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("diag:") {
        let d = parse_vector(rest)?;
        if d.len() != dim {
            return Err(CliError::Domain(format!("diagonal '{rest}' needs {dim} entries")));
        }
        let mut rho = vec![C64::new(0.0, 0.0); dim * dim];
        for (k, x) in d.into_iter().enumerate() {
            rho[k * dim + k] = x;
        }
        return Ok(rho);
    }
    if let Some(rest) = s.strip_prefix("full:") {
        let rho = parse_vector(rest)?;
        if rho.len() != dim * dim {
            return Err(CliError::Domain(format!("matrix '{rest}' needs {} entries", dim * dim)));
        }
        return Ok(rho);
    }
    let (_, psi) = parse_state(s.strip_prefix("pure:").unwrap_or(s), dim)?;
    Ok(psi.iter().flat_map(|a| psi.iter().map(move |b| a * b.conj())).collect())
}
