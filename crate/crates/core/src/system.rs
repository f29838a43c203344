//! System Hamiltonian and coupling operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Dense row-major `N_s × N_s` matrices `H_s` and `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dim: usize,
    pub h: Vec<C64>,
    pub v: Vec<C64>,
}

pub(crate) fn is_hermitian(m: &[C64], dim: usize, tol: f64) -> bool {
    (0..dim).all(|i| (0..dim).all(|j| (m[i * dim + j] - m[j * dim + i].conj()).norm() <= tol))
}

impl SystemSpec {
    pub fn new(dim: usize, h: Vec<C64>, v: Vec<C64>) -> Result<Self> {
        if dim == 0 || h.len() != dim * dim || v.len() != dim * dim {
            return Err(Error::Shape(format!(
                "system of dimension {dim} needs {} matrix entries, got {} and {}",
                dim * dim,
                h.len(),
                v.len()
            )));
        }
        if !is_hermitian(&h, dim, 1e-12) {
            return Err(Error::Domain("system Hamiltonian is not Hermitian".into()));
        }
        Ok(SystemSpec { dim, h, v })
    }

    /// `H_s = (ω/2)σ_z + Δσ_x`, `V = σ_z`.
    pub fn spin_boson(omega: f64, delta: f64) -> Self {
        let r = |x: f64| C64::new(x, 0.0);
        SystemSpec {
            dim: 2,
            h: vec![r(0.5 * omega), r(delta), r(delta), r(-0.5 * omega)],
            v: vec![r(1.0), r(0.0), r(0.0), r(-1.0)],
        }
    }

    /// Same Hamiltonian with the bath switched off.
    pub fn uncoupled(&self) -> Self {
        SystemSpec {
            v: vec![C64::new(0.0, 0.0); self.v.len()],
            ..self.clone()
        }
    }

    pub fn v_is_hermitian(&self) -> bool {
        is_hermitian(&self.v, self.dim, 1e-12)
    }

    pub fn v_adjoint(&self) -> Vec<C64> {
        let n = self.dim;
        (0..n * n).map(|k| self.v[(k % n) * n + k / n].conj()).collect()
    }
}

/// `y = m x` for a row-major square matrix.
#[inline]
pub(crate) fn matvec(m: &[C64], x: &[C64], y: &mut [C64]) {
    let n = x.len();
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `e^{−iHt}` of a Hermitian matrix.
pub fn unitary(h: &[C64], dim: usize, t: f64) -> Vec<C64> {
    let hm = nalgebra::DMatrix::from_row_slice(dim, dim, h);
    let eig = hm.symmetric_eigen();
    let phases = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    (0..dim * dim).map(|k| u[(k / dim, k % dim)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_boson_operators() {
        let s = SystemSpec::spin_boson(1.0, 0.5);
        assert!(SystemSpec::new(2, s.h.clone(), s.v.clone()).is_ok());
        assert!(s.v_is_hermitian());
        assert_eq!(s.v_adjoint(), s.v);
        assert!(s.uncoupled().v.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_shapes_and_non_hermitian() {
        let one = C64::new(1.0, 0.0);
        assert!(matches!(SystemSpec::new(2, vec![one; 3], vec![one; 4]), Err(Error::Shape(_))));
        let h = vec![one, C64::new(0.0, 1.0), C64::new(0.0, 1.0), one];
        assert!(matches!(SystemSpec::new(2, h, vec![one; 4]), Err(Error::Domain(_))));
    }

    #[test]
    fn unitary_matches_rabi_formula() {
        let s = SystemSpec::spin_boson(1.0, 0.5);
        let omega_r = (0.25f64 + 0.25).sqrt();
        for t in [0.3, 1.7, 4.0] {
            let u = unitary(&s.h, 2, t);
            let p1 = u[0].norm_sqr();
            let expected = 1.0 - (0.25 / (0.25 + 0.25)) * (omega_r * t).sin().powi(2);
            assert!((p1 - expected).abs() < 1e-13);
        }
    }
}
