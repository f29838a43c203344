//! Channel encoding of `(t_n, z, ψ0)` and training samples.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use nmqd_core::hops::StateTrajectory;
use nmqd_core::noise::TimeGrid;

use crate::error::{Error, Result};

/// Channels for `n = 1..N`: `t_n/t_max`, `Re z`, `Im z`, then `Re`/`Im` of
/// every entry of `ψ0` held constant in time. Shape `(3 + 2N_s) × N`.
pub fn encode_input(grid: &TimeGrid, z: &[C64], psi0: &[C64]) -> Result<Array2<f64>> {
    if z.len() != grid.points() {
        return Err(Error::Shape(format!("noise has {} points, grid has {}", z.len(), grid.points())));
    }
    let n = grid.n_steps;
    let channels = 3 + 2 * psi0.len();
    Ok(Array2::from_shape_fn((channels, n), |(c, i)| match c {
        0 => (i + 1) as f64 / n as f64,
        1 => z[i + 1].re,
        2 => z[i + 1].im,
        _ => {
            let p = psi0[(c - 3) / 2];
            if (c - 3) % 2 == 0 {
                p.re
            } else {
                p.im
            }
        }
    }))
}

/// Inverse of [`encode_input`]: `(z_1..z_N, ψ0)`.
pub fn decode_input(x: &Array2<f64>) -> Result<(Vec<C64>, Vec<C64>)> {
    let c = x.nrows();
    if c < 5 || !(c - 3).is_multiple_of(2) || x.ncols() == 0 {
        return Err(Error::Shape(format!("{c} channels cannot hold a state")));
    }
    let z = (0..x.ncols()).map(|i| C64::new(x[[1, i]], x[[2, i]])).collect();
    let psi0 = (0..(c - 3) / 2).map(|j| C64::new(x[[3 + 2 * j, 0]], x[[4 + 2 * j, 0]])).collect();
    Ok((z, psi0))
}

/// One training or validation pair: the encoded input and the target states
/// `ψ_1..ψ_N` stacked row by row.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: Array2<f64>,
    pub target: Vec<C64>,
    pub psi0: Vec<C64>,
}

impl Sample {
    pub fn new(grid: &TimeGrid, z: &[C64], traj: &StateTrajectory) -> Result<Self> {
        if traj.len() != grid.points() {
            return Err(Error::Shape(format!("trajectory has {} points, grid has {}", traj.len(), grid.points())));
        }
        let psi0 = traj.state(0).to_vec();
        Ok(Sample { input: encode_input(grid, z, &psi0)?, target: traj.psi[traj.dim..].to_vec(), psi0 })
    }

    pub fn dim(&self) -> usize {
        self.psi0.len()
    }

    pub fn steps(&self) -> usize {
        self.target.len() / self.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zero_noise_ground_state() {
        let grid = TimeGrid::new(0.1, 4).unwrap();
        let x = encode_input(&grid, &[c(0.0, 0.0); 5], &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(x.dim(), (7, 4));
        for n in 0..4 {
            let col: Vec<f64> = x.column(n).to_vec();
            assert_eq!(col, vec![(n + 1) as f64 / 4.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        }
        assert!(encode_input(&grid, &[c(0.0, 0.0); 4], &[c(1.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn initial_state_only_touches_broadcast_channels() {
        let grid = TimeGrid::new(0.1, 6).unwrap();
        let z: Vec<C64> = (0..7).map(|i| c(i as f64, -0.5 * i as f64)).collect();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let a = encode_input(&grid, &z, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let b = encode_input(&grid, &z, &[c(r, 0.0), c(0.0, r)]).unwrap();
        assert!((0..3).all(|ch| a.row(ch) == b.row(ch)));
        assert!((3..7).any(|ch| a.row(ch) != b.row(ch)));
    }

    proptest! {
        #[test]
        fn round_trip(zs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 9), a in 0.0f64..1.0, phase in -3.0f64..3.0) {
            let grid = TimeGrid::new(0.05, 8).unwrap();
            let z: Vec<C64> = zs.iter().map(|&(r, i)| c(r, i)).collect();
            let psi0 = vec![c(a, 0.0), C64::from_polar((1.0 - a * a).sqrt(), phase)];
            let x = encode_input(&grid, &z, &psi0).unwrap();
            let (z_back, psi_back) = decode_input(&x).unwrap();
            prop_assert_eq!(&z_back[..], &z[1..]);
            prop_assert_eq!(psi_back, psi0);
        }
    }
}
