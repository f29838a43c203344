use nalgebra::{DMatrix, DVector};
use nmqd_core::apps::{heom_maps, transfer_tensors, ttm_propagate};
use nmqd_core::bath::{pade_decompose, BathSpec, SpectralDensity};
use nmqd_core::heom::Heom;
use nmqd_core::hops::{generate_dataset, Hops, HopsMode};
use nmqd_core::io::{load_dataset, save_dataset, DatasetSettings};
use nmqd_core::noise::{build_covariance, factor_covariance, sample_batch, TimeGrid};
use nmqd_core::system::SystemSpec;
use nmqd_core::C64;
use proptest::prelude::*;

fn drude_modes(beta: f64, poles: usize) -> nmqd_core::bath::BathModes {
    let bath = BathSpec::new(SpectralDensity::drude(0.1, 1.0).unwrap(), beta).unwrap();
    pade_decompose(&bath, poles).unwrap()
}

fn density(p: f64, re: f64, im: f64) -> Vec<C64> {
    vec![C64::new(p, 0.0), C64::new(re, im), C64::new(re, -im), C64::new(1.0 - p, 0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn heom_maps_act_linearly(p in 0.0f64..1.0, re in -0.3f64..0.3, im in -0.3f64..0.3) {
        let heom = Heom::new(SystemSpec::spin_boson(1.0, 0.5), &drude_modes(1.0, 1), 3).unwrap();
        let grid = TimeGrid::new(0.01, 60).unwrap();
        let maps = heom_maps(&heom, &grid, 1).unwrap();
        let rho0 = density(p, re, im);
        let direct = heom.propagate(&rho0, &grid, 1).unwrap();
        for n in [1, 30, 60] {
            let v = &maps.maps[n - 1] * DVector::from_column_slice(&rho0);
            for (a, b) in v.iter().zip(direct.at(n)) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn transfer_tensors_reproduce_the_window() {
    let heom = Heom::new(SystemSpec::spin_boson(1.0, 0.5), &drude_modes(1.0, 2), 4).unwrap();
    let grid = TimeGrid::new(0.02, 150).unwrap();
    let maps = heom_maps(&heom, &grid, 1).unwrap();
    let tensors = transfer_tensors(&maps, 150).unwrap();
    let rho0 = density(0.3, 0.2, -0.1);
    let ttm = ttm_propagate(&tensors, &rho0, 150, grid.dt).unwrap();
    let direct = heom.propagate(&rho0, &grid, 1).unwrap();
    for n in 0..=150 {
        for (a, b) in ttm.at(n).iter().zip(direct.at(n)) {
            assert!((a - b).norm() < 1e-10, "step {n}");
        }
    }
}

/// Gibbs state of the spin-boson Hamiltonian from its eigendecomposition.
fn gibbs(beta: f64) -> DMatrix<f64> {
    let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, -0.5]);
    let eig = h.symmetric_eigen();
    let w = eig.eigenvalues.map(|e: f64| (-beta * e).exp());
    let z = w.sum();
    &eig.eigenvectors * DMatrix::from_diagonal(&(w / z)) * eig.eigenvectors.transpose()
}

#[test]
fn weak_coupling_relaxes_toward_the_gibbs_state() {
    let beta = 1.0;
    let heom = Heom::new(SystemSpec::spin_boson(1.0, 0.5), &drude_modes(beta, 4), 6).unwrap();
    let grid = TimeGrid::new(0.02, 4000).unwrap();
    let traj = heom.propagate(&density(1.0, 0.0, 0.0), &grid, 1).unwrap();
    let last = traj.at(grid.n_steps);
    let g = gibbs(beta);
    let delta = last[0].re - last[3].re;
    let expected = g[(0, 0)] - g[(1, 1)];
    assert!((delta - expected).abs() < 0.05, "Δ(∞) = {delta}, Gibbs {expected}");
    assert!((last[1].re - g[(0, 1)]).abs() < 0.05);
}

#[test]
fn datasets_survive_the_container_round_trip() {
    let modes = drude_modes(1.0, 4);
    let noise_modes = drude_modes(1.0, 10);
    let grid = TimeGrid::new(0.01, 20).unwrap();
    let factor = factor_covariance(&build_covariance(&noise_modes, &grid)).unwrap();
    let noise = sample_batch(&factor, 3, 5, &noise_modes.id());
    let sys = SystemSpec::spin_boson(1.0, 0.5);
    let hops = Hops::new(sys.clone(), modes.clone(), 2, HopsMode::Nonlinear).unwrap();
    let up = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let data = generate_dataset(&hops, &[("1".into(), up)], &noise, &grid, 1).unwrap();
    let again = generate_dataset(&hops, &[("1".into(), vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])], &noise, &grid, 1).unwrap();
    assert_eq!(data.records, again.records);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.nmqd");
    let id = modes.id();
    let settings = DatasetSettings { system: &sys, modes_id: &id, grid: &grid, k: modes.len(), depth: 2, mode: HopsMode::Nonlinear, substeps: 1 };
    save_dataset(&path, &settings, &data, &noise).unwrap();
    let stored = load_dataset(&path).unwrap();
    assert_eq!(stored.states, data.records);
    assert_eq!(stored.noise, noise.iter().map(|z| z.z.clone()).collect::<Vec<_>>());
    assert_eq!(stored.split(false).len() + stored.split(true).len(), 5);
}
