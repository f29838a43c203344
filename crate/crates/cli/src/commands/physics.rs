use std::fs;
use std::path::Path;

use nmqd_core::bath::{bcf_quadrature, decompose, validate_decomposition, validation_grid, BathModes, BathSpec, Scheme, SpectralDensity};
use nmqd_core::heom::{population_difference, DensityTrajectory, Heom};
use nmqd_core::hops::{generate_dataset, generate_dataset_cycled, Hops};
use nmqd_core::io::{load_noise, save_dataset, save_noise, DatasetSettings};
use nmqd_core::noise::{build_covariance, factor_covariance, sample_batch, TimeGrid};
use nmqd_core::system::SystemSpec;
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, PathContext, Result};
use crate::output::{ensure_parent, matrix_columns, Table};
use crate::states::{parse_density, parse_state};

pub fn load_modes(path: &Path) -> Result<BathModes> {
    let text = fs::read_to_string(path).at(path)?;
    BathModes::from_json(&text).at(path)
}

pub fn system(a: &SystemArgs) -> SystemSpec {
    SystemSpec::spin_boson(a.omega, a.delta)
}

pub fn grid_for(dt: f64, tmax: f64) -> Result<TimeGrid> {
    let steps = (tmax / dt).round();
    if !(steps >= 1.0) {
        return Err(CliError::Domain(format!("t_max {tmax} is shorter than one step of {dt}")));
    }
    Ok(TimeGrid::new(dt, steps as usize)?)
}

pub fn bath_decompose(a: &DecomposeArgs) -> Result<()> {
    let sdf = match a.sdf {
        Sdf::Drude => SpectralDensity::drude(a.lambda, a.gamma)?,
        Sdf::Brownian => {
            let wb = a.omega_b.ok_or_else(|| CliError::Usage("--omega-b is required for --sdf brownian".into()))?;
            SpectralDensity::brownian(a.lambda, a.gamma, wb)?
        }
    };
    let bath = BathSpec::new(sdf, a.beta)?;
    let scheme = match a.scheme {
        SchemeArg::Pade => Scheme::Pade,
        SchemeArg::Matsubara => Scheme::Matsubara,
    };
    let mut modes = decompose(&bath, a.poles, scheme)?;
    let residual = validate_decomposition(&modes, &bath, &validation_grid(a.tmin, a.tmax, a.points))?;
    if let Some(meta) = modes.meta.as_mut() {
        meta.residual = Some(residual);
    }
    ensure_parent(&a.out)?;
    fs::write(&a.out, modes.to_json()? + "\n").at(&a.out)?;
    println!("{}", json!({ "K": modes.len(), "residual": residual, "id": modes.id() }));
    Ok(())
}

pub fn bath_validate(a: &BathValidateArgs) -> Result<()> {
    let modes = load_modes(&a.modes)?;
    let bath = modes
        .meta
        .as_ref()
        .ok_or_else(|| CliError::Domain(format!("{} carries no bath parameters", a.modes.display())))?
        .bath()?;
    let grid = validation_grid(a.tmin, a.tmax, a.points);
    let residual = validate_decomposition(&modes, &bath, &grid)?;
    if let Some(out) = &a.out {
        let mut table = Table::new(&["t", "re_modes", "im_modes", "re_quadrature", "im_quadrature"]);
        table.meta("modes", modes.id()).meta("residual", residual);
        for &t in &grid {
            let (m, q) = (modes.bcf(t), bcf_quadrature(&bath, t)?);
            table.rows.push(vec![t, m.re, m.im, q.re, q.im]);
        }
        table.save(out)?;
    }
    println!("{}", json!({ "residual": residual, "points": grid.len(), "tmin": a.tmin, "tmax": a.tmax }));
    Ok(())
}

pub fn noise_sample(a: &NoiseSampleArgs, base_seed: Option<u64>) -> Result<()> {
    let modes = load_modes(&a.modes)?;
    let grid = TimeGrid::new(a.dt, a.steps)?;
    let factor = factor_covariance(&build_covariance(&modes, &grid))?;
    let seed = a.seed.or(base_seed).unwrap_or(0);
    let noise = sample_batch(&factor, seed, a.count, &modes.id());
    ensure_parent(&a.out)?;
    save_noise(&a.out, &grid, &noise).at(&a.out)?;
    println!("{}", json!({ "count": noise.len(), "points": grid.points(), "jitter": factor.jitter, "seed": seed }));
    Ok(())
}

pub fn hops_gen(a: &HopsGenArgs) -> Result<()> {
    let modes = load_modes(&a.modes)?;
    let (header, noise) = load_noise(&a.noise).at(&a.noise)?;
    let sys = system(&a.system);
    let inits = a.init.iter().map(|s| parse_state(s, sys.dim)).collect::<Result<Vec<_>>>()?;
    for (k, (label, _)) in inits.iter().enumerate() {
        if inits[..k].iter().any(|(l, _)| l == label) {
            return Err(CliError::Domain(format!("initial state {label} given twice")));
        }
    }
    let modes_id = modes.id();
    let k = modes.len();
    let hops = Hops::new(sys.clone(), modes, a.kmax, a.mode)?;
    let mut data = match a.assign {
        Assign::All => generate_dataset(&hops, &inits, &noise, &header.grid, a.substeps)?,
        Assign::Cycle => generate_dataset_cycled(&hops, &inits, &noise, &header.grid, a.substeps)?,
    };
    if let Some(n) = a.n_train {
        data.n_train = n;
    }
    let settings = DatasetSettings {
        system: &sys,
        modes_id: &modes_id,
        grid: &header.grid,
        k,
        depth: a.kmax,
        mode: a.mode,
        substeps: a.substeps,
    };
    ensure_parent(&a.out)?;
    save_dataset(&a.out, &settings, &data, &noise).at(&a.out)?;
    println!(
        "{}",
        json!({
            "records": data.records.len(),
            "train": data.train().count(),
            "validation": data.validation().count(),
            "failures": data.failures.len(),
        })
    );
    Ok(())
}

/// CSV with `t`, every entry of ρ and the population difference.
pub fn density_table(traj: &DensityTrajectory, stderr: Option<&[f64]>) -> Result<Table> {
    let mut cols = vec!["t".to_string()];
    cols.extend(matrix_columns(traj.dim));
    cols.push("delta".into());
    if stderr.is_some() {
        cols.push("delta_stderr".into());
    }
    let delta = population_difference(traj)?;
    let mut table = Table { meta: Vec::new(), columns: cols, rows: Vec::with_capacity(traj.len()) };
    for n in 0..traj.len() {
        let mut row = vec![n as f64 * traj.dt];
        row.extend(traj.at(n).iter().flat_map(|z| [z.re, z.im]));
        row.push(delta[n]);
        if let Some(s) = stderr {
            row.push(s[n]);
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn heom_run(a: &HeomRunArgs) -> Result<()> {
    let modes = load_modes(&a.modes)?;
    let sys = system(&a.system);
    let rho0 = parse_density(&a.init, sys.dim)?;
    let grid = grid_for(a.dt, a.tmax)?;
    let heom = Heom::new(sys, &modes, a.kmax)?;
    let traj = heom.propagate(&rho0, &grid, a.substeps)?;
    let mut table = density_table(&traj, None)?;
    table
        .meta("source", "heom")
        .meta("modes", modes.id())
        .meta("kmax", a.kmax)
        .meta("dt", a.dt)
        .meta("init", &a.init);
    table.save(&a.out)?;
    let last = table.rows.last().map(|r| r[r.len() - 1]);
    println!("{}", json!({ "points": traj.len(), "final_delta": last }));
    Ok(())
}
