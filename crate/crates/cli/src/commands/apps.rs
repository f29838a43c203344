use std::collections::BTreeMap;
use std::path::PathBuf;

use nmqd_core::apps::{
    absorption_spectrum, apply_operator, correlation_function, ensemble_maps, heom_correlation, heom_maps,
    population_difference_stats, reduced_density, transfer_tensors, ttm_propagate, CorrelationMode, DynamicalMap,
    Estimator,
};
use nmqd_core::heom::Heom;
use nmqd_core::hops::StateTrajectory;
use nmqd_core::io::{load_maps, load_operators, save_maps, save_superoperators, SuperoperatorHeader};
use nmqd_core::noise::TimeGrid;
use nmqd_core::C64;
use serde_json::json;

use super::learn::{load_data, records};
use super::physics::{density_table, load_modes, system};
use crate::args::*;
use crate::error::{CliError, PathContext, Result};
use crate::output::{ensure_parent, Table};
use crate::states::{parse_density, parse_state};

pub enum Source {
    Ensembles { grid: TimeGrid, sets: BTreeMap<String, Vec<StateTrajectory>>, estimator: Option<Estimator> },
    Heom { heom: Box<Heom>, grid: TimeGrid, substeps: usize, dim: usize },
}

impl Source {
    pub fn grid(&self) -> &TimeGrid {
        match self {
            Source::Ensembles { grid, .. } | Source::Heom { grid, .. } => grid,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Source::Ensembles { .. } => "ensemble",
            Source::Heom { .. } => "heom",
        }
    }
}

/// The file the source is read from.
pub fn source_path(s: &SourceArgs) -> Result<PathBuf> {
    match (&s.data, &s.ops, &s.heom_modes) {
        (Some(p), None, None) | (None, Some(p), None) | (None, None, Some(p)) => Ok(p.clone()),
        _ => Err(CliError::Usage("give exactly one of --data, --ops or --heom-modes".into())),
    }
}

fn group(trajs: Vec<StateTrajectory>) -> BTreeMap<String, Vec<StateTrajectory>> {
    let mut sets: BTreeMap<String, Vec<StateTrajectory>> = BTreeMap::new();
    for t in trajs {
        sets.entry(t.label.clone()).or_default().push(t);
    }
    sets
}

pub fn load_source(s: &SourceArgs) -> Result<Source> {
    let path = source_path(s)?;
    let estimator = s.raw_projectors.then_some(Estimator::Raw);
    if s.heom_modes.is_some() {
        let modes = load_modes(&path)?;
        let sys = system(&s.system);
        let dim = sys.dim;
        let heom = Heom::new(sys, &modes, s.kmax)?;
        return Ok(Source::Heom { heom: Box::new(heom), grid: TimeGrid::new(s.dt, s.steps)?, substeps: s.substeps, dim });
    }
    if s.data.is_some() {
        let data = load_data(&path)?;
        let trajs = records(&data, s.split).into_iter().map(|(t, _)| t.clone()).collect();
        return Ok(Source::Ensembles { grid: data.header.grid, sets: group(trajs), estimator });
    }
    let (header, ops) = load_operators(&path).at(&path)?;
    let trajs = ops
        .iter()
        .map(|op| {
            let (_, psi0) = parse_state(&op.label, op.dim)?;
            Ok(apply_operator(op, &psi0)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Source::Ensembles { grid: header.grid, sets: group(trajs), estimator })
}

fn ensemble<'a>(sets: &'a BTreeMap<String, Vec<StateTrajectory>>, label: &str) -> Result<&'a [StateTrajectory]> {
    sets.get(label).map(Vec::as_slice).ok_or_else(|| {
        let have: Vec<&str> = sets.keys().map(String::as_str).collect();
        CliError::Domain(format!("no trajectories for initial state {label}; available: {}", have.join(" ")))
    })
}

pub fn density(a: &DensityArgs) -> Result<()> {
    let source = load_source(&a.source)?;
    let mut table = match &source {
        Source::Ensembles { grid, sets, estimator } => {
            let dim = sets.values().next().map_or(2, |v| v[0].dim);
            let label = parse_state(&a.init, dim).map_or_else(|_| a.init.clone(), |(l, _)| l);
            let ens = ensemble(sets, &label)?;
            let rho = reduced_density(ens, *estimator, grid.dt)?;
            let (_, stderr) = population_difference_stats(ens, *estimator)?;
            let mut t = density_table(&rho, Some(&stderr))?;
            t.meta("trajectories", ens.len());
            t
        }
        Source::Heom { heom, grid, substeps, dim } => {
            let rho = heom.propagate(&parse_density(&a.init, *dim)?, grid, *substeps)?;
            density_table(&rho, None)?
        }
    };
    table.meta("source", source.name()).meta("init", &a.init);
    table.save(&a.out)?;
    println!("{}", json!({ "points": table.rows.len() }));
    Ok(())
}

fn sigma_x() -> Vec<C64> {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    vec![z, o, o, z]
}

fn excited() -> Vec<C64> {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    vec![z, z, z, o]
}

/// `C(t_n)` with `μ = σ_x` and `ρ_0 = |2⟩⟨2|`.
pub fn correlation(source: &Source, mode: CorrelationMode) -> Result<Vec<C64>> {
    match source {
        Source::Ensembles { sets, estimator, .. } => Ok(correlation_function(sets, &sigma_x(), mode, *estimator)?),
        Source::Heom { heom, grid, substeps, dim } => {
            if mode == CorrelationMode::PaperLiteral {
                return Err(CliError::Domain("the paper-literal correlation needs stochastic ensembles".into()));
            }
            Ok(heom_correlation(heom, &sigma_x(), &excited(), *dim, grid, *substeps)?)
        }
    }
}

pub fn frequencies(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) {
        return Err(CliError::Domain(format!("empty frequency grid [{min}, {max}] with step {step}")));
    }
    let n = ((max - min) / step).round() as usize;
    Ok((0..=n).map(|i| min + step * i as f64).collect())
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let source = load_source(&a.source)?;
    let mode = match a.corr_mode {
        CorrModeArg::MuInserted => CorrelationMode::MuInserted,
        CorrModeArg::PaperLiteral => CorrelationMode::PaperLiteral,
    };
    let grid = *source.grid();
    let c = correlation(&source, mode)?;
    let n_window = (a.window * grid.n_steps as f64).round() as usize;
    let omegas = frequencies(a.omega_min, a.omega_max, a.omega_step)?;
    let spec = absorption_spectrum(&c, grid.dt, n_window, &omegas)?;
    let peak = omegas
        .iter()
        .zip(&spec)
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(w, _)| *w)
        .unwrap_or(f64::NAN);
    let mut table = Table::new(&["omega", "spectrum"]);
    table
        .meta("source", source.name())
        .meta("correlation", serde_json::to_value(mode)?.as_str().unwrap_or_default())
        .meta("window_points", n_window)
        .meta("dt", grid.dt)
        .meta("peak", peak);
    table.rows = omegas.iter().zip(&spec).map(|(&w, &s)| vec![w, s]).collect();
    table.save(&a.out)?;
    if let Some(path) = &a.corr_out {
        let mut ct = Table::new(&["t", "re_c", "im_c"]);
        ct.meta("source", source.name());
        ct.rows = c.iter().enumerate().map(|(n, z)| vec![grid.t(n), z.re, z.im]).collect();
        ct.save(path)?;
    }
    println!("{}", json!({ "peak": peak, "window_points": n_window }));
    Ok(())
}

pub fn build_maps(source: &Source) -> Result<DynamicalMap> {
    match source {
        Source::Ensembles { grid, sets, estimator } => Ok(ensemble_maps(sets, *estimator, grid.dt)?),
        Source::Heom { heom, grid, substeps, .. } => Ok(heom_maps(heom, grid, *substeps)?),
    }
}

pub fn maps(a: &MapsArgs) -> Result<()> {
    let source = load_source(&a.source)?;
    let maps = build_maps(&source)?;
    ensure_parent(&a.out)?;
    save_maps(&a.out, &maps, source.grid().dt).at(&a.out)?;
    println!("{}", json!({ "maps": maps.maps.len(), "source": maps.source }));
    Ok(())
}

/// Largest deviation between the TTM trajectory and `E_n ρ_0` for
/// `n ∈ range` (1-based).
pub fn map_error(
    maps: &DynamicalMap,
    traj: &nmqd_core::heom::DensityTrajectory,
    rho0: &[C64],
    range: std::ops::RangeInclusive<usize>,
) -> f64 {
    let v = nalgebra::DVector::from_column_slice(rho0);
    let last = (*range.end()).min(maps.maps.len()).min(traj.len().saturating_sub(1));
    maps.maps
        .iter()
        .enumerate()
        .skip(range.start().saturating_sub(1))
        .take(last.saturating_sub(range.start().saturating_sub(1)))
        .map(|(k, e)| {
            let direct = e * &v;
            direct.iter().zip(traj.at(k + 1)).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

pub fn ttm(a: &TtmArgs) -> Result<()> {
    let (maps, dt) = load_maps(&a.maps).at(&a.maps)?;
    let tensors = transfer_tensors(&maps, a.cutoff)?;
    let rho0 = parse_density(&a.init, maps.dim)?;
    let n_long = (a.tmax / dt).round() as usize;
    let traj = ttm_propagate(&tensors, &rho0, n_long, dt)?;
    let err = map_error(&maps, &traj, &rho0, 1..=a.cutoff);
    let beyond = map_error(&maps, &traj, &rho0, a.cutoff + 1..=maps.maps.len());
    let mut table = density_table(&traj, None)?;
    table
        .meta("source", format!("ttm/{}", maps.source))
        .meta("cutoff", a.cutoff)
        .meta("dt", dt)
        .meta("init", &a.init)
        .meta("window_error", err)
        .meta("beyond_cutoff_error", beyond);
    table.save(&a.out)?;
    if let Some(path) = &a.tensors_out {
        let header = SuperoperatorHeader {
            kind: "tensors".into(),
            convention: "row-major".into(),
            source: maps.source.clone(),
            dim: maps.dim,
            dt,
            cutoff: Some(a.cutoff),
        };
        ensure_parent(path)?;
        save_superoperators(path, &header, &tensors).at(path)?;
    }
    println!("{}", json!({ "points": traj.len(), "window_error": err, "beyond_cutoff_error": beyond }));
    Ok(())
}
