pub mod apps;
pub mod learn;
pub mod physics;

use std::path::Path;

use crate::args::*;
use crate::error::Result;
use crate::manifest::Touched;

/// Files read and written by a command, known before it runs.
pub fn touched(cmd: &Command) -> Result<Touched> {
    fn p(x: &Path) -> &Path {
        x
    }
    Ok(match cmd {
        Command::Bath(BathCommand::Decompose(a)) => Touched::new(&[], &[p(&a.out)]),
        Command::Bath(BathCommand::Validate(a)) => Touched::new(&[p(&a.modes)], &[]).output(a.out.as_deref()),
        Command::Noise(NoiseCommand::Sample(a)) => Touched::new(&[p(&a.modes)], &[p(&a.out)]),
        Command::Hops(HopsCommand::Gen(a)) => Touched::new(&[p(&a.modes), p(&a.noise)], &[p(&a.out)]),
        Command::Heom(HeomCommand::Run(a)) => Touched::new(&[p(&a.modes)], &[p(&a.out)]),
        Command::Train(a) => {
            let mut t = Touched::new(&[p(&a.data)], &[p(&a.out)]).output(a.log_out.as_deref());
            t.inputs.extend(a.resume.clone());
            t
        }
        Command::Validate(a) => Touched::new(&[p(&a.model), p(&a.data)], &[p(&a.out)]),
        Command::Apps(AppsCommand::Operators(a)) => Touched::new(&[p(&a.model), p(&a.data)], &[p(&a.out)]),
        Command::Apps(AppsCommand::Density(a)) => source_touched(&a.source, &a.out)?,
        Command::Apps(AppsCommand::Spectrum(a)) => source_touched(&a.source, &a.out)?.output(a.corr_out.as_deref()),
        Command::Apps(AppsCommand::Maps(a)) => source_touched(&a.source, &a.out)?,
        Command::Apps(AppsCommand::Ttm(a)) => Touched::new(&[p(&a.maps)], &[p(&a.out)]).output(a.tensors_out.as_deref()),
        Command::Repro(a) => Touched { inputs: Vec::new(), outputs: crate::repro::outputs(a) },
    })
}

fn source_touched(s: &SourceArgs, out: &Path) -> Result<Touched> {
    let src = apps::source_path(s)?;
    Ok(Touched::new(&[src.as_path()], &[out]))
}

pub fn dispatch(cmd: &Command, base_seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::Bath(BathCommand::Decompose(a)) => physics::bath_decompose(a),
        Command::Bath(BathCommand::Validate(a)) => physics::bath_validate(a),
        Command::Noise(NoiseCommand::Sample(a)) => physics::noise_sample(a, base_seed),
        Command::Hops(HopsCommand::Gen(a)) => physics::hops_gen(a),
        Command::Heom(HeomCommand::Run(a)) => physics::heom_run(a),
        Command::Train(a) => learn::train(a, base_seed),
        Command::Validate(a) => learn::validate(a),
        Command::Apps(AppsCommand::Operators(a)) => learn::operators(a),
        Command::Apps(AppsCommand::Density(a)) => apps::density(a),
        Command::Apps(AppsCommand::Spectrum(a)) => apps::spectrum(a),
        Command::Apps(AppsCommand::Maps(a)) => apps::maps(a),
        Command::Apps(AppsCommand::Ttm(a)) => apps::ttm(a),
        Command::Repro(a) => crate::repro::repro(a),
    }
}
