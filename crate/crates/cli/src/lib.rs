//! The `nmqd` command line: bath → noise → hops/heom → train → validate →
//! apps, with TOML configuration and run manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod repro;
pub mod states;

use std::ffi::OsString;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, Result};
use crate::manifest::{hashes, manifest_path, Manifest};

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    match execute(argv.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            if let CliError::Usage(text) = &e {
                eprint!("{text}");
                if !text.ends_with('\n') {
                    eprintln!();
                }
            }
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn parse(argv: &[String]) -> Result<Option<Cli>> {
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{}", e.render());
            Ok(None)
        }
        Err(e) => Err(CliError::Usage(e.render().to_string())),
    }
}

/// Parses, runs and records one command. The manifest sits next to the
/// first output file.
pub fn execute(argv: Vec<OsString>) -> Result<()> {
    let argv = config::expand(argv)?;
    let Some(cli) = parse(&argv)? else {
        return Ok(());
    };
    if let Some(n) = cli.global.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Repro(a) = &cli.command {
        if let Some(path) = &a.manifest {
            return repro::rerun(path);
        }
    }
    let touched = commands::touched(&cli.command)?;
    let inputs = hashes(&touched.inputs)?;
    let start = Instant::now();
    commands::dispatch(&cli.command, cli.global.base_seed)?;
    let Some(first) = touched.outputs.first() else {
        return Ok(());
    };
    let manifest = Manifest {
        tool: "nmqd".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: argv[1..].to_vec(),
        config: serde_json::json!({ "global": cli.global, "command": cli.command }),
        deterministic: cli.global.deterministic,
        inputs,
        outputs: hashes(&touched.outputs)?,
        elapsed_seconds: (!cli.global.deterministic).then(|| start.elapsed().as_secs_f64()),
    };
    manifest.save(&manifest_path(first))
}
