use std::path::Path;

use nmqd_core::apps::OperatorTrajectory;
use nmqd_core::hops::StateTrajectory;
use nmqd_core::io::{load_dataset, save_operators, StoredDataset};
use nmqd_core::C64;
use nmqd_neural::checkpoint::{self, Checkpoint};
use nmqd_neural::encode::{encode_input, Sample};
use nmqd_neural::metric::error_metric;
use nmqd_neural::train::{predict_all, train as run_training, AdamW, EpochLog, TrainConfig};
use nmqd_neural::{ArchConfig, Error as NeuralError, Model, ModelParams};
use rayon::prelude::*;
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, PathContext, Result};
use crate::output::{ensure_parent, sha256_file, Table};
use crate::states::parse_state;

pub fn load_data(path: &Path) -> Result<StoredDataset> {
    load_dataset(path).at(path)
}

pub fn records(data: &StoredDataset, split: Split) -> Vec<(&StateTrajectory, &[C64])> {
    match split {
        Split::Train => data.split(false),
        Split::Validation => data.split(true),
        Split::All => data.states.iter().zip(&data.noise).map(|(s, z)| (s, z.as_slice())).collect(),
    }
}

pub fn samples(data: &StoredDataset, split: Split) -> Result<Vec<Sample>> {
    records(data, split)
        .into_iter()
        .map(|(traj, z)| Ok(Sample::new(&data.header.grid, z, traj)?))
        .collect()
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint::load(path).at(path)
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ensure_parent(path)?;
    checkpoint::save(path, ckpt).at(path)
}

pub fn arch_for(a: &TrainArgs, seq_len: usize, dim: usize) -> ArchConfig {
    let mut arch = match a.arch {
        ArchArg::Paper => ArchConfig::paper(seq_len, dim),
        ArchArg::Tiny => ArchConfig::tiny(seq_len, dim),
    };
    if let Some(m) = a.n_modes {
        arch.n_modes = m;
    }
    if let Some(l) = a.latent {
        arch.latent_dim = l;
        arch.projection_hidden = 2 * l;
    }
    arch
}

fn log_table(log: &[EpochLog]) -> Table {
    let mut t = Table::new(&["epoch", "steps", "train_loss", "validation_loss"]);
    t.rows = log
        .iter()
        .map(|e| vec![e.epoch as f64, e.steps as f64, e.train_loss, e.validation_loss.unwrap_or(f64::NAN)])
        .collect();
    t
}

pub fn train(a: &TrainArgs, base_seed: Option<u64>) -> Result<()> {
    let data = load_data(&a.data)?;
    let dataset_hash = sha256_file(&a.data)?;
    let train_set = samples(&data, Split::Train)?;
    let validation = samples(&data, Split::Validation)?;
    let seed = a.seed.or(base_seed).unwrap_or(0);
    let (params, optimizer, prior) = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let n = ckpt.params.count();
            (ckpt.params, ckpt.optimizer.unwrap_or_else(|| AdamW::new(n)), ckpt.log)
        }
        None => {
            let arch = arch_for(a, data.header.grid.n_steps, data.header.system.dim);
            let params = ModelParams::init(&arch, seed)?;
            let n = params.count();
            (params, AdamW::new(n), Vec::new())
        }
    };
    let model = Model::new(&params.arch)?;
    let cfg = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        weight_decay: a.weight_decay,
        seed,
        max_steps: a.max_steps,
        validate_every: a.validate_every,
        schedule: a.schedule,
        ..TrainConfig::default()
    };
    let offset = prior.len();
    let checkpoint_at = |params: &ModelParams, opt: Option<&AdamW>, log: Vec<EpochLog>| Checkpoint {
        params: params.clone(),
        optimizer: opt.cloned(),
        dataset_hash: dataset_hash.clone(),
        train: Some(cfg.clone()),
        log,
    };
    let mut running = prior;
    let result = run_training(&model, params, optimizer, &train_set, &validation, &cfg, |entry, p, opt| {
        let mut e = entry.clone();
        e.epoch += offset;
        running.push(e);
        if a.checkpoint_every.is_some_and(|k| k > 0 && running.len() % k == 0) {
            save_checkpoint(&a.out, &checkpoint_at(p, Some(opt), running.clone()))
                .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    });
    let outcome = match result {
        Ok(o) => o,
        Err(NeuralError::Divergence { epoch, last_good }) => {
            save_checkpoint(&a.out, &checkpoint_at(&last_good, None, running.clone()))?;
            return Err(CliError::Domain(format!(
                "training diverged at epoch {}; last good parameters written to {}",
                epoch + offset,
                a.out.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let log = running;
    save_checkpoint(&a.out, &checkpoint_at(&outcome.params, Some(&outcome.optimizer), log.clone()))?;
    if let Some(path) = &a.log_out {
        log_table(&log).save(path)?;
    }
    let last = log.last();
    println!(
        "{}",
        json!({
            "parameters": outcome.params.count(),
            "epochs": log.len(),
            "steps": outcome.optimizer.step,
            "train_loss": last.map(|e| e.train_loss),
            "validation_loss": last.and_then(|e| e.validation_loss),
            "model": outcome.params.id(),
        })
    );
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let set = samples(&data, a.split)?;
    if set.is_empty() {
        return Err(CliError::Domain("no records in the requested split".into()));
    }
    let model = Model::new(&ckpt.params.arch)?;
    let ops = predict_all(&model, &ckpt.params.theta, &set)?;
    let report = error_metric(&ops, &set, a.reducer, a.metric_raw)?;
    let dt = data.header.grid.dt;
    let mut table = Table::new(&["t", "L"]);
    table
        .meta("model", ckpt.params.id())
        .meta("reducer", serde_json::to_value(a.reducer)?.as_str().unwrap_or_default())
        .meta("normalized", !a.metric_raw)
        .meta("used", report.used)
        .meta("excluded", report.excluded);
    table.rows = report.values.iter().enumerate().map(|(n, &l)| vec![(n + 1) as f64 * dt, l]).collect();
    table.save(&a.out)?;
    let mean = report.values.iter().sum::<f64>() / report.values.len().max(1) as f64;
    println!("{}", json!({ "used": report.used, "excluded": report.excluded, "time_average": mean }));
    Ok(())
}

/// Operator sequences for the chosen records: for each record's own initial
/// state, or for every state in `inits` when it is non-empty.
pub fn predict_operators(
    ckpt: &Checkpoint,
    data: &StoredDataset,
    split: Split,
    inits: &[(String, Vec<C64>)],
) -> Result<Vec<OperatorTrajectory>> {
    let model = Model::new(&ckpt.params.arch)?;
    let grid = &data.header.grid;
    let mut jobs: Vec<(String, u64, Vec<C64>, &[C64])> = Vec::new();
    for (traj, z) in records(data, split) {
        if inits.is_empty() {
            jobs.push((traj.label.clone(), traj.seed, traj.state(0).to_vec(), z));
        } else {
            jobs.extend(inits.iter().map(|(l, psi)| (l.clone(), traj.seed, psi.clone(), z)));
        }
    }
    let mode = data.header.mode;
    jobs.par_iter()
        .map(|(label, seed, psi0, z)| {
            let x = encode_input(grid, z, psi0)?;
            let u = model.operators(&model.forward(&ckpt.params.theta, x.view())?);
            Ok(OperatorTrajectory { dim: psi0.len(), u, label: label.clone(), seed: *seed, mode })
        })
        .collect()
}

pub fn operators(a: &OperatorsArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let inits = a
        .init
        .iter()
        .map(|s| parse_state(s, data.header.system.dim))
        .collect::<Result<Vec<_>>>()?;
    let ops = predict_operators(&ckpt, &data, a.split, &inits)?;
    ensure_parent(&a.out)?;
    save_operators(&a.out, &data.header.grid, &ckpt.params.id(), &ops).at(&a.out)?;
    println!("{}", json!({ "operators": ops.len(), "model": ckpt.params.id() }));
    Ok(())
}
