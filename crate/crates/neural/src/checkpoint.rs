//! Checkpoints: NMQD container whose JSON header names every tensor, followed
//! by the weights (and optionally both Adam moments) in declared order.

use std::path::Path;

use nmqd_core::io;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, Layout, ModelParams};
use crate::error::{Error, Result};
use crate::train::{AdamW, EpochLog, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub arch: ArchConfig,
    pub seed: u64,
    pub dataset_hash: String,
    pub optimizer_moments: bool,
    pub optimizer_step: u64,
    pub train: Option<TrainConfig>,
    pub log: Vec<EpochLog>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<AdamW>,
    pub dataset_hash: String,
    pub train: Option<TrainConfig>,
    pub log: Vec<EpochLog>,
}

fn split(layout: &Layout, flat: &[f64]) -> Vec<Vec<f64>> {
    layout.tensors().iter().map(|(_, off, len)| flat[*off..off + len].to_vec()).collect()
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let layout = Layout::new(&ckpt.params.arch);
    let tensors = layout.tensors();
    let header = CheckpointHeader {
        kind: "checkpoint".into(),
        arch: ckpt.params.arch.clone(),
        seed: ckpt.params.seed,
        dataset_hash: ckpt.dataset_hash.clone(),
        optimizer_moments: ckpt.optimizer.is_some(),
        optimizer_step: ckpt.optimizer.as_ref().map_or(0, |o| o.step),
        train: ckpt.train.clone(),
        log: ckpt.log.clone(),
        tensors: tensors.iter().map(|(name, _, len)| TensorEntry { name: name.clone(), len: *len }).collect(),
    };
    let mut blobs = split(&layout, &ckpt.params.theta);
    if let Some(opt) = &ckpt.optimizer {
        blobs.extend(split(&layout, &opt.m));
        blobs.extend(split(&layout, &opt.v));
    }
    io::save(path, &header, &blobs)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let (header, blobs): (CheckpointHeader, Vec<Vec<f64>>) = io::load(path)?;
    if header.kind != "checkpoint" {
        return Err(Error::Checkpoint(format!("expected a checkpoint, found {}", header.kind)));
    }
    header.arch.validate()?;
    let layout = Layout::new(&header.arch);
    let declared = layout.tensors();
    let n = declared.len();
    let expected = if header.optimizer_moments { 3 * n } else { n };
    if blobs.len() != expected || header.tensors.len() != n {
        return Err(Error::Checkpoint("tensor count does not match the architecture".into()));
    }
    for ((name, _, len), entry) in declared.iter().zip(&header.tensors) {
        if *name != entry.name || *len != entry.len {
            return Err(Error::Checkpoint(format!("tensor {} does not match the architecture", entry.name)));
        }
    }
    let join = |part: &[Vec<f64>]| -> Result<Vec<f64>> {
        let mut flat = Vec::with_capacity(layout.total);
        for (blob, (name, _, len)) in part.iter().zip(&declared) {
            if blob.len() != *len {
                return Err(Error::Checkpoint(format!("tensor {name} has {} values, expected {len}", blob.len())));
            }
            flat.extend_from_slice(blob);
        }
        Ok(flat)
    };
    let theta = join(&blobs[..n])?;
    let optimizer = if header.optimizer_moments {
        Some(AdamW { m: join(&blobs[n..2 * n])?, v: join(&blobs[2 * n..])?, step: header.optimizer_step })
    } else {
        None
    };
    Ok(Checkpoint {
        params: ModelParams { arch: header.arch, theta, seed: header.seed },
        optimizer,
        dataset_hash: header.dataset_hash,
        train: header.train,
        log: header.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_moments() {
        let dir = std::env::temp_dir().join(format!("nmqd-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let arch = ArchConfig::tiny(32, 2);
        let params = ModelParams::init(&arch, 11).unwrap();
        let mut opt = AdamW::new(params.count());
        opt.m[3] = 0.25;
        opt.v[7] = 1e-9;
        opt.step = 42;
        for optimizer in [None, Some(opt)] {
            let ckpt = Checkpoint { params: params.clone(), optimizer: optimizer.clone(), dataset_hash: "abc".into(), train: None, log: vec![] };
            let path = dir.join("m.ckpt");
            save(&path, &ckpt).unwrap();
            let back = load(&path).unwrap();
            assert_eq!(back.params, params);
            assert_eq!(back.optimizer, optimizer);
            assert_eq!(back.dataset_hash, "abc");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
