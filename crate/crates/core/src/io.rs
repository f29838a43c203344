//! The NMQD container: magic `NMQD`, a `u16` version, a length-prefixed JSON
//! header and length-prefixed little-endian `f64` records. Complex arrays are
//! stored as interleaved `(re, im)` pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::apps::{DynamicalMap, OperatorTrajectory};
use crate::error::{Error, Result};
use crate::hops::{Dataset, HopsMode, StateTrajectory};
use crate::noise::{NoiseTrajectory, TimeGrid};
use crate::system::SystemSpec;
use crate::C64;

pub const MAGIC: &[u8; 4] = b"NMQD";
pub const VERSION: u16 = 1;

pub fn complex_to_f64(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn f64_to_complex(x: &[f64]) -> Result<Vec<C64>> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::Format("complex record has an odd number of reals".into()));
    }
    Ok(x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
}

pub fn write_container<W: Write, H: Serialize>(w: &mut W, header: &H, records: &[Vec<f64>]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        w.write_all(&(r.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(r.len() * 8);
        for x in r {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_container<R: Read, H: DeserializeOwned>(r: &mut R) -> Result<(H, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing NMQD magic".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v).map_err(truncated)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported NMQD version {version}")));
    }
    let len = read_u64(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(truncated)?;
    let header = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let count = read_u64(r)? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = read_u64(r)? as usize;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes).map_err(truncated)?;
        records.push(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect());
    }
    Ok((header, records))
}

pub fn save<H: Serialize>(path: &Path, header: &H, records: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, header, records)?;
    w.flush()?;
    Ok(())
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_container(&mut r)
}

fn check_kind(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!("expected a {expected} file, found {found}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseHeader {
    pub kind: String,
    pub grid: TimeGrid,
    pub bath_id: String,
    pub count: usize,
    pub base_seed: u64,
    pub indices: Vec<u64>,
}

pub fn save_noise(path: &Path, grid: &TimeGrid, noise: &[NoiseTrajectory]) -> Result<()> {
    let header = NoiseHeader {
        kind: "noise".into(),
        grid: *grid,
        bath_id: noise.first().map(|z| z.bath_id.clone()).unwrap_or_default(),
        count: noise.len(),
        base_seed: noise.first().map_or(0, |z| z.base_seed),
        indices: noise.iter().map(|z| z.index).collect(),
    };
    let records: Vec<Vec<f64>> = noise.iter().map(|z| complex_to_f64(&z.z)).collect();
    save(path, &header, &records)
}

pub fn load_noise(path: &Path) -> Result<(NoiseHeader, Vec<NoiseTrajectory>)> {
    let (header, records): (NoiseHeader, _) = load(path)?;
    check_kind(&header.kind, "noise")?;
    if records.len() != header.count || header.indices.len() != header.count {
        return Err(Error::Format("noise record count does not match the header".into()));
    }
    let noise = records
        .iter()
        .zip(&header.indices)
        .map(|(r, &index)| {
            let z = f64_to_complex(r)?;
            if z.len() != header.grid.points() {
                return Err(Error::Format("noise record length does not match the grid".into()));
            }
            Ok(NoiseTrajectory { z, base_seed: header.base_seed, index, bath_id: header.bath_id.clone() })
        })
        .collect::<Result<_>>()?;
    Ok((header, noise))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub seed: u64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureMeta {
    pub label: String,
    pub seed: u64,
    pub step: usize,
}

/// Each dataset record is stored as two blobs: the states `(N+1) × N_s`
/// followed by the noise `z` that drove them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    pub system: SystemSpec,
    pub modes_id: String,
    pub grid: TimeGrid,
    pub k: usize,
    pub depth: usize,
    pub mode: HopsMode,
    pub substeps: usize,
    pub n_train: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub records: Vec<RecordMeta>,
    pub failures: Vec<FailureMeta>,
}

/// A dataset together with the noise of every record.
#[derive(Clone, Debug)]
pub struct StoredDataset {
    pub header: DatasetHeader,
    pub states: Vec<StateTrajectory>,
    pub noise: Vec<Vec<C64>>,
}

impl StoredDataset {
    pub fn split(&self, validation: bool) -> Vec<(&StateTrajectory, &[C64])> {
        let idx = if validation { &self.header.validation } else { &self.header.train };
        idx.iter().map(|&i| (&self.states[i], self.noise[i].as_slice())).collect()
    }
}

pub struct DatasetSettings<'a> {
    pub system: &'a SystemSpec,
    pub modes_id: &'a str,
    pub grid: &'a TimeGrid,
    pub k: usize,
    pub depth: usize,
    pub mode: HopsMode,
    pub substeps: usize,
}

pub fn save_dataset(path: &Path, settings: &DatasetSettings, data: &Dataset, noise: &[NoiseTrajectory]) -> Result<()> {
    let by_index: std::collections::HashMap<u64, &NoiseTrajectory> = noise.iter().map(|z| (z.index, z)).collect();
    let mut records = Vec::with_capacity(2 * data.records.len());
    for r in &data.records {
        let z = by_index
            .get(&r.seed)
            .ok_or_else(|| Error::Shape(format!("no noise trajectory with index {}", r.seed)))?;
        records.push(complex_to_f64(&r.psi));
        records.push(complex_to_f64(&z.z));
    }
    let (train, validation): (Vec<usize>, Vec<usize>) = (0..data.records.len()).partition(|&i| data.records[i].seed < data.n_train);
    let header = DatasetHeader {
        kind: "dataset".into(),
        system: settings.system.clone(),
        modes_id: settings.modes_id.into(),
        grid: *settings.grid,
        k: settings.k,
        depth: settings.depth,
        mode: settings.mode,
        substeps: settings.substeps,
        n_train: data.n_train,
        train,
        validation,
        records: data.records.iter().map(|r| RecordMeta { seed: r.seed, label: r.label.clone() }).collect(),
        failures: data
            .failures
            .iter()
            .map(|(label, seed, step)| FailureMeta { label: label.clone(), seed: *seed, step: *step })
            .collect(),
    };
    save(path, &header, &records)
}

pub fn load_dataset(path: &Path) -> Result<StoredDataset> {
    let (header, records): (DatasetHeader, _) = load(path)?;
    check_kind(&header.kind, "dataset")?;
    if records.len() != 2 * header.records.len() {
        return Err(Error::Format("dataset record count does not match the header".into()));
    }
    let d = header.system.dim;
    let points = header.grid.points();
    let mut states = Vec::with_capacity(header.records.len());
    let mut noise = Vec::with_capacity(header.records.len());
    for (meta, pair) in header.records.iter().zip(records.chunks_exact(2)) {
        let psi = f64_to_complex(&pair[0])?;
        let z = f64_to_complex(&pair[1])?;
        if psi.len() != points * d || z.len() != points {
            return Err(Error::Format("dataset record length does not match the grid".into()));
        }
        states.push(StateTrajectory { dim: d, psi, seed: meta.seed, label: meta.label.clone(), mode: header.mode, failed_at: None });
        noise.push(z);
    }
    if header.train.iter().chain(&header.validation).any(|&i| i >= states.len()) {
        return Err(Error::Format("split index out of range".into()));
    }
    Ok(StoredDataset { header, states, noise })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorHeader {
    pub kind: String,
    pub dim: usize,
    pub grid: TimeGrid,
    pub mode: HopsMode,
    pub model_id: String,
    pub records: Vec<RecordMeta>,
}

pub fn save_operators(path: &Path, grid: &TimeGrid, model_id: &str, ops: &[OperatorTrajectory]) -> Result<()> {
    let first = ops.first().ok_or_else(|| Error::Shape("no operator trajectories to write".into()))?;
    let header = OperatorHeader {
        kind: "operators".into(),
        dim: first.dim,
        grid: *grid,
        mode: first.mode,
        model_id: model_id.into(),
        records: ops.iter().map(|o| RecordMeta { seed: o.seed, label: o.label.clone() }).collect(),
    };
    let records: Vec<Vec<f64>> = ops.iter().map(|o| complex_to_f64(&o.u)).collect();
    save(path, &header, &records)
}

pub fn load_operators(path: &Path) -> Result<(OperatorHeader, Vec<OperatorTrajectory>)> {
    let (header, records): (OperatorHeader, _) = load(path)?;
    check_kind(&header.kind, "operators")?;
    if records.len() != header.records.len() {
        return Err(Error::Format("operator record count does not match the header".into()));
    }
    let ops = header
        .records
        .iter()
        .zip(&records)
        .map(|(meta, r)| {
            let u = f64_to_complex(r)?;
            if u.len() != header.grid.n_steps * header.dim * header.dim {
                return Err(Error::Format("operator record length does not match the grid".into()));
            }
            Ok(OperatorTrajectory { dim: header.dim, u, label: meta.label.clone(), seed: meta.seed, mode: header.mode })
        })
        .collect::<Result<_>>()?;
    Ok((header, ops))
}

/// Header of map and tensor files; matrices act on row-major `vec(ρ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperoperatorHeader {
    pub kind: String,
    pub convention: String,
    pub source: String,
    pub dim: usize,
    pub dt: f64,
    pub cutoff: Option<usize>,
}

fn matrix_to_f64(m: &DMatrix<C64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n * m.ncols()).flat_map(|k| [m[(k / n, k % n)].re, m[(k / n, k % n)].im]).collect()
}

fn f64_to_matrix(x: &[f64], n: usize) -> Result<DMatrix<C64>> {
    let z = f64_to_complex(x)?;
    if z.len() != n * n {
        return Err(Error::Format("superoperator has the wrong size".into()));
    }
    Ok(DMatrix::from_row_slice(n, n, &z))
}

pub fn save_superoperators(path: &Path, header: &SuperoperatorHeader, mats: &[DMatrix<C64>]) -> Result<()> {
    let records: Vec<Vec<f64>> = mats.iter().map(matrix_to_f64).collect();
    save(path, header, &records)
}

pub fn load_superoperators(path: &Path, kind: &str) -> Result<(SuperoperatorHeader, Vec<DMatrix<C64>>)> {
    let (header, records): (SuperoperatorHeader, Vec<Vec<f64>>) = load(path)?;
    check_kind(&header.kind, kind)?;
    if header.convention != "row-major" {
        return Err(Error::Format(format!("unsupported vectorization {}", header.convention)));
    }
    let n = header.dim * header.dim;
    let mats = records.iter().map(|r| f64_to_matrix(r, n)).collect::<Result<_>>()?;
    Ok((header, mats))
}

pub fn save_maps(path: &Path, maps: &DynamicalMap, dt: f64) -> Result<()> {
    let header = SuperoperatorHeader {
        kind: "maps".into(),
        convention: "row-major".into(),
        source: maps.source.clone(),
        dim: maps.dim,
        dt,
        cutoff: None,
    };
    save_superoperators(path, &header, &maps.maps)
}

pub fn load_maps(path: &Path) -> Result<(DynamicalMap, f64)> {
    let (h, maps) = load_superoperators(path, "maps")?;
    Ok((DynamicalMap { dim: h.dim, maps, source: h.source }, h.dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn container_round_trip() {
        let header = serde_json::json!({"kind": "test", "x": 1.5});
        let records = vec![vec![1.0, -2.5, f64::MIN_POSITIVE], vec![], vec![std::f64::consts::PI]];
        let mut buf = Vec::new();
        write_container(&mut buf, &header, &records).unwrap();
        assert_eq!(&buf[..4], b"NMQD");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), VERSION);
        let (h, r): (serde_json::Value, _) = read_container(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(h, header);
        assert_eq!(r, records);
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut buf = Vec::new();
        write_container(&mut buf, &serde_json::json!({}), &[vec![1.0, 2.0]]).unwrap();
        let short = &buf[..buf.len() - 3];
        let err = read_container::<_, serde_json::Value>(&mut Cursor::new(short)).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_container::<_, serde_json::Value>(&mut Cursor::new(&bad)), Err(Error::Format(_))));
        let mut ver = buf;
        ver[4] = 9;
        assert!(matches!(read_container::<_, serde_json::Value>(&mut Cursor::new(&ver)), Err(Error::Format(_))));
    }

    #[test]
    fn complex_packing() {
        let z = vec![C64::new(1.0, -1.0), C64::new(0.25, 3.0)];
        assert_eq!(complex_to_f64(&z), vec![1.0, -1.0, 0.25, 3.0]);
        assert_eq!(f64_to_complex(&complex_to_f64(&z)).unwrap(), z);
        assert!(f64_to_complex(&[1.0]).is_err());
    }

    #[test]
    fn superoperator_layout_is_row_major() {
        let m = DMatrix::from_fn(4, 4, |i, j| C64::new((i * 4 + j) as f64, 0.0));
        let flat = matrix_to_f64(&m);
        assert_eq!(flat[2], 1.0);
        assert_eq!(flat[8], 4.0);
        assert_eq!(f64_to_matrix(&flat, 4).unwrap(), m);
    }
}
