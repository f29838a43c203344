//! Plot-ready CSV with `#` metadata lines, and content hashes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, PathContext, Result};

pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        fs::write(path, self.render()).at(path)
    }

    pub fn load(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path).at(path)?;
        let mut table = Table::new(&[]);
        let mut header = false;
        for line in text.lines() {
            if let Some(m) = line.strip_prefix("# ") {
                if let Some((k, v)) = m.split_once(": ") {
                    table.meta.push((k.into(), v.into()));
                }
            } else if !header {
                table.columns = line.split(',').map(String::from).collect();
                header = true;
            } else if !line.is_empty() {
                let row = line
                    .split(',')
                    .map(|c| c.parse::<f64>().map_err(|_| CliError::Domain(format!("{}: bad cell '{c}'", path.display()))))
                    .collect::<Result<Vec<f64>>>()?;
                table.rows.push(row);
            }
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Domain(format!("no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).at(dir),
        _ => Ok(()),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).at(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Column names `re_ij`, `im_ij` for a `dim × dim` matrix, 1-based.
pub fn matrix_columns(dim: usize) -> Vec<String> {
    (0..dim * dim)
        .flat_map(|k| {
            let (i, j) = (k / dim + 1, k % dim + 1);
            [format!("re_{i}{j}"), format!("im_{i}{j}")]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/t.csv");
        let mut t = Table::new(&["t", "x"]);
        t.meta("source", "heom");
        t.rows = vec![vec![0.0, 0.1], vec![0.01, -1e-300]];
        t.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# source: heom\nt,x\n"));
        let back = Table::load(&path).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.column("x").unwrap(), vec![0.1, -1e-300]);
        assert_eq!(back.meta, t.meta);
        assert_eq!(matrix_columns(2)[2], "re_12");
    }
}
