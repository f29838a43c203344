//! Run manifests: the resolved command line plus hashes of every file read
//! and written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PathContext, Result};
use crate::output::{ensure_parent, sha256_file};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Arguments after the program name, config file already inlined.
    pub command: Vec<String>,
    /// Parsed arguments with every default filled in.
    pub config: serde_json::Value,
    pub deterministic: bool,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

/// Files a command touched.
#[derive(Debug, Default)]
pub struct Touched {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Touched {
    pub fn new(inputs: &[&Path], outputs: &[&Path]) -> Self {
        Touched {
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
        }
    }

    pub fn output(mut self, p: Option<&Path>) -> Self {
        self.outputs.extend(p.map(Path::to_path_buf));
        self
    }
}

pub fn hashes(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((p.display().to_string(), sha256_file(p)?))).collect()
}

/// `<first output>.manifest.json`.
pub fn manifest_path(first_output: &Path) -> PathBuf {
    let mut s = first_output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
