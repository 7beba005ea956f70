use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, OrderStudyArgs, ShadowArgs, SolveArgs};

/// A fully resolved invocation, written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub threads: u64,
    pub run: Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Run {
    Solve(SolveArgs),
    OrderStudy(OrderStudyArgs),
    Bench(BenchArgs),
    Shadow(ShadowArgs),
}

impl RunManifest {
    pub fn new(threads: u64, run: Run) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            run,
        }
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<(), String> {
        let text = toml::to_string(self).map_err(|e| e.to_string())?;
        fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
    }

    /// Point every output path at `dir`, keeping file names.
    pub fn redirect(&mut self, dir: &Path) {
        let move_to = |p: &mut PathBuf| {
            if let Some(name) = p.file_name() {
                *p = dir.join(name);
            }
        };
        match &mut self.run {
            Run::Solve(a) => move_to(&mut a.out),
            Run::Shadow(a) => move_to(&mut a.out),
            Run::OrderStudy(a) => a
                .out_csv
                .iter_mut()
                .chain(&mut a.plot_data)
                .for_each(move_to),
            Run::Bench(a) => a.out_csv.iter_mut().for_each(move_to),
        }
    }
}

/// `<output>.manifest.toml`.
pub fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, "manifest.toml")
}

pub fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
