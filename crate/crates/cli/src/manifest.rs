use std::path::{Path, PathBuf};

use ergoflow::solver::SolverConfig;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the command, input file contents, parameters and
    /// solver configuration.
    pub input_digest: String,
    pub config: SolverConfig,
    pub outputs: Vec<String>,
    pub wall_time: f64,
    pub version: String,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
