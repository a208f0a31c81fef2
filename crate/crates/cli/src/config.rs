//! Optional TOML config file. Keys mirror the command-line flags (with
//! underscores); any flag given on the command line wins.
//!
//! ```toml
//! scenario = "m2-demo"
//! windows = 100000
//! window_ns = 1000
//! rule = "random"          # random | round-robin | fixed:X,Y
//! seed = 7
//! detection_rate = 1.0
//! out_dir = "runs/m2"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<String>,
    pub model: Option<PathBuf>,
    pub p_same: Option<f64>,
    pub flip_second: Option<bool>,
    pub angles: Option<[f64; 4]>,
    pub windows: Option<u64>,
    pub duration_ns: Option<u64>,
    pub window_ns: Option<u64>,
    pub rule: Option<String>,
    pub seed: Option<u64>,
    pub detection_rate: Option<f64>,
    pub write_streams: Option<bool>,
    pub alice: Option<PathBuf>,
    pub bob: Option<PathBuf>,
    pub coincidences: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub correlators: Option<[f64; 4]>,
    pub marginals_a: Option<[f64; 2]>,
    pub marginals_b: Option<[f64; 2]>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

pub const OUT_DIR_ENV: &str = "BELLSIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "bellsim-out";

/// Flag, then config file, then environment, then the built-in default.
pub fn resolve_out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
