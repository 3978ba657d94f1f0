//! Run manifests and config loading shared by the subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a subcommand. The effective configuration is
/// stored as TOML text because JSON cannot carry an infinite tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub version: String,
    pub effective_config: String,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        subcommand: &str,
        config_path: Option<&Path>,
        seed: Option<u64>,
        output_dir: &Path,
        config: &T,
    ) -> Result<Self> {
        Ok(RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            output_dir: output_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            effective_config: toml::to_string(config)
                .context("serialising the effective configuration")?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Marks errors caused by the user's input; they exit with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Reads a TOML config, or the effective config of a JSON run manifest
/// written by `subcommand`.
pub fn load_config<T: DeserializeOwned>(path: &Path, subcommand: &str) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let toml_text = if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        if manifest.subcommand != subcommand {
            return Err(config_error(format!(
                "{}: manifest of `{}`, expected `{subcommand}`",
                path.display(),
                manifest.subcommand
            )));
        }
        manifest.effective_config
    } else {
        text
    };
    toml::from_str(&toml_text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
