pub mod evaluate;
pub mod fit;
pub mod predict;
pub mod reproduce;
pub mod simulate;

use std::path::PathBuf;

use crate::config::Config;
use crate::error::{CliError, Result};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Options {
    pub fn load_config(&self, required: bool) -> Result<Config> {
        match &self.config {
            Some(path) => Config::load(path),
            None if required => Err(CliError::Config("this command needs --config".into())),
            None => Ok(Config::default()),
        }
    }

    /// `--out`, else the `out` key, else `default`.
    pub fn out_dir(&self, config: &Config, default: &str) -> PathBuf {
        self.out.clone().or_else(|| config.path("out")).unwrap_or_else(|| PathBuf::from(default))
    }

    pub fn seed(&self, config: &Config) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => config.value_or("seed", 0),
        }
    }

    pub fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }
}

pub(crate) fn require_path(config: &Config, key: &str) -> Result<PathBuf> {
    config.path(key).ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
}
