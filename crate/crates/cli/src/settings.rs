use std::path::{Path, PathBuf};

use vaporcell::io::Config;
use vaporcell::AtomicData;

use crate::CliError;

/// Built-in defaults, the checked-in `config/defaults.conf`.
pub const DEFAULTS: &str = include_str!("../../../config/defaults.conf");

pub const CONFIG_ENV: &str = "VAPORCELL_CONFIG";

/// Layered configuration: defaults, `$VAPORCELL_CONFIG`, `--config`, `--set`.
#[derive(Debug, Clone)]
pub struct Settings {
    config: Config,
    pub sources: Vec<String>,
}

impl Settings {
    pub fn load(explicit: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut config = Config::parse(DEFAULTS)?;
        let mut sources = vec!["defaults".to_string()];
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        for path in env_path.iter().map(PathBuf::as_path).chain(explicit) {
            config.merge(&Config::load(path)?);
            sources.push(path.display().to_string());
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
            config.set(k.trim(), v.trim());
        }
        if !overrides.is_empty() {
            sources.push("--set".into());
        }
        Ok(Self { config, sources })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.config
            .get_f64(key)?
            .ok_or_else(|| CliError::Usage(format!("missing configuration key `{key}`")))
    }

    /// Flag value when given, else the configured value.
    pub fn or(&self, flag: Option<f64>, key: &str) -> Result<f64, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => self.f64(key),
        }
    }

    pub fn count(&self, flag: Option<usize>, key: &str) -> Result<usize, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        let v = self.f64(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(CliError::Usage(format!("`{key}` must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn atomic(&self) -> Result<AtomicData, CliError> {
        Ok(AtomicData::from_config(&self.config)?)
    }
}
