//! Deployment configuration: a TOML file plus `VCA_<KEY>` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::{parse_hhmm, SchedulerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub timeout_ms: i64,
    pub store_path: PathBuf,
    pub fluidmonitor_times: Vec<String>,
    pub sleepy_times: Vec<String>,
    pub default_timezone: String,
    pub link_token_ttl_secs: i64,
    pub missed_after_secs: i64,
    pub sweep_interval_ms: u64,
    pub admin_token: String,
    /// Requests per bearer token per minute.
    pub rate_limit_per_minute: u32,
    /// Overrides every flow's read-back setting when present.
    pub readback: Option<bool>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            timeout_ms: 10_000,
            store_path: PathBuf::from("vca-events.jsonl"),
            fluidmonitor_times: vec!["09:00".into(), "15:00".into(), "21:00".into()],
            sleepy_times: vec!["08:00".into()],
            default_timezone: "America/New_York".into(),
            link_token_ttl_secs: 600,
            missed_after_secs: 3 * 3600,
            sweep_interval_ms: 250,
            admin_token: "change-me".into(),
            rate_limit_per_minute: 600,
            readback: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("environment variable {key}: {message}")]
    Env { key: String, message: String },
    #[error("timeout_ms must be positive")]
    Timeout,
    #[error("unknown timezone `{0}`")]
    Timezone(String),
    #[error(transparent)]
    Schedule(#[from] SchedulerError),
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (defaults when `None`), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                Self::from_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `VCA_<KEY>` pairs. Lists are comma separated.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("VCA_") else { continue };
            let bad = |message: &str| ConfigError::Env { key: key.clone(), message: message.to_string() };
            let list = || value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            match name.to_ascii_lowercase().as_str() {
                "bind" => self.bind = value.clone(),
                "timeout_ms" => self.timeout_ms = value.parse().map_err(|_| bad("expected integer"))?,
                "store_path" => self.store_path = PathBuf::from(&value),
                "fluidmonitor_times" => self.fluidmonitor_times = list(),
                "sleepy_times" => self.sleepy_times = list(),
                "default_timezone" => self.default_timezone = value.clone(),
                "link_token_ttl_secs" => self.link_token_ttl_secs = value.parse().map_err(|_| bad("expected integer"))?,
                "missed_after_secs" => self.missed_after_secs = value.parse().map_err(|_| bad("expected integer"))?,
                "sweep_interval_ms" => self.sweep_interval_ms = value.parse().map_err(|_| bad("expected integer"))?,
                "admin_token" => self.admin_token = value.clone(),
                "rate_limit_per_minute" => self.rate_limit_per_minute = value.parse().map_err(|_| bad("expected integer"))?,
                "readback" => self.readback = Some(value.parse().map_err(|_| bad("expected true or false"))?),
                // Other VCA_ variables (e.g. VCA_LOG) are not config keys.
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_ms <= 0 {
            return Err(ConfigError::Timeout);
        }
        self.default_timezone
            .parse::<chrono_tz::Tz>()
            .map_err(|_| ConfigError::Timezone(self.default_timezone.clone()))?;
        for t in self.fluidmonitor_times.iter().chain(&self.sleepy_times) {
            parse_hhmm(t)?;
        }
        Ok(())
    }

    /// Local survey times per flow id.
    pub fn flow_times(&self) -> Vec<(&'static str, &[String])> {
        vec![("fluidmonitor", &self.fluidmonitor_times[..]), ("sleepy", &self.sleepy_times[..])]
    }
}
