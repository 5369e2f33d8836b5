//! Service settings: TOML file, then `MIMIC_*` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use mimic_core::tts_engine::VocoderKind;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Model bundle directory; synthesis answers 503 without it.
    pub model_dir: Option<PathBuf>,
    /// Listening-test pool with `media/` and item lists.
    pub pool_dir: PathBuf,
    /// Answer log and session index.
    pub data_dir: PathBuf,
    pub vocoder: Option<VocoderKind>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            model_dir: None,
            pool_dir: "pool".into(),
            data_dir: "data".into(),
            vocoder: None,
        }
    }
}

pub const ENV_PREFIX: &str = "MIMIC_";

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `MIMIC_HOST`, `MIMIC_PORT`, `MIMIC_MODEL_DIR`, `MIMIC_POOL_DIR`,
    /// `MIMIC_DATA_DIR` and `MIMIC_VOCODER` from `vars`.
    pub fn with_env<I, K, V>(mut self, vars: I) -> Result<Self, ServiceError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let v = v.as_ref();
            match key {
                "HOST" => self.host = v.into(),
                "PORT" => self.port = v.parse().map_err(|_| ServiceError::Config(format!("MIMIC_PORT `{v}` is not a port")))?,
                "MODEL_DIR" => self.model_dir = (!v.is_empty()).then(|| v.into()),
                "POOL_DIR" => self.pool_dir = v.into(),
                "DATA_DIR" => self.data_dir = v.into(),
                "VOCODER" => self.vocoder = Some(v.parse().map_err(|e: mimic_core::Error| ServiceError::Config(e.to_string()))?),
                _ => {}
            }
        }
        Ok(self)
    }

    /// File (when given) plus the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        base.with_env(std::env::vars())
    }

    pub fn addr(&self) -> Result<SocketAddr, ServiceError> {
        format!("{}:{}", self.host, self.port).parse().map_err(|_| ServiceError::Config(format!("bad address {}:{}", self.host, self.port)))
    }
}
