use std::path::{Path, PathBuf};

use fhirchain_core::fhir::{check_base_url, PathValidator, DEFAULT_FHIR_TIMEOUT_MS};
use serde::Deserialize;

use crate::ServerError;

/// Environment variable that names the config file when no path is given.
pub const CONFIG_ENV: &str = "FHIRCHAIN_CONFIG";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub name: String,
    /// Base URL recorded in pointers. Defaults to `http://<name>.fhir.local`.
    pub base_url: Option<String>,
    /// Fixture served in-process for this endpoint. Without one the
    /// endpoint is fetched over HTTP.
    pub fixture: Option<PathBuf>,
}

impl EndpointConfig {
    pub fn resolved_base_url(&self) -> Result<String, ServerError> {
        let raw = match &self.base_url {
            Some(url) => url.clone(),
            None => format!("http://{}.fhir.local", self.name),
        };
        check_base_url(&raw).map_err(|e| ServerError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub membership_file: Option<PathBuf>,
    pub require_membership: bool,
    pub block_size: usize,
    pub session_ttl_secs: u64,
    pub challenge_ttl_secs: u64,
    /// Accept private keys in /share and /view request bodies.
    pub allow_key_upload: bool,
    /// Empty means every R4 resource type.
    pub fhir_allowed_types: Vec<String>,
    pub fhir_timeout_ms: u64,
    pub fhir_endpoints: Vec<EndpointConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            membership_file: None,
            require_membership: true,
            block_size: 1,
            session_ttl_secs: 1800,
            challenge_ttl_secs: 120,
            allow_key_upload: false,
            fhir_allowed_types: Vec::new(),
            fhir_timeout_ms: DEFAULT_FHIR_TIMEOUT_MS,
            fhir_endpoints: Vec::new(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    /// Reads a TOML config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ServerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_relative_to(base);
        config.validate()?;
        Ok(config)
    }

    /// Explicit path, else `FHIRCHAIN_CONFIG`.
    pub fn locate(explicit: Option<&Path>) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(m) = self.membership_file.as_mut() {
            fix(m);
        }
        for e in &mut self.fhir_endpoints {
            if let Some(f) = e.fixture.as_mut() {
                fix(f);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.require_membership && self.membership_file.is_none() {
            return Err(ServerError::Config(
                "require_membership is set but membership_file is missing".into(),
            ));
        }
        if self.block_size == 0 {
            return Err(ServerError::Config("block_size must be at least 1".into()));
        }
        self.path_validator()?;
        let mut names = std::collections::BTreeSet::new();
        for e in &self.fhir_endpoints {
            if !names.insert(&e.name) {
                return Err(ServerError::Config(format!("duplicate fhir endpoint {}", e.name)));
            }
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(ServerError::Config(format!("bad fhir endpoint name {:?}", e.name)));
            }
            if e.fixture.is_none() && e.base_url.is_none() {
                return Err(ServerError::Config(format!(
                    "fhir endpoint {} needs a fixture or a base_url",
                    e.name
                )));
            }
            e.resolved_base_url()?;
        }
        Ok(())
    }

    pub fn path_validator(&self) -> Result<PathValidator, ServerError> {
        PathValidator::r4_restricted(&self.fhir_allowed_types).map_err(ServerError::Config)
    }

    pub fn admin_token_path(&self) -> PathBuf {
        self.data_dir.join(crate::ADMIN_TOKEN_FILE)
    }
}
