use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{file_error, BackendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scorer,
    Generator,
    Translator,
    Embedder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Http,
    Mock,
    Synthetic,
    Identity,
}

fn default_rate_limit() -> f64 {
    5.0
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

/// One named backend in a backends file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    pub kind: BackendKind,
    pub provider: Provider,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Requests per second.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: f64,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_table: Option<PathBuf>,
    /// Seed for synthetic providers.
    #[serde(default)]
    pub seed: u64,
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, kind: BackendKind, provider: Provider) -> Self {
        Self {
            name: name.into(),
            kind,
            provider,
            endpoint: None,
            model: None,
            api_key_env: None,
            rate_limit: default_rate_limit(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            mock_table: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let fail = |msg: String| Err(BackendError::Config(format!("backend {}: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return Err(BackendError::Config("backend with empty name".into()));
        }
        if !(self.rate_limit > 0.0 && self.rate_limit.is_finite()) {
            return fail(format!("rate_limit must be > 0, got {}", self.rate_limit));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return fail(format!("timeout_secs must be > 0, got {}", self.timeout_secs));
        }
        match self.provider {
            Provider::Http if self.endpoint.is_none() => fail("http provider needs an endpoint".into()),
            Provider::Mock if self.mock_table.is_none() => fail("mock provider needs mock_table".into()),
            _ => Ok(()),
        }
    }
}

/// A declarative list of named backends (TOML, `[[backend]]` tables).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendConfig>,
}

impl BackendsFile {
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let file: BackendsFile =
            toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for b in &file.backends {
            b.validate()?;
            if !seen.insert(b.name.as_str()) {
                return Err(BackendError::Config(format!("duplicate backend name {}", b.name)));
            }
        }
        Ok(file)
    }

    /// Loads a backends file; relative `mock_table` paths resolve against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        let mut file = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for b in &mut file.backends {
            if let Some(table) = &b.mock_table {
                if table.is_relative() {
                    b.mock_table = Some(base.join(table));
                }
            }
        }
        Ok(file)
    }

    pub fn get(&self, name: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.name == name)
    }

    pub fn of_kind(&self, kind: BackendKind) -> Vec<&BackendConfig> {
        self.backends.iter().filter(|b| b.kind == kind).collect()
    }

    /// Backends of `kind`, restricted to `names` when given (in that order).
    pub fn select(&self, kind: BackendKind, names: &[String]) -> Result<Vec<&BackendConfig>, BackendError> {
        if names.is_empty() {
            let all = self.of_kind(kind);
            if all.is_empty() {
                return Err(BackendError::Config(format!("no {kind:?} backends configured")));
            }
            return Ok(all);
        }
        names
            .iter()
            .map(|n| {
                let b = self
                    .get(n)
                    .ok_or_else(|| BackendError::Config(format!("unknown backend {n}")))?;
                if b.kind != kind {
                    return Err(BackendError::Config(format!(
                        "backend {n} is a {:?} backend, expected {kind:?}",
                        b.kind
                    )));
                }
                Ok(b)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_backends_file() {
        let file = BackendsFile::parse(
            r#"
            [[backend]]
            name = "llama"
            kind = "scorer"
            provider = "http"
            endpoint = "http://localhost:8000/v1/completions"
            model = "llama-3.1-8b"
            api_key_env = "LLAMA_KEY"

            [[backend]]
            name = "replay"
            kind = "scorer"
            provider = "mock"
            mock_table = "tables/llama.json"
            "#,
        )
        .unwrap();
        assert_eq!(file.backends.len(), 2);
        assert_eq!(file.backends[0].rate_limit, 5.0);
        assert_eq!(file.select(BackendKind::Scorer, &[]).unwrap().len(), 2);
        assert!(file.select(BackendKind::Translator, &[]).is_err());
        assert!(file.select(BackendKind::Scorer, &["nope".into()]).is_err());
    }

    #[test]
    fn rejects_bad_limits() {
        let text = r#"
            [[backend]]
            name = "x"
            kind = "scorer"
            provider = "synthetic"
            rate_limit = 0
        "#;
        assert!(BackendsFile::parse(text).is_err());
        let text = r#"
            [[backend]]
            name = "x"
            kind = "scorer"
            provider = "http"
        "#;
        assert!(BackendsFile::parse(text).is_err());
        let text = r#"
            [[backend]]
            name = "x"
            kind = "scorer"
            provider = "synthetic"
            timeout_secs = -1.0
        "#;
        assert!(BackendsFile::parse(text).is_err());
    }

    #[test]
    fn rejects_duplicates_and_unknown_fields() {
        let dup = r#"
            [[backend]]
            name = "x"
            kind = "scorer"
            provider = "synthetic"
            [[backend]]
            name = "x"
            kind = "embedder"
            provider = "synthetic"
        "#;
        assert!(BackendsFile::parse(dup).is_err());
        assert!(BackendsFile::parse("[[backend]]\nname='x'\nkind='scorer'\nprovider='synthetic'\nbogus=1\n").is_err());
    }
}
