//! Concrete implementations of the four backend contracts
//! ([`WordScorer`], [`TextGenerator`], [`Translator`], [`Embedder`]):
//! HTTP clients, strict lookup-table mocks with a recorder, and seeded
//! synthetic backends for running the pipeline offline.

mod config;
mod http;
mod mock;
mod synthetic;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use config::{BackendConfig, BackendKind, BackendsFile, Provider};
pub use http::{
    HttpEmbedder, HttpGenerator, HttpResponse, HttpTranslator, HttpWordScorer, RateLimiter,
    ReqwestTransport, Transport,
};
pub use mock::{
    fingerprint, Contract, MockEmbedder, MockGenerator, MockTable, MockTranslator, MockWordScorer,
    Recording,
};
pub use synthetic::{HashEmbedder, IdentityTranslator, SyntheticGenerator, SyntheticWordScorer};

use crate::crosslingual::{Embedder, Translator};
use crate::dataset::TextGenerator;
use crate::substitutability::{PromptTemplate, WordScorer};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend {backend}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("backend {backend}: HTTP {status} after {attempts} attempt(s): {body}")]
    Http {
        backend: String,
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("backend {backend}: authentication rejected (HTTP {status}); check credential variable {variable}")]
    Auth {
        backend: String,
        status: u16,
        variable: String,
    },
    #[error("backend {backend}: credential variable {variable} is not set")]
    MissingCredential { backend: String, variable: String },
    #[error("backend {backend}: unexpected response: {message}")]
    Decode { backend: String, message: String },
    #[error("mock table for {contract} has no entry for request fingerprint {fingerprint}")]
    MockMiss { contract: String, fingerprint: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{0}")]
    Other(String),
}

/// Builds backends from configuration, optionally wrapping each one in a
/// recorder whose table is written by [`BackendFactory::save_recordings`].
pub struct BackendFactory {
    template: PromptTemplate,
    transport: Arc<dyn Transport>,
    record_dir: Option<PathBuf>,
    recordings: Mutex<Vec<(PathBuf, Arc<Mutex<MockTable>>)>>,
}

impl BackendFactory {
    pub fn new(template: PromptTemplate) -> Self {
        Self {
            template,
            transport: Arc::new(ReqwestTransport::new()),
            record_dir: None,
            recordings: Mutex::new(Vec::new()),
        }
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    /// Record every response into `<dir>/<backend name>.json`.
    pub fn recording_into(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    fn recorder(&self, cfg: &BackendConfig, contract: Contract) -> Option<Arc<Mutex<MockTable>>> {
        let dir = self.record_dir.as_ref()?;
        let table = Arc::new(Mutex::new(MockTable::new(contract)));
        self.recordings
            .lock()
            .expect("recordings lock")
            .push((dir.join(format!("{}.json", cfg.name)), table.clone()));
        Some(table)
    }

    fn expect_kind(cfg: &BackendConfig, kind: BackendKind) -> Result<(), BackendError> {
        if cfg.kind == kind {
            Ok(())
        } else {
            Err(BackendError::Config(format!(
                "backend {} is a {:?} backend, expected {:?}",
                cfg.name, cfg.kind, kind
            )))
        }
    }

    fn mock_table(cfg: &BackendConfig, contract: Contract) -> Result<MockTable, BackendError> {
        let path = cfg.mock_table.as_ref().ok_or_else(|| {
            BackendError::Config(format!("mock backend {} has no mock_table path", cfg.name))
        })?;
        let table = MockTable::load(path)?;
        if table.contract != contract {
            return Err(BackendError::Config(format!(
                "mock table {} records {:?}, backend {} needs {:?}",
                path.display(),
                table.contract,
                cfg.name,
                contract
            )));
        }
        Ok(table)
    }

    pub fn scorer(&self, cfg: &BackendConfig) -> Result<Arc<dyn WordScorer<f64>>, BackendError> {
        Self::expect_kind(cfg, BackendKind::Scorer)?;
        let inner: Arc<dyn WordScorer<f64>> = match cfg.provider {
            Provider::Http => Arc::new(HttpWordScorer::new(
                cfg.clone(),
                self.template.clone(),
                self.transport.clone(),
            )?),
            Provider::Mock => Arc::new(MockWordScorer::new(
                &cfg.name,
                Self::mock_table(cfg, Contract::WordScorer)?,
            )),
            Provider::Synthetic => Arc::new(SyntheticWordScorer::new(&cfg.name, cfg.seed)),
            Provider::Identity => {
                return Err(BackendError::Config(format!(
                    "backend {}: the identity provider only exists for translators",
                    cfg.name
                )))
            }
        };
        Ok(match self.recorder(cfg, Contract::WordScorer) {
            Some(table) => Arc::new(Recording::new(inner, table)),
            None => inner,
        })
    }

    pub fn generator(&self, cfg: &BackendConfig) -> Result<Arc<dyn TextGenerator>, BackendError> {
        Self::expect_kind(cfg, BackendKind::Generator)?;
        let inner: Arc<dyn TextGenerator> = match cfg.provider {
            Provider::Http => Arc::new(HttpGenerator::new(cfg.clone(), self.transport.clone())?),
            Provider::Mock => Arc::new(MockGenerator::new(
                &cfg.name,
                Self::mock_table(cfg, Contract::TextGenerator)?,
            )),
            Provider::Synthetic => Arc::new(SyntheticGenerator::new(&cfg.name, cfg.seed)),
            Provider::Identity => {
                return Err(BackendError::Config(format!(
                    "backend {}: the identity provider only exists for translators",
                    cfg.name
                )))
            }
        };
        Ok(match self.recorder(cfg, Contract::TextGenerator) {
            Some(table) => Arc::new(Recording::new(inner, table)),
            None => inner,
        })
    }

    pub fn translator(&self, cfg: &BackendConfig) -> Result<Arc<dyn Translator>, BackendError> {
        Self::expect_kind(cfg, BackendKind::Translator)?;
        let inner: Arc<dyn Translator> = match cfg.provider {
            Provider::Http => Arc::new(HttpTranslator::new(cfg.clone(), self.transport.clone())?),
            Provider::Mock => Arc::new(MockTranslator::new(
                &cfg.name,
                Self::mock_table(cfg, Contract::Translator)?,
            )),
            Provider::Identity => Arc::new(IdentityTranslator::new(&cfg.name)),
            Provider::Synthetic => {
                return Err(BackendError::Config(format!(
                    "backend {}: no synthetic translator; use the identity or mock provider",
                    cfg.name
                )))
            }
        };
        Ok(match self.recorder(cfg, Contract::Translator) {
            Some(table) => Arc::new(Recording::new(inner, table)),
            None => inner,
        })
    }

    pub fn embedder(&self, cfg: &BackendConfig) -> Result<Arc<dyn Embedder>, BackendError> {
        Self::expect_kind(cfg, BackendKind::Embedder)?;
        let inner: Arc<dyn Embedder> = match cfg.provider {
            Provider::Http => Arc::new(HttpEmbedder::new(cfg.clone(), self.transport.clone())?),
            Provider::Mock => Arc::new(MockEmbedder::new(
                &cfg.name,
                Self::mock_table(cfg, Contract::Embedder)?,
            )),
            Provider::Synthetic => Arc::new(HashEmbedder::new(&cfg.name, 64)),
            Provider::Identity => {
                return Err(BackendError::Config(format!(
                    "backend {}: the identity provider only exists for translators",
                    cfg.name
                )))
            }
        };
        Ok(match self.recorder(cfg, Contract::Embedder) {
            Some(table) => Arc::new(Recording::new(inner, table)),
            None => inner,
        })
    }

    /// Writes every recorded table. Returns the paths written.
    pub fn save_recordings(&self) -> Result<Vec<PathBuf>, BackendError> {
        let recordings = self.recordings.lock().expect("recordings lock");
        let mut written = Vec::new();
        for (path, table) in recordings.iter() {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| file_error(dir, e))?;
            }
            table.lock().expect("table lock").save(path)?;
            written.push(path.clone());
        }
        Ok(written)
    }
}

pub(crate) fn file_error(path: &Path, err: impl std::fmt::Display) -> BackendError {
    BackendError::File {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}
