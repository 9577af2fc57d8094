use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{file_error, BackendError};
use crate::crosslingual::{Embedder, Translator};
use crate::dataset::{GenerationRequest, TextGenerator};
use crate::substitutability::{ScoringRequest, WordScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contract {
    WordScorer,
    TextGenerator,
    Translator,
    Embedder,
}

impl Contract {
    pub fn name(self) -> &'static str {
        match self {
            Contract::WordScorer => "word_scorer",
            Contract::TextGenerator => "text_generator",
            Contract::Translator => "translator",
            Contract::Embedder => "embedder",
        }
    }
}

/// SHA-256 over the canonical JSON of `{contract, request}`. Object keys
/// are sorted, so field order in the request type does not matter.
pub fn fingerprint(contract: Contract, request: &Value) -> String {
    let canonical = json!({ "contract": contract.name(), "request": request });
    let bytes = serde_json::to_vec(&canonical).expect("json values serialize");
    hex::encode(Sha256::digest(bytes))
}

fn translation_request(text: &str, source: &str, target: &str) -> Value {
    json!({ "text": text, "source": source, "target": target })
}

fn embedding_request(text: &str) -> Value {
    json!({ "text": text })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub request: Value,
    pub response: Value,
}

/// Request fingerprint to recorded response, for one contract. Lookups are
/// exact; there is no fallback value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTable {
    pub contract: Contract,
    pub entries: BTreeMap<String, MockEntry>,
}

impl MockTable {
    pub fn new(contract: Contract) -> Self {
        Self {
            contract,
            entries: BTreeMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| file_error(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BackendError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("mock table serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| file_error(path, e))
    }

    pub fn insert(&mut self, request: Value, response: Value) {
        let fp = fingerprint(self.contract, &request);
        self.entries.insert(fp, MockEntry { request, response });
    }

    pub fn lookup(&self, request: &Value) -> Result<&Value, BackendError> {
        let fp = fingerprint(self.contract, request);
        self.entries
            .get(&fp)
            .map(|e| &e.response)
            .ok_or_else(|| BackendError::MockMiss {
                contract: self.contract.name().to_string(),
                fingerprint: fp,
            })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn decode<T: serde::de::DeserializeOwned>(backend: &str, value: &Value) -> Result<T, BackendError> {
    serde_json::from_value(value.clone()).map_err(|e| BackendError::Decode {
        backend: backend.to_string(),
        message: e.to_string(),
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("request serializes")
}

pub struct MockWordScorer {
    id: String,
    table: MockTable,
}

impl MockWordScorer {
    pub fn new(id: &str, table: MockTable) -> Self {
        Self {
            id: id.to_string(),
            table,
        }
    }
}

impl WordScorer<f64> for MockWordScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn log_prob(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        decode(&self.id, self.table.lookup(&to_value(request))?)
    }
}

pub struct MockGenerator {
    id: String,
    table: MockTable,
}

impl MockGenerator {
    pub fn new(id: &str, table: MockTable) -> Self {
        Self {
            id: id.to_string(),
            table,
        }
    }
}

impl TextGenerator for MockGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        decode(&self.id, self.table.lookup(&to_value(request))?)
    }
}

pub struct MockTranslator {
    id: String,
    table: MockTable,
}

impl MockTranslator {
    pub fn new(id: &str, table: MockTable) -> Self {
        Self {
            id: id.to_string(),
            table,
        }
    }
}

impl Translator for MockTranslator {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, BackendError> {
        decode(&self.id, self.table.lookup(&translation_request(text, source, target))?)
    }
}

pub struct MockEmbedder {
    id: String,
    table: MockTable,
}

impl MockEmbedder {
    pub fn new(id: &str, table: MockTable) -> Self {
        Self {
            id: id.to_string(),
            table,
        }
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        decode(&self.id, self.table.lookup(&embedding_request(text))?)
    }
}

/// Wraps a live backend and records each successful response into a
/// shared [`MockTable`], so a run can later be replayed with the mock
/// provider.
pub struct Recording<B> {
    inner: B,
    table: Arc<Mutex<MockTable>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B, table: Arc<Mutex<MockTable>>) -> Self {
        Self { inner, table }
    }

    fn record(&self, request: Value, response: Value) {
        self.table.lock().expect("mock table lock").insert(request, response);
    }
}

impl<B: WordScorer<f64>> WordScorer<f64> for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn log_prob(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        let v = self.inner.log_prob(request)?;
        self.record(to_value(request), json!(v));
        Ok(v)
    }

    fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }
}

impl<B: TextGenerator> TextGenerator for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        let v = self.inner.generate(request)?;
        self.record(to_value(request), json!(v));
        Ok(v)
    }
}

impl<B: Translator> Translator for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, BackendError> {
        let v = self.inner.translate(text, source, target)?;
        self.record(translation_request(text, source, target), json!(v));
        Ok(v)
    }
}

impl<B: Embedder> Embedder for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let v = self.inner.embed(text)?;
        self.record(embedding_request(text), json!(v));
        Ok(v)
    }
}
