//! Embedding service adapter (OpenAI-compatible `/embeddings` endpoints) with
//! an append-only on-disk cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{unit, EmbeddingProvider};
use crate::error::{Error, Result};

pub const DEFAULT_EMBED_MODEL: &str = "all-MiniLM-L6-v2";

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    label: String,
    vector: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub struct HttpEmbeddingProvider {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    model: String,
    cache: Mutex<HashMap<String, Vec<f64>>>,
    cache_file: Option<PathBuf>,
}

impl std::fmt::Debug for HttpEmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbeddingProvider")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("cache_file", &self.cache_file)
            .finish_non_exhaustive()
    }
}

impl HttpEmbeddingProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Result<Self> {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build();
        Ok(Self {
            agent,
            url: url.into(),
            api_key,
            model: model.into(),
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
        })
    }

    /// Reads `EMBED_API_URL`, `EMBED_API_KEY` and `EMBED_MODEL`. Returns
    /// `None` when no URL is configured.
    pub fn from_env() -> Result<Option<Self>> {
        let Ok(url) = std::env::var("EMBED_API_URL") else {
            return Ok(None);
        };
        let key = std::env::var("EMBED_API_KEY").ok();
        let model = std::env::var("EMBED_MODEL").unwrap_or_else(|_| DEFAULT_EMBED_MODEL.into());
        Self::new(url, key, model).map(Some)
    }

    /// Loads previously cached vectors from `path` and appends new ones to it.
    /// A torn final line is skipped.
    pub fn with_cache_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let cache = self.cache.get_mut().expect("cache lock poisoned");
            for line in reader.lines() {
                let line = line?;
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        cache.insert(entry.label, entry.vector);
                    }
                    Err(e) => tracing::warn!(path = %path.display(), "skipping cache line: {e}"),
                }
            }
        }
        self.cache_file = Some(path);
        Ok(self)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    fn fetch(&self, label: &str) -> Result<Vec<f64>> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(json!({ "model": self.model, "input": [label] }))
            .map_err(|e| Error::EmbeddingUnavailable(e.to_string()))?;
        let body: EmbeddingResponse = resp
            .into_json()
            .map_err(|e| Error::EmbeddingUnavailable(format!("bad response: {e}")))?;
        let vector = body
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::EmbeddingUnavailable("response carried no embedding".into()))?;
        Ok(unit(vector))
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, label: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("cache lock poisoned").get(label) {
            return Ok(v.clone());
        }
        let vector = self.fetch(label)?;
        let mut cache = self.cache.lock().expect("cache lock poisoned");
        if let Some(path) = &self.cache_file {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(&CacheLine {
                label: label.to_string(),
                vector: vector.clone(),
            })
            .expect("cache line serializes");
            writeln!(file, "{line}")?;
        }
        cache.insert(label.to_string(), vector.clone());
        Ok(vector)
    }
}
