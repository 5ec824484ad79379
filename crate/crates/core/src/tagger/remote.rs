//! Chat-completion tagger adapter with transcript recording.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{parse_tagger_response, render_prompt, TaggedQuery, TaggerClient, FORMAT_REMINDER};
use crate::error::{Error, Result};
use crate::model::CapabilityTaxonomy;

pub const DEFAULT_TAGGER_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpTaggerConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    /// Charged per call when the response does not report `usage.cost`.
    pub cost_per_call: f64,
    pub timeout: Duration,
}

impl HttpTaggerConfig {
    /// Reads `TAGGER_API_URL`, `TAGGER_API_KEY`, `TAGGER_MODEL` and
    /// `TAGGER_COST_PER_CALL`. `None` when no URL is configured.
    pub fn from_env() -> Result<Option<Self>> {
        let Ok(url) = std::env::var("TAGGER_API_URL") else {
            return Ok(None);
        };
        let cost_per_call = match std::env::var("TAGGER_COST_PER_CALL") {
            Ok(raw) => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|c| *c >= 0.0)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("TAGGER_COST_PER_CALL must be a number >= 0, got {raw:?}"))
                })?,
            Err(_) => 0.0,
        };
        Ok(Some(Self {
            url,
            api_key: std::env::var("TAGGER_API_KEY").ok(),
            model: std::env::var("TAGGER_MODEL").unwrap_or_else(|_| DEFAULT_TAGGER_MODEL.into()),
            cost_per_call,
            timeout: Duration::from_secs(60),
        }))
    }
}

/// Tags queries by asking an auxiliary chat model with the tagging prompt.
/// Decoding is deterministic (`temperature: 0`). A response that cannot be
/// parsed is retried once with a format reminder appended.
pub struct HttpTagger {
    config: HttpTaggerConfig,
    agent: ureq::Agent,
    taxonomy: CapabilityTaxonomy,
    transcript: Option<Mutex<File>>,
}

impl std::fmt::Debug for HttpTagger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTagger")
            .field("url", &self.config.url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpTagger {
    pub fn new(config: HttpTaggerConfig, taxonomy: CapabilityTaxonomy) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            config,
            agent,
            taxonomy,
            transcript: None,
        }
    }

    /// Appends one `{"request": ..., "response": ...}` line per call to `path`.
    pub fn with_transcript(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.transcript = Some(Mutex::new(file));
        Ok(self)
    }

    fn record(&self, request: &Value, response: &Value) {
        let Some(transcript) = &self.transcript else {
            return;
        };
        let line = json!({ "request": request, "response": response }).to_string();
        let mut file = transcript.lock().expect("transcript lock poisoned");
        if let Err(e) = writeln!(file, "{line}") {
            tracing::warn!("failed to append tagger transcript: {e}");
        }
    }

    /// One chat call; returns the message text and its cost.
    fn complete(&self, prompt: &str) -> Result<(String, f64)> {
        let request = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut call = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response: Value = match call.send_json(request.clone()) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| Error::TaggerUnavailable(format!("unreadable response: {e}")))?,
            Err(e) => {
                self.record(&request, &json!({ "error": e.to_string() }));
                return Err(Error::TaggerUnavailable(e.to_string()));
            }
        };
        self.record(&request, &response);

        let text = response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::TaggerUnavailable("response has no message content".into()))?
            .to_string();
        let cost = response
            .pointer("/usage/cost")
            .and_then(Value::as_f64)
            .unwrap_or(self.config.cost_per_call);
        Ok((text, cost))
    }
}

impl TaggerClient for HttpTagger {
    fn tag(&self, query: &str) -> Result<TaggedQuery> {
        let prompt = render_prompt(query)?;
        let (text, mut cost) = self.complete(&prompt)?;
        let tags = match parse_tagger_response(&text, &self.taxonomy) {
            Ok(tags) => tags,
            Err(Error::TaggerParse(first)) => {
                tracing::debug!("retrying tagger after parse failure: {first}");
                let (text, retry_cost) = self.complete(&format!("{prompt}{FORMAT_REMINDER}"))?;
                cost += retry_cost;
                parse_tagger_response(&text, &self.taxonomy)?
            }
            Err(e) => return Err(e),
        };
        Ok(TaggedQuery { tags, cost })
    }
}
