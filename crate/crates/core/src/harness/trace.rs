use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TagSet;

/// Recorded result of one model on one held-out query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub score: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEntry {
    pub query_id: String,
    pub tags: TagSet,
    pub benchmark: String,
    #[serde(default)]
    pub tagging_cost: f64,
    pub outcomes: BTreeMap<String, Outcome>,
}

/// Replayable held-out queries with every candidate's recorded outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSet {
    pub entries: Vec<TraceEntry>,
}

impl TraceSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TraceEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if !(entry.tagging_cost.is_finite() && entry.tagging_cost >= 0.0) {
                return Err(Error::Range {
                    line: line_no,
                    message: format!("tagging_cost {} must be >= 0", entry.tagging_cost),
                });
            }
            for (model, o) in &entry.outcomes {
                if !(0.0..=1.0).contains(&o.score) || !(o.cost.is_finite() && o.cost >= 0.0) {
                    return Err(Error::Range {
                        line: line_no,
                        message: format!("outcome for {model:?} out of range: {o:?}"),
                    });
                }
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("trace entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Models with an outcome on every entry.
    pub fn covered_models(&self) -> Vec<String> {
        let Some(first) = self.entries.first() else {
            return Vec::new();
        };
        first
            .outcomes
            .keys()
            .filter(|m| self.entries.iter().all(|e| e.outcomes.contains_key(*m)))
            .cloned()
            .collect()
    }

    pub fn check_coverage<S: AsRef<str>>(&self, pool: &[S]) -> Result<()> {
        for entry in &self.entries {
            for model in pool {
                if !entry.outcomes.contains_key(model.as_ref()) {
                    return Err(Error::Trace(format!(
                        "entry {:?} has no outcome for model {:?}",
                        entry.query_id,
                        model.as_ref()
                    )));
                }
            }
        }
        Ok(())
    }
}
