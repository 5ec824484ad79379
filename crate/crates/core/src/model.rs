//! Shared domain types: labels, tag sets, evaluation records and routing
//! configuration.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ModelScoreBreakdown;

/// Reserved knowledge element absorbing rare and never-seen labels.
///
/// Normalized labels are always lowercase, so this token cannot collide with
/// one.
pub const OTHER: &str = "OTHER";

/// Default cap on the length of each ranked tag list.
pub const DEFAULT_MAX_TAGS: usize = 10;

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_label(raw: &str) -> Result<String> {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        return Err(Error::InvalidLabel(raw.to_string()));
    }
    Ok(collapsed.to_lowercase())
}

/// Ordered list of canonical capability labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CapabilityTaxonomy {
    names: Vec<String>,
}

impl CapabilityTaxonomy {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for name in names {
            let label = normalize_label(name.as_ref())?;
            if !seen.insert(label.clone()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate capability {label:?} in taxonomy"
                )));
            }
            out.push(label);
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("capability taxonomy is empty".into()));
        }
        Ok(Self { names: out })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, label: &str) -> bool {
        self.names.iter().any(|n| n == label)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for CapabilityTaxonomy {
    /// The eight capabilities offered to the tagging model.
    fn default() -> Self {
        Self::new([
            "reasoning",
            "comprehension",
            "instruction following",
            "agentic",
            "knowledge retrieval",
            "coding",
            "in-context learning",
            "multilingual",
        ])
        .expect("default taxonomy is valid")
    }
}

impl TryFrom<Vec<String>> for CapabilityTaxonomy {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<CapabilityTaxonomy> for Vec<String> {
    fn from(t: CapabilityTaxonomy) -> Self {
        t.names
    }
}

/// Ranked knowledge elements and capabilities for one query. Rank 1 (index 0)
/// is the most important.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    #[serde(default)]
    pub knowledge: Vec<String>,
    #[serde(default)]
    pub capabilities: Vec<String>,
}

impl TagSet {
    pub fn new<K, C>(knowledge: K, capabilities: C) -> Self
    where
        K: IntoIterator,
        K::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        Self {
            knowledge: knowledge.into_iter().map(Into::into).collect(),
            capabilities: capabilities.into_iter().map(Into::into).collect(),
        }
    }
}

/// Output of [`validate_tagset`]: the cleaned tags plus whatever was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedTags {
    pub tags: TagSet,
    pub warnings: Vec<String>,
}

/// Normalize, dedupe (first occurrence wins), drop capabilities outside the
/// taxonomy and truncate both lists to `max_tags`. Never fails; everything
/// removed is reported in `warnings`.
pub fn validate_tagset(tags: &TagSet, taxonomy: &CapabilityTaxonomy, max_tags: usize) -> ValidatedTags {
    let mut warnings = Vec::new();

    let mut knowledge = dedupe_normalized(&tags.knowledge, "knowledge", &mut warnings, |label| {
        if label == OTHER {
            Some(OTHER.to_string())
        } else {
            normalize_label(label).ok()
        }
    });
    truncate_list(&mut knowledge, "knowledge", max_tags, &mut warnings);

    let mut capabilities = dedupe_normalized(&tags.capabilities, "capability", &mut warnings, |label| {
        normalize_label(label).ok()
    });
    capabilities.retain(|c| {
        let known = taxonomy.contains(c);
        if !known {
            warnings.push(format!("dropped unknown capability {c:?}"));
        }
        known
    });
    truncate_list(&mut capabilities, "capability", max_tags, &mut warnings);

    ValidatedTags {
        tags: TagSet {
            knowledge,
            capabilities,
        },
        warnings,
    }
}

fn dedupe_normalized(
    raw: &[String],
    what: &str,
    warnings: &mut Vec<String>,
    normalize: impl Fn(&str) -> Option<String>,
) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for label in raw {
        let Some(label) = normalize(label) else {
            warnings.push(format!("dropped empty {what} label"));
            continue;
        };
        if seen.insert(label.clone()) {
            out.push(label);
        } else {
            warnings.push(format!("dropped duplicate {what} {label:?}"));
        }
    }
    out
}

fn truncate_list(list: &mut Vec<String>, what: &str, max_tags: usize, warnings: &mut Vec<String>) {
    if list.len() > max_tags {
        warnings.push(format!("{what} list truncated from {} to {max_tags}", list.len()));
        list.truncate(max_tags);
    }
}

/// Raw per-trial outcomes of one model on one indexed query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub model_id: String,
    pub query_id: String,
    pub trial_scores: Vec<f64>,
    pub trial_costs: Vec<f64>,
}

impl EvalRecord {
    /// Checks the record invariants. Range violations are reported as
    /// [`Error::Range`], structural ones as [`Error::Parse`].
    pub fn check(&self, line: usize) -> Result<()> {
        if self.trial_scores.is_empty() {
            return Err(Error::Parse {
                line,
                message: "trial_scores is empty".into(),
            });
        }
        if self.trial_scores.len() != self.trial_costs.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "{} trial scores but {} trial costs",
                    self.trial_scores.len(),
                    self.trial_costs.len()
                ),
            });
        }
        if let Some(s) = self.trial_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Range {
                line,
                message: format!("trial score {s} outside [0, 1]"),
            });
        }
        if let Some(c) = self.trial_costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::Range {
                line,
                message: format!("trial cost {c} is negative or not finite"),
            });
        }
        Ok(())
    }
}

/// Per-query mean score and mean cost of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub score: f64,
    pub cost: f64,
}

impl EvalAggregate {
    /// Arithmetic means over trials. The record must already satisfy
    /// [`EvalRecord::check`].
    pub fn from_trials(scores: &[f64], costs: &[f64]) -> Self {
        Self {
            score: mean(scores),
            cost: mean(costs),
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Router hyperparameters: rank decay, cost penalty and the knowledge and
/// capability weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.0,
            gamma: 1.0,
            delta: 1.0,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.gamma, self.delta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("parameters must be finite".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.beta < 0.0 || self.gamma < 0.0 || self.delta < 0.0 {
            return Err(Error::InvalidConfig("beta, gamma and delta must be >= 0".into()));
        }
        if self.gamma + self.delta <= 0.0 {
            return Err(Error::InvalidConfig("gamma + delta must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

/// The chosen model plus the score breakdown of every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub model_id: String,
    pub breakdown: BTreeMap<String, ModelScoreBreakdown>,
}

impl RoutingDecision {
    pub fn chosen(&self) -> &ModelScoreBreakdown {
        &self.breakdown[&self.model_id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_label(" Linear  Algebra ").unwrap(), "linear algebra");
        assert_eq!(normalize_label("Reasoning").unwrap(), "reasoning");
        assert!(matches!(normalize_label(""), Err(Error::InvalidLabel(_))));
        assert!(matches!(normalize_label(" \t\n"), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn knowledge_dedupe_keeps_first() {
        let tags = TagSet::new(["math", "math", "algebra"], Vec::<String>::new());
        let v = validate_tagset(&tags, &CapabilityTaxonomy::default(), DEFAULT_MAX_TAGS);
        assert_eq!(v.tags.knowledge, vec!["math", "algebra"]);
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn unknown_capability_dropped_with_warning() {
        let tags = TagSet::new(Vec::<String>::new(), ["reasoning", "telepathy"]);
        let v = validate_tagset(&tags, &CapabilityTaxonomy::default(), DEFAULT_MAX_TAGS);
        assert_eq!(v.tags.capabilities, vec!["reasoning"]);
        assert!(v.warnings[0].contains("telepathy"));
    }

    #[test]
    fn tagger_style_capabilities_normalize_into_taxonomy() {
        let tags = TagSet::new(Vec::<String>::new(), ["Reasoning", " Knowledge retrieval"]);
        let v = validate_tagset(&tags, &CapabilityTaxonomy::default(), DEFAULT_MAX_TAGS);
        assert_eq!(v.tags.capabilities, vec!["reasoning", "knowledge retrieval"]);
        assert!(v.warnings.is_empty());
    }

    #[test]
    fn lists_truncated_to_max_tags() {
        let tags = TagSet::new(["a", "b", "c", "d"], ["coding", "reasoning", "agentic"]);
        let v = validate_tagset(&tags, &CapabilityTaxonomy::default(), 2);
        assert_eq!(v.tags.knowledge, vec!["a", "b"]);
        assert_eq!(v.tags.capabilities, vec!["coding", "reasoning"]);
    }

    #[test]
    fn other_token_survives_validation() {
        let tags = TagSet::new([OTHER, "math"], Vec::<String>::new());
        let v = validate_tagset(&tags, &CapabilityTaxonomy::default(), DEFAULT_MAX_TAGS);
        assert_eq!(v.tags.knowledge, vec![OTHER, "math"]);
    }

    #[test]
    fn taxonomy_rejects_duplicates_and_empty() {
        assert!(CapabilityTaxonomy::new(["Coding", "coding "]).is_err());
        assert!(CapabilityTaxonomy::new(Vec::<String>::new()).is_err());
        assert_eq!(CapabilityTaxonomy::default().len(), 8);
    }

    #[test]
    fn record_checks() {
        let mut r = EvalRecord {
            model_id: "m".into(),
            query_id: "q".into(),
            trial_scores: vec![1.2],
            trial_costs: vec![0.1],
        };
        assert!(matches!(r.check(3), Err(Error::Range { line: 3, .. })));
        r.trial_scores = vec![0.5, 0.5];
        assert!(matches!(r.check(3), Err(Error::Parse { .. })));
        r.trial_scores.clear();
        r.trial_costs.clear();
        assert!(matches!(r.check(3), Err(Error::Parse { .. })));
    }

    #[test]
    fn routing_config_validation() {
        assert!(RoutingConfig::default().validate().is_ok());
        let bad = RoutingConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RoutingConfig {
            gamma: 0.0,
            delta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[ \\tA-Za-z0-9-]{0,24}") {
            if let Ok(once) = normalize_label(&raw) {
                prop_assert_eq!(normalize_label(&once).unwrap(), once);
            }
        }

        #[test]
        fn validated_tags_satisfy_invariants(
            knowledge in proptest::collection::vec("[ A-Za-z]{0,8}", 0..16),
            capabilities in proptest::collection::vec(
                prop_oneof![
                    Just("Reasoning".to_string()),
                    Just("coding".to_string()),
                    Just("Multilingual ".to_string()),
                    "[ a-z]{0,8}",
                ],
                0..16,
            ),
            max_tags in 1usize..12,
        ) {
            let taxonomy = CapabilityTaxonomy::default();
            let v = validate_tagset(&TagSet { knowledge, capabilities }, &taxonomy, max_tags);
            let k: HashSet<_> = v.tags.knowledge.iter().collect();
            let c: HashSet<_> = v.tags.capabilities.iter().collect();
            prop_assert_eq!(k.len(), v.tags.knowledge.len());
            prop_assert_eq!(c.len(), v.tags.capabilities.len());
            prop_assert!(v.tags.knowledge.len() <= max_tags);
            prop_assert!(v.tags.capabilities.len() <= max_tags);
            prop_assert!(v.tags.capabilities.iter().all(|c| taxonomy.contains(c)));
            for label in &v.tags.knowledge {
                prop_assert_eq!(&normalize_label(label).unwrap(), label);
            }
        }
    }
}
