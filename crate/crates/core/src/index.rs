//! Evaluation-record ingestion and the per-model score index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    mean, validate_tagset, CapabilityTaxonomy, EvalAggregate, EvalRecord, TagSet, DEFAULT_MAX_TAGS, OTHER,
};
use crate::scoring::{aggregate_element, element_contribution, rank_weights, ModelProfile};
use crate::vocab::Vocabulary;

/// model id -> query id -> per-query aggregate.
pub type ModelRecords = BTreeMap<String, BTreeMap<String, EvalAggregate>>;

/// Parses evaluation-record JSON lines. Repeated `(model, query)` pairs pool
/// their trials before averaging. Blank lines are ignored; line numbers in
/// errors are 1-based.
pub fn ingest_records(text: &str) -> Result<ModelRecords> {
    let mut pooled: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        record.check(line_no)?;
        let entry = pooled.entry((record.model_id, record.query_id)).or_default();
        entry.0.extend(record.trial_scores);
        entry.1.extend(record.trial_costs);
    }
    let mut out = ModelRecords::new();
    for ((model, query), (scores, costs)) in pooled {
        out.entry(model)
            .or_default()
            .insert(query, EvalAggregate::from_trials(&scores, &costs));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagLine {
    query_id: String,
    knowledge: Vec<String>,
    capabilities: Vec<String>,
}

/// Tags file contents: validated tag sets plus the diagnostics produced by
/// validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTags {
    pub queries: BTreeMap<String, TagSet>,
    pub warnings: Vec<String>,
}

/// Parses a tags file (one JSON object per line).
pub fn parse_tags(text: &str, taxonomy: &CapabilityTaxonomy, max_tags: usize) -> Result<ParsedTags> {
    let mut parsed = ParsedTags::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TagLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let validated = validate_tagset(
            &TagSet {
                knowledge: raw.knowledge,
                capabilities: raw.capabilities,
            },
            taxonomy,
            max_tags,
        );
        parsed.warnings.extend(
            validated
                .warnings
                .into_iter()
                .map(|w| format!("line {line_no} ({}): {w}", raw.query_id)),
        );
        if parsed
            .queries
            .insert(raw.query_id.clone(), validated.tags)
            .is_some()
        {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate query_id {:?}", raw.query_id),
            });
        }
    }
    Ok(parsed)
}

/// Serializes tag sets in the tags-file line format.
pub fn write_tags(queries: &BTreeMap<String, TagSet>) -> String {
    let mut out = String::new();
    for (query_id, tags) in queries {
        let line = serde_json::json!({
            "query_id": query_id,
            "knowledge": tags.knowledge,
            "capabilities": tags.capabilities,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// The indexed evaluation corpus: tagged queries plus per-model aggregates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexCorpus {
    queries: BTreeMap<String, TagSet>,
    records: ModelRecords,
}

impl IndexCorpus {
    pub fn new(queries: BTreeMap<String, TagSet>, records: ModelRecords) -> Result<Self> {
        for (model, per_query) in &records {
            if let Some(q) = per_query.keys().find(|q| !queries.contains_key(*q)) {
                return Err(Error::Corpus(format!(
                    "record for model {model:?} references untagged query {q:?}"
                )));
            }
        }
        Ok(Self { queries, records })
    }

    pub fn queries(&self) -> &BTreeMap<String, TagSet> {
        &self.queries
    }

    pub fn records(&self) -> &ModelRecords {
        &self.records
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.records.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.records.values().all(BTreeMap::is_empty)
    }

    /// Every knowledge label occurrence with its 1-based rank, for
    /// vocabulary building.
    pub fn knowledge_occurrences(&self) -> Vec<(String, usize)> {
        self.queries
            .values()
            .flat_map(|t| t.knowledge.iter().enumerate().map(|(i, k)| (k.clone(), i + 1)))
            .collect()
    }

    /// The same queries with only the listed models' records.
    pub fn restrict_models<S: AsRef<str>>(&self, models: &[S]) -> IndexCorpus {
        let keep: BTreeSet<&str> = models.iter().map(AsRef::as_ref).collect();
        IndexCorpus {
            queries: self.queries.clone(),
            records: self
                .records
                .iter()
                .filter(|(m, _)| keep.contains(m.as_str()))
                .map(|(m, r)| (m.clone(), r.clone()))
                .collect(),
        }
    }

    /// Adds records, pooling nothing: a `(model, query)` pair already present
    /// is a conflict.
    pub fn insert_records(&mut self, records: ModelRecords) -> Result<()> {
        for (model, per_query) in &records {
            if let Some(q) = per_query.keys().find(|q| !self.queries.contains_key(*q)) {
                return Err(Error::Corpus(format!(
                    "record for model {model:?} references untagged query {q:?}"
                )));
            }
            if let Some(existing) = self.records.get(model) {
                if let Some(q) = per_query.keys().find(|q| existing.contains_key(*q)) {
                    return Err(Error::Conflict(format!(
                        "model {model:?} already has a record for query {q:?}"
                    )));
                }
            }
        }
        for (model, per_query) in records {
            self.records.entry(model).or_default().extend(per_query);
        }
        Ok(())
    }

    /// Tag sets after vocabulary canonicalization, with capabilities outside
    /// the taxonomy dropped.
    pub fn canonical_queries(
        &self,
        vocab: &Vocabulary,
        taxonomy: &CapabilityTaxonomy,
    ) -> BTreeMap<String, TagSet> {
        self.queries
            .iter()
            .map(|(q, tags)| (q.clone(), canonical_tags(tags, vocab, taxonomy)))
            .collect()
    }
}

fn canonical_tags(tags: &TagSet, vocab: &Vocabulary, taxonomy: &CapabilityTaxonomy) -> TagSet {
    TagSet {
        knowledge: vocab.canonicalize_list(&tags.knowledge),
        capabilities: tags
            .capabilities
            .iter()
            .filter(|c| taxonomy.contains(c))
            .cloned()
            .collect(),
    }
}

/// Per-model element statistics over the consolidated vocabulary.
///
/// Immutable once built; [`ScoreIndex::add_model`] and
/// [`ScoreIndex::refresh_vocabulary`] return new versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreIndex {
    pub version: u64,
    pub alpha_used: f64,
    pub taxonomy: CapabilityTaxonomy,
    pub vocabulary: Vocabulary,
    pub models: BTreeMap<String, ModelProfile>,
}

/// Per-query element contributions keyed by element.
type Contributions = BTreeMap<String, Vec<(f64, f64)>>;

fn push_contributions(
    into: &mut Contributions,
    agg: &EvalAggregate,
    elements: &[String],
    alpha: f64,
    keep: impl Fn(&str) -> bool,
) {
    for element in elements.iter().filter(|e| keep(e)) {
        if let Some(part) = element_contribution(agg, elements, element, alpha) {
            into.entry(element.clone()).or_default().push(part);
        }
    }
}

fn aggregate_all(contributions: Contributions) -> BTreeMap<String, crate::scoring::ElementStat> {
    contributions
        .into_iter()
        .map(|(k, parts)| {
            let stat = aggregate_element(&parts).expect("element has at least one contribution");
            (k, stat)
        })
        .collect()
}

fn compute_profile(
    records: &BTreeMap<String, EvalAggregate>,
    queries: &BTreeMap<String, TagSet>,
    alpha: f64,
) -> ModelProfile {
    let mut knowledge = Contributions::new();
    let mut capability = Contributions::new();
    let mut scores = Vec::with_capacity(records.len());
    let mut costs = Vec::with_capacity(records.len());
    for (query, agg) in records {
        let tags = &queries[query];
        push_contributions(&mut knowledge, agg, &tags.knowledge, alpha, |_| true);
        push_contributions(&mut capability, agg, &tags.capabilities, alpha, |_| true);
        scores.push(agg.score);
        costs.push(agg.cost);
    }
    ModelProfile {
        knowledge_stats: aggregate_all(knowledge),
        capability_stats: aggregate_all(capability),
        overall_mean_score: mean(&scores),
        overall_mean_cost: mean(&costs),
    }
}

/// Builds the index from a corpus. Knowledge tags are canonicalized through
/// `vocab`; `alpha` is baked into every per-query contribution and recorded.
pub fn build_index(
    corpus: &IndexCorpus,
    vocab: &Vocabulary,
    taxonomy: &CapabilityTaxonomy,
    alpha: f64,
) -> Result<ScoreIndex> {
    rank_weights(alpha, 1)?;
    if corpus.is_empty() {
        return Err(Error::Corpus("corpus has no evaluation records".into()));
    }
    let queries = corpus.canonical_queries(vocab, taxonomy);
    let mut models = BTreeMap::new();
    for (model, records) in corpus.records() {
        if records.is_empty() {
            tracing::warn!(model = %model, "skipping model with no records");
            continue;
        }
        models.insert(model.clone(), compute_profile(records, &queries, alpha));
    }
    Ok(ScoreIndex {
        version: 1,
        alpha_used: alpha,
        taxonomy: taxonomy.clone(),
        vocabulary: vocab.clone(),
        models,
    })
}

impl ScoreIndex {
    /// An index with no models, at version 0. Grow it with
    /// [`ScoreIndex::add_model`].
    pub fn empty(vocab: &Vocabulary, taxonomy: &CapabilityTaxonomy, alpha: f64) -> Result<ScoreIndex> {
        rank_weights(alpha, 1)?;
        Ok(ScoreIndex {
            version: 0,
            alpha_used: alpha,
            taxonomy: taxonomy.clone(),
            vocabulary: vocab.clone(),
            models: BTreeMap::new(),
        })
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    /// Normalizes and validates a query's tags, then maps knowledge labels
    /// onto this index's vocabulary. Capabilities outside the taxonomy are
    /// dropped.
    pub fn canonicalize_tags(&self, tags: &TagSet) -> TagSet {
        let validated = validate_tagset(tags, &self.taxonomy, DEFAULT_MAX_TAGS);
        canonical_tags(&validated.tags, &self.vocabulary, &self.taxonomy)
    }

    /// Profiles one new model from its records in `corpus`. Existing models
    /// are copied untouched.
    pub fn add_model(&self, model_id: &str, corpus: &IndexCorpus) -> Result<ScoreIndex> {
        if self.models.contains_key(model_id) {
            return Err(Error::Conflict(format!("model {model_id:?} is already indexed")));
        }
        let records = corpus
            .records()
            .get(model_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::Corpus(format!("no records for model {model_id:?}")))?;
        let queries = corpus.canonical_queries(&self.vocabulary, &self.taxonomy);
        let mut next = self.clone();
        next.models.insert(
            model_id.to_string(),
            compute_profile(records, &queries, self.alpha_used),
        );
        next.version += 1;
        Ok(next)
    }

    /// Re-canonicalizes the corpus against `vocab` and recomputes only the
    /// knowledge elements whose contributing queries changed. `corpus` must
    /// hold the records every indexed model was built from.
    pub fn refresh_vocabulary(&self, corpus: &IndexCorpus, vocab: &Vocabulary) -> Result<ScoreIndex> {
        let old = corpus.canonical_queries(&self.vocabulary, &self.taxonomy);
        let new = corpus.canonical_queries(vocab, &self.taxonomy);

        let mut affected: BTreeSet<String> = BTreeSet::new();
        for (q, new_tags) in &new {
            let old_tags = &old[q];
            if old_tags.knowledge != new_tags.knowledge {
                affected.extend(old_tags.knowledge.iter().cloned());
                affected.extend(new_tags.knowledge.iter().cloned());
            }
        }

        let mut next = self.clone();
        for (model, profile) in next.models.iter_mut() {
            let records = corpus
                .records()
                .get(model)
                .ok_or_else(|| Error::Corpus(format!("no records for indexed model {model:?}")))?;
            let mut contributions = Contributions::new();
            for (query, agg) in records {
                let tags = new
                    .get(query)
                    .ok_or_else(|| Error::Corpus(format!("record references untagged query {query:?}")))?;
                push_contributions(&mut contributions, agg, &tags.knowledge, self.alpha_used, |e| {
                    affected.contains(e)
                });
            }
            profile.knowledge_stats.retain(|k, _| !affected.contains(k));
            profile.knowledge_stats.extend(aggregate_all(contributions));
        }
        next.vocabulary = vocab.clone();
        next.version += 1;
        Ok(next)
    }

    pub fn stats(&self) -> IndexStats {
        let knowledge: BTreeSet<&String> = self
            .models
            .values()
            .flat_map(|p| p.knowledge_stats.keys())
            .collect();
        let capabilities: BTreeSet<&String> = self
            .models
            .values()
            .flat_map(|p| p.capability_stats.keys())
            .collect();
        IndexStats {
            version: self.version,
            model_count: self.models.len(),
            knowledge_elements: knowledge.len(),
            capability_elements: capabilities.len(),
            has_other_bucket: knowledge.contains(&OTHER.to_string()),
            other_share: self.vocabulary.other_share(),
        }
    }
}

/// Summary counts reported by the CLI and the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub version: u64,
    pub model_count: usize,
    pub knowledge_elements: usize,
    pub capability_elements: usize,
    pub has_other_bucket: bool,
    pub other_share: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{build_vocabulary, stub_provider};

    fn tags(k: &[&str], c: &[&str]) -> TagSet {
        TagSet::new(k.iter().copied(), c.iter().copied())
    }

    fn rec(model: &str, query: &str, scores: &[f64], cost: f64) -> String {
        serde_json::json!({
            "model_id": model,
            "query_id": query,
            "trial_scores": scores,
            "trial_costs": vec![cost; scores.len()],
        })
        .to_string()
    }

    /// A vocabulary where every listed label is its own cluster.
    fn identity_vocab(labels: &[&str]) -> Vocabulary {
        let occ: Vec<(String, usize)> = labels.iter().map(|l| (l.to_string(), 1)).collect();
        build_vocabulary(&occ, &stub_provider(0), 0.99, 1).unwrap()
    }

    #[test]
    fn ingest_examples() {
        let text = [
            rec("m", "q1", &[1.0, 0.0, 1.0, 1.0], 0.02),
            rec("m", "q2", &[0.5], 0.01),
        ]
        .join("\n");
        let r = ingest_records(&text).unwrap();
        assert_eq!(r["m"]["q1"].score, 0.75);
        assert!((r["m"]["q1"].cost - 0.02).abs() < 1e-15);
        assert_eq!(r["m"]["q2"].score, 0.5);

        let err = ingest_records(&rec("m", "q", &[1.2], 0.0)).unwrap_err();
        assert!(matches!(err, Error::Range { line: 1, .. }));
        let err = ingest_records("\n{not json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn duplicate_lines_pool_trials() {
        let text = [rec("m", "q", &[1.0], 0.0), rec("m", "q", &[0.0, 0.0, 1.0], 0.0)].join("\n");
        assert_eq!(ingest_records(&text).unwrap()["m"]["q"].score, 0.5);
    }

    #[test]
    fn tags_file_rejects_unknown_fields_and_duplicates() {
        let tax = CapabilityTaxonomy::default();
        let ok = r#"{"query_id":"q1","knowledge":["Math"],"capabilities":["Reasoning","telepathy"]}"#;
        let parsed = parse_tags(ok, &tax, 10).unwrap();
        assert_eq!(parsed.queries["q1"], tags(&["math"], &["reasoning"]));
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parse_tags(&format!("{ok}\n{ok}"), &tax, 10).is_err());
        let extra = r#"{"query_id":"q1","knowledge":[],"capabilities":[],"x":1}"#;
        assert!(matches!(
            parse_tags(extra, &tax, 10),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn corpus_rejects_untagged_records() {
        let records = ingest_records(&rec("m", "q9", &[1.0], 0.0)).unwrap();
        assert!(IndexCorpus::new(BTreeMap::new(), records).is_err());
    }

    fn corpus(queries: &[(&str, TagSet)], lines: &[String]) -> IndexCorpus {
        IndexCorpus::new(
            queries.iter().map(|(q, t)| (q.to_string(), t.clone())).collect(),
            ingest_records(&lines.join("\n")).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn build_examples() {
        let tax = CapabilityTaxonomy::default();
        let vocab = identity_vocab(&["k1", "k2"]);

        let c = corpus(&[("q", tags(&["k1"], &[]))], &[rec("m", "q", &[0.8], 0.1)]);
        let idx = build_index(&c, &vocab, &tax, 0.5).unwrap();
        let s = idx.models["m"].knowledge_stats["k1"];
        assert_eq!((s.score_agg, s.support), (0.8, 1));
        assert!((s.cost_agg - 0.1).abs() < 1e-15);

        let c = corpus(
            &[("q1", tags(&["k1"], &[])), ("q2", tags(&["k1"], &[]))],
            &[rec("m", "q1", &[0.8], 0.0), rec("m", "q2", &[0.4], 0.0)],
        );
        let idx = build_index(&c, &vocab, &tax, 0.5).unwrap();
        assert!((idx.models["m"].knowledge_stats["k1"].score_agg - 0.6).abs() < 1e-15);

        let c = corpus(&[("q", tags(&["k1", "k2"], &[]))], &[rec("m", "q", &[0.9], 0.0)]);
        let idx = build_index(&c, &vocab, &tax, 0.5).unwrap();
        let ks = &idx.models["m"].knowledge_stats;
        assert!((ks["k1"].score_agg - 0.9 * 2.0 / 3.0).abs() < 1e-15);
        assert!((ks["k2"].score_agg - 0.9 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_labels_land_in_other_bucket() {
        let tax = CapabilityTaxonomy::default();
        let vocab = identity_vocab(&["k1"]);
        let c = corpus(
            &[("q", tags(&["k1", "mystery", "enigma"], &["coding"]))],
            &[rec("m", "q", &[1.0], 0.0)],
        );
        let idx = build_index(&c, &vocab, &tax, 1.0).unwrap();
        let ks = &idx.models["m"].knowledge_stats;
        // "mystery" and "enigma" collapse into one OTHER entry at rank 2.
        assert!((ks[OTHER].score_agg - 0.5).abs() < 1e-15);
        assert_eq!(idx.models["m"].capability_stats["coding"].score_agg, 1.0);
    }

    #[test]
    fn add_model_examples() {
        let tax = CapabilityTaxonomy::default();
        let vocab = identity_vocab(&["k1", "k2"]);
        let queries = [
            ("q1", tags(&["k1"], &["coding"])),
            ("q2", tags(&["k2"], &["reasoning"])),
            ("q3", tags(&["k1", "k2"], &["coding"])),
            ("q4", tags(&["k2"], &[])),
        ];
        let mut lines = Vec::new();
        for m in ["a", "b"] {
            for (q, _) in &queries {
                lines.push(rec(m, q, &[0.7], 0.01));
            }
        }
        // model c only answered half the corpus
        lines.push(rec("c", "q1", &[1.0], 0.5));
        lines.push(rec("c", "q2", &[0.0], 0.5));
        let full = corpus(&queries, &lines);

        let base = build_index(&full.restrict_models(&["a", "b"]), &vocab, &tax, 0.5).unwrap();
        let grown = base.add_model("c", &full).unwrap();
        assert_eq!(grown.models.len(), 3);
        assert_eq!(grown.version, base.version + 1);
        for m in ["a", "b"] {
            assert_eq!(
                serde_json::to_string(&base.models[m]).unwrap(),
                serde_json::to_string(&grown.models[m]).unwrap()
            );
        }
        let c = &grown.models["c"];
        assert_eq!(c.knowledge_stats["k1"].support, 1);
        assert_eq!(c.knowledge_stats["k2"].support, 1);
        assert_eq!(c.knowledge_stats["k1"].score_agg, 1.0);
        assert_eq!(c.overall_mean_score, 0.5);
        assert_eq!(c.capability_stats["coding"].support, 1);

        assert!(matches!(grown.add_model("a", &full), Err(Error::Conflict(_))));
        assert_eq!(
            grown,
            build_index(&full, &vocab, &tax, 0.5).unwrap().with_version(2)
        );
    }

    impl ScoreIndex {
        fn with_version(mut self, v: u64) -> Self {
            self.version = v;
            self
        }
    }

    #[test]
    fn refresh_matches_full_rebuild() {
        let tax = CapabilityTaxonomy::default();
        let old_vocab = identity_vocab(&["algebra", "linear algebra", "poetry"]);
        let occ: Vec<(String, usize)> = ["algebra", "linear algebra", "poetry"]
            .iter()
            .map(|l| (l.to_string(), 1))
            .collect();
        let new_vocab = build_vocabulary(
            &occ,
            &stub_provider(0).with_similarity("algebra", "linear algebra", 0.9),
            0.6,
            1,
        )
        .unwrap();
        let queries = [
            ("q1", tags(&["linear algebra", "poetry"], &[])),
            ("q2", tags(&["algebra", "linear algebra"], &[])),
            ("q3", tags(&["poetry"], &[])),
        ];
        let lines: Vec<String> = ["m1", "m2"]
            .iter()
            .flat_map(|m| {
                queries
                    .iter()
                    .enumerate()
                    .map(move |(i, (q, _))| rec(m, q, &[0.25 * (i + 1) as f64], 0.1))
            })
            .collect();
        let c = corpus(&queries, &lines);
        let refreshed = build_index(&c, &old_vocab, &tax, 0.5)
            .unwrap()
            .refresh_vocabulary(&c, &new_vocab)
            .unwrap();
        let rebuilt = build_index(&c, &new_vocab, &tax, 0.5).unwrap();
        assert_eq!(refreshed.models, rebuilt.models);
        assert_eq!(refreshed.vocabulary, new_vocab);
        assert!(!refreshed.models["m1"]
            .knowledge_stats
            .contains_key("linear algebra"));
    }

    #[test]
    fn alpha_must_be_positive() {
        let c = corpus(&[("q", tags(&["k1"], &[]))], &[rec("m", "q", &[0.8], 0.1)]);
        let err = build_index(&c, &Vocabulary::default(), &CapabilityTaxonomy::default(), 0.0);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
