//! Query tagging: turning query text into a ranked [`TagSet`].

mod prompt;
mod remote;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::index::parse_tags;
use crate::model::{validate_tagset, CapabilityTaxonomy, TagSet, DEFAULT_MAX_TAGS, OTHER};

pub use prompt::{render_prompt, FORMAT_REMINDER, PROMPT_TEMPLATE};
pub use remote::{HttpTagger, HttpTaggerConfig};

/// Tags plus what producing them cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedQuery {
    pub tags: TagSet,
    pub cost: f64,
}

pub trait TaggerClient: Send + Sync {
    fn tag(&self, query: &str) -> Result<TaggedQuery>;
}

impl<T: TaggerClient + ?Sized> TaggerClient for std::sync::Arc<T> {
    fn tag(&self, query: &str) -> Result<TaggedQuery> {
        (**self).tag(query)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Capabilities,
    Knowledge,
}

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_matches(|c| c == '*' || c == '#' || c == '_')
        .trim()
}

fn section_header(line: &str) -> Option<(Section, &str)> {
    let clean = strip_markup(line);
    let (head, rest) = clean.split_once(':')?;
    let head = strip_markup(head).to_lowercase();
    let section = match head.as_str() {
        "capabilities" | "capability" | "llm capabilities" => Section::Capabilities,
        "knowledge" | "knowledge domains" | "knowledge domain" => Section::Knowledge,
        _ => return None,
    };
    Some((section, strip_markup(rest)))
}

/// Strips list markers such as `1.`, `2)`, `-` and `*`.
fn list_item(line: &str) -> Option<&str> {
    let line = line.trim();
    let body = if let Some(rest) = line.strip_prefix(['-', '*', '•']) {
        rest
    } else {
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        line[digits..].strip_prefix(['.', ')'])?
    };
    let body = strip_markup(body);
    (!body.is_empty()).then_some(body)
}

fn split_inline(rest: &str) -> Vec<String> {
    rest.trim_matches(|c| c == '{' || c == '}')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "...")
        .map(str::to_string)
        .collect()
}

/// Extracts the ranked capability and knowledge lists from a tagger
/// response. Both `Capabilities: a, b` and numbered-list layouts are
/// accepted for either section.
pub fn parse_tagger_response(raw: &str, taxonomy: &CapabilityTaxonomy) -> Result<TagSet> {
    let mut found = [false, false];
    let mut lists: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut current: Option<Section> = None;

    for line in raw.lines() {
        if let Some((section, rest)) = section_header(line) {
            let slot = section as usize;
            found[slot] = true;
            lists[slot].extend(split_inline(rest));
            current = Some(section);
            continue;
        }
        let trimmed = line.trim();
        if trimmed == "}" || trimmed.is_empty() && current.is_some_and(|s| !lists[s as usize].is_empty()) {
            current = None;
            continue;
        }
        if trimmed == "..." || trimmed == "{" {
            continue;
        }
        if let (Some(section), Some(item)) = (current, list_item(trimmed)) {
            lists[section as usize].push(item.to_string());
        }
    }

    if !found.iter().any(|f| *f) {
        return Err(Error::TaggerParse(
            "response has neither a Capabilities nor a Knowledge section".into(),
        ));
    }
    let [capabilities, knowledge] = lists;
    Ok(validate_tagset(
        &TagSet {
            knowledge,
            capabilities,
        },
        taxonomy,
        DEFAULT_MAX_TAGS,
    )
    .tags)
}

/// Offline tagger driven by substring rules. The first matching rule wins;
/// with no match the query is tagged `[OTHER]` with the taxonomy's first
/// capability. Costs nothing.
#[derive(Debug, Clone)]
pub struct KeywordStubTagger {
    rules: Vec<(String, TagSet)>,
    fallback: TagSet,
}

impl KeywordStubTagger {
    pub fn new<P: Into<String>>(rules: Vec<(P, TagSet)>, taxonomy: &CapabilityTaxonomy) -> Self {
        let rules = rules
            .into_iter()
            .map(|(pattern, tags)| {
                let tags = validate_tagset(&tags, taxonomy, DEFAULT_MAX_TAGS).tags;
                (pattern.into().to_lowercase(), tags)
            })
            .collect();
        Self {
            rules,
            fallback: TagSet::new([OTHER], [taxonomy.names()[0].clone()]),
        }
    }
}

impl TaggerClient for KeywordStubTagger {
    fn tag(&self, query: &str) -> Result<TaggedQuery> {
        let lowered = query.to_lowercase();
        let tags = self
            .rules
            .iter()
            .find(|(pattern, _)| lowered.contains(pattern.as_str()))
            .map(|(_, tags)| tags.clone())
            .unwrap_or_else(|| self.fallback.clone());
        Ok(TaggedQuery { tags, cost: 0.0 })
    }
}

/// Replays precomputed tags. The input to [`TaggerClient::tag`] is the
/// query id, not its text.
#[derive(Debug, Clone, Default)]
pub struct FileTagger {
    tags: BTreeMap<String, TagSet>,
    cost_per_query: f64,
}

impl FileTagger {
    pub fn new(tags: BTreeMap<String, TagSet>) -> Self {
        Self {
            tags,
            cost_per_query: 0.0,
        }
    }

    pub fn from_tags_text(text: &str, taxonomy: &CapabilityTaxonomy, max_tags: usize) -> Result<Self> {
        Ok(Self::new(parse_tags(text, taxonomy, max_tags)?.queries))
    }

    pub fn with_cost_per_query(mut self, cost: f64) -> Self {
        self.cost_per_query = cost;
        self
    }
}

impl TaggerClient for FileTagger {
    fn tag(&self, query_id: &str) -> Result<TaggedQuery> {
        let tags = self
            .tags
            .get(query_id)
            .cloned()
            .ok_or_else(|| Error::MissingTags(query_id.to_string()))?;
        Ok(TaggedQuery {
            tags,
            cost: self.cost_per_query,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "Capabilities: Reasoning, Knowledge retrieval\nKnowledge: {\n1. Financial\n2. Math\n3. Data Analysis\n...\n}";

    #[test]
    fn parses_reference_example() {
        let tags = parse_tagger_response(EXAMPLE, &CapabilityTaxonomy::default()).unwrap();
        assert_eq!(tags.capabilities, vec!["reasoning", "knowledge retrieval"]);
        assert_eq!(tags.knowledge, vec!["financial", "math", "data analysis"]);
    }

    #[test]
    fn capabilities_only() {
        let tags = parse_tagger_response("Capabilities: Coding", &CapabilityTaxonomy::default()).unwrap();
        assert_eq!(tags.capabilities, vec!["coding"]);
        assert!(tags.knowledge.is_empty());
    }

    #[test]
    fn garbage_is_an_error() {
        let err = parse_tagger_response("I cannot help with that.", &CapabilityTaxonomy::default());
        assert!(matches!(err, Err(Error::TaggerParse(_))));
    }

    #[test]
    fn tolerates_markdown_and_list_layouts() {
        let raw =
            "**Capabilities:**\n1. Coding\n2. Reasoning\n\n**Knowledge:** Algorithms, Data Structures\n";
        let tags = parse_tagger_response(raw, &CapabilityTaxonomy::default()).unwrap();
        assert_eq!(tags.capabilities, vec!["coding", "reasoning"]);
        assert_eq!(tags.knowledge, vec!["algorithms", "data structures"]);
    }

    #[test]
    fn unknown_capabilities_are_dropped() {
        let raw = "Capabilities: Telepathy, Multilingual\nKnowledge:\n- French";
        let tags = parse_tagger_response(raw, &CapabilityTaxonomy::default()).unwrap();
        assert_eq!(tags.capabilities, vec!["multilingual"]);
        assert_eq!(tags.knowledge, vec!["french"]);
    }

    #[test]
    fn stub_rules() {
        let tax = CapabilityTaxonomy::default();
        let stub = KeywordStubTagger::new(
            vec![
                ("integral", TagSet::new(["math"], ["reasoning"])),
                (
                    "integral equation",
                    TagSet::new(["physics"], Vec::<String>::new()),
                ),
            ],
            &tax,
        );
        assert_eq!(
            stub.tag("Compute the integral").unwrap().tags.knowledge,
            vec!["math"]
        );
        // first listed rule wins even though the second is more specific
        assert_eq!(
            stub.tag("solve this integral equation").unwrap().tags.knowledge,
            vec!["math"]
        );
        let fallback = stub.tag("hello").unwrap();
        assert_eq!(fallback.tags, TagSet::new([OTHER], ["reasoning"]));
        assert_eq!(fallback.cost, 0.0);
    }

    #[test]
    fn file_tagger_is_exact_or_errors() {
        let text = r#"{"query_id":"q1","knowledge":["Math"],"capabilities":["Reasoning"]}"#;
        let tagger = FileTagger::from_tags_text(text, &CapabilityTaxonomy::default(), 10).unwrap();
        assert_eq!(
            tagger.tag("q1").unwrap().tags,
            TagSet::new(["math"], ["reasoning"])
        );
        assert!(matches!(tagger.tag("q2"), Err(Error::MissingTags(_))));
    }
}
