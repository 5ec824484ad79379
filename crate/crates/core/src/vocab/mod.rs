//! Knowledge-label consolidation.
//!
//! Free-form knowledge labels are grouped by embedding similarity into
//! clusters named after their most frequent member. Clusters whose total
//! corpus frequency stays under the floor are dissolved into the OTHER
//! bucket, and labels never seen at build time also canonicalize to OTHER.

mod remote;
mod stub;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::OTHER;

pub use remote::HttpEmbeddingProvider;
pub use stub::{stub_provider, StubProvider};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.6;
pub const DEFAULT_FREQUENCY_FLOOR: u64 = 10;

/// Source of label embeddings.
pub trait EmbeddingProvider {
    /// Unit-norm embedding of `label`. Must be deterministic.
    fn embed(&self, label: &str) -> Result<Vec<f64>>;

    /// Similarity of two labels given their embeddings. Cosine by default.
    fn similarity(&self, _a: &str, va: &[f64], _b: &str, vb: &[f64]) -> f64 {
        cosine(va, vb)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn embed(&self, label: &str) -> Result<Vec<f64>> {
        (**self).embed(label)
    }

    fn similarity(&self, a: &str, va: &[f64], b: &str, vb: &[f64]) -> f64 {
        (**self).similarity(a, va, b, vb)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

pub(crate) fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub similarity: f64,
    pub frequency_floor: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabularyRepr {
    clusters: BTreeMap<String, Vec<String>>,
    frequencies: BTreeMap<String, u64>,
    other_members: BTreeSet<String>,
    thresholds: Thresholds,
}

/// Consolidated knowledge vocabulary. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    clusters: BTreeMap<String, Vec<String>>,
    frequencies: BTreeMap<String, u64>,
    other_members: BTreeSet<String>,
    thresholds: Thresholds,
    canonical_of: BTreeMap<String, String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let canonical_of = r
            .clusters
            .iter()
            .flat_map(|(canon, members)| members.iter().map(move |m| (m.clone(), canon.clone())))
            .collect();
        Self {
            clusters: r.clusters,
            frequencies: r.frequencies,
            other_members: r.other_members,
            thresholds: r.thresholds,
            canonical_of,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            clusters: v.clusters,
            frequencies: v.frequencies,
            other_members: v.other_members,
            thresholds: v.thresholds,
        }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        VocabularyRepr {
            clusters: BTreeMap::new(),
            frequencies: BTreeMap::new(),
            other_members: BTreeSet::new(),
            thresholds: Thresholds {
                similarity: DEFAULT_SIMILARITY_THRESHOLD,
                frequency_floor: DEFAULT_FREQUENCY_FLOOR,
            },
        }
        .into()
    }
}

impl Vocabulary {
    /// Canonical label -> all member labels (the canonical label included),
    /// members sorted.
    pub fn clusters(&self) -> &BTreeMap<String, Vec<String>> {
        &self.clusters
    }

    pub fn frequencies(&self) -> &BTreeMap<String, u64> {
        &self.frequencies
    }

    pub fn other_members(&self) -> &BTreeSet<String> {
        &self.other_members
    }

    pub fn similarity_threshold(&self) -> f64 {
        self.thresholds.similarity
    }

    pub fn frequency_floor(&self) -> u64 {
        self.thresholds.frequency_floor
    }

    /// Maps a normalized label to its cluster's canonical label, or to OTHER.
    pub fn canonicalize(&self, label: &str) -> &str {
        self.canonical_of.get(label).map(String::as_str).unwrap_or(OTHER)
    }

    /// Canonicalizes a ranked list. Labels that collapse onto an element
    /// already present keep only their first (highest-ranked) position.
    pub fn canonicalize_list(&self, labels: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(labels.len());
        for label in labels {
            let canon = self.canonicalize(label);
            if !out.iter().any(|c| c == canon) {
                out.push(canon.to_string());
            }
        }
        out
    }

    /// Fraction of observed label occurrences that landed in OTHER.
    pub fn other_share(&self) -> f64 {
        let total: u64 = self.frequencies.values().sum();
        if total == 0 {
            return 0.0;
        }
        let other: u64 = self
            .other_members
            .iter()
            .filter_map(|l| self.frequencies.get(l))
            .sum();
        other as f64 / total as f64
    }
}

/// Clusters the observed labels.
///
/// Two labels are linked when their similarity is strictly above
/// `threshold`; clusters are the connected components of that graph, named
/// after their most frequent member (ties: lexicographically smallest).
/// Components whose total frequency is below `floor` go to OTHER.
///
/// Labels must already be normalized. Ranks in `occurrences` do not affect
/// clustering; every occurrence counts once toward frequency.
pub fn build_vocabulary<P: EmbeddingProvider + ?Sized>(
    occurrences: &[(String, usize)],
    provider: &P,
    threshold: f64,
    floor: u64,
) -> Result<Vocabulary> {
    let mut frequencies: BTreeMap<String, u64> = BTreeMap::new();
    for (label, _rank) in occurrences {
        if label == OTHER {
            continue;
        }
        *frequencies.entry(label.clone()).or_default() += 1;
    }

    let mut order: Vec<&String> = frequencies.keys().collect();
    order.sort_by(|a, b| frequencies[*b].cmp(&frequencies[*a]).then_with(|| a.cmp(b)));

    let vectors = order
        .iter()
        .map(|label| provider.embed(label))
        .collect::<Result<Vec<_>>>()?;

    // Union-find over positions in `order`; the root is always the smallest
    // position, i.e. the most frequent member.
    let mut parent: Vec<usize> = (0..order.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            let sim = provider.similarity(order[i], &vectors[i], order[j], &vectors[j]);
            if sim > threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }

    let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..order.len() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }

    let mut clusters = BTreeMap::new();
    let mut other_members = BTreeSet::new();
    for (root, members) in components {
        let total: u64 = members.iter().map(|&m| frequencies[order[m]]).sum();
        let mut names: Vec<String> = members.iter().map(|&m| order[m].clone()).collect();
        names.sort();
        if total < floor {
            other_members.extend(names);
        } else {
            clusters.insert(order[root].clone(), names);
        }
    }

    Ok(VocabularyRepr {
        clusters,
        frequencies,
        other_members,
        thresholds: Thresholds {
            similarity: threshold,
            frequency_floor: floor,
        },
    }
    .into())
}
