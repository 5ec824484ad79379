use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{Outcome, TraceEntry, TraceSet};
use crate::error::{Error, Result};
use crate::index::{IndexCorpus, ModelRecords};
use crate::model::{normalize_label, CapabilityTaxonomy, EvalAggregate, EvalRecord, TagSet};
use crate::scoring::rank_weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub id: String,
    /// Cost of every call.
    pub cost: f64,
    /// Success probability per domain, in domain order.
    pub expertise: Vec<f64>,
}

/// A planted-expertise world: each query covers a few ranked domains and a
/// model succeeds with the rank-weighted mean of its expertise in them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub models: Vec<SyntheticModel>,
    pub domains: Vec<String>,
    /// Capability tagged for each domain. Empty means the taxonomy entry at
    /// `domain % taxonomy.len()`.
    #[serde(default)]
    pub domain_capabilities: Vec<String>,
    pub index_queries: usize,
    pub trace_queries: usize,
    pub min_domains: usize,
    pub max_domains: usize,
    /// Trials per indexed (model, query); trace entries get one.
    pub trials: usize,
    pub alpha: f64,
    #[serde(default)]
    pub tagging_cost: f64,
    #[serde(default = "default_benchmark")]
    pub benchmark: String,
    pub seed: u64,
}

fn default_benchmark() -> String {
    "synthetic".into()
}

impl SyntheticSpec {
    /// `n` models over `n` domains; model `i` has expertise `diagonal` in
    /// domain `i` and `off_diagonal` elsewhere. One domain per query.
    pub fn planted(
        n: usize,
        diagonal: f64,
        off_diagonal: f64,
        index_queries: usize,
        trace_queries: usize,
        seed: u64,
    ) -> Self {
        Self {
            models: (0..n)
                .map(|i| SyntheticModel {
                    id: format!("model-{i}"),
                    cost: 1.0 + i as f64,
                    expertise: (0..n)
                        .map(|d| if d == i { diagonal } else { off_diagonal })
                        .collect(),
                })
                .collect(),
            domains: (0..n).map(|d| format!("domain {d}")).collect(),
            domain_capabilities: Vec::new(),
            index_queries,
            trace_queries,
            min_domains: 1,
            max_domains: 1,
            trials: 1,
            alpha: 0.5,
            tagging_cost: 0.0,
            benchmark: default_benchmark(),
            seed,
        }
    }

    fn validate(&self, taxonomy: &CapabilityTaxonomy) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.models.is_empty() || self.domains.is_empty() {
            return bad("need at least one model and one domain".into());
        }
        for m in &self.models {
            if m.expertise.len() != self.domains.len() {
                return bad(format!("model {:?} needs one expertise value per domain", m.id));
            }
            if m.expertise.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return bad(format!("model {:?} has expertise outside [0, 1]", m.id));
            }
            if !(m.cost.is_finite() && m.cost >= 0.0) {
                return bad(format!("model {:?} has a negative cost", m.id));
            }
        }
        if self.min_domains == 0
            || self.min_domains > self.max_domains
            || self.max_domains > self.domains.len()
        {
            return bad("need 1 <= min_domains <= max_domains <= domains".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if !(self.tagging_cost.is_finite() && self.tagging_cost >= 0.0) {
            return bad("tagging_cost must be >= 0".into());
        }
        if !self.domain_capabilities.is_empty() {
            if self.domain_capabilities.len() != self.domains.len() {
                return bad("domain_capabilities needs one entry per domain".into());
            }
            for c in &self.domain_capabilities {
                if !taxonomy.contains(&normalize_label(c)?) {
                    return bad(format!("capability {c:?} is not in the taxonomy"));
                }
            }
        }
        rank_weights(self.alpha, 1).map(|_| ())
    }
}

/// Generated index inputs plus a held-out trace from the same world.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub queries: BTreeMap<String, TagSet>,
    pub records: Vec<EvalRecord>,
    pub trace: TraceSet,
}

impl SyntheticData {
    pub fn corpus(&self) -> Result<IndexCorpus> {
        let mut records = ModelRecords::new();
        for r in &self.records {
            records.entry(r.model_id.clone()).or_default().insert(
                r.query_id.clone(),
                EvalAggregate::from_trials(&r.trial_scores, &r.trial_costs),
            );
        }
        IndexCorpus::new(self.queries.clone(), records)
    }

    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Deterministic for a given spec: same seed, same data.
pub fn generate_synthetic(spec: &SyntheticSpec, taxonomy: &CapabilityTaxonomy) -> Result<SyntheticData> {
    spec.validate(taxonomy)?;
    let domains: Vec<String> = spec
        .domains
        .iter()
        .map(|d| normalize_label(d))
        .collect::<Result<_>>()?;
    let capabilities: Vec<String> = if spec.domain_capabilities.is_empty() {
        (0..domains.len())
            .map(|d| taxonomy.names()[d % taxonomy.len()].clone())
            .collect()
    } else {
        spec.domain_capabilities
            .iter()
            .map(|c| normalize_label(c))
            .collect::<Result<_>>()?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut queries = BTreeMap::new();
    let mut records = Vec::new();
    let mut trace = TraceSet::default();
    let width = (spec.index_queries + spec.trace_queries).to_string().len();

    for i in 0..spec.index_queries + spec.trace_queries {
        let k = rng.random_range(spec.min_domains..=spec.max_domains);
        let picked: Vec<usize> = sample(&mut rng, domains.len(), k).into_vec();
        let weights = rank_weights(spec.alpha, k)?;
        let mut caps: Vec<String> = Vec::new();
        for d in &picked {
            if !caps.contains(&capabilities[*d]) {
                caps.push(capabilities[*d].clone());
            }
        }
        let tags = TagSet {
            knowledge: picked.iter().map(|d| domains[*d].clone()).collect(),
            capabilities: caps,
        };
        let success: Vec<f64> = spec
            .models
            .iter()
            .map(|m| {
                picked
                    .iter()
                    .zip(&weights)
                    .map(|(d, w)| w * m.expertise[*d])
                    .sum()
            })
            .collect();

        if i < spec.index_queries {
            let query_id = format!("q{i:0width$}");
            for (m, p) in spec.models.iter().zip(&success) {
                let trial_scores = (0..spec.trials)
                    .map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
                    .collect();
                records.push(EvalRecord {
                    model_id: m.id.clone(),
                    query_id: query_id.clone(),
                    trial_scores,
                    trial_costs: vec![m.cost; spec.trials],
                });
            }
            queries.insert(query_id, tags);
        } else {
            let outcomes = spec
                .models
                .iter()
                .zip(&success)
                .map(|(m, p)| {
                    let score = if rng.random::<f64>() < *p { 1.0 } else { 0.0 };
                    (m.id.clone(), Outcome { score, cost: m.cost })
                })
                .collect();
            trace.entries.push(TraceEntry {
                query_id: format!("t{:0width$}", i - spec.index_queries),
                tags,
                benchmark: spec.benchmark.clone(),
                tagging_cost: spec.tagging_cost,
                outcomes,
            });
        }
    }
    Ok(SyntheticData {
        queries,
        records,
        trace,
    })
}
