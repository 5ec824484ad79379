//! Offline evaluation: replaying held-out traces through the router and
//! comparing against fixed, random and oracle baselines.

mod distribution;
mod report;
mod synthetic;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{IndexCorpus, ScoreIndex};
use crate::model::RoutingConfig;
use crate::persist::to_canonical_json;
use crate::scoring::route;

pub use distribution::{domain_distribution, reciprocal_rank, DomainDistribution};
pub use report::{summary_json, write_report_csv};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticModel, SyntheticSpec};
pub use trace::{Outcome, TraceEntry, TraceSet};

/// How each trace entry picks its model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    /// `gamma*KS + delta*CS` with the configured weights.
    Mixed,
    /// Knowledge score only (`delta = 0`).
    KnowledgeOnly,
    /// Capability score only (`gamma = 0`).
    CapabilityOnly,
    /// Uniform choice from the pool.
    Random {
        seed: u64,
    },
    Fixed(String),
    /// Best recorded outcome, cheapest on ties.
    Oracle,
}

impl Strategy {
    /// Routed strategies consult the index and pay for tagging.
    pub fn is_routed(&self) -> bool {
        matches!(self, Self::Mixed | Self::KnowledgeOnly | Self::CapabilityOnly)
    }

    fn routing_config(&self, base: &RoutingConfig) -> RoutingConfig {
        match self {
            Self::KnowledgeOnly => RoutingConfig { delta: 0.0, ..*base },
            Self::CapabilityOnly => RoutingConfig { gamma: 0.0, ..*base },
            _ => *base,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mixed => f.write_str("mixed"),
            Self::KnowledgeOnly => f.write_str("knowledge"),
            Self::CapabilityOnly => f.write_str("capability"),
            Self::Random { seed } => write!(f, "random:{seed}"),
            Self::Fixed(model) => write!(f, "fixed:{model}"),
            Self::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts `mixed`, `knowledge`, `capability`, `oracle`, `random`,
    /// `random:<seed>` and `fixed:<model>`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("mixed", None) => Ok(Self::Mixed),
            ("knowledge", None) => Ok(Self::KnowledgeOnly),
            ("capability", None) => Ok(Self::CapabilityOnly),
            ("oracle", None) => Ok(Self::Oracle),
            ("random", None) => Ok(Self::Random { seed: 0 }),
            ("random", Some(seed)) => seed
                .parse()
                .map(|seed| Self::Random { seed })
                .map_err(|_| Error::InvalidConfig(format!("bad random seed {seed:?}"))),
            ("fixed", Some(model)) if !model.is_empty() => Ok(Self::Fixed(model.to_string())),
            _ => Err(Error::InvalidConfig(format!("unknown strategy {s:?}"))),
        }
    }
}

/// The model picked for one trace entry and what it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDecision {
    pub query_id: String,
    pub benchmark: String,
    pub model_id: String,
    pub score: f64,
    /// Model cost plus tagging cost for routed strategies.
    pub cost: f64,
    /// Cost slope of the chosen model; routed strategies only.
    pub cost_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub queries: usize,
    /// Mean outcome score of the chosen models.
    pub routed_score: f64,
    /// Total cost of the chosen models, tagging included.
    pub routed_cost: f64,
    pub best_single_model_id: String,
    pub best_single_score: f64,
    pub best_single_cost: f64,
    /// `100 * routed_score / best_single_score`; `None` when the best single
    /// model scores 0.
    pub performance_ratio: Option<f64>,
    /// `100 * routed_cost / best_single_cost`; `None` when that cost is 0.
    pub cost_ratio: Option<f64>,
    /// Mean score of every pool model if it answered every query.
    pub single_scores: BTreeMap<String, f64>,
    pub selection_counts: BTreeMap<String, u64>,
    /// Mean cost slope of routed choices.
    pub mean_cost_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub strategy: String,
    pub beta: f64,
    pub benchmarks: BTreeMap<String, BenchmarkReport>,
    pub overall: BenchmarkReport,
    #[serde(skip)]
    pub decisions: Vec<EntryDecision>,
}

fn sorted_pool<S: AsRef<str>>(pool: &[S]) -> Result<Vec<String>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let set: BTreeSet<String> = pool.iter().map(|m| m.as_ref().to_string()).collect();
    Ok(set.into_iter().collect())
}

fn oracle_choice<'a>(entry: &TraceEntry, pool: &'a [String]) -> &'a String {
    let mut best = &pool[0];
    for model in &pool[1..] {
        let (o, b) = (entry.outcomes[model], entry.outcomes[best]);
        if o.score > b.score || (o.score == b.score && o.cost < b.cost) {
            best = model;
        }
    }
    best
}

fn summarize(entries: &[&TraceEntry], decisions: &[&EntryDecision], pool: &[String]) -> BenchmarkReport {
    let n = entries.len() as f64;
    let routed_score = decisions.iter().map(|d| d.score).sum::<f64>() / n;
    let routed_cost = decisions.iter().map(|d| d.cost).sum::<f64>();

    let mut single_scores = BTreeMap::new();
    let mut single_costs = BTreeMap::new();
    for model in pool {
        let score = entries.iter().map(|e| e.outcomes[model].score).sum::<f64>() / n;
        let cost = entries.iter().map(|e| e.outcomes[model].cost).sum::<f64>();
        single_scores.insert(model.clone(), score);
        single_costs.insert(model.clone(), cost);
    }
    let mut best = &pool[0];
    for model in &pool[1..] {
        if single_scores[model] > single_scores[best] {
            best = model;
        }
    }
    let best_single_score = single_scores[best];
    let best_single_cost = single_costs[best];

    let mut selection_counts: BTreeMap<String, u64> = pool.iter().map(|m| (m.clone(), 0)).collect();
    for d in decisions {
        *selection_counts.entry(d.model_id.clone()).or_default() += 1;
    }
    let slopes: Vec<f64> = decisions.iter().filter_map(|d| d.cost_slope).collect();
    let mean_cost_slope = (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64);

    BenchmarkReport {
        queries: entries.len(),
        routed_score,
        routed_cost,
        best_single_model_id: best.clone(),
        best_single_score,
        best_single_cost,
        performance_ratio: (best_single_score > 0.0).then(|| 100.0 * routed_score / best_single_score),
        cost_ratio: (best_single_cost > 0.0).then(|| 100.0 * routed_cost / best_single_cost),
        single_scores,
        selection_counts,
        mean_cost_slope,
    }
}

/// Replays every trace entry through `strategy` restricted to `pool` and
/// compares the outcome with each pool model used alone.
///
/// Tags are canonicalized through the index before routing. Tagging cost is
/// charged to routed strategies only.
pub fn replay<S: AsRef<str>>(
    trace: &TraceSet,
    index: &ScoreIndex,
    config: &RoutingConfig,
    strategy: &Strategy,
    pool: &[S],
) -> Result<HarnessReport> {
    let pool = sorted_pool(pool)?;
    if trace.entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    trace.check_coverage(&pool)?;
    if let Strategy::Fixed(model) = strategy {
        if !pool.contains(model) {
            return Err(Error::InvalidConfig(format!(
                "fixed model {model:?} is not in the pool"
            )));
        }
    }
    let route_config = strategy.routing_config(config);
    let mut rng = match strategy {
        Strategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };

    let mut decisions = Vec::with_capacity(trace.entries.len());
    for entry in &trace.entries {
        let (model_id, cost_slope, tagging) = match strategy {
            Strategy::Mixed | Strategy::KnowledgeOnly | Strategy::CapabilityOnly => {
                let tags = index.canonicalize_tags(&entry.tags);
                let decision = route(index, &tags, &route_config, &pool)?;
                let slope = decision.chosen().cost_slope;
                (decision.model_id, Some(slope), entry.tagging_cost)
            }
            Strategy::Random { .. } => {
                let rng = rng.as_mut().expect("random strategy has an rng");
                (pool[rng.random_range(0..pool.len())].clone(), None, 0.0)
            }
            Strategy::Fixed(model) => (model.clone(), None, 0.0),
            Strategy::Oracle => (oracle_choice(entry, &pool).clone(), None, 0.0),
        };
        let outcome = entry.outcomes[&model_id];
        decisions.push(EntryDecision {
            query_id: entry.query_id.clone(),
            benchmark: entry.benchmark.clone(),
            model_id,
            score: outcome.score,
            cost: outcome.cost + tagging,
            cost_slope,
        });
    }

    let mut by_benchmark: BTreeMap<&str, (Vec<&TraceEntry>, Vec<&EntryDecision>)> = BTreeMap::new();
    for (entry, decision) in trace.entries.iter().zip(&decisions) {
        let slot = by_benchmark.entry(&entry.benchmark).or_default();
        slot.0.push(entry);
        slot.1.push(decision);
    }
    let benchmarks = by_benchmark
        .iter()
        .map(|(b, (entries, ds))| (b.to_string(), summarize(entries, ds, &pool)))
        .collect();
    let all_entries: Vec<&TraceEntry> = trace.entries.iter().collect();
    let all_decisions: Vec<&EntryDecision> = decisions.iter().collect();
    let overall = summarize(&all_entries, &all_decisions, &pool);

    Ok(HarnessReport {
        strategy: strategy.to_string(),
        beta: route_config.beta,
        benchmarks,
        overall,
        decisions,
    })
}

/// Replays the trace once per `beta` (non-negative, ascending).
pub fn beta_sweep<S: AsRef<str>>(
    trace: &TraceSet,
    index: &ScoreIndex,
    config: &RoutingConfig,
    strategy: &Strategy,
    pool: &[S],
    betas: &[f64],
) -> Result<Vec<HarnessReport>> {
    if betas.is_empty() {
        return Err(Error::InvalidConfig("beta grid is empty".into()));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidConfig("beta values must be finite and >= 0".into()));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "beta grid must be strictly ascending".into(),
        ));
    }
    betas
        .iter()
        .map(|b| replay(trace, index, &config.with_beta(*b), strategy, pool))
        .collect()
}

/// Query ids whose chosen cost slope grew between consecutive sweep points.
/// Empty for a correct router.
pub fn slope_violations(sweep: &[HarnessReport]) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    for pair in sweep.windows(2) {
        for (lo, hi) in pair[0].decisions.iter().zip(&pair[1].decisions) {
            if let (Some(a), Some(b)) = (lo.cost_slope, hi.cost_slope) {
                if b > a + 1e-12 * a.abs().max(1.0) {
                    out.push((lo.query_id.clone(), pair[0].beta, pair[1].beta));
                }
            }
        }
    }
    out
}

/// One step of a growing pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStep {
    pub added: String,
    pub pool: Vec<String>,
    pub index_version: u64,
    /// Profiles of models indexed before this step serialize byte-identically.
    pub existing_unchanged: bool,
    pub report: HarnessReport,
}

/// Grows the pool one model at a time, indexing each model not already in
/// `base` from `corpus`, and replays the trace with mixed routing after
/// every step.
pub fn dynamic_pool_experiment<S: AsRef<str>>(
    trace: &TraceSet,
    base: &ScoreIndex,
    corpus: &IndexCorpus,
    config: &RoutingConfig,
    sequence: &[S],
) -> Result<Vec<PoolStep>> {
    let mut seen = BTreeSet::new();
    for m in sequence {
        if !seen.insert(m.as_ref()) {
            return Err(Error::InvalidConfig(format!(
                "model {:?} appears twice",
                m.as_ref()
            )));
        }
    }
    let mut index = base.clone();
    let mut pool: Vec<String> = Vec::new();
    let mut steps = Vec::with_capacity(sequence.len());
    for model in sequence {
        let model = model.as_ref();
        let before: BTreeMap<String, String> = index
            .models
            .iter()
            .map(|(id, p)| Ok((id.clone(), to_canonical_json(p)?)))
            .collect::<Result<_>>()?;
        if !index.models.contains_key(model) {
            index = index.add_model(model, corpus)?;
        }
        let existing_unchanged = before
            .iter()
            .map(|(id, json)| Ok(to_canonical_json(&index.models[id])? == *json))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|same| same);
        pool.push(model.to_string());
        let report = replay(trace, &index, config, &Strategy::Mixed, &pool)?;
        steps.push(PoolStep {
            added: model.to_string(),
            pool: pool.clone(),
            index_version: index.version,
            existing_unchanged,
            report,
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use crate::model::{CapabilityTaxonomy, TagSet};
    use crate::vocab::{build_vocabulary, stub_provider};

    fn outcome(score: f64, cost: f64) -> Outcome {
        Outcome { score, cost }
    }

    fn entry(q: &str, bench: &str, k: &str, outcomes: &[(&str, f64, f64)]) -> TraceEntry {
        TraceEntry {
            query_id: q.into(),
            tags: TagSet::new([k], ["reasoning"]),
            benchmark: bench.into(),
            tagging_cost: 0.01,
            outcomes: outcomes
                .iter()
                .map(|(m, s, c)| (m.to_string(), outcome(*s, *c)))
                .collect(),
        }
    }

    /// Model `a` is good at math and cheap, `b` at law and expensive.
    fn fixture() -> (ScoreIndex, IndexCorpus, TraceSet) {
        let mut queries = BTreeMap::new();
        let mut records = BTreeMap::<String, BTreeMap<String, crate::model::EvalAggregate>>::new();
        for i in 0..4 {
            let domain = if i % 2 == 0 { "math" } else { "law" };
            let q = format!("q{i}");
            queries.insert(q.clone(), TagSet::new([domain], ["reasoning"]));
            let (sa, sb) = if domain == "math" { (1.0, 0.0) } else { (0.0, 1.0) };
            records
                .entry("a".into())
                .or_default()
                .insert(q.clone(), crate::model::EvalAggregate { score: sa, cost: 0.1 });
            records
                .entry("b".into())
                .or_default()
                .insert(q, crate::model::EvalAggregate { score: sb, cost: 1.0 });
        }
        let corpus = IndexCorpus::new(queries, records).unwrap();
        let vocab = build_vocabulary(&corpus.knowledge_occurrences(), &stub_provider(0), 0.6, 1).unwrap();
        let index = build_index(&corpus, &vocab, &CapabilityTaxonomy::default(), 0.5).unwrap();
        let trace = TraceSet {
            entries: vec![
                entry("t1", "x", "math", &[("a", 1.0, 0.1), ("b", 0.0, 1.0)]),
                entry("t2", "x", "law", &[("a", 0.0, 0.1), ("b", 1.0, 1.0)]),
                entry("t3", "y", "law", &[("a", 0.0, 0.1), ("b", 1.0, 1.0)]),
            ],
        };
        (index, corpus, trace)
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Mixed,
            Strategy::KnowledgeOnly,
            Strategy::CapabilityOnly,
            Strategy::Random { seed: 9 },
            Strategy::Fixed("m".into()),
            Strategy::Oracle,
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
        assert!("fixed:".parse::<Strategy>().is_err());
    }

    #[test]
    fn mixed_routing_beats_every_single_model() {
        let (index, _, trace) = fixture();
        let r = replay(
            &trace,
            &index,
            &RoutingConfig::default(),
            &Strategy::Mixed,
            &["a", "b"],
        )
        .unwrap();
        assert_eq!(r.overall.routed_score, 1.0);
        assert_eq!(r.overall.best_single_model_id, "b");
        assert!((r.overall.best_single_score - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.overall.performance_ratio.unwrap() - 150.0).abs() < 1e-9);
        // a once at 0.1, b twice at 1.0, plus three tagging calls
        assert!((r.overall.routed_cost - 2.13).abs() < 1e-12);
        assert!((r.overall.cost_ratio.unwrap() - 100.0 * 2.13 / 3.0).abs() < 1e-9);
        assert_eq!(r.overall.selection_counts["a"], 1);
        assert_eq!(r.benchmarks.len(), 2);
        assert_eq!(r.benchmarks["y"].queries, 1);
    }

    #[test]
    fn baselines() {
        let (index, _, trace) = fixture();
        let cfg = RoutingConfig::default();
        let fixed = replay(&trace, &index, &cfg, &Strategy::Fixed("a".into()), &["a", "b"]).unwrap();
        assert!((fixed.overall.routed_score - 1.0 / 3.0).abs() < 1e-15);
        assert!((fixed.overall.routed_cost - 0.3).abs() < 1e-12);
        let oracle = replay(&trace, &index, &cfg, &Strategy::Oracle, &["a", "b"]).unwrap();
        assert_eq!(oracle.overall.routed_score, 1.0);
        let r1 = replay(&trace, &index, &cfg, &Strategy::Random { seed: 3 }, &["a", "b"]).unwrap();
        let r2 = replay(&trace, &index, &cfg, &Strategy::Random { seed: 3 }, &["b", "a"]).unwrap();
        assert_eq!(r1.decisions, r2.decisions);
        assert!(matches!(
            replay(&trace, &index, &cfg, &Strategy::Fixed("z".into()), &["a"]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn coverage_and_pool_errors() {
        let (index, _, mut trace) = fixture();
        let cfg = RoutingConfig::default();
        assert!(matches!(
            replay(&trace, &index, &cfg, &Strategy::Mixed, &Vec::<String>::new()),
            Err(Error::EmptyPool)
        ));
        trace.entries[1].outcomes.remove("b");
        assert!(matches!(
            replay(&trace, &index, &cfg, &Strategy::Mixed, &["a", "b"]),
            Err(Error::Trace(_))
        ));
    }

    #[test]
    fn cost_penalty_shifts_choice_to_cheaper_model() {
        let (index, _, trace) = fixture();
        let sweep = beta_sweep(
            &trace,
            &index,
            &RoutingConfig::default(),
            &Strategy::Mixed,
            &["a", "b"],
            &[0.0, 1.0, 10.0],
        )
        .unwrap();
        assert_eq!(sweep.len(), 3);
        assert_eq!(sweep[2].overall.selection_counts["a"], 3);
        assert!(slope_violations(&sweep).is_empty());
        assert!(beta_sweep(
            &trace,
            &index,
            &RoutingConfig::default(),
            &Strategy::Mixed,
            &["a"],
            &[1.0, 0.5]
        )
        .is_err());
    }

    #[test]
    fn growing_pool_keeps_existing_profiles() {
        let (index, corpus, trace) = fixture();
        let empty = ScoreIndex::empty(&index.vocabulary, &index.taxonomy, 0.5).unwrap();
        let steps =
            dynamic_pool_experiment(&trace, &empty, &corpus, &RoutingConfig::default(), &["b", "a"]).unwrap();
        assert_eq!(steps.len(), 2);
        assert!(steps.iter().all(|s| s.existing_unchanged));
        assert_eq!(steps[1].index_version, 2);
        assert_eq!(steps[1].report.overall.routed_score, 1.0);
        assert_eq!(
            steps[1].report,
            replay(
                &trace,
                &index,
                &RoutingConfig::default(),
                &Strategy::Mixed,
                &["a", "b"]
            )
            .unwrap()
        );
    }
}
