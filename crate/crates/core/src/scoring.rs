//! Rank-weighted scoring and the routing argmax.
//!
//! A query's ranked element list `e_1..e_n` gets weights
//! `w_j = alpha^(j-1) / sum_m alpha^(m-1)`. Each indexed query contributes
//! `(s - beta*c) * w_j` to the element at rank `j`; an element's aggregate is
//! the mean of those contributions over the queries that mention it. At
//! routing time the same weights combine a model's aggregates over the
//! incoming query's elements into a knowledge score (KS) and a capability
//! score (CS), and the router picks `argmax gamma*KS + delta*CS`.
//!
//! Everything is affine in `beta`, so aggregates keep their score and cost
//! parts apart and `beta` is applied only when routing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ScoreIndex;
use crate::model::{EvalAggregate, RoutingConfig, RoutingDecision, TagSet, OTHER};

/// Normalized geometric rank weights.
pub fn rank_weights(alpha: f64, length: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
    }
    if length < 1 {
        return Err(Error::InvalidConfig("rank list length must be >= 1".into()));
    }
    Ok(geometric_weights(alpha, length))
}

fn geometric_weights(alpha: f64, length: usize) -> Vec<f64> {
    let mut raw = Vec::with_capacity(length);
    let mut power = 1.0;
    for _ in 0..length {
        raw.push(power);
        power *= alpha;
    }
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Rank-weighted score and cost parts that `element` receives from one
/// indexed query, or `None` when the query does not mention it.
pub fn element_contribution(
    agg: &EvalAggregate,
    tags: &[String],
    element: &str,
    alpha: f64,
) -> Option<(f64, f64)> {
    let rank = tags.iter().position(|t| t == element)?;
    let w = geometric_weights(alpha, tags.len())[rank];
    Some((agg.score * w, agg.cost * w))
}

/// `(s - beta*c) * w_j` for the element at rank `j`, zero if absent.
pub fn per_query_element_score(
    agg: &EvalAggregate,
    tags: &[String],
    element: &str,
    alpha: f64,
    beta: f64,
) -> f64 {
    element_contribution(agg, tags, element, alpha)
        .map(|(s, c)| s - beta * c)
        .unwrap_or(0.0)
}

/// One model's aggregate for one knowledge element or capability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementStat {
    pub score_agg: f64,
    pub cost_agg: f64,
    pub support: u64,
}

impl ElementStat {
    pub fn value(&self, beta: f64) -> f64 {
        self.score_agg - beta * self.cost_agg
    }
}

/// Mean of the per-query `(score_part, cost_part)` contributions.
pub fn aggregate_element(contributions: &[(f64, f64)]) -> Result<ElementStat> {
    if contributions.is_empty() {
        return Err(Error::ElementUnsupported);
    }
    let n = contributions.len() as f64;
    let (s, c) = contributions
        .iter()
        .fold((0.0, 0.0), |(s, c), (ds, dc)| (s + ds, c + dc));
    Ok(ElementStat {
        score_agg: s / n,
        cost_agg: c / n,
        support: contributions.len() as u64,
    })
}

/// Everything the router knows about one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub knowledge_stats: BTreeMap<String, ElementStat>,
    pub capability_stats: BTreeMap<String, ElementStat>,
    pub overall_mean_score: f64,
    pub overall_mean_cost: f64,
}

/// Which substitutes may stand in for a missing (model, element) stat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackPolicy {
    /// Knowledge only: use the model's OTHER bucket.
    pub other_bucket: bool,
    /// Use the model's overall mean score and cost.
    pub overall_mean: bool,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self {
            other_bucket: true,
            overall_mean: true,
        }
    }
}

impl FallbackPolicy {
    /// Missing stats contribute zero.
    pub fn none() -> Self {
        Self {
            other_bucket: false,
            overall_mean: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackKind {
    OtherBucket,
    OverallMean,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackUse {
    pub element: String,
    pub kind: FallbackKind,
}

/// Rank-weighted sums over a query's elements with `beta` not yet applied:
/// the element score is `score - beta * cost`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerms {
    pub score: f64,
    pub cost: f64,
}

impl ScoreTerms {
    pub fn value(&self, beta: f64) -> f64 {
        self.score - beta * self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementKind {
    Knowledge,
    Capability,
}

fn resolve_stat(
    profile: &ModelProfile,
    kind: ElementKind,
    element: &str,
    policy: FallbackPolicy,
) -> (f64, f64, Option<FallbackKind>) {
    let stats = match kind {
        ElementKind::Knowledge => &profile.knowledge_stats,
        ElementKind::Capability => &profile.capability_stats,
    };
    if let Some(stat) = stats.get(element) {
        return (stat.score_agg, stat.cost_agg, None);
    }
    if kind == ElementKind::Knowledge && policy.other_bucket && element != OTHER {
        if let Some(other) = stats.get(OTHER) {
            return (other.score_agg, other.cost_agg, Some(FallbackKind::OtherBucket));
        }
    }
    if policy.overall_mean {
        return (
            profile.overall_mean_score,
            profile.overall_mean_cost,
            Some(FallbackKind::OverallMean),
        );
    }
    (0.0, 0.0, Some(FallbackKind::Zero))
}

fn weighted_terms(
    profile: &ModelProfile,
    kind: ElementKind,
    elements: &[String],
    alpha: f64,
    policy: FallbackPolicy,
) -> (ScoreTerms, Vec<FallbackUse>) {
    if elements.is_empty() {
        return (ScoreTerms::default(), Vec::new());
    }
    let weights = geometric_weights(alpha, elements.len());
    let mut terms = ScoreTerms::default();
    let mut fallbacks = Vec::new();
    for (element, w) in elements.iter().zip(weights) {
        let (score, cost, fallback) = resolve_stat(profile, kind, element, policy);
        terms.score += score * w;
        terms.cost += cost * w;
        if let Some(kind) = fallback {
            fallbacks.push(FallbackUse {
                element: element.clone(),
                kind,
            });
        }
    }
    (terms, fallbacks)
}

/// Knowledge terms of one model for a ranked knowledge list.
pub fn knowledge_terms(
    profile: &ModelProfile,
    knowledge: &[String],
    alpha: f64,
    policy: FallbackPolicy,
) -> (ScoreTerms, Vec<FallbackUse>) {
    weighted_terms(profile, ElementKind::Knowledge, knowledge, alpha, policy)
}

/// Capability terms of one model for a ranked capability list.
pub fn capability_terms(
    profile: &ModelProfile,
    capabilities: &[String],
    alpha: f64,
    policy: FallbackPolicy,
) -> (ScoreTerms, Vec<FallbackUse>) {
    weighted_terms(profile, ElementKind::Capability, capabilities, alpha, policy)
}

/// KS: rank-weighted sum of `score_agg - beta*cost_agg` over the knowledge list.
pub fn knowledge_score(
    profile: &ModelProfile,
    knowledge: &[String],
    alpha: f64,
    beta: f64,
    policy: FallbackPolicy,
) -> (f64, Vec<FallbackUse>) {
    let (terms, fallbacks) = knowledge_terms(profile, knowledge, alpha, policy);
    (terms.value(beta), fallbacks)
}

/// CS: same as [`knowledge_score`] over the capability list.
pub fn capability_score(
    profile: &ModelProfile,
    capabilities: &[String],
    alpha: f64,
    beta: f64,
    policy: FallbackPolicy,
) -> (f64, Vec<FallbackUse>) {
    let (terms, fallbacks) = capability_terms(profile, capabilities, alpha, policy);
    (terms.value(beta), fallbacks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScoreBreakdown {
    pub knowledge_score: f64,
    pub capability_score: f64,
    pub mixed_score: f64,
    /// Rank-weighted cost term of KS (KS falls by `beta` times this).
    pub knowledge_cost: f64,
    /// Rank-weighted cost term of CS.
    pub capability_cost: f64,
    /// `gamma*knowledge_cost + delta*capability_cost`: the rate at which the
    /// mixed score falls as `beta` grows.
    pub cost_slope: f64,
    pub fallbacks_used: Vec<FallbackUse>,
}

/// Scores one model for a tag set.
pub fn score_model(
    profile: &ModelProfile,
    tags: &TagSet,
    config: &RoutingConfig,
    policy: FallbackPolicy,
) -> ModelScoreBreakdown {
    let (k, mut fallbacks) = knowledge_terms(profile, &tags.knowledge, config.alpha, policy);
    let (c, cap_fallbacks) = capability_terms(profile, &tags.capabilities, config.alpha, policy);
    fallbacks.extend(cap_fallbacks);
    let knowledge_score = k.value(config.beta);
    let capability_score = c.value(config.beta);
    ModelScoreBreakdown {
        knowledge_score,
        capability_score,
        mixed_score: config.gamma * knowledge_score + config.delta * capability_score,
        knowledge_cost: k.cost,
        capability_cost: c.cost,
        cost_slope: config.gamma * k.cost + config.delta * c.cost,
        fallbacks_used: fallbacks,
    }
}

/// What to do when the routing alpha differs from the alpha the index was
/// built with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AlphaCheck {
    #[default]
    Strict,
    AllowMismatch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouteOptions {
    pub alpha_check: AlphaCheck,
    pub fallback: FallbackPolicy,
}

/// Picks the pool model with the highest `gamma*KS + delta*CS`; ties go to
/// the lexicographically smallest id. Tags are used as given, so callers
/// should canonicalize them first (see [`ScoreIndex::canonicalize_tags`]).
pub fn route<S: AsRef<str>>(
    index: &ScoreIndex,
    tags: &TagSet,
    config: &RoutingConfig,
    pool: &[S],
) -> Result<RoutingDecision> {
    route_with(index, tags, config, pool, RouteOptions::default())
}

pub fn route_with<S: AsRef<str>>(
    index: &ScoreIndex,
    tags: &TagSet,
    config: &RoutingConfig,
    pool: &[S],
    options: RouteOptions,
) -> Result<RoutingDecision> {
    config.validate()?;
    if options.alpha_check == AlphaCheck::Strict && config.alpha != index.alpha_used {
        return Err(Error::AlphaMismatch {
            index: index.alpha_used,
            requested: config.alpha,
        });
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }

    let mut breakdown = BTreeMap::new();
    for id in pool {
        let id = id.as_ref();
        let profile = index
            .models
            .get(id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))?;
        breakdown.insert(
            id.to_string(),
            score_model(profile, tags, config, options.fallback),
        );
    }

    // BTreeMap order plus a strict comparison keeps the smallest id on ties.
    let mut best: Option<(&String, f64)> = None;
    for (id, b) in &breakdown {
        if best.is_none_or(|(_, score)| b.mixed_score > score) {
            best = Some((id, b.mixed_score));
        }
    }
    let model_id = best.map(|(id, _)| id.clone()).ok_or(Error::EmptyPool)?;
    Ok(RoutingDecision { model_id, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CapabilityTaxonomy;
    use crate::vocab::Vocabulary;
    use proptest::prelude::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn stat(score: f64, cost: f64) -> ElementStat {
        ElementStat {
            score_agg: score,
            cost_agg: cost,
            support: 1,
        }
    }

    fn profile(knowledge: &[(&str, f64)], capabilities: &[(&str, f64)]) -> ModelProfile {
        ModelProfile {
            knowledge_stats: knowledge
                .iter()
                .map(|(k, s)| (k.to_string(), stat(*s, 0.0)))
                .collect(),
            capability_stats: capabilities
                .iter()
                .map(|(k, s)| (k.to_string(), stat(*s, 0.0)))
                .collect(),
            overall_mean_score: 0.42,
            overall_mean_cost: 0.0,
        }
    }

    fn toy_index(models: Vec<(&str, ModelProfile)>) -> ScoreIndex {
        ScoreIndex {
            version: 1,
            alpha_used: 0.5,
            taxonomy: CapabilityTaxonomy::default(),
            vocabulary: Vocabulary::default(),
            models: models.into_iter().map(|(id, p)| (id.to_string(), p)).collect(),
        }
    }

    #[test]
    fn rank_weight_examples() {
        let w = rank_weights(0.5, 2).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rank_weights(1.0, 4).unwrap(), vec![0.25; 4]);
        assert_eq!(rank_weights(0.7, 1).unwrap(), vec![1.0]);
        assert!(matches!(rank_weights(0.0, 3), Err(Error::InvalidConfig(_))));
        assert!(matches!(rank_weights(-1.0, 3), Err(Error::InvalidConfig(_))));
        assert!(matches!(rank_weights(0.5, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn per_query_examples() {
        let agg = EvalAggregate {
            score: 0.8,
            cost: 0.1,
        };
        let tags = labels(&["a", "b", "c"]);
        // weights for alpha 0.5 over 3 ranks: 1, 0.5, 0.25 over 1.75
        let w2 = 0.5 / 1.75;
        let v = per_query_element_score(&agg, &tags, "b", 0.5, 0.0);
        assert!((v - 0.8 * w2).abs() < 1e-12);
        assert!((v - 0.228_571_428_571_428_5).abs() < 1e-12);
        let v = per_query_element_score(&agg, &tags, "b", 0.5, 1.0);
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(per_query_element_score(&agg, &tags, "z", 0.5, 1.0), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_element(&[(0.6667, 0.0667), (0.2, 0.05)]).unwrap();
        assert!((s.score_agg - 0.43335).abs() < 1e-12);
        assert!((s.cost_agg - 0.05835).abs() < 1e-12);
        assert_eq!(s.support, 2);
        assert_eq!(aggregate_element(&[(0.5, 0.1)]).unwrap(), stat_with(0.5, 0.1, 1));
        assert!(matches!(aggregate_element(&[]), Err(Error::ElementUnsupported)));
    }

    fn stat_with(score: f64, cost: f64, support: u64) -> ElementStat {
        ElementStat {
            score_agg: score,
            cost_agg: cost,
            support,
        }
    }

    #[test]
    fn knowledge_score_examples() {
        let p = profile(&[("k1", 0.7), ("k2", 0.4)], &[]);
        let (ks, fb) = knowledge_score(&p, &labels(&["k1", "k2"]), 0.5, 0.0, FallbackPolicy::default());
        assert!((ks - 0.6).abs() < 1e-12);
        assert!(fb.is_empty());

        let (ks, fb) = knowledge_score(&p, &[], 0.5, 0.0, FallbackPolicy::default());
        assert_eq!(ks, 0.0);
        assert!(fb.is_empty());

        let p = profile(&[("k1", 0.7), (OTHER, 0.3)], &[]);
        let (ks, fb) = knowledge_score(&p, &labels(&["k1", "k2"]), 0.5, 0.0, FallbackPolicy::default());
        assert!((ks - (0.7 * 2.0 / 3.0 + 0.3 / 3.0)).abs() < 1e-12);
        assert!((ks - 0.566_666_666_666_666_7).abs() < 1e-12);
        assert_eq!(
            fb,
            vec![FallbackUse {
                element: "k2".into(),
                kind: FallbackKind::OtherBucket
            }]
        );
    }

    #[test]
    fn fallback_chain_order() {
        let p = profile(&[("k1", 0.7)], &[]);
        let (ks, fb) = knowledge_score(&p, &labels(&["k9"]), 0.5, 0.0, FallbackPolicy::default());
        assert_eq!(ks, 0.42);
        assert_eq!(fb[0].kind, FallbackKind::OverallMean);

        let (ks, fb) = knowledge_score(&p, &labels(&["k9"]), 0.5, 0.0, FallbackPolicy::none());
        assert_eq!(ks, 0.0);
        assert_eq!(fb[0].kind, FallbackKind::Zero);

        // The OTHER element itself skips the OTHER-bucket step.
        let (_, fb) = knowledge_score(&p, &labels(&[OTHER]), 0.5, 0.0, FallbackPolicy::default());
        assert_eq!(fb[0].kind, FallbackKind::OverallMean);
    }

    #[test]
    fn capability_score_examples() {
        let p = profile(&[], &[("coding", 0.9), ("reasoning", 0.8), ("agentic", 0.4)]);
        let (cs, _) = capability_score(&p, &labels(&["coding"]), 0.5, 0.0, FallbackPolicy::default());
        assert_eq!(cs, 0.9);
        let (cs, _) = capability_score(
            &p,
            &labels(&["reasoning", "agentic"]),
            1.0,
            0.0,
            FallbackPolicy::default(),
        );
        assert!((cs - 0.6).abs() < 1e-12);
        let (cs, fb) = capability_score(&p, &labels(&["multilingual"]), 0.5, 0.0, FallbackPolicy::none());
        assert_eq!(cs, 0.0);
        assert_eq!(
            fb,
            vec![FallbackUse {
                element: "multilingual".into(),
                kind: FallbackKind::Zero
            }]
        );
    }

    #[test]
    fn negative_element_values_propagate() {
        let mut p = profile(&[], &[]);
        p.knowledge_stats.insert("k".into(), stat(0.2, 0.5));
        let (ks, _) = knowledge_score(&p, &labels(&["k"]), 0.5, 2.0, FallbackPolicy::default());
        assert!((ks + 0.8).abs() < 1e-12);
    }

    #[test]
    fn route_examples() {
        let index = toy_index(vec![
            ("a", profile(&[("coding", 0.5)], &[])),
            ("b", profile(&[("coding", 0.9)], &[])),
        ]);
        let tags = TagSet::new(["coding"], Vec::<String>::new());
        let d = route(&index, &tags, &RoutingConfig::default(), &["a", "b"]).unwrap();
        assert_eq!(d.model_id, "b");
        assert_eq!(d.breakdown.len(), 2);

        let d = route(&index, &tags, &RoutingConfig::default(), &["a"]).unwrap();
        assert_eq!(d.model_id, "a");

        let tied = toy_index(vec![
            ("zeta", profile(&[("coding", 0.5)], &[])),
            ("alpha", profile(&[("coding", 0.5)], &[])),
        ]);
        let d = route(&tied, &tags, &RoutingConfig::default(), &["zeta", "alpha"]).unwrap();
        assert_eq!(d.model_id, "alpha");
    }

    #[test]
    fn route_errors() {
        let index = toy_index(vec![("a", profile(&[], &[]))]);
        let tags = TagSet::default();
        let cfg = RoutingConfig::default();
        let empty: [&str; 0] = [];
        assert!(matches!(
            route(&index, &tags, &cfg, &empty),
            Err(Error::EmptyPool)
        ));
        assert!(matches!(
            route(&index, &tags, &cfg, &["nope"]),
            Err(Error::UnknownModel(_))
        ));
        let other_alpha = RoutingConfig { alpha: 0.7, ..cfg };
        assert!(matches!(
            route(&index, &tags, &other_alpha, &["a"]),
            Err(Error::AlphaMismatch { .. })
        ));
        let opts = RouteOptions {
            alpha_check: AlphaCheck::AllowMismatch,
            ..Default::default()
        };
        assert!(route_with(&index, &tags, &other_alpha, &["a"], opts).is_ok());
    }

    #[test]
    fn mixed_score_is_weighted_sum() {
        let index = toy_index(vec![("a", profile(&[("k", 0.3)], &[("coding", 0.6)]))]);
        let tags = TagSet::new(["k"], ["coding"]);
        let cfg = RoutingConfig {
            gamma: 2.0,
            delta: 0.5,
            ..Default::default()
        };
        let d = route(&index, &tags, &cfg, &["a"]).unwrap();
        let b = d.chosen();
        assert_eq!(b.mixed_score, 2.0 * b.knowledge_score + 0.5 * b.capability_score);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn weights_normalized(alpha in 1e-3f64..=2.0, length in 1usize..=10) {
            let w = rank_weights(alpha, length).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for pair in w.windows(2) {
                if alpha < 1.0 {
                    prop_assert!(pair[0] > pair[1]);
                } else if alpha == 1.0 {
                    prop_assert_eq!(pair[0], pair[1]);
                }
            }
        }
    }
}
