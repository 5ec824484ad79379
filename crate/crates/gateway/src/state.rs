use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use kcroute_core::index::ModelRecords;
use kcroute_core::tagger::TaggerClient;
use kcroute_core::{Error, IndexCorpus, Result, RoutingConfig, ScoreIndex};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

/// Operator-facing metadata for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    /// Per-call cost shown to clients. Defaults to the model's mean indexed
    /// cost.
    #[serde(default)]
    pub cost: Option<f64>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    /// Pass-through target for this model.
    #[serde(default)]
    pub endpoint: Option<String>,
}

fn enabled_default() -> bool {
    true
}

impl ModelEntry {
    fn for_indexed(id: &str, index: &ScoreIndex) -> Self {
        Self {
            id: id.to_string(),
            display_name: None,
            cost: index.models.get(id).map(|p| p.overall_mean_cost),
            enabled: true,
            endpoint: None,
        }
    }
}

/// Registry file layout: `{"models": [ModelEntry, ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub models: Vec<ModelEntry>,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self> {
        let registry: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("registry: {e}")))?;
        let mut seen = std::collections::BTreeSet::new();
        for m in &registry.models {
            if !seen.insert(&m.id) {
                return Err(Error::InvalidConfig(format!("registry lists {:?} twice", m.id)));
            }
        }
        Ok(registry)
    }
}

/// Everything a request reads, swapped as one unit.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: ScoreIndex,
    /// Needed to profile uploaded models; without it uploads are refused.
    pub corpus: Option<IndexCorpus>,
    /// One entry per indexed model.
    pub registry: BTreeMap<String, ModelEntry>,
}

impl Snapshot {
    pub fn new(index: ScoreIndex, corpus: Option<IndexCorpus>, registry: Registry) -> Self {
        let mut entries: BTreeMap<String, ModelEntry> = registry
            .models
            .into_iter()
            .filter(|m| {
                let known = index.models.contains_key(&m.id);
                if !known {
                    tracing::warn!(model = %m.id, "registry entry for a model the index lacks");
                }
                known
            })
            .map(|m| (m.id.clone(), m))
            .collect();
        for id in index.models.keys() {
            entries
                .entry(id.clone())
                .or_insert_with(|| ModelEntry::for_indexed(id, &index));
        }
        for entry in entries.values_mut() {
            if entry.cost.is_none() {
                entry.cost = index.models.get(&entry.id).map(|p| p.overall_mean_cost);
            }
        }
        Self {
            index,
            corpus,
            registry: entries,
        }
    }

    /// Enabled models, sorted.
    pub fn default_pool(&self) -> Vec<String> {
        self.registry
            .values()
            .filter(|m| m.enabled)
            .map(|m| m.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Defaults for requests without overrides; `alpha` should match the
    /// index.
    pub routing: RoutingConfig,
    /// Admin endpoints answer 401 while this is unset.
    pub admin_token: Option<String>,
    /// Concurrent tagger calls allowed.
    pub tagger_concurrency: usize,
    /// Allow requests to forward a payload to the chosen model's endpoint.
    pub pass_through: bool,
}

impl GatewayConfig {
    pub fn for_index(index: &ScoreIndex) -> Self {
        Self {
            routing: RoutingConfig {
                alpha: index.alpha_used,
                ..RoutingConfig::default()
            },
            admin_token: None,
            tagger_concurrency: 4,
            pass_through: false,
        }
    }
}

pub struct AppState {
    pub(crate) snapshot: ArcSwap<Snapshot>,
    pub(crate) staged: Mutex<ModelRecords>,
    pub(crate) rebuild: tokio::sync::Mutex<()>,
    pub(crate) tagger: Option<Arc<dyn TaggerClient>>,
    pub(crate) tagger_permits: Arc<Semaphore>,
    pub(crate) config: GatewayConfig,
    pub(crate) forward_agent: ureq::Agent,
}

impl AppState {
    pub fn new(snapshot: Snapshot, config: GatewayConfig, tagger: Option<Arc<dyn TaggerClient>>) -> Self {
        Self {
            snapshot: ArcSwap::from_pointee(snapshot),
            staged: Mutex::new(ModelRecords::new()),
            rebuild: tokio::sync::Mutex::new(()),
            tagger,
            tagger_permits: Arc::new(Semaphore::new(config.tagger_concurrency.max(1))),
            config,
            forward_agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(120))
                .build(),
        }
    }

    /// The snapshot current at the time of the call.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    /// Replaces the snapshot for every later request.
    pub fn swap(&self, snapshot: Snapshot) {
        self.snapshot.store(Arc::new(snapshot));
    }
}
