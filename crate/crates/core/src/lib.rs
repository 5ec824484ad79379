//! Query routing across a pool of language models using per-model knowledge
//! and capability profiles.
//!
//! Build a [`ScoreIndex`] from tagged evaluation records, then [`route`] each
//! tagged query to the model with the highest weighted score.

pub mod error;
pub mod harness;
pub mod index;
pub mod model;
pub mod persist;
pub mod scoring;
pub mod tagger;
pub mod vocab;

pub use error::{Error, Result};
pub use index::{build_index, IndexCorpus, IndexStats, ScoreIndex};
pub use model::{CapabilityTaxonomy, RoutingConfig, RoutingDecision, TagSet, OTHER};
pub use persist::{load_index, save_index};
pub use scoring::{route, route_with, AlphaCheck, FallbackPolicy, RouteOptions};
pub use vocab::{build_vocabulary, EmbeddingProvider, Vocabulary};
