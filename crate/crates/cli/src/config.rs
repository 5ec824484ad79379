//! Settings resolution: flags, then environment (both handled by clap), then
//! the config file, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use kcroute_core::RoutingConfig;
use serde::Deserialize;

use crate::exit::Usage;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub routing: RoutingSection,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    pub sim_threshold: Option<f64>,
    pub freq_floor: Option<u64>,
    pub max_tags: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub bind: Option<String>,
    pub tagger_concurrency: Option<usize>,
    pub registry: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("config file {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Usage(format!("config file {}: {e}", path.display())))
            .context("reading config")
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RoutingArgs {
    /// Rank decay; defaults to the index's alpha.
    #[arg(long, env = "KCROUTE_ALPHA")]
    pub alpha: Option<f64>,
    /// Cost penalty [default: 0]
    #[arg(long, env = "KCROUTE_BETA")]
    pub beta: Option<f64>,
    /// Knowledge-score weight [default: 1]
    #[arg(long, env = "KCROUTE_GAMMA")]
    pub gamma: Option<f64>,
    /// Capability-score weight [default: 1]
    #[arg(long, env = "KCROUTE_DELTA")]
    pub delta: Option<f64>,
}

impl RoutingArgs {
    /// `index_alpha` replaces the built-in alpha default when known.
    pub fn resolve(&self, file: &FileConfig, index_alpha: Option<f64>) -> anyhow::Result<RoutingConfig> {
        let d = RoutingConfig::default();
        let f = &file.routing;
        let config = RoutingConfig {
            alpha: self.alpha.or(f.alpha).or(index_alpha).unwrap_or(d.alpha),
            beta: self.beta.or(f.beta).unwrap_or(d.beta),
            gamma: self.gamma.or(f.gamma).unwrap_or(d.gamma),
            delta: self.delta.or(f.delta).unwrap_or(d.delta),
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("[routing]\nbeta = 2.0\ngamma = 3.0\n").unwrap();
        let args = RoutingArgs {
            beta: Some(5.0),
            ..Default::default()
        };
        let c = args.resolve(&file, Some(0.25)).unwrap();
        assert_eq!((c.alpha, c.beta, c.gamma, c.delta), (0.25, 5.0, 3.0, 1.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[routing]\nbta = 1\n").is_err());
    }
}
