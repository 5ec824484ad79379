use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use kcroute_core::harness::{
    beta_sweep, domain_distribution, dynamic_pool_experiment, generate_synthetic, reciprocal_rank, replay,
    slope_violations, summary_json, write_report_csv, HarnessReport, Strategy, SyntheticSpec, TraceSet,
};
use kcroute_core::index::{ingest_records, parse_tags, write_tags};
use kcroute_core::model::DEFAULT_MAX_TAGS;
use kcroute_core::persist::to_canonical_json;
use kcroute_core::tagger::{HttpTagger, HttpTaggerConfig, TaggerClient};
use kcroute_core::vocab::{
    stub_provider, HttpEmbeddingProvider, DEFAULT_FREQUENCY_FLOOR, DEFAULT_SIMILARITY_THRESHOLD,
};
use kcroute_core::{
    build_index, build_vocabulary, load_index, route, save_index, CapabilityTaxonomy, EmbeddingProvider,
    Error, IndexCorpus, ScoreIndex, TagSet,
};
use kcroute_gateway::{AppState, GatewayConfig, Registry, Snapshot};
use serde_json::json;

use crate::config::FileConfig;
use crate::exit::Usage;
use crate::{
    BuildIndexArgs, Cli, Command, DomainDistArgs, DynamicPoolArgs, Embedder, RankWeights, ReplayArgs,
    RouteArgs, ServeArgs, SimulateArgs, SweepArgs, SynthArgs, VocabArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::BuildIndex(a) => build_index_cmd(a, &file),
        Command::Route(a) => route_cmd(a, &file),
        Command::Simulate(a) => simulate_cmd(a, &file),
        Command::SweepBeta(a) => sweep_cmd(a, &file),
        Command::DynamicPool(a) => dynamic_pool_cmd(a, &file),
        Command::DomainDist(a) => domain_dist_cmd(a),
        Command::Serve(a) => serve_cmd(a, &file),
        Command::GenSynthetic(a) => synth_cmd(a),
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Usage(format!("input file {} does not exist", path.display())).into());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Usage(format!("output directory {} does not exist", parent.display())).into());
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to `path`, or standard output when `None`.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => io::stdout()
            .write_all(bytes)
            .context("writing to standard output"),
    }
}

struct VocabSettings {
    threshold: f64,
    floor: u64,
    max_tags: usize,
    taxonomy: CapabilityTaxonomy,
}

impl VocabArgs {
    fn check_paths(&self) -> Result<()> {
        if let Some(t) = &self.taxonomy {
            check_input(t)?;
        }
        Ok(())
    }

    fn settings(&self, file: &FileConfig) -> Result<VocabSettings> {
        let taxonomy = match &self.taxonomy {
            Some(path) => {
                let names: Vec<String> = serde_json::from_str(&read(path)?)
                    .map_err(|e| Usage(format!("taxonomy {}: {e}", path.display())))?;
                CapabilityTaxonomy::new(names)?
            }
            None => CapabilityTaxonomy::default(),
        };
        Ok(VocabSettings {
            threshold: self
                .sim_threshold
                .or(file.vocab.sim_threshold)
                .unwrap_or(DEFAULT_SIMILARITY_THRESHOLD),
            floor: self
                .freq_floor
                .or(file.vocab.freq_floor)
                .unwrap_or(DEFAULT_FREQUENCY_FLOOR),
            max_tags: self.max_tags.or(file.vocab.max_tags).unwrap_or(DEFAULT_MAX_TAGS),
            taxonomy,
        })
    }

    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let http = || -> Result<Option<HttpEmbeddingProvider>> {
            let Some(mut p) = HttpEmbeddingProvider::from_env()? else {
                return Ok(None);
            };
            if let Some(cache) = &self.embed_cache {
                p = p.with_cache_file(cache)?;
            }
            Ok(Some(p))
        };
        Ok(match self.embedder {
            Embedder::Stub => Box::new(stub_provider(self.embed_seed)),
            Embedder::Http => Box::new(
                http()?.ok_or_else(|| Error::EmbeddingUnavailable("EMBED_API_URL is not set".into()))?,
            ),
            Embedder::Auto => match http()? {
                Some(p) => Box::new(p),
                None => {
                    tracing::warn!("EMBED_API_URL is not set; using stub embeddings");
                    Box::new(stub_provider(self.embed_seed))
                }
            },
        })
    }
}

fn load_corpus(records: &Path, tags: &Path, settings: &VocabSettings) -> Result<IndexCorpus> {
    let parsed = parse_tags(&read(tags)?, &settings.taxonomy, settings.max_tags)
        .with_context(|| format!("in {}", tags.display()))?;
    for w in &parsed.warnings {
        tracing::warn!("{}: {w}", tags.display());
    }
    let recs = ingest_records(&read(records)?).with_context(|| format!("in {}", records.display()))?;
    Ok(IndexCorpus::new(parsed.queries, recs)?)
}

fn build_index_cmd(a: BuildIndexArgs, file: &FileConfig) -> Result<()> {
    check_input(&a.records)?;
    check_input(&a.tags)?;
    a.vocab.check_paths()?;
    check_output(&a.out)?;
    let alpha = a.alpha.or(file.routing.alpha).unwrap_or(0.5);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Usage(format!("--alpha must be > 0, got {alpha}")).into());
    }
    let settings = a.vocab.settings(file)?;
    let corpus = load_corpus(&a.records, &a.tags, &settings)?;
    let provider = a.vocab.provider()?;
    let vocab = build_vocabulary(
        &corpus.knowledge_occurrences(),
        &*provider,
        settings.threshold,
        settings.floor,
    )?;
    let index = build_index(&corpus, &vocab, &settings.taxonomy, alpha)?;
    save_index(&index, &a.out)?;

    let stats = index.stats();
    println!("wrote {}", a.out.display());
    println!("models: {}", stats.model_count);
    println!("knowledge elements: {}", stats.knowledge_elements);
    println!("capability elements: {}", stats.capability_elements);
    println!("OTHER share: {:.4}", stats.other_share);
    Ok(())
}

fn pool_or_all(pool: &[String], index: &ScoreIndex) -> Vec<String> {
    if pool.is_empty() {
        index.model_ids()
    } else {
        pool.to_vec()
    }
}

fn route_cmd(a: RouteArgs, file: &FileConfig) -> Result<()> {
    check_input(&a.index)?;
    if let Some(t) = &a.tagger_transcript {
        check_output(t)?;
    }
    let index = load_index(&a.index)?;
    let config = a.routing.resolve(file, Some(index.alpha_used))?;
    let (raw, tagging_cost) = match (&a.tags_json, &a.text) {
        (Some(json), None) => {
            let tags: TagSet = serde_json::from_str(json).map_err(|e| Usage(format!("--tags-json: {e}")))?;
            (tags, 0.0)
        }
        (None, Some(text)) => {
            let cfg = HttpTaggerConfig::from_env()?
                .ok_or_else(|| Error::TaggerUnavailable("TAGGER_API_URL is not set".into()))?;
            let mut tagger = HttpTagger::new(cfg, index.taxonomy.clone());
            if let Some(t) = &a.tagger_transcript {
                tagger = tagger.with_transcript(t)?;
            }
            let tagged = tagger.tag(text)?;
            (tagged.tags, tagged.cost)
        }
        _ => return Err(Usage("give exactly one of --tags-json and --text".into()).into()),
    };
    let tags = index.canonicalize_tags(&raw);
    let decision = route(&index, &tags, &config, &pool_or_all(&a.pool, &index))?;
    let out = json!({
        "model_id": decision.model_id,
        "breakdown": decision.breakdown,
        "index_version": index.version,
        "tags_used": tags,
        "tagging_cost": tagging_cost,
    });
    println!("{}", to_canonical_json(&out)?);
    Ok(())
}

struct ReplayInputs {
    index: ScoreIndex,
    trace: TraceSet,
    strategy: Strategy,
    pool: Vec<String>,
}

impl ReplayArgs {
    fn check_paths(&self) -> Result<()> {
        check_input(&self.index)?;
        check_input(&self.trace)?;
        for p in [&self.out, &self.summary].into_iter().flatten() {
            check_output(p)?;
        }
        Ok(())
    }

    fn load(&self) -> Result<ReplayInputs> {
        self.check_paths()?;
        let mut strategy: Strategy = self.strategy.parse().map_err(|e: Error| Usage(e.to_string()))?;
        if let (Strategy::Random { seed }, Some(s)) = (&mut strategy, self.seed) {
            *seed = s;
        }
        let index = load_index(&self.index)?;
        let trace =
            TraceSet::parse(&read(&self.trace)?).with_context(|| format!("in {}", self.trace.display()))?;
        let pool = pool_or_all(&self.pool, &index);
        Ok(ReplayInputs {
            index,
            trace,
            strategy,
            pool,
        })
    }

    fn write(&self, reports: &[HarnessReport], with_slope: bool) -> Result<()> {
        let mut csv = Vec::new();
        write_report_csv(reports, &mut csv, with_slope)?;
        emit(self.out.as_deref(), &csv)?;
        if let Some(path) = &self.summary {
            emit(Some(path), summary_json(reports)?.as_bytes())?;
        }
        Ok(())
    }
}

fn simulate_cmd(a: SimulateArgs, file: &FileConfig) -> Result<()> {
    let inputs = a.replay.load()?;
    let config = a.replay.routing.resolve(file, Some(inputs.index.alpha_used))?;
    let report = replay(
        &inputs.trace,
        &inputs.index,
        &config,
        &inputs.strategy,
        &inputs.pool,
    )?;
    a.replay.write(&[report], false)
}

fn sweep_cmd(a: SweepArgs, file: &FileConfig) -> Result<()> {
    let inputs = a.replay.load()?;
    let config = a.replay.routing.resolve(file, Some(inputs.index.alpha_used))?;
    let reports = beta_sweep(
        &inputs.trace,
        &inputs.index,
        &config,
        &inputs.strategy,
        &inputs.pool,
        &a.betas,
    )?;
    for (query, lo, hi) in slope_violations(&reports) {
        tracing::warn!(query = %query, "chosen cost slope grew between beta {lo} and {hi}");
    }
    a.replay.write(&reports, true)
}

fn dynamic_pool_cmd(a: DynamicPoolArgs, file: &FileConfig) -> Result<()> {
    for p in [&a.records, &a.tags, &a.trace] {
        check_input(p)?;
    }
    a.vocab.check_paths()?;
    if let Some(out) = &a.out {
        check_output(out)?;
    }
    let settings = a.vocab.settings(file)?;
    let config = a.routing.resolve(file, None)?;
    let corpus = load_corpus(&a.records, &a.tags, &settings)?;
    let trace = TraceSet::parse(&read(&a.trace)?).with_context(|| format!("in {}", a.trace.display()))?;
    let provider = a.vocab.provider()?;
    let vocab = build_vocabulary(
        &corpus.knowledge_occurrences(),
        &*provider,
        settings.threshold,
        settings.floor,
    )?;
    let base = ScoreIndex::empty(&vocab, &settings.taxonomy, config.alpha)?;
    let steps = dynamic_pool_experiment(&trace, &base, &corpus, &config, &a.sequence)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "step",
        "added",
        "pool_size",
        "index_version",
        "routed_score",
        "best_single_score",
        "existing_unchanged",
    ];
    header.extend(a.sequence.iter().map(String::as_str));
    w.write_record(&header)?;
    for (i, s) in steps.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            s.added.clone(),
            s.pool.len().to_string(),
            s.index_version.to_string(),
            s.report.overall.routed_score.to_string(),
            s.report.overall.best_single_score.to_string(),
            s.existing_unchanged.to_string(),
        ];
        row.extend(a.sequence.iter().map(|m| {
            s.report
                .overall
                .single_scores
                .get(m)
                .map(f64::to_string)
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    emit(a.out.as_deref(), &w.into_inner().context("flushing CSV")?)
}

fn domain_dist_cmd(a: DomainDistArgs) -> Result<()> {
    check_input(&a.tags)?;
    if let Some(out) = &a.out {
        check_output(out)?;
    }
    let parsed = parse_tags(&read(&a.tags)?, &CapabilityTaxonomy::default(), usize::MAX)
        .with_context(|| format!("in {}", a.tags.display()))?;
    let lists: Vec<Vec<String>> = parsed.queries.into_values().map(|t| t.knowledge).collect();
    let dist = match a.weights {
        RankWeights::Reciprocal => domain_distribution(&lists, reciprocal_rank)?,
        RankWeights::Uniform => domain_distribution(&lists, |_| 1.0)?,
    };
    let mut rows: Vec<(&String, &f64)> = dist.percentages.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "percent"])?;
    for (d, p) in rows {
        w.write_record([d.as_str(), &p.to_string()])?;
    }
    emit(a.out.as_deref(), &w.into_inner().context("flushing CSV")?)
}

fn serve_cmd(a: ServeArgs, file: &FileConfig) -> Result<()> {
    check_input(&a.index)?;
    for p in [&a.records, &a.tags, &a.registry].into_iter().flatten() {
        check_input(p)?;
    }
    let index = load_index(&a.index)?;
    let corpus = match (&a.records, &a.tags) {
        (Some(records), Some(tags)) => {
            let parsed = parse_tags(&read(tags)?, &index.taxonomy, DEFAULT_MAX_TAGS)?;
            Some(IndexCorpus::new(
                parsed.queries,
                ingest_records(&read(records)?)?,
            )?)
        }
        _ => None,
    };
    let registry_path: Option<PathBuf> = a.registry.clone().or_else(|| file.serve.registry.clone());
    let registry = match registry_path {
        Some(p) => Registry::parse(&read(&p)?)?,
        None => Registry::default(),
    };
    let mut config = GatewayConfig::for_index(&index);
    config.routing = a.routing.resolve(file, Some(index.alpha_used))?;
    config.admin_token = std::env::var("ROUTER_ADMIN_TOKEN").ok().filter(|t| !t.is_empty());
    config.tagger_concurrency = a
        .tagger_concurrency
        .or(file.serve.tagger_concurrency)
        .unwrap_or(4);
    config.pass_through = a.pass_through;
    let tagger: Option<Arc<dyn TaggerClient>> = HttpTaggerConfig::from_env()?
        .map(|cfg| Arc::new(HttpTagger::new(cfg, index.taxonomy.clone())) as Arc<dyn TaggerClient>);
    if tagger.is_none() {
        tracing::warn!("TAGGER_API_URL is not set; text requests will get 503");
    }
    let bind = a
        .bind
        .or_else(|| file.serve.bind.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let state = Arc::new(AppState::new(
        Snapshot::new(index, corpus, registry),
        config,
        tagger,
    ));

    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| Usage(format!("cannot bind {bind}: {e}")))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        kcroute_gateway::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    if let Some(p) = &a.spec {
        check_input(p)?;
    }
    if !a.out_dir.is_dir() {
        return Err(Usage(format!("output directory {} does not exist", a.out_dir.display())).into());
    }
    let spec = match &a.spec {
        Some(p) => serde_json::from_str::<SyntheticSpec>(&read(p)?)
            .map_err(|e| Usage(format!("spec {}: {e}", p.display())))?,
        None => SyntheticSpec::planted(
            a.models,
            a.diagonal,
            a.off_diagonal,
            a.index_queries,
            a.trace_queries,
            a.seed,
        ),
    };
    let data = generate_synthetic(&spec, &CapabilityTaxonomy::default())?;
    let files: BTreeMap<&str, String> = BTreeMap::from([
        ("records.jsonl", data.records_jsonl()),
        ("tags.jsonl", write_tags(&data.queries)),
        ("trace.jsonl", data.trace.to_jsonl()),
    ]);
    for (name, body) in files {
        let path = a.out_dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
