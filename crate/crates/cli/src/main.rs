mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use config::RoutingArgs;

/// Route queries to language models by knowledge and capability profiles.
#[derive(Debug, Parser)]
#[command(name = "kcroute", version)]
struct Cli {
    /// TOML config file with [routing], [vocab] and [serve] sections.
    #[arg(long, global = true, env = "KCROUTE_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a score index from evaluation records and query tags.
    BuildIndex(BuildIndexArgs),
    /// Route one query with a saved index.
    Route(RouteArgs),
    /// Replay a trace with one strategy and write a report.
    Simulate(SimulateArgs),
    /// Replay a trace over a grid of cost penalties.
    SweepBeta(SweepArgs),
    /// Grow the model pool one model at a time and report each step.
    DynamicPool(DynamicPoolArgs),
    /// Rank-weighted share of each knowledge domain in a tags file.
    DomainDist(DomainDistArgs),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Write a synthetic corpus and trace with planted expertise.
    GenSynthetic(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Embedder {
    /// The HTTP service when EMBED_API_URL is set, the stub otherwise.
    Auto,
    /// Deterministic hash-seeded vectors; needs no network.
    Stub,
    /// EMBED_API_URL, EMBED_API_KEY, EMBED_MODEL.
    Http,
}

#[derive(Debug, Clone, Args)]
struct VocabArgs {
    /// Labels merge when cosine similarity is strictly above this [default: 0.6]
    #[arg(long, env = "KCROUTE_SIM_THRESHOLD")]
    sim_threshold: Option<f64>,
    /// Clusters seen fewer times go to OTHER [default: 10]
    #[arg(long, env = "KCROUTE_FREQ_FLOOR")]
    freq_floor: Option<u64>,
    /// Tags kept per list [default: 10]
    #[arg(long)]
    max_tags: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    embedder: Embedder,
    /// Seed for the stub embedder.
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// JSONL cache for HTTP embeddings.
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    /// JSON array of capability names replacing the built-in taxonomy.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    /// Evaluation records, one JSON object per line.
    #[arg(long)]
    records: PathBuf,
    /// Query tags, one JSON object per line.
    #[arg(long)]
    tags: PathBuf,
    /// Rank decay, > 0 [default: 0.5]
    #[arg(long, env = "KCROUTE_ALPHA")]
    alpha: Option<f64>,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Index file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("query").required(true).args(["tags_json", "text"])))]
struct RouteArgs {
    #[arg(long)]
    index: PathBuf,
    /// Inline tags: {"knowledge": [...], "capabilities": [...]}
    #[arg(long)]
    tags_json: Option<String>,
    /// Raw query text, tagged through TAGGER_API_URL.
    #[arg(long)]
    text: Option<String>,
    /// Candidate models, comma separated [default: every indexed model]
    #[arg(long, value_delimiter = ',')]
    pool: Vec<String>,
    #[command(flatten)]
    routing: RoutingArgs,
    /// Append tagger requests and responses to this JSONL file.
    #[arg(long)]
    tagger_transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ReplayArgs {
    #[arg(long)]
    index: PathBuf,
    /// Held-out trace, one JSON object per line.
    #[arg(long)]
    trace: PathBuf,
    /// mixed, knowledge, capability, random[:seed], fixed:<model> or oracle
    #[arg(long, default_value = "mixed")]
    strategy: String,
    /// Seed for the random strategy.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate models, comma separated [default: every indexed model]
    #[arg(long, value_delimiter = ',')]
    pool: Vec<String>,
    #[command(flatten)]
    routing: RoutingArgs,
    /// Report CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary of the same reports.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    replay: ReplayArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    replay: ReplayArgs,
    /// Ascending, comma separated, e.g. 0,5,10,15
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
}

#[derive(Debug, Args)]
struct DynamicPoolArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    tags: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Order in which models join the pool, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sequence: Vec<String>,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    routing: RoutingArgs,
    /// Per-step CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankWeights {
    /// W_r = 1/r
    Reciprocal,
    /// W_r = 1
    Uniform,
}

#[derive(Debug, Args)]
struct DomainDistArgs {
    /// Tags file; the knowledge lists are counted.
    #[arg(long)]
    tags: PathBuf,
    #[arg(long, value_enum, default_value = "reciprocal")]
    weights: RankWeights,
    /// CSV of domain,percent; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    index: PathBuf,
    /// Records the index was built from; enables model uploads.
    #[arg(long, requires = "tags")]
    records: Option<PathBuf>,
    #[arg(long, requires = "records")]
    tags: Option<PathBuf>,
    /// JSON registry: {"models": [{"id", "display_name", "cost", "enabled", "endpoint"}]}
    #[arg(long)]
    registry: Option<PathBuf>,
    /// [default: 127.0.0.1:8080]
    #[arg(long, env = "ROUTER_BIND_ADDR")]
    bind: Option<String>,
    /// Concurrent tagger calls [default: 4]
    #[arg(long)]
    tagger_concurrency: Option<usize>,
    /// Let route requests forward a payload to the chosen model's endpoint.
    #[arg(long)]
    pass_through: bool,
    #[command(flatten)]
    routing: RoutingArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON world description; overrides the planted-diagonal flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Models and domains in the planted world.
    #[arg(long, default_value_t = 4)]
    models: usize,
    #[arg(long, default_value_t = 0.9)]
    diagonal: f64,
    #[arg(long, default_value_t = 0.5)]
    off_diagonal: f64,
    #[arg(long, default_value_t = 2000)]
    index_queries: usize,
    #[arg(long, default_value_t = 1000)]
    trace_queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes records.jsonl, tags.jsonl and trace.jsonl here.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // the gateway logs one line per request at info
    let default_level = if matches!(cli.command, Command::Serve(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default_level.into()),
        )
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
