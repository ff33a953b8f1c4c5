use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use corpus_router::corpus::{build_named_corpus, CorpusItem, CorpusSet, PayloadRecord};
use corpus_router::embed::{hash_embed, Embedder, HashEmbedder};
use corpus_router::eval::{evaluate_with, load_gold, run_eval, EvalConfig};
use corpus_router::pathway::{pathway_parse, GranularityScheme, Pathway};
use corpus_router::pipeline::{retrieve_all_bundle, route_and_retrieve, unified_bundle, ContextBundle, RetrieveConfig};
use corpus_router::routing::{
    load_routing_dataset, train_router_with_history, ConfidenceEnsemble, FixedRouter, MajorityEnsemble,
    OracleRouter, PromptRouter, RandomRouter, Router, RouterTrainingConfig, TrainedRouterModel, DEFAULT_THRESHOLD,
};
use corpus_router::service::{Endpoint, ServiceEmbedder};
use corpus_router::theory::{
    bench_latency, compare_granularity_policies, simulate_unified_vs_routed, simulation_csv, Backend, BenchConfig,
    CorpusSizes, QualityTable, ScoreModelParams,
};
use corpus_router::vecfile;

/// Problems with the invocation itself; reported with exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "corpus-router", version, about = "Route queries to modality- and granularity-specific corpora, retrieve, evaluate and simulate")]
struct Cli {
    /// TOML file with defaults for the global flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Data directory [default: $CORPUS_ROUTER_HOME or ./corpus-router-data]
    #[arg(long, global = true, env = "CORPUS_ROUTER_HOME")]
    home: Option<PathBuf>,

    /// Pathway scheme: default7 or extended [default: default7]
    #[arg(long, global = true)]
    scheme: Option<SchemeArg>,

    /// Retrieval depth per selected corpus [default: 5]; for bench, the number of pathways [default: 7]
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Sigmoid threshold of the trained router [default: 0.8]
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Seed for all randomness [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for batch commands [default: 1]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Router or generator service: exec:<program> [args] or http:<url>
    #[arg(long, global = true)]
    endpoint: Option<String>,

    /// Output file [default: standard output]
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SchemeArg {
    Default7,
    Extended,
}

impl From<SchemeArg> for GranularityScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Default7 => GranularityScheme::Default7,
            SchemeArg::Extended => GranularityScheme::Extended,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    home: Option<PathBuf>,
    scheme: Option<SchemeArg>,
    k: Option<usize>,
    threshold: Option<f64>,
    seed: Option<u64>,
    workers: Option<usize>,
    endpoint: Option<String>,
}

/// Effective settings after merging defaults, the config file and flags.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    home: PathBuf,
    scheme: GranularityScheme,
    k: usize,
    threshold: f64,
    seed: u64,
    workers: usize,
    endpoint: Option<String>,
    out: Option<PathBuf>,
    /// `--k` exactly as given on the command line.
    k_flag: Option<usize>,
}

impl RunConfig {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let config = Self {
            home: cli
                .home
                .clone()
                .or(file.home)
                .unwrap_or_else(|| PathBuf::from("corpus-router-data")),
            scheme: cli.scheme.or(file.scheme).unwrap_or(SchemeArg::Default7).into(),
            k: cli.k.or(file.k).unwrap_or(5),
            threshold: cli.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            seed: cli.seed.or(file.seed).unwrap_or(0),
            workers: cli.workers.or(file.workers).unwrap_or(1),
            endpoint: cli.endpoint.clone().or(file.endpoint),
            out: cli.out.clone(),
            k_flag: cli.k,
        };
        if config.k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        if config.workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        Ok(config)
    }

    fn corpora_dir(&self, explicit: &Option<PathBuf>) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.home.join("corpora"))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a corpus from a payload file and vectors (or hashed text embeddings)
    Ingest(IngestArgs),
    /// Train the multi-label router on a labeled JSONL file
    TrainRouter(TrainArgs),
    /// Route one query or a JSONL file of queries; prints decisions as JSONL
    Route(RouteArgs),
    /// Route and retrieve one query; prints the merged results as JSONL
    Retrieve(RetrieveArgs),
    /// Evaluate a router against a gold file; writes the report CSV
    Eval(EvalArgs),
    /// Monte-Carlo comparison of unified and routed retrieval under modality bias
    Simulate(SimulateArgs),
    /// Compare fixed and adaptive granularity policies on a quality table
    Granularity(GranularityArgs),
    /// Latency of unified versus routed retrieval as the corpora grow
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Payload JSONL, one {"id", "text"?, "caption"?, "media_ref"?, "meta"?} per line
    #[arg(long)]
    payloads: PathBuf,
    /// Primary vector file; when absent, payload text is embedded by feature hashing
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Optional auxiliary text-vector file (all-zero rows mean absent)
    #[arg(long)]
    aux_vectors: Option<PathBuf>,
    /// Target pathway label, e.g. paragraph or clip
    #[arg(long)]
    pathway: String,
    /// Corpus name [default: the pathway label]
    #[arg(long)]
    name: Option<String>,
    /// Dimension used when embedding payload text
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Seed of the hashing embedder
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSONL with {"query", "labels": [...]} (or "gold_pathways") per line
    #[arg(long)]
    data: PathBuf,
    /// Model file to write [default: <home>/router.bin]
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 2.0)]
    learning_rate: f64,
    /// Hashed feature dimension
    #[arg(long, default_value_t = 4096)]
    dim: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum RouterKind {
    Trained,
    Prompt,
    Random,
    EnsembleConfidence,
    EnsembleMajority,
    Fixed,
    Oracle,
}

#[derive(Args, Debug, Clone)]
struct RouterArgs {
    /// Router to use
    #[arg(long, value_enum, default_value_t = RouterKind::Trained)]
    router: RouterKind,
    /// Trained model file [default: <home>/router.bin]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pathway label(s) for the fixed router, e.g. paragraph+image
    #[arg(long)]
    pathways: Option<String>,
    /// Confidence gate of the confidence ensemble [default: --threshold]
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Args, Debug)]
struct RouteArgs {
    #[command(flatten)]
    router: RouterArgs,
    /// Single query text
    #[arg(long, conflicts_with = "file")]
    query: Option<String>,
    /// JSONL of {"query_id"?, "query"} (plain text lines are accepted too)
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Retrieve only from the routed corpora
    Routed,
    /// One ranked list over all corpora
    Unified,
    /// Every corpus independently
    All,
}

#[derive(Args, Debug, Clone)]
struct EmbedArgs {
    /// Corpus directory holding <name>/manifest.json [default: <home>/corpora]
    #[arg(long)]
    corpora: Option<PathBuf>,
    /// Seed of the hashing query embedder
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// External embedding service instead of feature hashing
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Weight of the visual score when fusing with auxiliary text vectors
    #[arg(long, default_value_t = 0.8)]
    visual_weight: f64,
    #[arg(long, value_enum, default_value_t = Mode::Routed)]
    mode: Mode,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[command(flatten)]
    router: RouterArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[arg(long)]
    query: String,
    /// Send the merged contexts to the generator at this endpoint
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    router: RouterArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Gold JSONL: {"query_id","query","gold_pathways":[...],"gold_items":[[corpus,id],...]}
    #[arg(long)]
    gold: PathBuf,
    /// Recall cut-offs
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5])]
    ks: Vec<usize>,
    /// Do not print the summary table
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Modality bias; a comma list runs a grid
    #[arg(long, value_delimiter = ',', default_values_t = [0.1])]
    alpha: Vec<f64>,
    /// Noise standard deviation; a comma list runs a grid
    #[arg(long, value_delimiter = ',', default_values_t = [0.05])]
    sigma: Vec<f64>,
    /// Relevance weight
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Standard deviation of the relevance term
    #[arg(long, default_value_t = 0.0)]
    sigma_r: f64,
    /// Sizes |S|,|R|,|O|
    #[arg(long, value_delimiter = ',', num_args = 1, default_values_t = [500u64, 500, 500])]
    sizes: Vec<u64>,
    #[arg(long, default_value_t = 0.95)]
    router_acc: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
}

#[derive(Args, Debug)]
struct GranularityArgs {
    /// Long-format CSV: query_id,granularity,quality
    #[arg(long)]
    table: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    #[value(name = "exact_scan")]
    ExactScan,
    Bucketed,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Items per corpus; a comma list runs a sweep
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 100_000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, value_enum, default_value_t = BackendArg::ExactScan)]
    backend: BackendArg,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Routing cost charged per routed query, in milliseconds
    #[arg(long, default_value_t = 2.0)]
    route_cost_ms: f64,
    /// Results per retrieval
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Do not print the summary table
    #[arg(long)]
    quiet: bool,
}

fn open_output(config: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &config.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn parse_pathway(label: &str, scheme: GranularityScheme) -> Result<Pathway> {
    let set = pathway_parse(label, scheme).map_err(|e| usage(e.to_string()))?;
    match (set.len(), set.into_iter().next()) {
        (1, Some(p)) if !p.is_none() => Ok(p),
        _ => Err(usage(format!("{label:?} is not a single target pathway"))),
    }
}

fn endpoint(config: &RunConfig, what: &str) -> Result<Endpoint> {
    let spec = config
        .endpoint
        .as_deref()
        .ok_or_else(|| usage(format!("the {what} needs --endpoint")))?;
    Endpoint::parse(spec).map_err(|e| usage(e.to_string()))
}

fn load_model(config: &RunConfig, args: &RouterArgs) -> Result<TrainedRouterModel> {
    let path = args.model.clone().unwrap_or_else(|| config.home.join("router.bin"));
    let mut model =
        TrainedRouterModel::load(&path).with_context(|| format!("loading router model {}", path.display()))?;
    if model.scheme != config.scheme {
        bail!(
            "model {} was trained for scheme {}, not {}",
            path.display(),
            model.scheme.as_str(),
            config.scheme.as_str()
        );
    }
    model.threshold = config.threshold;
    Ok(model)
}

fn build_router(config: &RunConfig, args: &RouterArgs, oracle: Option<OracleRouter>) -> Result<Box<dyn Router>> {
    let prompt = || -> Result<Box<dyn Router>> {
        Ok(Box::new(PromptRouter::new(endpoint(config, "prompt router")?.connect(), config.scheme)))
    };
    Ok(match args.router {
        RouterKind::Trained => Box::new(load_model(config, args)?),
        RouterKind::Prompt => prompt()?,
        RouterKind::Random => Box::new(RandomRouter::new(config.scheme, config.seed)),
        RouterKind::EnsembleConfidence => Box::new(ConfidenceEnsemble {
            primary: Box::new(load_model(config, args)?),
            fallback: prompt()?,
            threshold: args.confidence.unwrap_or(config.threshold),
        }),
        RouterKind::EnsembleMajority => Box::new(MajorityEnsemble {
            members: [
                Box::new(load_model(config, args)?),
                prompt()?,
                Box::new(RandomRouter::new(config.scheme, config.seed)),
            ],
            seed: config.seed,
        }),
        RouterKind::Fixed => {
            let label = args
                .pathways
                .as_deref()
                .ok_or_else(|| usage("the fixed router needs --pathways"))?;
            let set = pathway_parse(label, config.scheme).map_err(|e| usage(e.to_string()))?;
            Box::new(FixedRouter::new(set)?)
        }
        RouterKind::Oracle => Box::new(oracle.ok_or_else(|| usage("the oracle router is only available in eval"))?),
    })
}

fn build_embedder(args: &EmbedArgs) -> Result<Box<dyn Embedder>> {
    Ok(match &args.embed_endpoint {
        Some(spec) => Box::new(ServiceEmbedder::new(
            Endpoint::parse(spec).map_err(|e| usage(e.to_string()))?.connect(),
        )),
        None => Box::new(HashEmbedder::new(args.embed_seed)),
    })
}

fn retrieve_config(config: &RunConfig, args: &EmbedArgs) -> Result<RetrieveConfig> {
    let mut rc = RetrieveConfig::new(config.k);
    rc.weights = corpus_router::retrieval::FusionWeights::new(args.visual_weight).map_err(|e| usage(e.to_string()))?;
    Ok(rc)
}

fn load_corpora(config: &RunConfig, args: &EmbedArgs) -> Result<CorpusSet> {
    let dir = config.corpora_dir(&args.corpora);
    let set = CorpusSet::load_dir(&dir).with_context(|| format!("loading corpora from {}", dir.display()))?;
    if set.is_empty() {
        bail!("no corpora found under {}", dir.display());
    }
    Ok(set)
}

fn bundle_for(
    mode: Mode,
    query_id: &str,
    query: &str,
    router: &dyn Router,
    corpora: &CorpusSet,
    embedder: &dyn Embedder,
    rc: &RetrieveConfig,
) -> corpus_router::error::Result<ContextBundle> {
    match mode {
        Mode::Routed => route_and_retrieve(query_id, query, router, corpora, embedder, rc),
        Mode::Unified => unified_bundle(query_id, query, corpora, embedder, rc.k),
        Mode::All => retrieve_all_bundle(query_id, query, corpora, embedder, rc),
    }
}

fn cmd_ingest(config: &RunConfig, args: &IngestArgs) -> Result<()> {
    let pathway = parse_pathway(&args.pathway, config.scheme)?;
    let name = args.name.clone().unwrap_or_else(|| pathway.label().to_string());
    let file = File::open(&args.payloads).with_context(|| format!("opening {}", args.payloads.display()))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PayloadRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", args.payloads.display(), n + 1))?;
        records.push(rec);
    }
    let primary = match &args.vectors {
        Some(path) => {
            let block = vecfile::read_file(path)?;
            if block.count != records.len() {
                bail!("{} holds {} vectors for {} payloads", path.display(), block.count, records.len());
            }
            block.data.chunks_exact(block.dim).map(<[f32]>::to_vec).collect::<Vec<_>>()
        }
        None => records
            .iter()
            .map(|r| {
                let text = [&r.text, &r.caption, &r.media_ref]
                    .into_iter()
                    .find_map(|t| t.as_deref())
                    .unwrap_or(&r.id);
                hash_embed(text, args.dim, args.embed_seed)
                    .map(|v| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>())
                    .with_context(|| format!("embedding payload {}", r.id))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let aux = match &args.aux_vectors {
        Some(path) => {
            let block = vecfile::read_file(path)?;
            if block.count != records.len() {
                bail!("{} holds {} vectors for {} payloads", path.display(), block.count, records.len());
            }
            Some(block)
        }
        None => None,
    };
    let items = records
        .into_iter()
        .zip(primary)
        .enumerate()
        .map(|(i, (rec, vec))| {
            let (id, payload) = rec.split();
            let mut item = CorpusItem::new(id, vec).with_payload(payload);
            if let Some(block) = &aux {
                let row = &block.data[i * block.dim..(i + 1) * block.dim];
                if row.iter().any(|&x| x != 0.0) {
                    item = item.with_aux(row.to_vec());
                }
            }
            item
        })
        .collect();
    let out_dir = config.home.join("corpora").join(&name);
    let out_dir = config.out.clone().unwrap_or(out_dir);
    let manifest = build_named_corpus(&name, items, pathway, &out_dir)?;
    eprintln!(
        "wrote corpus {} ({} items, dim {}) to {}",
        manifest.name,
        manifest.count,
        manifest.dim,
        out_dir.display()
    );
    Ok(())
}

fn cmd_train(config: &RunConfig, args: &TrainArgs) -> Result<()> {
    let data = load_routing_dataset(&args.data, config.scheme)?;
    let tc = RouterTrainingConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: config.seed,
        dim: args.dim,
        threshold: config.threshold,
        scheme: config.scheme,
    };
    let (model, history) = train_router_with_history(&data, &tc)?;
    let path = args.model.clone().unwrap_or_else(|| config.home.join("router.bin"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    eprintln!(
        "trained on {} examples; loss {:.4} -> {:.4}; wrote {}",
        data.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct QueryLine {
    query_id: Option<String>,
    query: String,
}

fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    let mut text = String::new();
    let mut reader: Box<dyn Read> = if path.as_os_str() == "-" {
        Box::new(std::io::stdin())
    } else {
        Box::new(File::open(path).with_context(|| format!("opening {}", path.display()))?)
    };
    reader.read_to_string(&mut text)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| match serde_json::from_str::<QueryLine>(line) {
            Ok(q) => (q.query_id.unwrap_or_else(|| format!("q{i}")), q.query),
            Err(_) => (format!("q{i}"), line.trim().to_string()),
        })
        .collect())
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

fn cmd_route(config: &RunConfig, args: &RouteArgs) -> Result<()> {
    let queries = match (&args.query, &args.file) {
        (Some(q), None) => vec![("q0".to_string(), q.clone())],
        (None, Some(path)) => read_queries(path)?,
        _ => return Err(usage("route needs --query or --file")),
    };
    let router = build_router(config, &args.router, None)?;
    let results = in_pool(config.workers, || {
        queries
            .par_iter()
            .map(|(id, q)| router.route(q).map(|d| (id, q, d)))
            .collect::<Vec<_>>()
    })?;
    let mut out = open_output(config)?;
    let mut failed = 0;
    for r in results {
        let line = match r {
            Ok((id, q, d)) => serde_json::json!({
                "query_id": id,
                "query": q,
                "pathways": d.pathways,
                "scores": d.scores,
                "source": d.source,
            }),
            Err(e) => {
                failed += 1;
                serde_json::json!({ "error": e.to_string() })
            }
        };
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    if failed > 0 {
        bail!("{failed} of {} queries failed to route", queries.len());
    }
    Ok(())
}

fn cmd_retrieve(config: &RunConfig, args: &RetrieveArgs) -> Result<()> {
    let corpora = load_corpora(config, &args.embed)?;
    let embedder = build_embedder(&args.embed)?;
    let rc = retrieve_config(config, &args.embed)?;
    let router: Box<dyn Router> = match args.embed.mode {
        Mode::Routed => build_router(config, &args.router, None)?,
        _ => Box::new(FixedRouter::new([Pathway::None])?),
    };
    let bundle = bundle_for(args.embed.mode, "q0", &args.query, router.as_ref(), &corpora, embedder.as_ref(), &rc)?;
    let mut out = open_output(config)?;
    for (rank, e) in bundle.merged.iter().enumerate() {
        let line = serde_json::json!({
            "rank": rank + 1,
            "pathway": e.pathway,
            "corpus": e.corpus_name,
            "id": e.item_id,
            "score": e.score,
            "text": e.text,
        });
        writeln!(out, "{line}")?;
    }
    if let Some(spec) = &args.generator {
        let client = Endpoint::parse(spec).map_err(|e| usage(e.to_string()))?.connect();
        let answer = corpus_router::pipeline::generate_answer(&bundle, client.as_ref())?;
        writeln!(out, "{}", serde_json::json!({ "answer": answer }))?;
    }
    out.flush()?;
    eprintln!(
        "routed to {}",
        corpus_router::pathway::pathway_format(&bundle.decision.pathways)
    );
    Ok(())
}

fn cmd_eval(config: &RunConfig, args: &EvalArgs) -> Result<()> {
    let gold = load_gold(&args.gold, config.scheme)?;
    let corpora = load_corpora(config, &args.embed)?;
    let embedder = build_embedder(&args.embed)?;
    let oracle = OracleRouter::new(gold.iter().map(|g| (g.query.clone(), g.gold_pathways.clone())));
    let mut rc = retrieve_config(config, &args.embed)?;
    if args.ks.contains(&0) {
        return Err(usage("--ks values must be at least 1"));
    }
    rc.k = rc.k.max(args.ks.iter().copied().max().unwrap_or(1));
    let report = match args.embed.mode {
        Mode::Routed => {
            let router = build_router(config, &args.router, Some(oracle))?;
            let ec = EvalConfig {
                ks: args.ks.clone(),
                workers: config.workers,
                retrieve: rc,
            };
            run_eval(&gold, router.as_ref(), &corpora, embedder.as_ref(), &ec)?
        }
        mode => {
            let none = FixedRouter::new([Pathway::None])?;
            evaluate_with(&gold, &args.ks, config.workers, |g| {
                bundle_for(mode, &g.query_id, &g.query, &none, &corpora, embedder.as_ref(), &rc)
            })?
        }
    };
    let mut out = open_output(config)?;
    out.write_all(report.to_csv()?.as_bytes())?;
    out.flush()?;
    if !args.quiet {
        eprint!("{}", report.render_table());
    }
    Ok(())
}

fn cmd_simulate(config: &RunConfig, args: &SimulateArgs) -> Result<()> {
    let sizes = match args.sizes.as_slice() {
        [s, r, o] => CorpusSizes::new(*s, *r, *o),
        _ => return Err(usage("--sizes takes exactly three values: |S|,|R|,|O|")),
    };
    let mut rows = Vec::new();
    for &sigma in &args.sigma {
        for &alpha in &args.alpha {
            let params = ScoreModelParams::new(alpha, args.beta, args.sigma_r, sigma).map_err(|e| usage(e.to_string()))?;
            let outcome = simulate_unified_vs_routed(&params, sizes, args.router_acc, args.trials, config.seed)?;
            rows.push((params, outcome));
        }
    }
    let mut out = open_output(config)?;
    out.write_all(simulation_csv(&rows)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_granularity(config: &RunConfig, args: &GranularityArgs) -> Result<()> {
    let table = QualityTable::load_csv(&args.table)?;
    let cmp = compare_granularity_policies(&table);
    let mut out = open_output(config)?;
    out.write_all(cmp.to_csv()?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_bench(config: &RunConfig, args: &BenchArgs) -> Result<()> {
    if !(args.route_cost_ms >= 0.0 && args.route_cost_ms.is_finite()) {
        return Err(usage("--route-cost-ms must be non-negative"));
    }
    let bc = BenchConfig {
        k: config.k_flag.unwrap_or(7),
        n_values: args.n.clone(),
        dim: args.dim,
        backend: match args.backend {
            BackendArg::ExactScan => Backend::ExactScan,
            BackendArg::Bucketed => Backend::Bucketed,
        },
        repetitions: args.reps,
        seed: config.seed,
        route_cost: Duration::from_secs_f64(args.route_cost_ms / 1e3),
        top_k: args.top_k,
    };
    let report = bench_latency(&bc)?;
    let mut out = open_output(config)?;
    out.write_all(report.to_csv()?.as_bytes())?;
    out.flush()?;
    if !args.quiet {
        eprint!("{}", report.render_table());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&config, a),
        Command::TrainRouter(a) => cmd_train(&config, a),
        Command::Route(a) => cmd_route(&config, a),
        Command::Retrieve(a) => cmd_retrieve(&config, a),
        Command::Eval(a) => cmd_eval(&config, a),
        Command::Simulate(a) => cmd_simulate(&config, a),
        Command::Granularity(a) => cmd_granularity(&config, a),
        Command::Bench(a) => cmd_bench(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
