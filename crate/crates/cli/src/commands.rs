use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use donmine_core::embed::{
    relations_from_metapath, train_hin2vec, train_metapath2vec, Hin2vecParams, SgnsParams,
};
use donmine_core::graph::{load_graph_dir, snapshot_split, write_graph_dir, EDGE_FILE, NODE_FILE};
use donmine_core::mf::{build_interaction_matrix, train_cmf, train_pmf, MfParams};
use donmine_core::stats::{characterization_report, distribution_curve, tail_slope, CurveMode};
use donmine_core::synth::{generate, SynthConfig, MANIFEST_FILE};
use donmine_core::tasks::{
    build_queries, rank_metrics, run_prediction, run_recommendation, ApMode, EvalReport,
    FeatureGroup, Method, PredictionParams, RecParams,
};
use donmine_core::walks::{generate_walks, parse_metapath, WalkCorpus};
use donmine_core::{EdgeKind, HinGraph, LabelWindow, NodeKind};

use crate::manifest::Recorder;
use crate::rankings::{rankings_file, write_rankings, write_truth, EvalInput, TRUTH_FILE};
use crate::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "donmine",
    version,
    about = "Donation mining on user/video graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted synthetic dataset.
    Synth(SynthArgs),
    /// Validate node and edge files and write them in canonical form.
    Ingest(IngestArgs),
    /// Distribution curves, follower tail slope and SRCC table.
    Stats(StatsArgs),
    /// Meta-path guided random walks.
    Walk(WalkArgs),
    /// Train metapath2vec or HIN2vec embeddings.
    Embed(EmbedArgs),
    /// Train PMF or CMF factors.
    Mf(MfArgs),
    /// Video-level donation prediction.
    Predict(PredictArgs),
    /// Donor recommendation with every requested method.
    Recommend(RecommendArgs),
    /// Score ranking files against a truth file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice of the run.
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Report format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator configuration; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GraphArg {
    /// Directory with nodes.csv and edges.csv.
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Last snapshot day; defaults to the synthetic manifest's cutoff.
    #[arg(long)]
    pub cutoff: Option<i64>,
    /// Window length in days; defaults to the synthetic manifest's horizon.
    #[arg(long)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Lower bound of the follower tail fit.
    #[arg(long, default_value_t = 10.0)]
    pub xmin: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct WalkOptions {
    /// Node kinds of the guiding meta-path, `U` for users and `V` for videos.
    #[arg(long, default_value = "U-U-V-U-U")]
    pub metapath: String,
    /// Walks started from every node of the meta-path's first kind [default: 10].
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    /// Maximum nodes per walk [default: 80].
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Walk the snapshot up to this day instead of the whole graph.
    #[arg(long)]
    pub cutoff: Option<i64>,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    #[command(flatten)]
    pub walk: WalkOptions,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedMethod {
    Metapath2vec,
    Hin2vec,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Embedding trainer.
    #[arg(long, value_enum)]
    pub method: EmbedMethod,
    /// Corpus written by `walk`; generated on the fly when absent.
    #[arg(long)]
    pub walks: Option<PathBuf>,
    #[command(flatten)]
    pub walk: WalkOptions,
    /// JSON trainer parameters; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MfMethod {
    Pmf,
    Cmf,
}

#[derive(Debug, Args)]
pub struct MfArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Factorization model.
    #[arg(long, value_enum)]
    pub method: MfMethod,
    /// Factorize the snapshot up to this day instead of the whole graph.
    #[arg(long)]
    pub cutoff: Option<i64>,
    /// JSON factorization parameters; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Comma-separated feature groups.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "past_popularity,past_donation,both"
    )]
    pub groups: Vec<String>,
    /// JSON prediction parameters; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Comma-separated methods.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "pmf,cmf,metapath2vec,hin2vec,random"
    )]
    pub methods: Vec<String>,
    /// Comma-separated cutoffs; overrides the config [default: 5,20,50,100].
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// `standard` or `paper_literal`; overrides the config [default: standard].
    #[arg(long)]
    pub ap_mode: Option<String>,
    /// JSON recommendation parameters; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated `rankings_<method>.csv` files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rankings: Vec<PathBuf>,
    /// `truth.csv` written by `recommend`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "5,20,50,100")]
    pub k: Vec<usize>,
    /// `standard` or `paper_literal`.
    #[arg(long, default_value = "standard")]
    pub ap_mode: String,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::Synth(a) => &a.common,
        Command::Ingest(a) => &a.common,
        Command::Stats(a) => &a.common,
        Command::Walk(a) => &a.common,
        Command::Embed(a) => &a.common,
        Command::Mf(a) => &a.common,
        Command::Predict(a) => &a.common,
        Command::Recommend(a) => &a.common,
        Command::Eval(a) => &a.common,
    };
    if common.workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    // A second global pool in the same process is refused; the first one
    // stays in effect.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build_global();
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::data(format!("{}: {e}", common.out.display())))?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Walk(a) => walk(a),
        Command::Embed(a) => embed(a),
        Command::Mf(a) => mf(a),
        Command::Predict(a) => predict(a),
        Command::Recommend(a) => recommend(a),
        Command::Eval(a) => eval(a),
    }
}

fn recorder(name: &str, c: &Common) -> Recorder {
    Recorder::new(name, c.seed, c.workers)
}

fn read_config<T: DeserializeOwned + Default>(
    path: Option<&Path>,
    rec: &mut Recorder,
) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("--config {}: {e}", path.display())))?;
    rec.input(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("--config {}: {e}", path.display())))
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("parameters serialize")
}

/// Writes `name` under `out` through `f` and records it.
fn emit(
    out: &Path,
    name: &str,
    rec: &mut Recorder,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let path = out.join(name);
    let io = |e: std::io::Error| Failure::data(format!("{}: {e}", path.display()));
    let file = File::create(&path).map_err(io)?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io)?;
    rec.output(path);
    Ok(())
}

fn load_graph(dir: &Path, rec: &mut Recorder) -> Result<HinGraph, Failure> {
    let g = load_graph_dir(dir)?;
    rec.input(&dir.join(NODE_FILE))?;
    rec.input(&dir.join(EDGE_FILE))?;
    Ok(g)
}

/// Cutoff and horizon from the flags, else from a synthetic manifest in
/// the graph directory.
fn resolve_split(dir: &Path, s: &SplitArgs) -> Result<(i64, u32), Failure> {
    let manifest: Option<Value> = fs::read_to_string(dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let field = |k: &str| {
        manifest
            .as_ref()
            .and_then(|m| m.get(k))
            .and_then(Value::as_i64)
    };
    let cutoff = s.cutoff.or_else(|| field("cutoff")).ok_or_else(|| {
        Failure::usage("--cutoff is required when the graph has no synthetic manifest")
    })?;
    let horizon = match s.horizon {
        Some(h) => h,
        None => field("horizon_days")
            .and_then(|h| u32::try_from(h).ok())
            .ok_or_else(|| {
                Failure::usage("--horizon is required when the graph has no synthetic manifest")
            })?,
    };
    Ok((cutoff, horizon))
}

fn split(g: &HinGraph, cutoff: i64, horizon: u32) -> Result<(HinGraph, LabelWindow), Failure> {
    Ok(snapshot_split(g, cutoff, horizon)?)
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let mut rec = recorder("synth", &a.common);
    let mut config: SynthConfig = read_config(a.config.as_deref(), &mut rec)?;
    config.seed = a.common.seed;
    let data = generate(&config)?;
    let written = data.write_dir(&a.common.out)?;
    rec.outputs(written);
    let m = &data.manifest;
    rec.finish(
        &a.common.out,
        to_value(&config),
        json!({
            "follow_edges": m.follow_edges,
            "snapshot_events": m.snapshot_events,
            "window_events": m.window_events,
            "structured_events": m.structured_events,
            "contagion_events": m.contagion_events,
        }),
    )
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let mut rec = recorder("ingest", &a.common);
    let g = load_graph(&a.graph.graph, &mut rec)?;
    let (n, e) = write_graph_dir(&a.common.out, g.node_table(), g.edges())?;
    rec.outputs([n, e]);
    let users = g.nodes_of_kind(NodeKind::User).len();
    let videos = g.nodes_of_kind(NodeKind::Video).len();
    let (follows, donations) = (
        g.edge_count(EdgeKind::Follow),
        g.edge_count(EdgeKind::Donate),
    );
    emit(&a.common.out, "summary.csv", &mut rec, |w| {
        writeln!(w, "item,count")?;
        writeln!(w, "users,{users}")?;
        writeln!(w, "videos,{videos}")?;
        writeln!(w, "follows,{follows}")?;
        writeln!(w, "donations,{donations}")
    })?;
    rec.finish(
        &a.common.out,
        json!({ "graph": a.graph.graph }),
        json!({ "users": users, "videos": videos, "follows": follows, "donations": donations }),
    )
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    let mut rec = recorder("stats", &a.common);
    let g = load_graph(&a.graph.graph, &mut rec)?;
    let report = characterization_report(&g)?;
    rec.outputs(report.write_dir(&a.common.out)?);
    let followers: Vec<f64> = g
        .nodes_of_kind(NodeKind::User)
        .iter()
        .map(|&u| g.in_degree(u, EdgeKind::Follow) as f64)
        .collect();
    let slope =
        distribution_curve(&followers, CurveMode::Ccdf).and_then(|c| tail_slope(&c, a.xmin));
    let slope_cell = match &slope {
        Ok(s) => format!("{s:.6}"),
        Err(_) => "NA".into(),
    };
    emit(&a.common.out, "tail.csv", &mut rec, |w| {
        writeln!(w, "series,xmin,slope")?;
        writeln!(w, "followers,{},{slope_cell}", a.xmin)
    })?;
    rec.finish(
        &a.common.out,
        json!({ "graph": a.graph.graph, "xmin": a.xmin }),
        json!({ "follower_tail_slope": slope.as_ref().ok(), "tail_error": slope.as_ref().err().map(|e| e.to_string()) }),
    )
}

/// The whole graph, or its snapshot when a cutoff is given.
fn observed(g: HinGraph, cutoff: Option<i64>) -> Result<HinGraph, Failure> {
    match cutoff {
        Some(c) => Ok(split(&g, c, 1)?.0),
        None => Ok(g),
    }
}

fn walk_corpus(g: &HinGraph, o: &WalkOptions, seed: u64) -> Result<WalkCorpus, Failure> {
    let mp = parse_metapath(&o.metapath)?;
    Ok(generate_walks(
        g,
        &mp,
        o.walks_per_node
            .unwrap_or(donmine_core::walks::DEFAULT_WALKS_PER_NODE),
        o.walk_length
            .unwrap_or(donmine_core::walks::DEFAULT_WALK_LENGTH),
        seed,
    )?)
}

fn walk_params(o: &WalkOptions) -> Value {
    json!({
        "metapath": o.metapath,
        "walks_per_node": o.walks_per_node.unwrap_or(donmine_core::walks::DEFAULT_WALKS_PER_NODE),
        "walk_length": o.walk_length.unwrap_or(donmine_core::walks::DEFAULT_WALK_LENGTH),
        "cutoff": o.cutoff,
    })
}

fn walk(a: WalkArgs) -> Result<(), Failure> {
    let mut rec = recorder("walk", &a.common);
    let g = observed(load_graph(&a.graph.graph, &mut rec)?, a.walk.cutoff)?;
    let corpus = walk_corpus(&g, &a.walk, a.common.seed)?;
    emit(&a.common.out, "walks.txt", &mut rec, |w| {
        corpus.write(&g, w)
    })?;
    let tokens = corpus.token_count();
    rec.finish(
        &a.common.out,
        json!({ "graph": a.graph.graph, "walk": walk_params(&a.walk) }),
        json!({ "walks": corpus.walks.len(), "tokens": tokens, "no_start_nodes": corpus.no_start_nodes }),
    )
}

fn embed(a: EmbedArgs) -> Result<(), Failure> {
    let mut rec = recorder("embed", &a.common);
    let g = observed(load_graph(&a.graph.graph, &mut rec)?, a.walk.cutoff)?;
    let corpus = match &a.walks {
        Some(path) => {
            let file =
                File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            rec.input(path)?;
            WalkCorpus::read(&g, BufReader::new(file))?
        }
        None => walk_corpus(&g, &a.walk, a.common.seed)?,
    };
    let out = &a.common.out;
    let seed = a.common.seed;
    let (params, log) = match a.method {
        EmbedMethod::Metapath2vec => {
            let p: SgnsParams = read_config(a.config.as_deref(), &mut rec)?;
            let (emb, log) = train_metapath2vec(&g, &corpus, &p, seed)?;
            emit(out, "embeddings.txt", &mut rec, |w| emb.write(&g, w))?;
            (to_value(&p), log)
        }
        EmbedMethod::Hin2vec => {
            let p: Hin2vecParams = read_config(a.config.as_deref(), &mut rec)?;
            let rels = relations_from_metapath(&corpus.metapath, p.window)?;
            let (emb, rel, log) = train_hin2vec(&g, &rels, &corpus, &p, seed)?;
            emit(out, "embeddings.txt", &mut rec, |w| emb.write(&g, w))?;
            emit(out, "metapaths.txt", &mut rec, |w| rel.write(w))?;
            (to_value(&p), log)
        }
    };
    emit(out, "loss.csv", &mut rec, |w| {
        writeln!(w, "epoch,loss")?;
        for (i, l) in log.epoch_loss.iter().enumerate() {
            writeln!(w, "{},{l:.6}", i + 1)?;
        }
        Ok(())
    })?;
    rec.finish(
        out,
        json!({
            "graph": a.graph.graph,
            "method": format!("{:?}", a.method).to_lowercase(),
            "walks": a.walks,
            "walk": walk_params(&a.walk),
            "trainer": params,
        }),
        json!({ "tokens": corpus.token_count(), "epoch_loss": log.epoch_loss }),
    )
}

fn mf(a: MfArgs) -> Result<(), Failure> {
    let mut rec = recorder("mf", &a.common);
    let g = observed(load_graph(&a.graph.graph, &mut rec)?, a.cutoff)?;
    let p: MfParams = read_config(a.config.as_deref(), &mut rec)?;
    let uv = build_interaction_matrix(&g, EdgeKind::Donate);
    let (factors, loss) = match a.method {
        MfMethod::Pmf => train_pmf(&uv, &p, a.common.seed)?,
        MfMethod::Cmf => {
            let uu = build_interaction_matrix(&g, EdgeKind::Follow);
            train_cmf(&uv, &uu, &p, a.common.seed)?
        }
    };
    let out = &a.common.out;
    emit(out, "factors.txt", &mut rec, |w| factors.write(&g, w))?;
    emit(out, "loss.csv", &mut rec, |w| {
        writeln!(w, "epoch,loss")?;
        for (i, l) in loss.iter().enumerate() {
            writeln!(w, "{},{l:.6}", i + 1)?;
        }
        Ok(())
    })?;
    rec.finish(
        out,
        json!({
            "graph": a.graph.graph,
            "method": format!("{:?}", a.method).to_lowercase(),
            "cutoff": a.cutoff,
            "mf": p,
        }),
        json!({ "donation_entries": uv.nnz(), "epoch_loss": loss }),
    )
}

fn predict(a: PredictArgs) -> Result<(), Failure> {
    let mut rec = recorder("predict", &a.common);
    let g = load_graph(&a.graph.graph, &mut rec)?;
    let (cutoff, horizon) = resolve_split(&a.graph.graph, &a.split)?;
    let p: PredictionParams = read_config(a.config.as_deref(), &mut rec)?;
    let groups: Vec<FeatureGroup> = a
        .groups
        .iter()
        .map(|s| s.parse())
        .collect::<donmine_core::Result<_>>()?;
    let (snapshot, window) = split(&g, cutoff, horizon)?;
    let report = run_prediction(&snapshot, &window, &groups, &p, a.common.seed)?;
    let out = &a.common.out;
    emit(out, "prediction.csv", &mut rec, |w| report.write_csv(w))?;
    emit(out, "importances.csv", &mut rec, |w| {
        report.write_importances_csv(w)
    })?;
    rec.finish(
        out,
        json!({
            "graph": a.graph.graph,
            "cutoff": cutoff,
            "horizon_days": horizon,
            "groups": groups,
            "prediction": p,
        }),
        json!({
            "window_events": window.events.len(),
            "dropped": window.dropped,
            "n_videos": report.n_videos,
            "n_positive": report.n_positive,
            "threshold": report.threshold,
            "n_train": report.n_train,
            "n_test": report.n_test,
        }),
    )
}

fn recommend(a: RecommendArgs) -> Result<(), Failure> {
    let mut rec = recorder("recommend", &a.common);
    let g = load_graph(&a.graph.graph, &mut rec)?;
    let (cutoff, horizon) = resolve_split(&a.graph.graph, &a.split)?;
    let mut p: RecParams = read_config(a.config.as_deref(), &mut rec)?;
    if let Some(k) = a.k {
        p.ks = k;
    }
    if let Some(m) = &a.ap_mode {
        p.ap_mode = m.parse()?;
    }
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|s| s.parse())
        .collect::<donmine_core::Result<_>>()?;
    let (snapshot, window) = split(&g, cutoff, horizon)?;
    let run = run_recommendation(&snapshot, &window, &methods, &p, a.common.seed)?;
    let out = &a.common.out;
    emit(out, "report.csv", &mut rec, |w| run.report.write_csv(w))?;
    for (method, lists) in &run.lists {
        emit(out, &rankings_file(method.as_str()), &mut rec, |w| {
            write_rankings(&snapshot, lists, w)
        })?;
    }
    let queries = build_queries(&snapshot, &window, p.hops)?;
    emit(out, TRUTH_FILE, &mut rec, |w| {
        write_truth(&snapshot, &window, &queries, w)
    })?;
    rec.finish(
        out,
        json!({
            "graph": a.graph.graph,
            "cutoff": cutoff,
            "horizon_days": horizon,
            "methods": methods,
            "recommendation": p,
        }),
        json!({
            "window_events": window.events.len(),
            "dropped": window.dropped,
            "queries": run.queries,
            "skipped_empty_truth": run.skipped_empty_truth,
            "truth_outside_candidates": run.truth_outside_candidates,
            "mean_candidates": run.mean_candidates,
            "expected_random_recall": run.expected_random_recall,
            "failed_methods": run.report.rows.iter().filter(|r| r.error.is_some()).map(|r| &r.method).collect::<Vec<_>>(),
        }),
    )
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let mut rec = recorder("eval", &a.common);
    let mode: ApMode = a.ap_mode.parse()?;
    let mut input = EvalInput::read_truth(&a.truth)?;
    rec.input(&a.truth)?;
    let skipped = input.skipped();
    let mut rows = Vec::new();
    for path in &a.rankings {
        let method = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.strip_prefix("rankings_").unwrap_or(s).to_owned())
            .ok_or_else(|| {
                Failure::usage(format!("--rankings {}: no file name", path.display()))
            })?;
        let lists = input.read_rankings(path)?;
        rec.input(path)?;
        let mut row = rank_metrics(&method, &lists, &a.k, mode)?;
        row.skipped += skipped;
        rows.push(row);
    }
    let report = EvalReport {
        ks: a.k.clone(),
        ap_mode: mode,
        rows,
    };
    emit(&a.common.out, "report.csv", &mut rec, |w| {
        report.write_csv(w)
    })?;
    rec.finish(
        &a.common.out,
        json!({ "rankings": a.rankings, "truth": a.truth, "k": a.k, "ap_mode": mode }),
        json!({ "skipped_empty_truth": skipped }),
    )
}
