mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manifest::{with_suffix, write_bytes, RunManifest};
use sgaae::eval::{argmax_rows, evaluate, write_report, Task};
use sgaae::graph::{load_edge_list, read_split, split_edges, write_edge_list, write_split, LoadOptions, SignedGraph};
use sgaae::model::{read_model, train, write_model, DecoderForm, TrainConfig};
use sgaae::spectral::{node_features, read_features, write_features, EigEnd, FeatureConfig};
use sgaae::synth::{parse_labels, read_config, reorder_by_assignment, write_config, write_labels, Preset};
use sgaae::viz::{export_adjacency_heatmap, export_membership_circle, Channel, Space};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgaae", version, about = "Signed graph archetypal autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a planted polarized signed network.
    Generate(GenerateArgs),
    /// Hold out a sign-stratified fraction of the links.
    Split(SplitArgs),
    /// Eigenvectors of the signed normalized Laplacian.
    Features(FeaturesArgs),
    /// Fit the model to a graph.
    Train(TrainArgs),
    /// Link-prediction metrics on a held-out split.
    Evaluate(EvaluateArgs),
    /// Adjacency heatmap and membership circle plots.
    ExportViz(VizArgs),
}

#[derive(Args)]
struct Common {
    /// Output file (or directory for export-viz).
    #[arg(long)]
    out: PathBuf,
    /// Manifest path [default: <out>.manifest].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Either an edge list or the train graph of a split file.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct GraphSource {
    /// Edge list (`i j w` lines).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Split file; its train graph is used.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Built-in configuration: two-level, one-level or two-community.
    #[arg(long, default_value = "two-level", conflicts_with = "config")]
    preset: String,
    /// Generator configuration file instead of a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Fraction of each sign's edges to hold out.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    /// Collapse integer weights to +1 / -1.
    #[arg(long)]
    binarize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Residual tolerance of every eigenpair.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Spectrum end: low or high.
    #[arg(long, default_value = "low")]
    eig_end: String,
    #[arg(long)]
    binarize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long)]
    features: PathBuf,
    /// Number of archetypes K.
    #[arg(long, default_value_t = 8)]
    archetypes: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 3000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// Nodes per sampled block [default: min(N, 512)].
    #[arg(long)]
    block: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.05)]
    t_min: f64,
    /// Decoder form: direct or polarization.
    #[arg(long, default_value = "direct")]
    decoder: String,
    #[arg(long)]
    binarize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Labels file from `generate`; orders nodes by planted community.
    #[arg(long, conflicts_with = "model")]
    labels: Option<PathBuf>,
    /// Trained model; orders nodes by arg-max membership and adds circle plots.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Membership space used for ordering: pos or neg.
    #[arg(long, default_value = "pos")]
    space: String,
    /// Signs to draw: pos, neg or both.
    #[arg(long, default_value = "both")]
    channel: String,
    #[arg(long)]
    binarize: bool,
    #[command(flatten)]
    common: Common,
}

fn parse_flag<T>(name: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| anyhow::anyhow!("--{name}: {e}"))
}

fn load_graph(path: &Path, binarize: bool, m: &mut RunManifest) -> Result<SignedGraph> {
    m.input("graph", path)?;
    let loaded = load_edge_list(path, LoadOptions { binarize }).with_context(|| format!("loading {}", path.display()))?;
    if !loaded.ids_unchanged() {
        bail!(
            "{}: node ids are not 0..N-1; add a `# nodes: N` line or renumber the file",
            path.display()
        );
    }
    Ok(loaded.graph)
}

fn load_source(src: &GraphSource, binarize: bool, m: &mut RunManifest) -> Result<SignedGraph> {
    let g = match (&src.graph, &src.split) {
        (Some(path), _) => load_graph(path, binarize, m)?,
        (None, Some(path)) => {
            m.input("split", path)?;
            read_split(path).with_context(|| format!("loading {}", path.display()))?.train_graph
        }
        (None, None) => unreachable!("clap enforces one graph source"),
    };
    Ok(if binarize { g.binarized() } else { g })
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut m = RunManifest::new("generate");
    m.seed(a.seed);
    let cfg = match &a.config {
        Some(path) => {
            m.input("config", path)?;
            m.flag("config", path.display());
            read_config(path, Some(a.seed)).with_context(|| format!("loading {}", path.display()))?
        }
        None => {
            m.flag("preset", &a.preset);
            parse_flag::<Preset>("preset", &a.preset)?.config(a.seed)
        }
    };
    let planted = cfg.generate()?;
    let g = &planted.graph;
    let out = &a.common.out;
    m.output("graph", out, write_edge_list(g).as_bytes())?;
    m.output("labels", &with_suffix(out, "labels"), write_labels(&cfg).as_bytes())?;
    m.output("config", &with_suffix(out, "config"), write_config(&cfg).as_bytes())?;
    m.finish(a.common.manifest.as_deref(), out)?;
    println!(
        "{} nodes, {} positive, {} negative edges -> {}",
        g.node_count(),
        g.positive_edge_count(),
        g.negative_edge_count(),
        out.display()
    );
    Ok(())
}

fn cmd_split(a: &SplitArgs) -> Result<()> {
    let mut m = RunManifest::new("split");
    m.seed(a.seed);
    m.flag("fraction", a.fraction);
    m.flag("binarize", a.binarize);
    let g = load_graph(&a.graph, a.binarize, &mut m)?;
    let split = split_edges(&g, a.fraction, a.seed)?;
    let out = &a.common.out;
    m.output("split", out, write_split(&split).as_bytes())?;
    m.output("train_graph", &with_suffix(out, "train.tsv"), write_edge_list(&split.train_graph).as_bytes())?;
    m.finish(a.common.manifest.as_deref(), out)?;
    println!(
        "held out {} positive, {} negative, {} zero pairs -> {}",
        split.test_pos.len(),
        split.test_neg.len(),
        split.test_zero.len(),
        out.display()
    );
    Ok(())
}

fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    let mut m = RunManifest::new("features");
    m.seed(a.seed);
    let eig_end: EigEnd = parse_flag("eig-end", &a.eig_end)?;
    for (k, v) in [
        ("dim", a.dim.to_string()),
        ("tol", a.tol.to_string()),
        ("eig_end", eig_end.to_string()),
        ("binarize", a.binarize.to_string()),
    ] {
        m.flag(k, v);
    }
    let g = load_source(&a.source, a.binarize, &mut m)?;
    let cfg = FeatureConfig {
        dim: a.dim,
        seed: a.seed,
        tol: a.tol,
        eig_end,
    };
    let f = node_features(&g, &cfg)?;
    m.output("features", &a.common.out, write_features(&f).as_bytes())?;
    m.finish(a.common.manifest.as_deref(), &a.common.out)?;
    println!("{} x {} features -> {}", f.node_count(), f.dim(), a.common.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut m = RunManifest::new("train");
    m.seed(a.seed);
    let decoder: DecoderForm = parse_flag("decoder", &a.decoder)?;
    let cfg = TrainConfig {
        archetypes: a.archetypes,
        hidden: a.hidden,
        epochs: a.epochs,
        lr: a.lr,
        block: a.block,
        t0: a.t0,
        t_min: a.t_min,
        seed: a.seed,
        decoder,
    };
    let g = load_source(&a.source, a.binarize, &mut m)?;
    for (k, v) in [
        ("archetypes", cfg.archetypes.to_string()),
        ("hidden", cfg.hidden.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("lr", cfg.lr.to_string()),
        ("block", cfg.block_size(g.node_count()).to_string()),
        ("t0", cfg.t0.to_string()),
        ("t_min", cfg.t_min.to_string()),
        ("decoder", cfg.decoder.to_string()),
        ("binarize", a.binarize.to_string()),
    ] {
        m.flag(k, v);
    }
    m.input("features", &a.features)?;
    let feats = read_features(&a.features).with_context(|| format!("loading {}", a.features.display()))?;
    let fit = train(&g, &feats, &cfg)?;
    m.output("model", &a.common.out, write_model(&fit).as_bytes())?;
    m.finish(a.common.manifest.as_deref(), &a.common.out)?;
    println!(
        "trained {} epochs, final loss {:.6e} -> {}",
        fit.loss_trace.len(),
        fit.loss_trace.last().copied().unwrap_or(f64::NAN),
        a.common.out.display()
    );
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::new("evaluate");
    m.input("model", &a.model)?;
    m.input("split", &a.split)?;
    let model = read_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let split = read_split(&a.split).with_context(|| format!("loading {}", a.split.display()))?;
    m.seed(split.seed);
    let report = evaluate(&model, &split)?;
    m.output("report", &a.common.out, write_report(&report).as_bytes())?;
    m.finish(a.common.manifest.as_deref(), &a.common.out)?;
    for task in Task::ALL {
        let t = report.task(task);
        println!("{task}\tauc_roc {:.4}\tauc_pr {:.4}\tprior {:.4}", t.auc_roc, t.auc_pr, t.prior_rate());
    }
    Ok(())
}

fn cmd_export_viz(a: &VizArgs) -> Result<()> {
    let mut m = RunManifest::new("export-viz");
    let space: Space = parse_flag("space", &a.space)?;
    let channel: Channel = parse_flag("channel", &a.channel)?;
    m.flag("space", space);
    m.flag("channel", channel);
    m.flag("binarize", a.binarize);
    let g = load_graph(&a.graph, a.binarize, &mut m)?;
    let dir = &a.common.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let model = match &a.model {
        Some(path) => {
            m.input("model", path)?;
            let model = read_model(path).with_context(|| format!("loading {}", path.display()))?;
            if model.representation.node_count() != g.node_count() {
                bail!(
                    "model has {} nodes, graph has {}",
                    model.representation.node_count(),
                    g.node_count()
                );
            }
            Some(model)
        }
        None => None,
    };
    let assignment: Option<Vec<usize>> = if let Some(path) = &a.labels {
        m.input("labels", path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (pos, neg) = parse_labels(&text).with_context(|| format!("parsing {}", path.display()))?;
        Some(match space {
            Space::Pos => pos,
            Space::Neg => neg,
        })
    } else {
        model.as_ref().map(|fit| match space {
            Space::Pos => argmax_rows(&fit.representation.z),
            Space::Neg => argmax_rows(&fit.representation.w),
        })
    };
    let order = match &assignment {
        Some(sigma) => reorder_by_assignment(&g, sigma)?,
        None => (0..g.node_count()).collect(),
    };

    let image = dir.join("heatmap.ppm");
    let cells = dir.join("heatmap.cells");
    export_adjacency_heatmap(&g, &order, channel, &image, &cells)?;
    m.record_output("heatmap", &image)?;
    m.record_output("heatmap_cells", &cells)?;
    if let Some(fit) = &model {
        let table = dir.join(format!("circle_{space}.tsv"));
        let drawing = dir.join(format!("circle_{space}.svg"));
        export_membership_circle(&fit.representation, space, &table, &drawing)?;
        m.record_output("circle_table", &table)?;
        m.record_output("circle_drawing", &drawing)?;
    }
    let manifest = a.common.manifest.clone().unwrap_or_else(|| dir.join("export-viz.manifest"));
    write_bytes(&manifest, m.render().as_bytes())?;
    println!("figures -> {}", dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Split(a) => cmd_split(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::ExportViz(a) => cmd_export_viz(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let head: Vec<&str> = text.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
            eprintln!("error: {}", head.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One line, so callers can parse it.
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
