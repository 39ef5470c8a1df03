use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use camuvx::discovery::{read_forbidden_mask, CiTest};
use camuvx::eval::{score_adjacency, score_ancestors, MetricReport, Scoring};
use camuvx::experiment::{
    self, make_instance, mean_metrics, run_method, target_rates, write_metrics_csv, write_targets_csv, EngineKind,
    ExperimentConfig, Generator, Method,
};
use camuvx::fixtures;
use camuvx::{CausalGraph, Dataset, DiscoveryResult, OracleEngine, SampleEngine, SearchConfig};

#[derive(Parser)]
#[command(name = "camuvx", version, about = "Causal discovery with hidden variables in additive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample graphs and datasets.
    Generate(GenerateArgs),
    /// Run a search on a dataset, or on a graph through the oracle.
    Discover(DiscoverArgs),
    /// Score a search result against the true graph.
    Evaluate(EvaluateArgs),
    /// Run a batch experiment and write metrics.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Ba,
    Er,
    Fixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Sample,
    Oracle,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Sample => EngineKind::Sample,
            EngineArg::Oracle => EngineKind::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CiTestArg {
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    CamUv,
    CamUvx,
    CamUvxColdstart,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::CamUv => Method::CamUv,
            MethodArg::CamUvx => Method::CamUvx,
            MethodArg::CamUvxColdstart => Method::CamUvxColdstart,
        }
    }
}

#[derive(Args)]
struct GraphSpecArgs {
    #[arg(long, value_enum, default_value = "fixture")]
    generator: GeneratorKind,
    /// Built-in graph name (fixture generator).
    #[arg(long, default_value = "fig1a")]
    fixture: String,
    #[arg(long, default_value_t = 40)]
    n_nodes: usize,
    #[arg(long, default_value_t = 5)]
    children_per_node: usize,
    #[arg(long, default_value_t = 10)]
    n_observed: usize,
    #[arg(long, default_value_t = 0.2)]
    edge_prob: f64,
    #[arg(long, default_value_t = 20)]
    confounder_pairs: usize,
    #[arg(long, default_value_t = 20)]
    mediator_pairs: usize,
}

impl GraphSpecArgs {
    fn generator(&self) -> Generator {
        match self.generator {
            GeneratorKind::Ba => Generator::Ba {
                n_nodes: self.n_nodes,
                children_per_node: self.children_per_node,
                n_observed: self.n_observed,
            },
            GeneratorKind::Er => Generator::Er {
                n_observed: self.n_observed,
                edge_prob: self.edge_prob,
                n_confounder_pairs: self.confounder_pairs,
                n_mediator_pairs: self.mediator_pairs,
            },
            GeneratorKind::Fixture => Generator::Fixture {
                names: vec![self.fixture.clone()],
            },
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    graph: GraphSpecArgs,
    #[arg(long, default_value_t = 500)]
    n_samples: usize,
    /// First seed; further graphs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    n_graphs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
    #[arg(long, value_enum, default_value = "knn")]
    ci_test: CiTestArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Dataset CSV (sample engine).
    #[arg(long, required_if_eq("engine", "sample"))]
    data: Option<PathBuf>,
    /// Graph JSON (oracle engine).
    #[arg(long, required_if_eq("engine", "oracle"))]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sample")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "cam-uvx")]
    method: MethodArg,
    #[command(flatten)]
    search: SearchArgs,
    /// JSON p x p boolean mask; `mask[i][j]` forbids column j as a parent of column i.
    #[arg(long)]
    forbid: Option<PathBuf>,
    /// Output directory; the result is written to `result.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Score undetermined ancestor relations as negatives.
    #[arg(long)]
    strict: bool,
    /// Output directory for `metrics.csv`; rows also go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ExperimentConfig::PRESETS))]
    preset: Option<String>,
    /// Experiment configuration JSON, as written to `config.json`.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    n_graphs: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Significance levels; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_enum)]
    method: Vec<MethodArg>,
    #[arg(long)]
    max_parents: Option<usize>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long, value_enum, default_value = "knn")]
    ci_test: CiTestArg,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn generate(args: GenerateArgs) -> Result<()> {
    create_dir(&args.out)?;
    let generator = args.graph.generator();
    let name = match &generator {
        Generator::Fixture { names } => {
            fixtures::load(&names[0])?;
            names[0].clone()
        }
        Generator::Ba { .. } => "ba".into(),
        Generator::Er { .. } => "er".into(),
    };
    for k in 0..args.n_graphs as u64 {
        let seed = args.seed.wrapping_add(k);
        let (graph, _, data) = make_instance(&generator, &name, seed, args.n_samples)?;
        let stem = args.out.join(format!("{name}_{seed}"));
        graph.write_json(stem.with_extension("graph.json"))?;
        data.write_csv(stem.with_extension("csv"))?;
        data.write_provenance(stem.with_extension("provenance.json"))?;
        println!("{}", stem.display());
    }
    Ok(())
}

fn search_config(args: &SearchArgs, forbid: Option<&Path>) -> Result<SearchConfig> {
    let CiTestArg::Knn = args.ci_test;
    Ok(SearchConfig {
        alpha: args.alpha,
        max_parents: args.max_parents,
        ci_test: CiTest::Knn,
        forbidden: forbid.map(read_forbidden_mask).transpose()?,
        seed: args.seed,
        ..SearchConfig::default()
    })
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let cfg = search_config(&args.search, args.forbid.as_deref())?;
    let method = Method::from(args.method);
    let result = match args.engine {
        EngineArg::Sample => {
            let path = args.data.as_ref().expect("clap requires --data");
            let data = Dataset::read_csv(path)?;
            let eng = SampleEngine::new(&data, cfg.seed)?;
            run_method(&eng, method, &cfg)?
        }
        EngineArg::Oracle => {
            let graph = CausalGraph::read_json(args.graph.as_ref().expect("clap requires --graph"))?;
            let eng = OracleEngine::new(&graph)?;
            run_method(&eng, method, &cfg)?
        }
    };
    create_dir(&args.out)?;
    let path = args.out.join("result.json");
    result.write_json(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let result = DiscoveryResult::read_json(&args.result)?;
    let graph = CausalGraph::read_json(&args.graph)?;
    let scoring = if args.strict { Scoring::Strict } else { Scoring::HalfCredit };
    let reports = [
        score_adjacency(&result.adjacency, &graph)?,
        score_ancestors(&result, &graph, scoring)?,
    ];
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(MetricReport::CSV_HEADER)?;
    for r in &reports {
        out.write_record(r.csv_fields())?;
    }
    let text = String::from_utf8(out.into_inner()?)?;
    print!("{text}");
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let path = dir.join("metrics.csv");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn run_experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(p), None) => ExperimentConfig::preset(p)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("invalid configuration {}", path.display()))?
        }
        _ => bail!("give exactly one of --preset or --config"),
    };
    let CiTestArg::Knn = args.ci_test;
    if let Some(n) = args.n_graphs {
        cfg.n_graphs = n;
    }
    if let Some(n) = args.n_samples {
        cfg.n_samples = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !args.alpha.is_empty() {
        cfg.alphas = args.alpha.clone();
    }
    if !args.method.is_empty() {
        cfg.methods = args.method.iter().map(|&m| m.into()).collect();
    }
    if let Some(d) = args.max_parents {
        cfg.max_parents = d;
    }
    if let Some(e) = args.engine {
        cfg.engine = e.into();
    }
    if args.strict {
        cfg.scoring = Scoring::Strict;
    }
    cfg.validate()?;

    create_dir(&args.out)?;
    fs::write(args.out.join("config.json"), cfg.to_json()? + "\n").context("cannot write config.json")?;
    let records = experiment::run_experiment(&cfg)?;
    write_metrics_csv(&cfg, &records, args.out.join("metrics.csv"))?;
    write_targets_csv(&records, args.out.join("targets.csv"))?;

    for m in mean_metrics(&records) {
        println!(
            "{:<18} alpha={:<5} {:<9} runs={:<4} failed={:<3} precision={:.3} recall={:.3} f1={:.3}",
            m.method.as_str(),
            m.alpha,
            m.task.as_str(),
            m.runs,
            m.failures,
            m.precision,
            m.recall,
            m.f1
        );
    }
    for (graph, method, alpha, target, rate) in target_rates(&records) {
        println!("{graph:<6} {:<18} alpha={alpha:<5} {target:<18} success={rate:.2}", method.as_str());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Discover(a) => discover(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => run_experiment(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
