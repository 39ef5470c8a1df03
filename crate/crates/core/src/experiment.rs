//! Batch experiments: generate graphs and data, run the searches, score them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discovery::{cam_uv, cam_uvx, DiscoveryResult, Init, Relation, SearchConfig};
use crate::engine::{OracleEngine, SampleEngine, TestEngine};
use crate::error::{Error, Result};
use crate::eval::{score_adjacency, score_ancestors, MetricReport, Scoring, Task};
use crate::fixtures;
use crate::graph::CausalGraph;
use crate::stats::CmiParams;
use crate::synth::{sample_ba_graph, sample_dataset, sample_er_graph_with_hidden, Dataset, ScmSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// keeps the coefficient stream apart from the graph stream when both derive from one seed
const DATA_SEED_SALT: u64 = 0x6a09_e667_f3bc_c908;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Ba {
        n_nodes: usize,
        children_per_node: usize,
        n_observed: usize,
    },
    Er {
        n_observed: usize,
        edge_prob: f64,
        n_confounder_pairs: usize,
        n_mediator_pairs: usize,
    },
    /// Built-in graphs; every name gets `n_graphs` datasets.
    Fixture { names: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CamUv,
    CamUvx,
    CamUvxColdstart,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CamUv => "cam_uv",
            Method::CamUvx => "cam_uvx",
            Method::CamUvxColdstart => "cam_uvx_coldstart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cam_uv" => Ok(Method::CamUv),
            "cam_uvx" => Ok(Method::CamUvx),
            "cam_uvx_coldstart" => Ok(Method::CamUvxColdstart),
            _ => Err(Error::invalid(format!(
                "unknown method '{s}' (expected cam_uv, cam_uvx or cam_uvx_coldstart)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Sample,
    Oracle,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Sample => "sample",
            EngineKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub n_graphs: usize,
    pub n_samples: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub engine: EngineKind,
    /// Graph `k` uses seed `seed + k`.
    pub seed: u64,
    pub max_parents: usize,
    pub scoring: Scoring,
    pub cmi: CmiParams,
}

impl ExperimentConfig {
    pub const PRESETS: [&'static str; 3] = ["fig2", "ba-desk", "er-desk"];

    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentConfig {
            generator: Generator::Fixture {
                names: vec!["fig1a".into(), "fig1b".into()],
            },
            n_graphs: 100,
            n_samples: 500,
            alphas: vec![0.1],
            methods: vec![Method::CamUv, Method::CamUvx],
            engine: EngineKind::Sample,
            seed: 0,
            max_parents: 3,
            scoring: Scoring::HalfCredit,
            cmi: CmiParams::default(),
        };
        match name {
            "fig2" => Ok(base),
            "ba-desk" => Ok(ExperimentConfig {
                generator: Generator::Ba {
                    n_nodes: 40,
                    children_per_node: 5,
                    n_observed: 10,
                },
                n_graphs: 10,
                ..base
            }),
            "er-desk" => Ok(ExperimentConfig {
                generator: Generator::Er {
                    n_observed: 10,
                    edge_prob: 0.2,
                    n_confounder_pairs: 20,
                    n_mediator_pairs: 20,
                },
                n_graphs: 10,
                alphas: vec![0.05, 0.1, 0.2],
                ..base
            }),
            _ => Err(Error::invalid(format!(
                "unknown preset '{name}' (expected one of {})",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be positive"));
        }
        if self.alphas.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("need at least one alpha and one method"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {a}")));
        }
        if self.max_parents < 1 {
            return Err(Error::invalid("max_parents must be at least 1"));
        }
        if let Generator::Fixture { names } = &self.generator {
            if names.is_empty() {
                return Err(Error::invalid("fixture generator needs at least one name"));
            }
            for n in names {
                fixtures::load(n)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    /// `(graph name, graph seed)` for every instance, in run order.
    pub fn instances(&self) -> Vec<(String, u64)> {
        let seeds = (0..self.n_graphs as u64).map(|k| self.seed.wrapping_add(k));
        match &self.generator {
            Generator::Fixture { names } => names
                .iter()
                .flat_map(|n| seeds.clone().map(move |s| (n.clone(), s)))
                .collect(),
            Generator::Ba { .. } => seeds.map(|s| ("ba".to_string(), s)).collect(),
            Generator::Er { .. } => seeds.map(|s| ("er".to_string(), s)).collect(),
        }
    }
}

/// Seed used for the structural coefficients and noise of a graph seed.
pub fn data_seed(graph_seed: u64) -> u64 {
    graph_seed ^ DATA_SEED_SALT
}

pub fn make_graph(generator: &Generator, name: &str, seed: u64) -> Result<CausalGraph> {
    match generator {
        Generator::Ba {
            n_nodes,
            children_per_node,
            n_observed,
        } => sample_ba_graph(*n_nodes, *children_per_node, *n_observed, seed),
        Generator::Er {
            n_observed,
            edge_prob,
            n_confounder_pairs,
            n_mediator_pairs,
        } => sample_er_graph_with_hidden(*n_observed, *edge_prob, *n_confounder_pairs, *n_mediator_pairs, seed),
        Generator::Fixture { .. } => fixtures::load(name),
    }
}

/// Graph, structural model and sampled data for one instance.
pub fn make_instance(
    generator: &Generator,
    name: &str,
    seed: u64,
    n_samples: usize,
) -> Result<(CausalGraph, ScmSpec, Dataset)> {
    let graph = make_graph(generator, name, seed)?;
    let spec = ScmSpec::random(graph.clone(), data_seed(seed));
    let data = sample_dataset(&spec, n_samples)?;
    Ok((graph, spec, data))
}

/// Runs one method on one engine.
pub fn run_method<E: TestEngine + ?Sized>(eng: &E, method: Method, cfg: &SearchConfig) -> Result<DiscoveryResult> {
    match method {
        Method::CamUv => Ok(DiscoveryResult::empty(cam_uv(eng, cfg)?)),
        Method::CamUvx => cam_uvx(eng, &cfg.clone().with_init(Init::CamUv)),
        Method::CamUvxColdstart => cam_uvx(eng, &cfg.clone().with_init(Init::ColdStart)),
    }
}

/// The quantities plotted for the two illustrative graphs: the edge
/// `x1 -> x2` and `x3` as an ancestor of `x2` in `fig1a`, the non-edge
/// `(x1, x2)` in `fig1b`. Empty for other graphs.
pub fn fig2_targets(graph: &str, r: &DiscoveryResult) -> Vec<(&'static str, bool)> {
    let a = &r.adjacency;
    match graph {
        "fig1a" => vec![
            ("edge_x1_x2", a.get(1, 0) == Relation::Edge),
            ("x3_ancestor_of_x2", r.implied_ancestors()[1].contains(2)),
        ],
        "fig1b" => vec![(
            "nonedge_x1_x2",
            a.get(0, 1) == Relation::NoEdge && a.get(1, 0) == Relation::NoEdge,
        )],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: DiscoveryResult,
    pub adjacency: MetricReport,
    pub ancestor: MetricReport,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub graph: String,
    pub graph_seed: u64,
    pub method: Method,
    pub alpha: f64,
    pub outcome: std::result::Result<RunOutcome, String>,
}

impl RunRecord {
    pub fn targets(&self) -> Vec<(&'static str, bool)> {
        match &self.outcome {
            Ok(o) => fig2_targets(&self.graph, &o.result),
            Err(_) => Vec::new(),
        }
    }
}

fn run_instance(cfg: &ExperimentConfig, name: &str, seed: u64) -> Vec<RunRecord> {
    let cells: Vec<(Method, f64)> = cfg
        .alphas
        .iter()
        .flat_map(|&a| cfg.methods.iter().map(move |&m| (m, a)))
        .collect();
    let record = |method, alpha, outcome| RunRecord {
        graph: name.to_string(),
        graph_seed: seed,
        method,
        alpha,
        outcome,
    };
    let (graph, data) = match make_instance(&cfg.generator, name, seed, cfg.n_samples) {
        Ok((g, _, d)) => (g, d),
        Err(e) => {
            let msg = e.to_string();
            return cells.into_iter().map(|(m, a)| record(m, a, Err(msg.clone()))).collect();
        }
    };
    let engine: std::result::Result<Box<dyn TestEngine + '_>, String> = match cfg.engine {
        EngineKind::Sample => SampleEngine::with_params(&data, data_seed(seed), cfg.cmi)
            .map(|e| Box::new(e) as Box<dyn TestEngine + '_>),
        EngineKind::Oracle => {
            OracleEngine::new(&graph).map(|e| Box::new(e) as Box<dyn TestEngine + '_>)
        }
    }
    .map_err(|e| e.to_string());
    cells
        .into_iter()
        .map(|(method, alpha)| {
            let outcome = engine.as_ref().map_err(Clone::clone).and_then(|eng| {
                let search = SearchConfig {
                    alpha,
                    max_parents: cfg.max_parents,
                    seed: data_seed(seed),
                    ..SearchConfig::default()
                };
                let result = run_method(eng.as_ref(), method, &search).map_err(|e| e.to_string())?;
                let adjacency = score_adjacency(&result.adjacency, &graph).map_err(|e| e.to_string())?;
                let ancestor = score_ancestors(&result, &graph, cfg.scoring).map_err(|e| e.to_string())?;
                Ok(RunOutcome {
                    result,
                    adjacency,
                    ancestor,
                })
            });
            record(method, alpha, outcome)
        })
        .collect()
}

/// Runs every (instance, alpha, method) cell. Instances run in parallel;
/// the records come back in a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let instances = cfg.instances();
    let nested: Vec<Vec<RunRecord>> = instances
        .par_iter()
        .map(|(name, seed)| run_instance(cfg, name, *seed))
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

pub const METRICS_PREFIX: [&str; 10] = [
    "config_hash",
    "version",
    "generator",
    "graph",
    "graph_seed",
    "engine",
    "method",
    "alpha",
    "status",
    "error",
];

/// One row per (run, task); failed runs get a single row with the error.
pub fn write_metrics_csv(cfg: &ExperimentConfig, records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(e, path))?;
    let header: Vec<&str> = METRICS_PREFIX.iter().chain(MetricReport::CSV_HEADER.iter()).copied().collect();
    w.write_record(&header).map_err(|e| csv_io(e, path))?;
    let hash = cfg.hash()?;
    let generator = match cfg.generator {
        Generator::Ba { .. } => "ba",
        Generator::Er { .. } => "er",
        Generator::Fixture { .. } => "fixture",
    };
    for r in records {
        let prefix = |status: &str, err: &str| -> Vec<String> {
            vec![
                hash.clone(),
                VERSION.to_string(),
                generator.to_string(),
                r.graph.clone(),
                r.graph_seed.to_string(),
                cfg.engine.as_str().to_string(),
                r.method.as_str().to_string(),
                format!("{}", r.alpha),
                status.to_string(),
                err.to_string(),
            ]
        };
        match &r.outcome {
            Ok(o) => {
                for m in [&o.adjacency, &o.ancestor] {
                    let mut row = prefix("ok", "");
                    row.extend(m.csv_fields());
                    w.write_record(&row).map_err(|e| csv_io(e, path))?;
                }
            }
            Err(msg) => {
                let mut row = prefix("error", msg);
                row.extend(std::iter::repeat_n(String::new(), MetricReport::CSV_HEADER.len()));
                w.write_record(&row).map_err(|e| csv_io(e, path))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Per-run success flags for the illustrative targets.
pub fn write_targets_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(e, path))?;
    w.write_record(["graph", "graph_seed", "method", "alpha", "target", "success"])
        .map_err(|e| csv_io(e, path))?;
    for r in records {
        for (target, ok) in r.targets() {
            w.write_record([
                r.graph.clone(),
                r.graph_seed.to_string(),
                r.method.as_str().to_string(),
                format!("{}", r.alpha),
                target.to_string(),
                ok.to_string(),
            ])
            .map_err(|e| csv_io(e, path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Success rate per (graph, method, alpha, target), in first-seen order.
pub fn target_rates(records: &[RunRecord]) -> Vec<(String, Method, f64, &'static str, f64)> {
    let mut out: Vec<(String, Method, f64, &'static str, usize, usize)> = Vec::new();
    for r in records {
        for (t, ok) in r.targets() {
            let slot = out
                .iter_mut()
                .find(|o| o.0 == r.graph && o.1 == r.method && o.2 == r.alpha && o.3 == t);
            match slot {
                Some(o) => {
                    o.4 += usize::from(ok);
                    o.5 += 1;
                }
                None => out.push((r.graph.clone(), r.method, r.alpha, t, usize::from(ok), 1)),
            }
        }
    }
    out.into_iter()
        .map(|(g, m, a, t, hit, n)| (g, m, a, t, hit as f64 / n as f64))
        .collect()
}

fn csv_io(e: csv::Error, path: &Path) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub method: Method,
    pub alpha: f64,
    pub task: Task,
    pub runs: usize,
    pub failures: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Means over successful runs per (method, alpha, task), in first-seen order.
pub fn mean_metrics(records: &[RunRecord]) -> Vec<MeanMetrics> {
    let mut out: Vec<MeanMetrics> = Vec::new();
    for r in records {
        for task in [Task::Adjacency, Task::Ancestor] {
            let idx = match out.iter().position(|m| m.method == r.method && m.alpha == r.alpha && m.task == task) {
                Some(i) => i,
                None => {
                    out.push(MeanMetrics {
                        method: r.method,
                        alpha: r.alpha,
                        task,
                        runs: 0,
                        failures: 0,
                        precision: 0.0,
                        recall: 0.0,
                        f1: 0.0,
                    });
                    out.len() - 1
                }
            };
            let m = &mut out[idx];
            match &r.outcome {
                Ok(o) => {
                    let rep = if task == Task::Adjacency { &o.adjacency } else { &o.ancestor };
                    m.runs += 1;
                    m.precision += rep.precision;
                    m.recall += rep.recall;
                    m.f1 += rep.f1;
                }
                Err(_) => m.failures += 1,
            }
        }
    }
    for m in &mut out {
        if m.runs > 0 {
            let n = m.runs as f64;
            m.precision /= n;
            m.recall /= n;
            m.f1 /= n;
        }
    }
    out
}
