//! Random graphs and ancestral sampling from the additive model
//! `v_i = sum over parents (v_p + a)^c + b, plus Gaussian noise`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Vertex};

const MAX_REDRAWS: u64 = 10;

/// Observed vertices are labelled `x1..` in id order, hidden ones `U1..`.
fn labelled_graph(n: usize, observed: &BTreeSet<usize>, edges: Vec<(usize, usize)>) -> Result<CausalGraph> {
    let (mut xs, mut us) = (0, 0);
    let vertices = (0..n)
        .map(|id| {
            let obs = observed.contains(&id);
            let label = if obs {
                xs += 1;
                format!("x{xs}")
            } else {
                us += 1;
                format!("U{us}")
            };
            Vertex {
                id,
                label,
                observed: obs,
            }
        })
        .collect();
    CausalGraph::new(vertices, edges)
}

/// Preferential-attachment DAG. Starts from a star on `children_per_node + 1`
/// vertices; every later vertex attaches to that many distinct earlier
/// vertices chosen proportionally to degree. Edges run from the earlier
/// vertex to the later one.
pub fn sample_ba_graph(n_nodes: usize, children_per_node: usize, n_observed: usize, seed: u64) -> Result<CausalGraph> {
    let m = children_per_node;
    if m < 1 || m >= n_nodes {
        return Err(Error::invalid(format!(
            "attachment count must satisfy 1 <= m < n_nodes, got m = {m}, n_nodes = {n_nodes}"
        )));
    }
    if n_observed > n_nodes {
        return Err(Error::invalid(format!("cannot observe {n_observed} of {n_nodes} vertices")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|leaf| (0, leaf)).collect();
    // every vertex appears once per incident edge
    let mut repeated: Vec<usize> = std::iter::repeat_n(0, m).chain(1..=m).collect();
    for source in m + 1..n_nodes {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*repeated.choose(&mut rng).expect("non-empty"));
        }
        for &t in &targets {
            edges.push((t, source));
        }
        repeated.extend(targets.iter().copied());
        repeated.extend(std::iter::repeat_n(source, m));
    }
    let observed = choose_observed(n_nodes, n_observed, &mut rng);
    labelled_graph(n_nodes, &observed, edges)
}

fn choose_observed(n: usize, k: usize, rng: &mut ChaCha8Rng) -> BTreeSet<usize> {
    rand::seq::index::sample(rng, n, k).into_iter().collect()
}

/// Erdos-Renyi DAG over observed vertices plus hidden confounders and
/// hidden mediators on randomly chosen observed pairs.
pub fn sample_er_graph_with_hidden(
    n_observed: usize,
    edge_prob: f64,
    n_confounder_pairs: usize,
    n_mediator_pairs: usize,
    seed: u64,
) -> Result<CausalGraph> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::invalid(format!("edge probability must lie in [0, 1], got {edge_prob}")));
    }
    let n_pairs = n_observed * n_observed.saturating_sub(1) / 2;
    if n_confounder_pairs > n_pairs || n_mediator_pairs > n_pairs {
        return Err(Error::Generation(format!(
            "{n_observed} observed variables have only {n_pairs} pairs; asked for {n_confounder_pairs} confounded and {n_mediator_pairs} mediated pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_observed).collect();
    order.shuffle(&mut rng);
    let mut rank = vec![0; n_observed];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let mut edges = BTreeSet::new();
    for a in 0..n_observed {
        for b in a + 1..n_observed {
            if rng.gen_bool(edge_prob) {
                edges.insert((order[a], order[b]));
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n_observed)
        .flat_map(|a| (a + 1..n_observed).map(move |b| (a, b)))
        .collect();
    let mut next = n_observed;
    for &(a, b) in pairs.choose_multiple(&mut rng, n_confounder_pairs) {
        edges.insert((next, a));
        edges.insert((next, b));
        next += 1;
    }
    for &(a, b) in pairs.choose_multiple(&mut rng, n_mediator_pairs) {
        let (from, to) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
        edges.remove(&(from, to));
        edges.insert((from, next));
        edges.insert((next, to));
        next += 1;
    }
    labelled_graph(next, &(0..n_observed).collect(), edges.into_iter().collect())
}

/// One additive component `(v_parent + a)^c + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFn {
    pub parent: usize,
    pub child: usize,
    pub a: f64,
    pub b: f64,
    pub c: u32,
}

impl EdgeFn {
    pub fn eval(&self, x: f64) -> f64 {
        (x + self.a).powi(self.c as i32) + self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    pub graph: CausalGraph,
    pub edges: Vec<EdgeFn>,
    /// Noise standard deviation per vertex.
    pub noise_scale: Vec<f64>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    graph: crate::graph::GraphFile,
    edges: Vec<EdgeFn>,
    noise_scale: Vec<f64>,
    seed: u64,
}

impl ScmSpec {
    /// Coefficients `a, b ~ U[-1, 1]`, exponent `c` uniform on `{2, 3}`,
    /// noise scale `~ U[0.5, 1]`.
    pub fn random(graph: CausalGraph, seed: u64) -> ScmSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = graph
            .edges()
            .iter()
            .map(|&(parent, child)| EdgeFn {
                parent,
                child,
                a: rng.gen_range(-1.0..=1.0),
                b: rng.gen_range(-1.0..=1.0),
                c: rng.gen_range(2..=3),
            })
            .collect();
        let noise_scale = (0..graph.n_vertices()).map(|_| rng.gen_range(0.5..=1.0)).collect();
        ScmSpec {
            graph,
            edges,
            noise_scale,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_scale.len() != self.graph.n_vertices() {
            return Err(Error::invalid("one noise scale per vertex is required"));
        }
        if let Some(s) = self.noise_scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!("noise scales must be positive, got {s}")));
        }
        let mut listed: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.parent, e.child)).collect();
        listed.sort_unstable();
        if listed != self.graph.edges() {
            return Err(Error::invalid("edge functions must match the graph's edges one to one"));
        }
        if let Some(e) = self.edges.iter().find(|e| e.c < 2 || !e.a.is_finite() || !e.b.is_finite()) {
            return Err(Error::invalid(format!(
                "edge {} -> {} needs finite coefficients and exponent >= 2",
                e.parent, e.child
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SpecFile {
            graph: self.graph.to_file(),
            edges: self.edges.clone(),
            noise_scale: self.noise_scale.clone(),
            seed: self.seed,
        })?)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub seed: u64,
    pub n_samples: usize,
    pub observed_vertices: Vec<usize>,
    /// Times the coefficients were redrawn after a non-finite sample.
    pub redraws: u64,
    pub coefficients: Vec<EdgeFn>,
    pub noise_scale: Vec<f64>,
}

/// Column-major sample matrix over observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn from_columns(labels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::invalid("one label per column is required"));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns must be non-empty and of equal length"));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset {
            labels,
            columns,
            provenance: None,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.labels)?;
        for r in 0..self.n() {
            w.write_record(self.columns.iter().map(|c| format!("{:?}", c[r])))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(file, &path.display().to_string())
    }

    pub fn parse_csv(reader: impl std::io::Read, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, column: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            column,
            message,
        };
        let mut r = csv::Reader::from_reader(reader);
        let labels: Vec<String> = r
            .headers()
            .map_err(|e| parse_err(1, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if labels.len() < 2 {
            return Err(parse_err(1, 1, "need at least two columns".into()));
        }
        let mut columns = vec![Vec::new(); labels.len()];
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, 1, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, c + 1, format!("{field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, c + 1, format!("{field:?} is not finite")));
                }
                columns[c].push(v);
            }
        }
        if columns[0].is_empty() {
            return Err(parse_err(2, 1, "no data rows".into()));
        }
        Self::from_columns(labels, columns)
    }

    pub fn write_provenance(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.provenance)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let sd = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if sd > 0.0 && sd.is_finite() {
        v.iter_mut().for_each(|x| *x /= sd);
    }
}

fn simulate(spec: &ScmSpec, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let g = &spec.graph;
    let mut incoming: Vec<Vec<&EdgeFn>> = vec![Vec::new(); g.n_vertices()];
    for e in &spec.edges {
        incoming[e.child].push(e);
    }
    let mut values = vec![Vec::new(); g.n_vertices()];
    for &v in g.topological_order() {
        let noise = Normal::new(0.0, spec.noise_scale[v]).ok()?;
        let mut col: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
        for e in &incoming[v] {
            for (x, &par) in col.iter_mut().zip(&values[e.parent]) {
                *x += e.eval(par);
            }
        }
        if col.iter().any(|x| !x.is_finite()) {
            return None;
        }
        standardize(&mut col);
        values[v] = col;
    }
    Some(values)
}

/// Ancestral sampling with per-vertex standardisation; only observed
/// columns are returned.
pub fn sample_dataset(spec: &ScmSpec, n_samples: usize) -> Result<Dataset> {
    if n_samples < 1 {
        return Err(Error::invalid("need at least one sample"));
    }
    spec.validate()?;
    let g = &spec.graph;
    if g.n_observed() < 2 {
        return Err(Error::invalid("a dataset needs at least two observed variables"));
    }
    let spec_hash = spec.hash()?;
    let mut current = spec.clone();
    for redraw in 0..=MAX_REDRAWS {
        if redraw > 0 {
            let fresh = ScmSpec::random(g.clone(), spec.seed.wrapping_add(redraw));
            current = ScmSpec {
                seed: spec.seed,
                ..fresh
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1 + redraw);
        if let Some(mut values) = simulate(&current, n_samples, &mut rng) {
            let columns = g.observed().iter().map(|&v| std::mem::take(&mut values[v])).collect();
            let labels = g.observed().iter().map(|&v| g.label(v).to_string()).collect();
            let mut data = Dataset::from_columns(labels, columns)?;
            data.provenance = Some(Provenance {
                spec_hash: spec_hash.clone(),
                seed: spec.seed,
                n_samples,
                observed_vertices: g.observed().to_vec(),
                redraws: redraw,
                coefficients: current.edges.clone(),
                noise_scale: current.noise_scale.clone(),
            });
            return Ok(data);
        }
    }
    Err(Error::Generation(format!(
        "sampling produced non-finite values after {MAX_REDRAWS} coefficient redraws"
    )))
}
