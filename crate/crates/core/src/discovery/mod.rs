//! CAM-UV and CAM-UV-X structure search.

mod cam_uv;
mod camuvx;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PairClass;
use crate::varset::{VarSet, MAX_VARS};

pub use cam_uv::cam_uv;
pub use camuvx::{cam_uvx, cam_uvx_traced, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Edge,
    NoEdge,
    Unknown,
}

impl Relation {
    fn to_json(self) -> Option<u8> {
        match self {
            Relation::Edge => Some(1),
            Relation::NoEdge => Some(0),
            Relation::Unknown => None,
        }
    }

    fn from_json(v: Option<u8>) -> Result<Self> {
        match v {
            Some(1) => Ok(Relation::Edge),
            Some(0) => Ok(Relation::NoEdge),
            None => Ok(Relation::Unknown),
            Some(x) => Err(Error::invalid(format!("adjacency entries must be 1, 0 or null, got {x}"))),
        }
    }
}

/// `get(i, j) == Edge` means `x_j` is a parent of `x_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriAdjacency {
    p: usize,
    cells: Vec<Relation>,
}

impl TriAdjacency {
    /// Off-diagonal entries start as `fill`; the diagonal is `NoEdge`.
    pub fn new(p: usize, fill: Relation) -> Self {
        let mut cells = vec![fill; p * p];
        for i in 0..p {
            cells[i * p + i] = Relation::NoEdge;
        }
        TriAdjacency { p, cells }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> Relation {
        self.cells[i * self.p + j]
    }

    pub fn set(&mut self, i: usize, j: usize, r: Relation) {
        debug_assert!(i != j || r == Relation::NoEdge);
        self.cells[i * self.p + j] = r;
    }

    pub fn is_unknown_pair(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == Relation::Unknown && self.get(j, i) == Relation::Unknown
    }

    /// `{v : A(i, v) = Edge}`
    pub fn parents(&self, i: usize) -> VarSet {
        (0..self.p).filter(|&v| self.get(i, v) == Relation::Edge).collect()
    }

    /// Unordered pairs `(i, j)`, `i < j`, with both entries unknown.
    pub fn unknown_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs().filter(|&(i, j)| self.is_unknown_pair(i, j)).collect()
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let p = self.p;
        (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
    }

    pub fn count(&self, r: Relation) -> usize {
        (0..self.p)
            .flat_map(|i| (0..self.p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.get(i, j) == r)
            .count()
    }

    /// Rows of `1`, `0` and `null`.
    pub fn to_rows(&self) -> Vec<Vec<Option<u8>>> {
        (0..self.p)
            .map(|i| (0..self.p).map(|j| self.get(i, j).to_json()).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let p = rows.len();
        let mut a = TriAdjacency::new(p, Relation::Unknown);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::invalid(format!("adjacency row {i} has {} entries, expected {p}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                a.set(i, j, Relation::from_json(v)?);
            }
        }
        Ok(a)
    }

    /// Allowed entry pairs: no two-way edge, an edge's reverse entry is
    /// `NoEdge`, and the diagonal is `NoEdge`.
    pub fn check(&self) -> Result<()> {
        for i in 0..self.p {
            if self.get(i, i) != Relation::NoEdge {
                return Err(Error::Invariant(format!("diagonal entry {i} is not NoEdge")));
            }
            for j in 0..self.p {
                if i != j && self.get(i, j) == Relation::Edge && self.get(j, i) != Relation::NoEdge {
                    return Err(Error::Invariant(format!(
                        "A({i},{j}) is Edge but A({j},{i}) is {:?}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CiTest {
    #[default]
    Knn,
}

/// How CAM-UV-X initialises its adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    CamUv,
    /// All off-diagonal entries unknown.
    ColdStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub alpha: f64,
    /// Cap on the size of every enumerated regression set.
    pub max_parents: usize,
    pub ci_test: CiTest,
    /// `forbidden[i][j]`: `x_j` may not be reported as a parent of `x_i`.
    pub forbidden: Option<Vec<Vec<bool>>>,
    pub seed: u64,
    pub init: Init,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.1,
            max_parents: 3,
            ci_test: CiTest::Knn,
            forbidden: None,
            seed: 0,
            init: Init::CamUv,
        }
    }
}

impl SearchConfig {
    /// Uncapped subset sizes, as used against the population oracle.
    pub fn exhaustive(p: usize) -> Self {
        SearchConfig {
            max_parents: p.max(1),
            ..Default::default()
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_parents < 1 {
            return Err(Error::invalid("max_parents must be at least 1"));
        }
        if p < 2 {
            return Err(Error::invalid(format!("need at least two variables, got {p}")));
        }
        if p > MAX_VARS {
            return Err(Error::invalid(format!("at most {MAX_VARS} variables are supported, got {p}")));
        }
        if let Some(mask) = &self.forbidden {
            if mask.len() != p || mask.iter().any(|row| row.len() != p) {
                return Err(Error::invalid(format!("forbidden-parent mask must be {p}x{p}")));
            }
        }
        Ok(())
    }

    pub fn is_forbidden(&self, child: usize, parent: usize) -> bool {
        self.forbidden.as_ref().is_some_and(|m| m[child][parent])
    }
}

/// Output of CAM-UV-X.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryResult {
    pub adjacency: TriAdjacency,
    /// `ancestors[i]`: certified ancestors of `x_i`.
    pub ancestors: Vec<VarSet>,
    /// `non_ancestors[i]`: certified non-ancestors of `x_i`.
    pub non_ancestors: Vec<VarSet>,
    /// `on_path[k]`: pairs `(i, j)`, `i < j`, such that `x_k` is a parent of one of them.
    pub on_path: Vec<BTreeSet<(usize, usize)>>,
    /// Pairs `(i, j)`, `i < j`, left undetermined by the visibility check.
    pub invisible: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ResultFile {
    #[serde(rename = "A")]
    a: Vec<Vec<Option<u8>>>,
    #[serde(rename = "M")]
    m: Vec<Vec<usize>>,
    #[serde(rename = "H")]
    h: Vec<Vec<usize>>,
    #[serde(rename = "C")]
    c: Vec<Vec<[usize; 2]>>,
    invisible: Vec<[usize; 2]>,
}

impl DiscoveryResult {
    pub fn empty(adjacency: TriAdjacency) -> Self {
        let p = adjacency.p();
        DiscoveryResult {
            adjacency,
            ancestors: vec![VarSet::EMPTY; p],
            non_ancestors: vec![VarSet::EMPTY; p],
            on_path: vec![BTreeSet::new(); p],
            invisible: BTreeSet::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.adjacency.p()
    }

    /// Classification of an observed pair by column index.
    pub fn pair_class(&self, i: usize, j: usize) -> PairClass {
        if self.invisible.contains(&(i.min(j), i.max(j))) {
            return PairClass::Invisible;
        }
        let a = &self.adjacency;
        if a.get(i, j) == Relation::Edge {
            PairClass::VisibleEdge { parent: j, child: i }
        } else if a.get(j, i) == Relation::Edge {
            PairClass::VisibleEdge { parent: i, child: j }
        } else {
            PairClass::VisibleNonEdge
        }
    }

    /// Ancestor relation implied by the output: the transitive closure of
    /// edges and certified ancestors. Entry `i` holds the ancestors of `x_i`.
    pub fn implied_ancestors(&self) -> Vec<VarSet> {
        ancestor_closure(&self.adjacency, &self.ancestors)
    }

    pub fn check(&self) -> Result<()> {
        self.adjacency.check()?;
        for i in 0..self.p() {
            let both = self.ancestors[i].intersection(self.non_ancestors[i]);
            if !both.is_empty() {
                return Err(Error::Invariant(format!("M_{i} and H_{i} share {both:?}")));
            }
            for &(a, b) in &self.on_path[i] {
                if a == i || b == i || a >= b {
                    return Err(Error::Invariant(format!("C_{i} holds malformed pair ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ResultFile {
            a: self.adjacency.to_rows(),
            m: self.ancestors.iter().map(|s| s.to_vec()).collect(),
            h: self.non_ancestors.iter().map(|s| s.to_vec()).collect(),
            c: self.on_path.iter().map(|s| s.iter().map(|&(a, b)| [a, b]).collect()).collect(),
            invisible: self.invisible.iter().map(|&(a, b)| [a, b]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ResultFile = serde_json::from_str(text)?;
        let adjacency = TriAdjacency::from_rows(&file.a)?;
        let p = adjacency.p();
        let sets = |v: Vec<Vec<usize>>, what: &str| -> Result<Vec<VarSet>> {
            if v.len() != p {
                return Err(Error::invalid(format!("{what} has {} entries, expected {p}", v.len())));
            }
            v.into_iter()
                .map(|s| {
                    if s.iter().any(|&x| x >= p) {
                        Err(Error::invalid(format!("{what} references a variable outside 0..{p}")))
                    } else {
                        Ok(s.into_iter().collect())
                    }
                })
                .collect()
        };
        let ancestors = sets(file.m, "M")?;
        let non_ancestors = sets(file.h, "H")?;
        if file.c.len() != p {
            return Err(Error::invalid(format!("C has {} entries, expected {p}", file.c.len())));
        }
        let on_path = file
            .c
            .into_iter()
            .map(|s| s.into_iter().map(|[a, b]| (a, b)).collect())
            .collect();
        let result = DiscoveryResult {
            adjacency,
            ancestors,
            non_ancestors,
            on_path,
            invisible: file.invisible.into_iter().map(|[a, b]| (a, b)).collect(),
        };
        result.check()?;
        Ok(result)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Closure of `Edge` entries plus the extra ancestor sets.
pub(crate) fn ancestor_closure(a: &TriAdjacency, extra: &[VarSet]) -> Vec<VarSet> {
    let p = a.p();
    let mut anc: Vec<VarSet> = (0..p).map(|i| a.parents(i).union(extra[i])).collect();
    loop {
        let mut changed = false;
        for i in 0..p {
            let grown = anc[i].iter().fold(anc[i], |acc, k| acc.union(anc[k]));
            if grown != anc[i] {
                anc[i] = grown;
                changed = true;
            }
        }
        if !changed {
            return anc;
        }
    }
}

/// Reads a forbidden-parent mask: a JSON array of `p` rows of `p` booleans,
/// where `mask[i][j]` forbids `x_j` as a parent of `x_i`.
pub fn read_forbidden_mask(path: impl AsRef<Path>) -> Result<Vec<Vec<bool>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mask: Vec<Vec<bool>> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let p = mask.len();
    if mask.iter().any(|r| r.len() != p) {
        return Err(Error::invalid(format!("{}: forbidden-parent mask must be square", path.display())));
    }
    Ok(mask)
}
