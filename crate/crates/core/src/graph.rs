//! Causal DAGs over observed and hidden vertices.
//!
//! Vertex ids are dense integers `0..n`. Observed vertices are additionally
//! numbered by column index (their order among observed vertices), which is
//! how a graph binds to the columns of a [`crate::synth::Dataset`].

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub label: String,
    pub observed: bool,
}

/// Structural status of an observed pair with respect to an observed subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairClass {
    VisibleEdge { parent: usize, child: usize },
    VisibleNonEdge,
    Invisible,
}

/// On-disk graph layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone)]
pub struct CausalGraph {
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    observed: Vec<usize>,
    column: Vec<Option<usize>>,
    // ancestor[v][u] == true iff u is a proper ancestor of v
    ancestor: Vec<Vec<bool>>,
}

impl PartialEq for CausalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl CausalGraph {
    pub fn new(vertices: Vec<Vertex>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidGraph(format!(
                    "vertex ids must be dense and ordered: position {i} has id {}",
                    v.id
                )));
            }
        }
        let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) references an unknown vertex")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on vertex {a}")));
            }
        }
        let before = edges.len();
        edges.sort_unstable();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::InvalidGraph("duplicate edges".into()));
        }

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &edges {
            parents[b].push(a);
            children[a].push(b);
        }

        // Kahn's algorithm; smallest id first for a canonical order.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::InvalidGraph("edge relation contains a cycle".into()));
        }

        let mut ancestor = vec![vec![false; n]; n];
        for &v in &topo {
            for &p in &parents[v] {
                ancestor[v][p] = true;
                for u in 0..n {
                    if ancestor[p][u] {
                        ancestor[v][u] = true;
                    }
                }
            }
        }

        let observed: Vec<usize> = (0..n).filter(|&v| vertices[v].observed).collect();
        let mut column = vec![None; n];
        for (c, &v) in observed.iter().enumerate() {
            column[v] = Some(c);
        }

        Ok(CausalGraph {
            vertices,
            edges,
            parents,
            children,
            topo,
            observed,
            column,
            ancestor,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn label(&self, v: usize) -> &str {
        &self.vertices[v].label
    }

    pub fn id_of(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.label == label)
    }

    pub fn is_observed(&self, v: usize) -> bool {
        self.vertices[v].observed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.binary_search(&(parent, child)).is_ok()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Observed vertex ids in column order.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn column_of(&self, v: usize) -> Option<usize> {
        self.column[v]
    }

    pub fn vertex_of_column(&self, c: usize) -> usize {
        self.observed[c]
    }

    /// `true` iff `u` is a proper ancestor of `v`.
    pub fn is_ancestor(&self, u: usize, v: usize) -> bool {
        self.ancestor[v][u]
    }

    pub fn ancestors(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check_vertex(v)?;
        Ok((0..self.n_vertices()).filter(|&u| self.ancestor[v][u]).collect())
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n_vertices() {
            Ok(())
        } else {
            Err(Error::invalid(format!("unknown vertex id {v}")))
        }
    }

    /// All directed paths `src -> ... -> dst` as vertex sequences.
    pub fn directed_paths(&self, src: usize, dst: usize) -> Result<Vec<Vec<usize>>> {
        self.check_vertex(src)?;
        self.check_vertex(dst)?;
        let mut out = Vec::new();
        if src == dst {
            return Ok(out);
        }
        let mut path = vec![src];
        self.extend_paths(dst, &mut path, &mut out);
        Ok(out)
    }

    fn extend_paths(&self, dst: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        for &c in &self.children[last] {
            if c == dst {
                let mut p = path.clone();
                p.push(c);
                out.push(p);
            } else if self.ancestor[dst][c] {
                path.push(c);
                self.extend_paths(dst, path, out);
                path.pop();
            }
        }
    }

    fn subset_mask(&self, xi: usize, xj: usize, xprime: &[usize]) -> Result<Vec<bool>> {
        self.check_vertex(xi)?;
        self.check_vertex(xj)?;
        if xi == xj {
            return Err(Error::invalid("pair endpoints must differ"));
        }
        let mut mask = vec![false; self.n_vertices()];
        for &v in xprime {
            self.check_vertex(v)?;
            if !self.is_observed(v) {
                return Err(Error::invalid(format!(
                    "vertex {} is hidden and cannot belong to an observed subset",
                    self.label(v)
                )));
            }
            mask[v] = true;
        }
        if !mask[xi] || !mask[xj] {
            return Err(Error::invalid("pair endpoints must belong to the observed subset"));
        }
        Ok(mask)
    }

    /// Unobserved causal path from `xi` to `xj` with respect to `xprime`:
    /// a directed path whose vertex just before `xj` lies outside `xprime`.
    pub fn has_ucp(&self, xi: usize, xj: usize, xprime: &[usize]) -> Result<bool> {
        let mask = self.subset_mask(xi, xj, xprime)?;
        Ok(self.ucp_masked(xi, xj, &mask))
    }

    fn ucp_masked(&self, xi: usize, xj: usize, mask: &[bool]) -> bool {
        self.parents[xj]
            .iter()
            .any(|&p| !mask[p] && self.ancestor[p][xi])
    }

    /// Unobserved backdoor path between `xi` and `xj` with respect to `xprime`.
    pub fn has_ubp(&self, xi: usize, xj: usize, xprime: &[usize]) -> Result<bool> {
        let mask = self.subset_mask(xi, xj, xprime)?;
        Ok(self.ubp_masked(xi, xj, &mask))
    }

    fn ubp_masked(&self, xi: usize, xj: usize, mask: &[bool]) -> bool {
        // Both branches of the trek must avoid the endpoints, so ancestry is
        // taken in the graph with xi and xj removed.
        let n = self.n_vertices();
        let reach_up = |start: usize| -> Vec<bool> {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                for &p in &self.parents[v] {
                    if p != xi && p != xj && !seen[p] {
                        seen[p] = true;
                        queue.push_back(p);
                    }
                }
            }
            seen
        };
        let left: Vec<usize> = self.parents[xi].iter().copied().filter(|&v| !mask[v]).collect();
        let right: Vec<usize> = self.parents[xj].iter().copied().filter(|&v| !mask[v]).collect();
        if left.is_empty() || right.is_empty() {
            return false;
        }
        let mut up_left = vec![false; n];
        for &v in &left {
            for (u, s) in reach_up(v).into_iter().enumerate() {
                up_left[u] |= s;
            }
        }
        right
            .iter()
            .any(|&v| reach_up(v).iter().zip(&up_left).any(|(a, b)| *a && *b))
    }

    /// d-separation of `a` and `b` given `z`, by the reachability ("Bayes-ball") sweep.
    pub fn d_separated(&self, a: usize, b: usize, z: &[usize]) -> Result<bool> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        if a == b {
            return Err(Error::invalid("d-separation endpoints must differ"));
        }
        let n = self.n_vertices();
        let mut in_z = vec![false; n];
        for &v in z {
            self.check_vertex(v)?;
            in_z[v] = true;
        }
        if in_z[a] || in_z[b] {
            return Err(Error::invalid("d-separation endpoints must not be in the conditioning set"));
        }
        // vertices that are in z or have a descendant in z
        let mut opens_collider = in_z.clone();
        for v in 0..n {
            if z.iter().any(|&w| self.ancestor[w][v]) {
                opens_collider[v] = true;
            }
        }

        const UP: usize = 0; // arrived from a child
        const DOWN: usize = 1; // arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut stack = vec![(a, UP)];
        while let Some((v, dir)) = stack.pop() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if v == b {
                return Ok(false);
            }
            if dir == UP && !in_z[v] {
                stack.extend(self.parents[v].iter().map(|&p| (p, UP)));
                stack.extend(self.children[v].iter().map(|&c| (c, DOWN)));
            } else if dir == DOWN {
                if !in_z[v] {
                    stack.extend(self.children[v].iter().map(|&c| (c, DOWN)));
                }
                if opens_collider[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, UP)));
                }
            }
        }
        Ok(true)
    }

    /// Visible edge / visible non-edge / invisible, with respect to `xprime`.
    pub fn ground_truth_pair_class(&self, xi: usize, xj: usize, xprime: &[usize]) -> Result<PairClass> {
        let mask = self.subset_mask(xi, xj, xprime)?;
        Ok(self.pair_class_masked(xi, xj, &mask))
    }

    pub(crate) fn pair_class_masked(&self, xi: usize, xj: usize, mask: &[bool]) -> PairClass {
        if self.ubp_masked(xi, xj, mask) || self.ucp_masked(xi, xj, mask) || self.ucp_masked(xj, xi, mask) {
            PairClass::Invisible
        } else if self.has_edge(xj, xi) {
            PairClass::VisibleEdge { parent: xj, child: xi }
        } else if self.has_edge(xi, xj) {
            PairClass::VisibleEdge { parent: xi, child: xj }
        } else {
            PairClass::VisibleNonEdge
        }
    }

    /// A copy with vertex `v` renamed to `perm[v]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<CausalGraph> {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("relabeling must be a permutation of the vertex ids"));
        }
        let mut vertices = self.vertices.clone();
        for v in &mut vertices {
            v.id = perm[v.id];
        }
        vertices.sort_by_key(|v| v.id);
        CausalGraph::new(vertices, self.edges.iter().map(|&(a, b)| (perm[a], perm[b])))
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertices: self.vertices.clone(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn from_file(file: GraphFile) -> Result<Self> {
        CausalGraph::new(file.vertices, file.edges.into_iter().map(|[a, b]| (a, b)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GraphFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Incremental construction by label.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, label: impl Into<String>, observed: bool) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            label: label.into(),
            observed,
        });
        id
    }

    pub fn observed(&mut self, label: impl Into<String>) -> usize {
        self.vertex(label, true)
    }

    pub fn hidden(&mut self, label: impl Into<String>) -> usize {
        self.vertex(label, false)
    }

    pub fn edge(&mut self, parent: usize, child: usize) -> &mut Self {
        self.edges.push((parent, child));
        self
    }

    pub fn build(self) -> Result<CausalGraph> {
        CausalGraph::new(self.vertices, self.edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> CausalGraph {
        let mut b = GraphBuilder::new();
        let a = b.observed("a");
        let m = b.observed("b");
        let c = b.observed("c");
        b.edge(a, m).edge(m, c);
        b.build().unwrap()
    }

    #[test]
    fn rejects_cycles_self_loops_and_duplicates() {
        let mut b = GraphBuilder::new();
        let x = b.observed("x");
        let y = b.observed("y");
        b.edge(x, y).edge(y, x);
        assert!(matches!(b.build(), Err(Error::InvalidGraph(_))));

        let mut b = GraphBuilder::new();
        let x = b.observed("x");
        b.edge(x, x);
        assert!(b.build().is_err());

        let mut b = GraphBuilder::new();
        let x = b.observed("x");
        let y = b.observed("y");
        b.edge(x, y).edge(x, y);
        assert!(b.build().is_err());
    }

    #[test]
    fn chain_ancestors() {
        let g = chain3();
        assert_eq!(g.ancestors(2).unwrap(), BTreeSet::from([0, 1]));
        assert!(g.ancestors(0).unwrap().is_empty());
        assert!(g.ancestors(9).is_err());
    }

    #[test]
    fn paths_in_disconnected_graph_are_empty() {
        let mut b = GraphBuilder::new();
        b.observed("a");
        b.observed("b");
        let g = b.build().unwrap();
        assert!(g.directed_paths(0, 1).unwrap().is_empty());
        assert!(g.d_separated(0, 1, &[]).unwrap());
    }

    #[test]
    fn direct_edge_is_not_a_ucp() {
        let mut b = GraphBuilder::new();
        let x1 = b.observed("x1");
        let x2 = b.observed("x2");
        b.edge(x1, x2);
        let g = b.build().unwrap();
        assert!(!g.has_ucp(x1, x2, &[x1, x2]).unwrap());
        assert_eq!(
            g.ground_truth_pair_class(x2, x1, &[x1, x2]).unwrap(),
            PairClass::VisibleEdge { parent: x1, child: x2 }
        );
    }

    #[test]
    fn observed_fork_is_not_a_ubp() {
        let mut b = GraphBuilder::new();
        let x1 = b.observed("x1");
        let x2 = b.observed("x2");
        let x3 = b.observed("x3");
        b.edge(x2, x1).edge(x2, x3);
        let g = b.build().unwrap();
        assert!(!g.has_ubp(x1, x3, &[x1, x2, x3]).unwrap());
        // dropping the apex from the subset exposes the backdoor
        assert!(g.has_ubp(x1, x3, &[x1, x3]).unwrap());
    }

    #[test]
    fn subset_preconditions() {
        let g = chain3();
        assert!(g.has_ucp(0, 2, &[0, 1]).is_err());
        assert!(g.has_ubp(0, 0, &[0, 1]).is_err());
        assert!(g.d_separated(0, 2, &[0]).is_err());
    }

    #[test]
    fn collider_opens_when_conditioned() {
        let mut b = GraphBuilder::new();
        let a = b.observed("a");
        let c = b.observed("c");
        let d = b.observed("d");
        let e = b.observed("e");
        b.edge(a, c).edge(d, c).edge(c, e);
        let g = b.build().unwrap();
        assert!(g.d_separated(a, d, &[]).unwrap());
        assert!(!g.d_separated(a, d, &[c]).unwrap());
        // conditioning on a descendant of the collider also opens it
        assert!(!g.d_separated(a, d, &[e]).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let g = chain3();
        let back = CausalGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn relabel_moves_edges() {
        let g = chain3();
        let r = g.relabeled(&[2, 1, 0]).unwrap();
        assert!(r.has_edge(2, 1) && r.has_edge(1, 0));
        assert_eq!(r.label(2), "a");
    }
}
