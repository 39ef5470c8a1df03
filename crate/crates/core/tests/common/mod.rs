#![allow(dead_code)]

use camuvx::discovery::{cam_uvx, cam_uvx_traced, Init, Relation, SearchConfig};
use camuvx::oracle::{bits_of, NoiseOracle, SearchMode};
use camuvx::{CausalGraph, GraphBuilder, OracleEngine};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Observed vertices first (4 or 5 of them), then 0 to 2 hidden vertices,
/// each acting either as a confounder of two observed vertices or as a
/// mediator replacing a direct edge.
pub fn random_graph(seed: u64) -> CausalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.gen_range(4..=5);
    let h = rng.gen_range(0..=2);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let pos = |v: usize| order.iter().position(|&o| o == v).unwrap();
    let mut edges = vec![];
    for a in 0..p {
        for b in a + 1..p {
            if rng.gen_bool(0.4) {
                edges.push((order[a], order[b]));
            }
        }
    }
    let mut b = GraphBuilder::new();
    for i in 0..p {
        b.observed(format!("x{}", i + 1));
    }
    for u in 0..h {
        let id = b.hidden(format!("U{}", u + 1));
        let mut pair: Vec<usize> = (0..p).collect();
        pair.shuffle(&mut rng);
        if rng.gen_bool(0.5) {
            edges.push((id, pair[0]));
            edges.push((id, pair[1]));
        } else {
            let (x, y) = if pos(pair[0]) < pos(pair[1]) {
                (pair[0], pair[1])
            } else {
                (pair[1], pair[0])
            };
            edges.retain(|&e| e != (x, y));
            edges.push((x, id));
            edges.push((id, y));
        }
    }
    for (x, y) in edges {
        b.edge(x, y);
    }
    b.build().unwrap()
}

/// Random DAG on `n` vertices, all observed, edges following a shuffled order.
pub fn random_dag(seed: u64, n: usize, density: f64) -> CausalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.observed(format!("v{i}"));
    }
    for a in 0..n {
        for c in a + 1..n {
            if rng.gen_bool(density) {
                b.edge(order[a], order[c]);
            }
        }
    }
    b.build().unwrap()
}

pub fn oracle_corpus(n_random: u64) -> Vec<(String, CausalGraph)> {
    let mut out: Vec<(String, CausalGraph)> = camuvx::fixtures::all()
        .into_iter()
        .map(|(n, g)| (n.to_string(), g))
        .collect();
    out.extend((0..n_random).map(|s| (format!("random-{s}"), random_graph(s))));
    out
}

// Simple paths in the skeleton, each step tagged with whether it follows the edge direction.
fn skeleton_paths(g: &CausalGraph, a: usize, b: usize) -> Vec<Vec<(usize, bool)>> {
    fn walk(g: &CausalGraph, b: usize, path: &mut Vec<(usize, bool)>, out: &mut Vec<Vec<(usize, bool)>>) {
        let v = path.last().unwrap().0;
        if v == b {
            out.push(path.clone());
            return;
        }
        let steps = g.children(v).iter().map(|&c| (c, true)).chain(g.parents(v).iter().map(|&p| (p, false)));
        for (w, fwd) in steps.collect::<Vec<_>>() {
            if path.iter().all(|&(u, _)| u != w) {
                path.push((w, fwd));
                walk(g, b, path, out);
                path.pop();
            }
        }
    }
    let mut out = vec![];
    walk(g, b, &mut vec![(a, true)], &mut out);
    out
}

/// d-separation by enumerating every path and checking it for blocking.
pub fn brute_d_separated(g: &CausalGraph, a: usize, b: usize, z: &[usize]) -> bool {
    let in_z = |v: usize| z.contains(&v);
    let opens_collider = |v: usize| in_z(v) || z.iter().any(|&w| g.is_ancestor(v, w));
    skeleton_paths(g, a, b).iter().all(|path| {
        (1..path.len() - 1).any(|k| {
            let v = path[k].0;
            // arrow into v from the previous vertex and from the next one
            let collider = path[k].1 && !path[k + 1].1;
            if collider {
                !opens_collider(v)
            } else {
                in_z(v)
            }
        })
    })
}

/// Directed path `xi -> ... -> xj` whose second-to-last vertex lies outside `xprime`.
pub fn brute_ucp(g: &CausalGraph, xi: usize, xj: usize, xprime: &[usize]) -> bool {
    g.directed_paths(xi, xj)
        .unwrap()
        .iter()
        .any(|p| p.len() >= 3 && !xprime.contains(&p[p.len() - 2]))
}

/// Collider-free path into both endpoints whose vertices next to the
/// endpoints lie outside `xprime`.
pub fn brute_ubp(g: &CausalGraph, xi: usize, xj: usize, xprime: &[usize]) -> bool {
    skeleton_paths(g, xi, xj).iter().any(|p| {
        let k = p.len();
        if k < 3 || p[1].1 || !p[k - 1].1 {
            return false;
        }
        // once the path turns forward it must stay forward
        let turned = p[1..].iter().position(|s| s.1).unwrap();
        p[1 + turned..].iter().all(|s| s.1) && !xprime.contains(&p[1].0) && !xprime.contains(&p[k - 2].0)
    })
}

/// Columns of an observed-first graph coincide with vertex ids; the other
/// cases are rejected so the checks below can index both ways.
fn assert_observed_first(g: &CausalGraph) {
    assert!(g.observed().iter().enumerate().all(|(c, &v)| c == v));
}

/// Every pair classified as in the ground truth. Returns the mismatches.
pub fn classification_mismatches(g: &CausalGraph) -> Vec<String> {
    assert_observed_first(g);
    let p = g.n_observed();
    let eng = OracleEngine::new(g).unwrap();
    let r = cam_uvx(&eng, &SearchConfig::exhaustive(p)).unwrap();
    let obs = g.observed().to_vec();
    let mut bad = vec![];
    for i in 0..p {
        for j in i + 1..p {
            let want = g.ground_truth_pair_class(i, j, &obs).unwrap();
            let got = r.pair_class(i, j);
            if want != got {
                bad.push(format!("({i},{j}) expected {want:?}, got {got:?}"));
            }
        }
    }
    bad
}

/// Certificates that contradict the graph.
pub fn certificate_violations(g: &CausalGraph) -> Vec<String> {
    assert_observed_first(g);
    let p = g.n_observed();
    let eng = OracleEngine::new(g).unwrap();
    let r = cam_uvx(&eng, &SearchConfig::exhaustive(p)).unwrap();
    let mut bad = vec![];
    for i in 0..p {
        for k in r.ancestors[i].iter() {
            if !g.is_ancestor(k, i) {
                bad.push(format!("x{k} listed as ancestor of x{i}"));
            }
        }
        for k in r.non_ancestors[i].iter() {
            if g.is_ancestor(k, i) {
                bad.push(format!("x{k} listed as non-ancestor of x{i}"));
            }
        }
        for &(a, b) in &r.on_path[i] {
            if !(g.has_edge(i, a) || g.has_edge(i, b)) {
                bad.push(format!("x{i} is a parent of neither x{a} nor x{b}"));
            }
        }
        for j in 0..p {
            if r.adjacency.get(i, j) == Relation::Edge && !g.has_edge(j, i) {
                bad.push(format!("edge x{j} -> x{i} reported"));
            }
        }
    }
    bad
}

pub fn cold_start_matches(g: &CausalGraph) -> bool {
    let eng = OracleEngine::new(g).unwrap();
    let cfg = SearchConfig::exhaustive(g.n_observed());
    cam_uvx(&eng, &cfg).unwrap() == cam_uvx(&eng, &cfg.with_init(Init::ColdStart)).unwrap()
}

/// Adjacency trichotomy after every phase, and no determined entry or
/// certificate is withdrawn by a later phase.
pub fn refinement_violations(g: &CausalGraph) -> Vec<String> {
    let eng = OracleEngine::new(g).unwrap();
    let (_, trace) = cam_uvx_traced(&eng, &SearchConfig::exhaustive(g.n_observed())).unwrap();
    let p = g.n_observed();
    let mut bad = vec![];
    for (phase, r) in &trace {
        if let Err(e) = r.check() {
            bad.push(format!("{phase:?}: {e}"));
        }
    }
    for w in trace.windows(2) {
        let ((_, before), (phase, after)) = (&w[0], &w[1]);
        for i in 0..p {
            for j in 0..p {
                let b = before.adjacency.get(i, j);
                if b != Relation::Unknown && after.adjacency.get(i, j) != b {
                    bad.push(format!("{phase:?} revised A({i},{j})"));
                }
            }
            if !before.ancestors[i].is_subset(after.ancestors[i])
                || !before.non_ancestors[i].is_subset(after.non_ancestors[i])
                || !before.on_path[i].is_subset(&after.on_path[i])
            {
                bad.push(format!("{phase:?} dropped a certificate of x{i}"));
            }
        }
    }
    bad
}

/// Search output on a copy of `g` whose observed vertices are permuted
/// agrees with the permuted output on `g`.
pub fn relabeling_violations(g: &CausalGraph, seed: u64) -> Vec<String> {
    assert_observed_first(g);
    let p = g.n_observed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..g.n_vertices()).collect();
    perm[..p].shuffle(&mut rng);
    let h = g.relabeled(&perm).unwrap();
    let cfg = SearchConfig::exhaustive(p);
    let r = cam_uvx(&OracleEngine::new(g).unwrap(), &cfg).unwrap();
    let s = cam_uvx(&OracleEngine::new(&h).unwrap(), &cfg).unwrap();
    let mut bad = vec![];
    for i in 0..p {
        for j in 0..p {
            if r.adjacency.get(i, j) != s.adjacency.get(perm[i], perm[j]) {
                bad.push(format!("A({i},{j}) differs under {perm:?}"));
            }
        }
        for k in 0..p {
            if r.ancestors[i].contains(k) != s.ancestors[perm[i]].contains(perm[k])
                || r.non_ancestors[i].contains(k) != s.non_ancestors[perm[i]].contains(perm[k])
            {
                bad.push(format!("certificates of x{i} differ under {perm:?}"));
            }
        }
    }
    bad
}

/// Restricting regression sets to observed parents of the pair leaves the
/// residual characterisations unchanged, and both agree with the ground truth.
pub fn pruning_violations(g: &CausalGraph) -> Vec<String> {
    let o = NoiseOracle::new(g).unwrap();
    let obs = g.observed().to_vec();
    let mut bad = vec![];
    for &xi in &obs {
        for &xj in &obs {
            if xi == xj {
                continue;
            }
            let full = o.lemma_verdict(xi, xj, bits_of(obs.iter().copied()), SearchMode::Exhaustive);
            let pruned = o.lemma_verdict(xi, xj, bits_of(obs.iter().copied()), SearchMode::ParentsOnly);
            if full != pruned {
                bad.push(format!("({xi},{xj}) exhaustive {full:?} vs pruned {pruned:?}"));
            }
            let want = g.ground_truth_pair_class(xi, xj, &obs).unwrap();
            if full.class(xi, xj) != Some(want) {
                bad.push(format!("({xi},{xj}) verdict {full:?} vs {want:?}"));
            }
        }
    }
    bad
}

/// Shrinking the observed subset never removes an unobserved path, and the
/// path predicates agree with explicit path enumeration.
pub fn path_predicate_violations(g: &CausalGraph) -> Vec<String> {
    let obs = g.observed().to_vec();
    let mut bad = vec![];
    for &xi in &obs {
        for &xj in &obs {
            if xi == xj {
                continue;
            }
            let rest: Vec<usize> = obs.iter().copied().filter(|&v| v != xi && v != xj).collect();
            let subsets: Vec<Vec<usize>> = (0..1u32 << rest.len())
                .map(|m| {
                    let mut s: Vec<usize> = rest.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, &v)| v).collect();
                    s.extend([xi, xj]);
                    s
                })
                .collect();
            for big in &subsets {
                let ucp = g.has_ucp(xi, xj, big).unwrap();
                let ubp = g.has_ubp(xi, xj, big).unwrap();
                if ucp != brute_ucp(g, xi, xj, big) || ubp != brute_ubp(g, xi, xj, big) {
                    bad.push(format!("({xi},{xj}) over {big:?}: path predicates disagree with enumeration"));
                }
                for small in subsets.iter().filter(|s| s.iter().all(|v| big.contains(v))) {
                    if (ucp && !g.has_ucp(xi, xj, small).unwrap()) || (ubp && !g.has_ubp(xi, xj, small).unwrap()) {
                        bad.push(format!("({xi},{xj}) path lost when shrinking {big:?} to {small:?}"));
                    }
                }
            }
        }
    }
    bad
}

pub fn d_separation_violations(g: &CausalGraph) -> Vec<String> {
    let n = g.n_vertices();
    let mut bad = vec![];
    for a in 0..n {
        for b in a + 1..n {
            let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
            for m in 0..1u32 << rest.len() {
                let z: Vec<usize> = rest.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, &v)| v).collect();
                if g.d_separated(a, b, &z).unwrap() != brute_d_separated(g, a, b, &z) {
                    bad.push(format!("d-separation of {a} and {b} given {z:?}"));
                }
            }
        }
    }
    bad
}

