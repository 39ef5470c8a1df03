use crate::engine::TestEngine;
use crate::error::{Error, Result};
use crate::varset::VarSet;

use super::cam_uv::{cam_uv, Tester};
use super::{ancestor_closure, DiscoveryResult, Init, Relation, SearchConfig, TriAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    CheckVisible,
    CheckOnPath,
    CheckCi,
    CheckParentInvi,
}

/// CAM-UV-X: initial estimate, visibility check, on-path certificates,
/// conditional-independence ancestry, and the parent propagation fixpoint.
pub fn cam_uvx<E: TestEngine + ?Sized>(eng: &E, cfg: &SearchConfig) -> Result<DiscoveryResult> {
    run(eng, cfg, None)
}

/// As [`cam_uvx`], also returning the state after every phase.
pub fn cam_uvx_traced<E: TestEngine + ?Sized>(
    eng: &E,
    cfg: &SearchConfig,
) -> Result<(DiscoveryResult, Vec<(Phase, DiscoveryResult)>)> {
    let mut trace = Vec::new();
    let r = run(eng, cfg, Some(&mut trace))?;
    Ok((r, trace))
}

fn run<E: TestEngine + ?Sized>(
    eng: &E,
    cfg: &SearchConfig,
    mut trace: Option<&mut Vec<(Phase, DiscoveryResult)>>,
) -> Result<DiscoveryResult> {
    let p = eng.n_vars();
    cfg.validate(p)?;
    let a = match cfg.init {
        Init::CamUv => cam_uv(eng, cfg)?,
        Init::ColdStart => TriAdjacency::new(p, Relation::Unknown),
    };
    let mut s = State {
        t: Tester { eng, alpha: cfg.alpha },
        cfg,
        p,
        r: DiscoveryResult::empty(a),
    };
    let mut snap = |s: &State<'_, E>, phase: Phase| -> Result<()> {
        s.r.check()?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((phase, s.r.clone()));
        }
        Ok(())
    };
    snap(&s, Phase::Init)?;

    for (i, j) in s.r.adjacency.unknown_pairs() {
        s.check_visible(i, j)?;
    }
    s.r.invisible = s.r.adjacency.unknown_pairs().into_iter().collect();
    snap(&s, Phase::CheckVisible)?;

    let visible: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .filter(|&(i, j)| s.r.adjacency.get(i, j) != Relation::Unknown && s.r.adjacency.get(j, i) != Relation::Unknown)
        .collect();
    for (i, j) in visible {
        s.check_on_path(i, j)?;
    }
    snap(&s, Phase::CheckOnPath)?;

    // repeated until no new ancestor appears, so the outcome does not
    // depend on the order of the pairs
    let unknown = s.r.adjacency.unknown_pairs();
    for pass in 0.. {
        let before = s.r.ancestors.clone();
        for &(i, j) in &unknown {
            s.check_ci(i, j)?;
            s.check_ci(j, i)?;
        }
        if s.r.ancestors == before {
            break;
        }
        if pass > p * p {
            return Err(Error::Invariant("ancestor propagation did not reach a fixpoint".into()));
        }
    }
    snap(&s, Phase::CheckCi)?;

    s.check_parent_invi()?;
    snap(&s, Phase::CheckParentInvi)?;
    Ok(s.r)
}

struct State<'a, E: ?Sized> {
    t: Tester<'a, E>,
    cfg: &'a SearchConfig,
    p: usize,
    r: DiscoveryResult,
}

impl<E: TestEngine + ?Sized> State<'_, E> {
    fn a(&self, i: usize, j: usize) -> Relation {
        self.r.adjacency.get(i, j)
    }

    /// Sets an unknown entry; determined entries are never revised.
    fn settle(&mut self, i: usize, j: usize, rel: Relation) -> bool {
        if self.a(i, j) != Relation::Unknown {
            return false;
        }
        if rel == Relation::Edge && (self.cfg.is_forbidden(i, j) || self.a(j, i) == Relation::Edge) {
            return false;
        }
        self.r.adjacency.set(i, j, rel);
        true
    }

    /// Records `x_j` as a parent of `x_i`.
    fn settle_edge(&mut self, i: usize, j: usize) -> bool {
        if !self.settle(i, j, Relation::Edge) {
            return false;
        }
        self.settle(j, i, Relation::NoEdge);
        true
    }

    fn add_ancestor(&mut self, of: usize, k: usize) {
        if !self.r.non_ancestors[of].contains(k) {
            self.r.ancestors[of].insert(k);
        }
    }

    fn add_non_ancestor(&mut self, of: usize, k: usize) {
        if !self.r.ancestors[of].contains(k) {
            self.r.non_ancestors[of].insert(k);
        }
    }

    fn check_visible(&mut self, i: usize, j: usize) -> Result<()> {
        const PHASE: &str = "check_visible";
        let p = self.p;
        let mut q: VarSet = (0..p)
            .filter(|&k| self.a(j, k) == Relation::Unknown || self.a(i, k) == Relation::Unknown)
            .collect();
        q = q
            .union(self.r.adjacency.parents(i))
            .union(self.r.adjacency.parents(j))
            .without(i)
            .without(j);
        let subsets = q.subsets_up_to(self.cfg.max_parents);
        let mut i_not_parent = false;
        let mut j_not_parent = false;
        for &m in &subsets {
            for &n in &subsets {
                if self.t.indep(PHASE, i, m, j, n)? {
                    self.settle_pair_none(i, j);
                    return Ok(());
                }
                if self.t.indep(PHASE, i, m.with(j), j, n)? {
                    i_not_parent = true;
                }
                if self.t.indep(PHASE, i, m, j, n.with(i))? {
                    j_not_parent = true;
                }
                if i_not_parent && j_not_parent {
                    self.settle_pair_none(i, j);
                    return Ok(());
                }
            }
        }
        if i_not_parent {
            self.settle_edge(i, j);
        } else if j_not_parent {
            self.settle_edge(j, i);
        }
        Ok(())
    }

    fn settle_pair_none(&mut self, i: usize, j: usize) {
        self.settle(i, j, Relation::NoEdge);
        self.settle(j, i, Relation::NoEdge);
    }

    fn check_on_path(&mut self, i: usize, j: usize) -> Result<()> {
        const PHASE: &str = "check_on_path";
        let all = VarSet::full(self.p);
        for k in 0..self.p {
            // eligibility follows the pairs left invisible by the visibility
            // check, not entries settled earlier in this phase
            let invisible = |a: usize, b: usize| self.r.invisible.contains(&(a.min(b), a.max(b)));
            if k == i || k == j || !(invisible(i, k) || invisible(j, k)) {
                continue;
            }
            let ms = all.without(i).without(k).subsets_up_to(self.cfg.max_parents);
            let ns = all.without(j).without(k).subsets_up_to(self.cfg.max_parents);
            let mut on_path = true;
            'search: for &m in &ms {
                for &n in &ns {
                    if self.t.indep(PHASE, i, m, j, n)? {
                        on_path = false;
                        break 'search;
                    }
                }
            }
            if !on_path {
                continue;
            }
            self.r.on_path[k].insert((i, j));
            if self.a(i, j) == Relation::Edge {
                self.add_ancestor(i, k);
                self.add_non_ancestor(k, i);
                self.settle(k, i, Relation::NoEdge);
            } else if self.a(j, i) == Relation::Edge {
                self.add_ancestor(j, k);
                self.add_non_ancestor(k, j);
                self.settle(k, j, Relation::NoEdge);
            }
        }
        Ok(())
    }

    fn check_ci(&mut self, i: usize, j: usize) -> Result<()> {
        const PHASE: &str = "check_ci";
        let closure = ancestor_closure(&self.r.adjacency, &self.r.ancestors);
        let anc = closure[i].without(i).without(j);
        let z = VarSet::singleton(i);
        for k in anc.iter() {
            let pv = self.t.eng.ci_pvalue(k, j, z).map_err(|e| e.in_search(PHASE, i, j))?;
            if pv > self.t.alpha {
                self.add_non_ancestor(i, j);
                self.settle(i, j, Relation::NoEdge);
                self.add_ancestor(j, i);
                break;
            }
        }
        Ok(())
    }

    fn check_parent_invi(&mut self) -> Result<()> {
        // every pass settles at least one unknown entry, so p^2 passes bound the loop
        for _ in 0..=self.p * self.p {
            let mut changed = false;
            for k in 0..self.p {
                let pairs: Vec<(usize, usize)> = self.r.on_path[k].iter().copied().collect();
                for (a, b) in pairs {
                    for (i, j) in [(a, b), (b, a)] {
                        let ruled_out = self.r.non_ancestors[i].contains(k) || self.a(i, k) == Relation::NoEdge;
                        if self.a(j, k) == Relation::Unknown && ruled_out && self.settle_edge(j, k) {
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
        Err(Error::Invariant("parent propagation did not reach a fixpoint".into()))
    }
}
