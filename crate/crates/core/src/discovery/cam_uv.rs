use crate::engine::TestEngine;
use crate::error::Result;
use crate::varset::VarSet;

use super::{Relation, SearchConfig, TriAdjacency};

pub(super) struct Tester<'a, E: ?Sized> {
    pub eng: &'a E,
    pub alpha: f64,
}

impl<E: TestEngine + ?Sized> Tester<'_, E> {
    pub fn pvalue(&self, phase: &'static str, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<f64> {
        self.eng
            .residual_pvalue(i, m, j, n)
            .map_err(|e| e.in_search(phase, i, j))
    }

    pub fn indep(&self, phase: &'static str, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<bool> {
        Ok(self.pvalue(phase, i, m, j, n)? > self.alpha)
    }
}

/// The CAM-UV baseline.
///
/// Phase 1 grows parent sets from candidate sinks of growing variable
/// subsets, phase 2 prunes them, and pairs whose residuals stay dependent
/// are reported unknown.
pub fn cam_uv<E: TestEngine + ?Sized>(eng: &E, cfg: &SearchConfig) -> Result<TriAdjacency> {
    let p = eng.n_vars();
    cfg.validate(p)?;
    let t = Tester { eng, alpha: cfg.alpha };
    let e = VarSet::EMPTY;

    let mut neighbours = vec![VarSet::EMPTY; p];
    for i in 0..p {
        for j in i + 1..p {
            if !t.indep("cam_uv neighbourhood", i, e, j, e)? {
                neighbours[i].insert(j);
                neighbours[j].insert(i);
            }
        }
    }

    let mut parents = vec![VarSet::EMPTY; p];
    let max_size = p.min(cfg.max_parents + 1);
    let mut size = 2;
    while size <= max_size {
        let mut changed = false;
        for k in VarSet::full(p).subsets_up_to(size) {
            if k.len() != size || relation_known(k, &parents) {
                continue;
            }
            let Some(sink) = best_sink(&t, k, &parents, &neighbours)? else {
                continue;
            };
            let cand = k.without(sink);
            if cand.iter().any(|c| cfg.is_forbidden(sink, c)) {
                continue;
            }
            // the members of K must matter: without them the residuals are dependent
            let mut needed = true;
            for j in cand.iter() {
                if t.indep("cam_uv phase 1", sink, parents[sink], j, parents[j])? {
                    needed = false;
                    break;
                }
            }
            if needed {
                parents[sink] = parents[sink].union(cand);
                changed = true;
            }
        }
        size = if changed { 2 } else { size + 1 };
    }

    for i in 0..p {
        let mut drop = VarSet::EMPTY;
        for j in parents[i].iter() {
            if t.indep("cam_uv phase 2", i, parents[i].without(j), j, parents[j])? {
                drop.insert(j);
            }
        }
        parents[i] = parents[i].difference(drop);
    }

    let mut a = TriAdjacency::new(p, Relation::NoEdge);
    for i in 0..p {
        for j in parents[i].iter() {
            a.set(i, j, Relation::Edge);
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            if parents[i].contains(j) || parents[j].contains(i) || !neighbours[i].contains(j) {
                continue;
            }
            if !t.indep("cam_uv classification", i, parents[i], j, parents[j])? {
                a.set(i, j, Relation::Unknown);
                a.set(j, i, Relation::Unknown);
            }
        }
    }
    Ok(a)
}

fn relation_known(k: VarSet, parents: &[VarSet]) -> bool {
    k.iter().any(|i| !parents[i].intersection(k).is_empty())
}

/// The member of `k` whose residual, after regressing on the rest of `k`,
/// is most independent of the others' residuals. Ties go to the lowest index.
fn best_sink<E: TestEngine + ?Sized>(
    t: &Tester<'_, E>,
    k: VarSet,
    parents: &[VarSet],
    neighbours: &[VarSet],
) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for b in k.iter() {
        let others = k.without(b);
        if !others.is_subset(neighbours[b]) {
            continue;
        }
        let reg = others.union(parents[b]);
        let mut worst = f64::INFINITY;
        for j in others.iter() {
            worst = worst.min(t.pvalue("cam_uv phase 1", b, reg, j, parents[j])?);
        }
        if best.is_none_or(|(_, v)| worst > v) {
            best = Some((b, worst));
        }
    }
    Ok(best.filter(|&(_, v)| v > t.alpha).map(|(b, _)| b))
}
