//! Scoring against a known graph.
//!
//! Both tasks score every ordered pair `(i, j)`, `i != j`, of observed
//! columns. In the adjacency task the positive class is "x_j is a parent of
//! x_i"; in the ancestor task it is "x_j is an ancestor of x_i". An
//! undetermined entry adds the expected counts of a random guess:
//! `P / (2(P+N))` to TP and FN, and `N / (2(P+N))` to TN and FP, where `P`
//! and `N` count the true positives and negatives.

use serde::{Deserialize, Serialize};

use crate::discovery::{ancestor_closure, DiscoveryResult, Relation, TriAdjacency};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Adjacency,
    Ancestor,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Adjacency => "adjacency",
            Task::Ancestor => "ancestor",
        }
    }
}

/// How undetermined ancestor relations are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    #[default]
    HalfCredit,
    /// Undetermined counts as a negative prediction.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub scoring: Scoring,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision or recall had a zero denominator and was reported as 1.
    pub degenerate: bool,
}

impl MetricReport {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub const CSV_HEADER: [&'static str; 10] =
        ["task", "scoring", "tp", "fp", "tn", "fn", "precision", "recall", "f1", "degenerate"];

    pub fn csv_fields(&self) -> Vec<String> {
        let scoring = match self.scoring {
            Scoring::HalfCredit => "half_credit",
            Scoring::Strict => "strict",
        };
        vec![
            self.task.as_str().to_string(),
            scoring.to_string(),
            format!("{}", self.tp),
            format!("{}", self.fp),
            format!("{}", self.tn),
            format!("{}", self.fn_),
            format!("{}", self.precision),
            format!("{}", self.recall),
            format!("{}", self.f1),
            self.degenerate.to_string(),
        ]
    }
}

#[derive(Clone, Copy)]
enum Call {
    Yes,
    No,
    Unsure,
}

fn report(task: Task, scoring: Scoring, truth: &[Vec<bool>], call: impl Fn(usize, usize) -> Call) -> MetricReport {
    let p = truth.len();
    let pairs = (0..p).flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)));
    let positives = pairs.clone().filter(|&(i, j)| truth[i][j]).count() as f64;
    let negatives = (p * p.saturating_sub(1)) as f64 - positives;
    let share = if positives + negatives > 0.0 {
        positives / (positives + negatives)
    } else {
        0.0
    };
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (i, j) in pairs {
        match (call(i, j), truth[i][j]) {
            (Call::Yes, true) => tp += 1.0,
            (Call::Yes, false) => fp += 1.0,
            (Call::No, true) => fn_ += 1.0,
            (Call::No, false) => tn += 1.0,
            (Call::Unsure, _) => {
                tp += 0.5 * share;
                fn_ += 0.5 * share;
                tn += 0.5 * (1.0 - share);
                fp += 0.5 * (1.0 - share);
            }
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else {
            degenerate = true;
            1.0
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricReport {
        task,
        scoring,
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        degenerate,
    }
}

fn check_dims(p: usize, truth: &CausalGraph) -> Result<()> {
    if p != truth.n_observed() {
        return Err(Error::invalid(format!(
            "prediction has {p} variables but the graph has {} observed vertices",
            truth.n_observed()
        )));
    }
    Ok(())
}

/// `m[i][j]`: observed `x_j` is a parent of observed `x_i`.
pub fn true_parents(truth: &CausalGraph) -> Vec<Vec<bool>> {
    let obs = truth.observed();
    obs.iter()
        .map(|&vi| obs.iter().map(|&vj| truth.has_edge(vj, vi)).collect())
        .collect()
}

/// `m[i][j]`: observed `x_j` is an ancestor of observed `x_i`, through any vertices.
pub fn true_ancestors(truth: &CausalGraph) -> Vec<Vec<bool>> {
    let obs = truth.observed();
    obs.iter()
        .map(|&vi| obs.iter().map(|&vj| vj != vi && truth.is_ancestor(vj, vi)).collect())
        .collect()
}

pub fn score_adjacency(predicted: &TriAdjacency, truth: &CausalGraph) -> Result<MetricReport> {
    check_dims(predicted.p(), truth)?;
    let t = true_parents(truth);
    Ok(report(Task::Adjacency, Scoring::HalfCredit, &t, |i, j| match predicted.get(i, j) {
        Relation::Edge => Call::Yes,
        Relation::NoEdge => Call::No,
        Relation::Unknown => Call::Unsure,
    }))
}

/// Predicted ancestors are the closure of the Edge entries together with
/// the certified sets `M`. Certified non-ancestors are the sets `H` and the
/// reverse of every predicted ancestor relation. Everything else is
/// undetermined.
pub fn score_ancestors(predicted: &DiscoveryResult, truth: &CausalGraph, scoring: Scoring) -> Result<MetricReport> {
    check_dims(predicted.p(), truth)?;
    let t = true_ancestors(truth);
    let anc = ancestor_closure(&predicted.adjacency, &predicted.ancestors);
    Ok(report(Task::Ancestor, scoring, &t, |i, j| {
        if anc[i].contains(j) {
            Call::Yes
        } else if predicted.non_ancestors[i].contains(j) || anc[j].contains(i) {
            Call::No
        } else if scoring == Scoring::HalfCredit {
            Call::Unsure
        } else {
            Call::No
        }
    }))
}
