//! Hand-encoded example graphs shipped with the crate.
//!
//! Observed vertices are labelled `x1..`, hidden ones `U1..`; observed
//! vertices come first, so column `c` is labelled `x{c+1}`.

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

pub const NAMES: [&str; 7] = ["fig1a", "fig1b", "fig1c", "fig1d", "a1a", "a1b", "c1"];

pub fn json(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1a" => include_str!("../fixtures/fig1a.json"),
        "fig1b" => include_str!("../fixtures/fig1b.json"),
        "fig1c" => include_str!("../fixtures/fig1c.json"),
        "fig1d" => include_str!("../fixtures/fig1d.json"),
        "a1a" => include_str!("../fixtures/a1a.json"),
        "a1b" => include_str!("../fixtures/a1b.json"),
        "c1" => include_str!("../fixtures/c1.json"),
        _ => return None,
    })
}

pub fn load(name: &str) -> Result<CausalGraph> {
    let text = json(name).ok_or_else(|| Error::invalid(format!("unknown fixture {name:?}")))?;
    CausalGraph::from_json(text)
}

pub fn all() -> Vec<(&'static str, CausalGraph)> {
    NAMES
        .iter()
        .map(|&n| (n, load(n).expect("bundled fixture parses")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_loads_with_observed_first() {
        for (name, g) in all() {
            let p = g.n_observed();
            assert!(p >= 3, "{name}");
            for c in 0..p {
                assert_eq!(g.vertex_of_column(c), c);
                assert_eq!(g.label(c), format!("x{}", c + 1));
            }
        }
        assert!(load("nope").is_err());
    }
}
