//! Causal discovery for causal additive models with unobserved variables.
//!
//! The search ([`discovery`]) is written against the [`engine::TestEngine`]
//! trait, so the same code runs on sampled data (additive-model residuals,
//! HSIC and kNN conditional mutual information) or on a known graph through
//! the structural [`oracle`].

pub mod discovery;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fixtures;
pub mod gam;
pub mod graph;
pub mod oracle;
pub mod stats;
pub mod synth;
pub mod varset;

pub use discovery::{cam_uv, cam_uvx, DiscoveryResult, Init, Relation, SearchConfig, TriAdjacency};
pub use engine::{OracleEngine, SampleEngine, TestEngine};
pub use error::{Error, Result};
pub use graph::{CausalGraph, GraphBuilder, PairClass};
pub use synth::Dataset;
pub use varset::VarSet;
