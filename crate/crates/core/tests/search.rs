use camuvx::discovery::{cam_uvx, read_forbidden_mask, Init, Relation, SearchConfig};
use camuvx::{fixtures, Dataset, OracleEngine, SampleEngine, TestEngine, VarSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn chain_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = || -> f64 { StandardNormal.sample(&mut rng) };
    let x1: Vec<f64> = (0..n).map(|_| noise()).collect();
    let x2: Vec<f64> = x1.iter().map(|v| (1.5 * v).tanh() * 2.0 + 0.4 * noise()).collect();
    let x3: Vec<f64> = x2.iter().map(|v| v * v - 1.0 + 0.4 * noise()).collect();
    Dataset::from_columns(vec!["x1".into(), "x2".into(), "x3".into()], vec![x1, x2, x3]).unwrap()
}

#[test]
fn sample_search_recovers_a_nonlinear_chain() {
    let data = chain_data(400, 3);
    let eng = SampleEngine::new(&data, 0).unwrap();
    let r = cam_uvx(&eng, &SearchConfig::default()).unwrap();
    assert_eq!(r.adjacency.get(1, 0), Relation::Edge);
    assert_eq!(r.adjacency.get(2, 1), Relation::Edge);
    assert_eq!(r.adjacency.get(2, 0), Relation::NoEdge);
    r.check().unwrap();
}

#[test]
fn sample_search_is_deterministic() {
    let data = chain_data(200, 5);
    let cfg = SearchConfig::default().with_init(Init::ColdStart);
    let a = cam_uvx(&SampleEngine::new(&data, 1).unwrap(), &cfg).unwrap();
    let b = cam_uvx(&SampleEngine::new(&data, 1).unwrap(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn residual_queries_are_symmetric_in_the_pair() {
    let data = chain_data(150, 8);
    let eng = SampleEngine::new(&data, 2).unwrap();
    let m = VarSet::singleton(1);
    let a = eng.residual_pvalue(2, m, 0, VarSet::EMPTY).unwrap();
    let b = eng.residual_pvalue(0, VarSet::EMPTY, 2, m).unwrap();
    assert_eq!(a, b);
    assert!(eng.residual_pvalue(2, VarSet::singleton(2), 0, VarSet::EMPTY).is_err());
    assert!(eng.ci_pvalue(0, 0, VarSet::EMPTY).is_err());
}

#[test]
fn forbidden_parents_are_never_reported() {
    let g = fixtures::load("a1a").unwrap();
    let p = g.n_observed();
    let eng = OracleEngine::new(&g).unwrap();
    let free = cam_uvx(&eng, &SearchConfig::exhaustive(p)).unwrap();
    let edges: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| free.adjacency.get(i, j) == Relation::Edge)
        .collect();
    assert!(!edges.is_empty());
    let mut mask = vec![vec![false; p]; p];
    for &(i, j) in &edges {
        mask[i][j] = true;
    }
    let cfg = SearchConfig {
        forbidden: Some(mask),
        ..SearchConfig::exhaustive(p)
    };
    let r = cam_uvx(&eng, &cfg).unwrap();
    for (i, j) in edges {
        assert_ne!(r.adjacency.get(i, j), Relation::Edge);
    }
    r.check().unwrap();
}

#[test]
fn forbidden_mask_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.json");
    std::fs::write(&path, "[[false, true], [false, false]]").unwrap();
    assert_eq!(read_forbidden_mask(&path).unwrap(), vec![vec![false, true], vec![false, false]]);
    std::fs::write(&path, "[[false, true], [false]]").unwrap();
    assert!(read_forbidden_mask(&path).is_err());
    std::fs::write(&path, "[[false,\n tru]]").unwrap();
    let msg = read_forbidden_mask(&path).unwrap_err().to_string();
    assert!(msg.contains("line 2"), "{msg}");
}
