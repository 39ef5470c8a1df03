use camuvx::experiment::{make_instance, Generator};
use camuvx::gam::{fit_additive, residual};
use camuvx::stats::hsic_pvalue;
use camuvx::synth::{sample_dataset, ScmSpec};
use camuvx::{fixtures, SampleEngine, TestEngine, VarSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fig1a_data(seed: u64) -> camuvx::Dataset {
    let generator = Generator::Fixture {
        names: vec!["fig1a".into()],
    };
    make_instance(&generator, "fig1a", seed, 500).unwrap().2
}

#[test]
fn direct_effect_is_detectable() {
    let hits = (0..100)
        .filter(|&s| {
            let d = fig1a_data(s);
            hsic_pvalue(d.column(0), d.column(1)).unwrap().p_value < 0.05
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

// Pilot over seeds 0..100: the residual of x2 on {x1, x3} looks independent
// of x1 (p > 0.1) in 27 datasets, the residual of x2 on {x1} alone in 5.
#[test]
fn regressing_on_the_confounded_parent_set_separates_x1() {
    let (mut right, mut wrong) = (0, 0);
    for s in 0..100 {
        let eng = SampleEngine::new(&fig1a_data(s), s).unwrap();
        let free = |m: u64| eng.residual_pvalue(1, VarSet::from_bits(m), 0, VarSet::EMPTY).unwrap() > 0.1;
        right += usize::from(free(0b101));
        wrong += usize::from(free(0b001));
    }
    assert!(right >= 21, "{right}/100");
    assert!(wrong <= 10, "{wrong}/100");
    assert!(right > wrong);
}

#[test]
fn parentless_column_is_standardised_noise() {
    let g = fixtures::load("fig1d").unwrap();
    let d = sample_dataset(&ScmSpec::random(g, 4), 2000).unwrap();
    // x4 has no parents
    let x = d.column(3);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() <= 3.0 / n.sqrt() && (var - 1.0).abs() <= 3.0 / n.sqrt());
}

#[test]
fn fit_is_additive_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|r| cols[0][r].sin() + cols[1][r] * cols[1][r] - cols[2][r] + 0.1 * rng.gen::<f64>())
        .collect();
    let preds: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let fit = fit_additive(&y, &preds).unwrap();
    let again = fit_additive(&y, &preds).unwrap();
    assert_eq!(residual(&fit, &y, &preds).unwrap(), residual(&again, &y, &preds).unwrap());

    // moving one coordinate changes the prediction by that component alone
    let base = [0.3, -0.7, 1.1];
    for m in 0..3 {
        let mut moved = base;
        moved[m] += 0.5;
        let change = fit.predict_one(&moved) - fit.predict_one(&base);
        let own = fit.component(m, moved[m]) - fit.component(m, base[m]);
        assert!((change - own).abs() < 1e-12);
    }
}
