mod common;

use common::enumerate_sup;
use elgof::bootstrap::{
    multiplier_replicates, replicates_from_multipliers, wild_from_multipliers, MultiplierConfig,
    MultiplierDistribution,
};
use elgof::marked_process::{IndexSetRule, MarkedProcessEval};
use elgof::model_null::{fit_least_squares, Polynomial};
use elgof::Dataset;
use nalgebra::DMatrix;

fn toy_process() -> MarkedProcessEval {
    let marks = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, -1.0, -1.5, 2.0, 0.3, 1.0, -0.7, 0.0]);
    let q = DMatrix::from_row_slice(3, 3, &[0.4, 0.1, -1.2, -1.1, 1.8, 0.5, 0.9, -0.4, 0.2]);
    MarkedProcessEval::from_marks(marks, q).unwrap()
}

fn sign_patterns(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1 << n, |i, b| if b >> i & 1 == 1 { 1.0 } else { -1.0 })
}

#[test]
fn enumeration_of_all_sign_patterns() {
    let mpe = toy_process();
    let reps = replicates_from_multipliers(&mpe, &sign_patterns(3)).unwrap();
    let mut got = reps.sup.clone();
    got.sort_by(f64::total_cmp);
    let want = enumerate_sup(&mpe.qscores, &mpe.variance);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-14 * w.max(1.0), "{g} vs {w}");
    }
}

#[test]
fn random_rademacher_draws_land_on_the_enumerated_support() {
    let mpe = toy_process();
    let want = enumerate_sup(&mpe.qscores, &mpe.variance);
    let cfg = MultiplierConfig::new(8000, MultiplierDistribution::Rademacher, 5).unwrap();
    let reps = multiplier_replicates(&mpe, &cfg).unwrap();
    for s in &reps.sup {
        assert!(want.iter().any(|w| (w - s).abs() <= 1e-14 * w.max(1.0)));
    }
    // each sign pattern and its negation give the same value, so each
    // distinct value has probability (multiplicity / 8)
    let mut distinct: Vec<f64> = want.clone();
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.max(1.0));
    for v in distinct {
        let mult = want.iter().filter(|w| (*w - v).abs() <= 1e-14 * v.max(1.0)).count() as f64;
        let freq = reps.sup.iter().filter(|s| (*s - v).abs() <= 1e-14 * v.max(1.0)).count() as f64 / 8000.0;
        assert!((freq - mult / 8.0).abs() < 0.03, "value {v}: {freq} vs {}", mult / 8.0);
    }
}

#[test]
fn unit_multipliers_give_column_sums() {
    let mpe = toy_process();
    let reps = replicates_from_multipliers(&mpe, &DMatrix::from_element(3, 1, 1.0)).unwrap();
    let mut sup = 0.0f64;
    let mut integral = 0.0;
    for u in 0..3 {
        let r = mpe.qscores.column(u).sum() / 3f64.sqrt();
        sup = sup.max(r * r / mpe.variance[u]);
        integral += r * r / mpe.variance[u] / 3.0;
    }
    assert!((reps.sup[0] - sup).abs() < 1e-14);
    assert!((reps.integral[0] - integral).abs() < 1e-14);
}

fn wild_oracle(x: &[f64], y: &[f64], v: &[f64]) -> (f64, f64) {
    let n = x.len();
    let sxx: f64 = x.iter().map(|x| x * x).sum();
    let theta = x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let ystar: Vec<f64> = (0..n).map(|i| theta * x[i] + (y[i] - theta * x[i]) * v[i]).collect();
    let tstar = x.iter().zip(&ystar).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let (mut ks, mut cvm) = (0.0f64, 0.0);
    for &u in x {
        let r: f64 = (0..n).filter(|&i| x[i] <= u).map(|i| ystar[i] - tstar * x[i]).sum::<f64>() / (n as f64).sqrt();
        ks = ks.max(r.abs());
        cvm += r * r / n as f64;
    }
    (ks, cvm)
}

#[test]
fn wild_bootstrap_matches_loop_over_all_sign_patterns() {
    let x = [0.2, 0.5, 0.9];
    let y = [0.3, 0.4, 1.1];
    let data = Dataset::from_pairs(&[(x[0], y[0]), (x[1], y[1]), (x[2], y[2])]).unwrap();
    let model = Polynomial::through_origin();
    let fit = fit_least_squares(&data, &model, &[1.0]).unwrap();
    let v = sign_patterns(3);
    let reps = wild_from_multipliers(&data, &fit, &model, &IndexSetRule::classical(1), &v).unwrap();
    assert_eq!(reps.failed, 0);
    for b in 0..8 {
        let col: Vec<f64> = v.column(b).iter().copied().collect();
        let (ks, cvm) = wild_oracle(&x, &y, &col);
        assert!((reps.ks[b] - ks).abs() < 1e-14, "{b}: {} vs {ks}", reps.ks[b]);
        assert!((reps.cvm[b] - cvm).abs() < 1e-14);
    }
}

#[test]
fn wild_bootstrap_identities() {
    let data = Dataset::from_pairs(&[(0.1, 0.3), (0.4, 0.5), (0.6, 1.4), (0.9, 0.8)]).unwrap();
    let model = Polynomial::through_origin();
    let fit = fit_least_squares(&data, &model, &[1.0]).unwrap();
    let rule = IndexSetRule::classical(1);
    let ones = wild_from_multipliers(&data, &fit, &model, &rule, &DMatrix::from_element(4, 2, 1.0)).unwrap();
    let (ks, cvm) = wild_oracle(&[0.1, 0.4, 0.6, 0.9], &[0.3, 0.5, 1.4, 0.8], &[1.0; 4]);
    assert!((ones.ks[0] - ks).abs() < 1e-14 && (ones.cvm[1] - cvm).abs() < 1e-14);

    let exact = Dataset::from_pairs(&[(0.1, 0.2), (0.4, 0.8), (0.6, 1.2), (0.9, 1.8)]).unwrap();
    let fit = fit_least_squares(&exact, &model, &[1.0]).unwrap();
    let cfg = MultiplierConfig::new(20, MultiplierDistribution::Mammen, 1).unwrap();
    let reps = elgof::bootstrap::wild_bootstrap_parametric(&exact, &fit, &model, &rule, &cfg).unwrap();
    assert!(reps.ks.iter().chain(&reps.cvm).all(|v| v.abs() < 1e-12));
}
