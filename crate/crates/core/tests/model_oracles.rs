use elgof::marked_process::{build_partial_linear, build_variable_selection, IndexSetRule};
use elgof::model_null::{
    fit_binomial_logistic, fit_partial_linear, fit_variable_selection, logistic, Kernel, PlWeight,
};
use elgof::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f decreasing, f(lo) > 0 > f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn binomial_sample(seed: u64, n: usize, alpha: f64, beta: f64, m: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = x
        .iter()
        .map(|&x| Binomial::new(m, logistic(alpha + beta * x)).unwrap().sample(&mut rng) as f64)
        .collect();
    (x, y)
}

#[test]
fn logistic_slope_matches_score_bisection() {
    let (x, y) = binomial_sample(3, 150, 0.0, 0.8, 15);
    let data = Dataset::from_pairs(&x.iter().copied().zip(y.iter().copied()).collect::<Vec<_>>()).unwrap();
    let fit = fit_binomial_logistic(&data, 15, false).unwrap();
    let score = |b: f64| -> f64 { x.iter().zip(&y).map(|(x, y)| x * (y - 15.0 * logistic(b * x))).sum() };
    let oracle = bisect(-20.0, 20.0, score);
    assert!((fit.beta_hat[0] - oracle).abs() < 1e-8, "{} vs {oracle}", fit.beta_hat[0]);
}

#[test]
fn logistic_with_intercept_matches_profile_bisection() {
    let (x, y) = binomial_sample(4, 200, -0.6, 1.1, 5);
    let data = Dataset::from_pairs(&x.iter().copied().zip(y.iter().copied()).collect::<Vec<_>>()).unwrap();
    let fit = fit_binomial_logistic(&data, 5, true).unwrap();
    let alpha_for = |b: f64| {
        bisect(-30.0, 30.0, |a| x.iter().zip(&y).map(|(x, y)| y - 5.0 * logistic(a + b * x)).sum())
    };
    let profile = |b: f64| -> f64 {
        let a = alpha_for(b);
        x.iter().zip(&y).map(|(x, y)| x * (y - 5.0 * logistic(a + b * x))).sum()
    };
    let b = bisect(-20.0, 20.0, profile);
    let a = alpha_for(b);
    assert!((fit.beta_hat[0] - b).abs() < 1e-8);
    assert!((fit.alpha_hat[0] - a).abs() < 1e-8);
}

fn epan(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Two-covariate sample `X = (W, Z)` with `Y = 1.2 Z + sin(3 W) + noise`.
fn semiparametric_sample(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let w: f64 = rng.random();
        let e: f64 = StandardNormal.sample(&mut rng);
        let z = w + rng.random_range(-1.0..1.0);
        rows.push(vec![w, z]);
        y.push(1.2 * z + (3.0 * w).sin() + 0.3 * e);
    }
    Dataset::from_rows(&rows, y).unwrap().with_split(vec![0], vec![1]).unwrap()
}

fn in_set(pivot: &[f64], t: &[f64], x: &[f64]) -> bool {
    (0..t.len()).all(|k| if x[k] <= pivot[k] { t[k] >= x[k] } else { t[k] <= x[k] })
}

#[test]
fn variable_selection_process_by_direct_summation() {
    let n = 25;
    let data = semiparametric_sample(11, n);
    let h = 0.3;
    let kfit = fit_variable_selection(&data, Some(&[h]), Kernel::Epanechnikov).unwrap();
    let rule = IndexSetRule::medians(data.x());
    let mpe = build_variable_selection(&kfit, &data, &rule).unwrap();
    assert_eq!(mpe.excluded_count(), 0);

    let row = |i: usize| data.row(i);
    let k = |i: usize, j: usize| epan((row(i)[0] - row(j)[0]) / h);
    for u in 0..mpe.grid_len() {
        let x: Vec<f64> = mpe.grid.row(u).iter().copied().collect();
        let mut var = 0.0;
        for i in 0..n {
            let ksum: f64 = (0..n).map(|j| k(i, j)).sum();
            let f = ksum / (n as f64 * h);
            let g = (0..n).map(|j| k(i, j) * data.y()[j]).sum::<f64>() / ksum;
            let ind = if in_set(rule.pivots(), &row(i), &x) { 1.0 } else { 0.0 };
            let r = (0..n)
                .filter(|&j| in_set(rule.pivots(), &row(j), &x))
                .map(|j| k(i, j))
                .sum::<f64>()
                / ksum;
            let a = ind * f * (data.y()[i] - g);
            let q = (ind - r) * f * (data.y()[i] - g);
            assert!((mpe.marks[(i, u)] - a).abs() < 1e-12);
            assert!((mpe.qscores[(i, u)] - q).abs() < 1e-12);
            var += a * a / n as f64;
        }
        assert!((mpe.variance[u] - var).abs() < 1e-12);
    }
}

#[test]
fn partial_linear_process_by_direct_summation() {
    let n = 30;
    let data = semiparametric_sample(12, n);
    let h = 0.35;
    let pfit = fit_partial_linear(&data, Some(&[h]), Kernel::Epanechnikov, &PlWeight::Unit).unwrap();
    let rule = IndexSetRule::medians(data.x());
    let mpe = build_partial_linear(&pfit, &data, &rule).unwrap();

    let row = |i: usize| data.row(i);
    let k = |i: usize, j: usize| epan((row(i)[0] - row(j)[0]) / h);
    let smooth = |i: usize, v: &dyn Fn(usize) -> f64| {
        let ksum: f64 = (0..n).map(|j| k(i, j)).sum();
        (0..n).map(|j| k(i, j) * v(j)).sum::<f64>() / ksum
    };
    let zc: Vec<f64> = (0..n).map(|i| row(i)[1] - smooth(i, &|j| row(j)[1])).collect();
    let yc: Vec<f64> = (0..n).map(|i| data.y()[i] - smooth(i, &|j| data.y()[j])).collect();
    let s: f64 = zc.iter().map(|z| z * z).sum::<f64>() / n as f64;
    let theta = zc.iter().zip(&yc).map(|(z, y)| z * y).sum::<f64>() / n as f64 / s;
    assert!((pfit.theta_hat[0] - theta).abs() < 1e-12);

    for u in 0..mpe.grid_len() {
        let x: Vec<f64> = mpe.grid.row(u).iter().copied().collect();
        let inside: Vec<bool> = (0..n).map(|j| in_set(rule.pivots(), &row(j), &x)).collect();
        let c: f64 = (0..n).filter(|&j| inside[j]).map(|j| zc[j]).sum::<f64>() / n as f64;
        for i in 0..n {
            let e = yc[i] - theta * zc[i];
            let ind = if inside[i] { 1.0 } else { 0.0 };
            let r = smooth(i, &|j| if inside[j] { 1.0 } else { 0.0 });
            let q = e * (ind - r - c / s * zc[i]);
            assert!((mpe.marks[(i, u)] - ind * e).abs() < 1e-12);
            assert!((mpe.qscores[(i, u)] - q).abs() < 1e-12, "{} vs {q}", mpe.qscores[(i, u)]);
        }
    }
}

#[test]
fn partial_linear_estimator_is_nearly_unbiased() {
    let reps = 200;
    let estimates: Vec<f64> = (0..reps)
        .map(|r| {
            let data = semiparametric_sample(1000 + r, 200);
            fit_partial_linear(&data, None, Kernel::Epanechnikov, &PlWeight::default()).unwrap().theta_hat[0]
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let sd = (estimates.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let se = sd / (reps as f64).sqrt();
    assert!((mean - 1.2).abs() < 4.0 * se + 0.02, "mean {mean}, se {se}");
}

#[test]
fn kernel_fit_matches_explicit_sums() {
    let data = semiparametric_sample(13, 20);
    let kfit = fit_variable_selection(&data, Some(&[0.25]), Kernel::Epanechnikov).unwrap();
    for i in 0..20 {
        let wi = data.row(i)[0];
        let ks: Vec<f64> = (0..20).map(|j| epan((wi - data.row(j)[0]) / 0.25)).collect();
        let f = ks.iter().sum::<f64>() / (20.0 * 0.25);
        assert!((kfit.density[i] - f).abs() < 1e-13);
    }
}
