#![allow(dead_code)]

use elgof::bootstrap::{multiplier_replicates, MultiplierConfig, MultiplierDistribution};
use elgof::marked_process::{build_parametric, IndexSetRule, MarkedProcessEval};
use elgof::model_null::{fit_least_squares, nadaraya_watson, Kernel, Polynomial};
use elgof::testkit::{el_statistics, irf_statistics, DEFAULT_CAP};
use elgof::{el_log_ratio, solve_lambda, Dataset, ExtReal, MarkVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `-2 sum log(n w_i)` maximized over the probability simplex subject to
/// `sum w_i a_i = 0`, computed in the primal. `None` when no strictly
/// positive weights satisfy the constraint.
///
/// Starting from an interior feasible point, every triple of coordinates
/// spans a direction that preserves both constraints; the concave
/// objective is maximized exactly along each such direction in turn.
pub fn primal_log_ratio(a: &[f64]) -> Option<f64> {
    let n = a.len();
    let pos: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| a[i] < 0.0).collect();
    let zero = n - pos.len() - neg.len();
    if pos.is_empty() != neg.is_empty() {
        return None;
    }
    if pos.is_empty() {
        return Some(0.0);
    }
    let mean = |s: &[usize]| s.iter().map(|&i| a[i].abs()).sum::<f64>() / s.len() as f64;
    let (mp, mn) = (mean(&pos), mean(&neg));
    let rest = 1.0 - zero as f64 / n as f64;
    let mut w = vec![1.0 / n as f64; n];
    for &i in &pos {
        w[i] = rest * mn / (mp + mn) / pos.len() as f64;
    }
    for &i in &neg {
        w[i] = rest * mp / (mp + mn) / neg.len() as f64;
    }
    if n == 2 {
        return Some(objective(&w));
    }

    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                triples.push([i, j, k]);
            }
        }
    }
    let mut best = objective(&w);
    for _ in 0..20_000 {
        for t in &triples {
            let (ai, aj, ak) = (a[t[0]], a[t[1]], a[t[2]]);
            // (1,1,1) x (ai,aj,ak)
            let d = [ak - aj, ai - ak, aj - ai];
            if d.iter().all(|v| v.abs() < 1e-300) {
                continue;
            }
            line_maximize(&mut w, t, &d);
        }
        let now = objective(&w);
        if best - now < 1e-15 {
            best = now;
            break;
        }
        best = now;
    }
    Some(best.max(0.0))
}

fn objective(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    -2.0 * w.iter().map(|v| (n * v).ln()).sum::<f64>()
}

/// Maximizes `sum log(w_i + s d_i)` over the feasible segment by bisection on
/// the directional derivative, which is strictly decreasing in `s`.
fn line_maximize(w: &mut [f64], idx: &[usize; 3], d: &[f64; 3]) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..3 {
        let (wk, dk) = (w[idx[k]], d[k]);
        if dk > 0.0 {
            lo = lo.max(-wk / dk);
        } else if dk < 0.0 {
            hi = hi.min(-wk / dk);
        }
    }
    let slope = |s: f64| (0..3).map(|k| d[k] / (w[idx[k]] + s * d[k])).sum::<f64>();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    for k in 0..3 {
        w[idx[k]] += s * d[k];
    }
}

/// Random mark vector of length `n` with mixed magnitudes and occasional ties
/// at zero.
pub fn random_marks(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                0.0
            } else {
                scale * rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

/// Compares the dual solver with the primal oracle; `Err` describes the mismatch.
pub fn check_el_against_primal(a: &[f64]) -> Result<(), String> {
    let ev = el_log_ratio(&MarkVector::new(a.to_vec()).unwrap(), 1e-12).map_err(|e| e.to_string())?;
    match (ev.log_ratio(), primal_log_ratio(a)) {
        (ExtReal::PosInfinity, None) => Ok(()),
        (ExtReal::Finite(x), Some(y)) if (x - y).abs() <= 1e-6 => Ok(()),
        (got, want) => Err(format!("marks {a:?}: dual {got}, primal {want:?}")),
    }
}

/// Exhaustive sup statistic over all `2^n` sign vectors, computed from the
/// scores by direct summation.
pub fn enumerate_sup(q: &DMatrix<f64>, variance: &[f64]) -> Vec<f64> {
    let (n, g) = q.shape();
    let mut out = Vec::new();
    for pattern in 0..(1u32 << n) {
        let mut best = 0.0f64;
        for u in 0..g {
            if variance[u] <= 0.0 {
                continue;
            }
            let mut r = 0.0;
            for i in 0..n {
                let v = if pattern >> i & 1 == 1 { 1.0 } else { -1.0 };
                r += q[(i, u)] * v;
            }
            r /= (n as f64).sqrt();
            best = best.max(r * r / variance[u]);
        }
        out.push(best);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Linear data `y = beta x + noise` on `n` uniform design points.
pub fn linear_data(seed: u64, n: usize, beta: f64, noise: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let e: f64 = rng.random_range(-1.0..1.0);
            (x, beta * x + noise * e)
        })
        .collect();
    Dataset::from_pairs(&pairs).unwrap()
}

pub fn parametric_process(data: &Dataset, pivot: f64) -> MarkedProcessEval {
    let fit = fit_least_squares(data, &Polynomial::through_origin(), &[1.0]).unwrap();
    build_parametric(&fit, data, &IndexSetRule::new(vec![pivot]).unwrap()).unwrap()
}

pub fn check_el_nonnegative_and_scale(a: &[f64], c: f64) -> Result<(), String> {
    let m = MarkVector::new(a.to_vec()).unwrap();
    let ev = el_log_ratio(&m, 1e-12).unwrap();
    if let ExtReal::Finite(v) = ev.log_ratio() {
        if v < 0.0 {
            return Err(format!("negative log ratio {v}"));
        }
    }
    let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
    let ms = MarkVector::new(scaled).unwrap();
    match (solve_lambda(&m, 1e-12), solve_lambda(&ms, 1e-12)) {
        (Ok(l), Ok(ls)) => {
            let amax = a.iter().fold(0.0f64, |x, y| x.max(y.abs()));
            if (ls * c - l).abs() > 1e-8 * l.abs() + 1e-9 / amax {
                return Err(format!("lambda {l} vs scaled {ls} (c = {c})"));
            }
            let (x, y) = (ev.log_ratio().to_f64(), el_log_ratio(&ms, 1e-12).unwrap().log_ratio().to_f64());
            if (x - y).abs() > 1e-8 * (1.0 + x) {
                return Err(format!("log ratio {x} vs scaled {y}"));
            }
            Ok(())
        }
        (Err(_), Err(_)) => Ok(()),
        (a, b) => Err(format!("solver disagreement under scaling: {a:?} vs {b:?}")),
    }
}

pub fn check_integral_below_sup(mpe: &MarkedProcessEval) -> Result<(), String> {
    let st = el_statistics(mpe, DEFAULT_CAP).map_err(|e| e.to_string())?;
    if st.t_n <= st.s_n.to_f64() * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(format!("T_n {} exceeds S_n {}", st.t_n, st.s_n))
    }
}

/// Negating the response negates residuals, marks, and scores; all four
/// statistics and their bootstrap copies must be unchanged.
pub fn check_sign_flip(data: &Dataset, seed: u64) -> Result<(), String> {
    let flipped = data.with_response(-data.y()).unwrap();
    let a = parametric_process(data, 0.5);
    let b = parametric_process(&flipped, 0.5);
    let (sa, sb) = (el_statistics(&a, DEFAULT_CAP).unwrap(), el_statistics(&b, DEFAULT_CAP).unwrap());
    let close = |x: f64, y: f64| x == y || (x - y).abs() <= 1e-9 * (1.0 + x.abs());
    if !(close(sa.s_n.to_f64(), sb.s_n.to_f64()) && close(sa.t_n, sb.t_n)) {
        return Err(format!("EL statistics changed: {sa:?} vs {sb:?}"));
    }
    let (ia, ib) = (irf_statistics(&a), irf_statistics(&b));
    if !(close(ia.ks, ib.ks) && close(ia.cvm, ib.cvm)) {
        return Err(format!("IRF statistics changed: {ia:?} vs {ib:?}"));
    }
    let cfg = MultiplierConfig::new(50, MultiplierDistribution::Rademacher, seed).unwrap();
    if let (Ok(ra), Ok(rb)) = (multiplier_replicates(&a, &cfg), multiplier_replicates(&b, &cfg)) {
        for (x, y) in ra.sup.iter().zip(&rb.sup).chain(ra.integral.iter().zip(&rb.integral)) {
            if !close(*x, *y) {
                return Err(format!("bootstrap replicate changed: {x} vs {y}"));
            }
        }
    }
    Ok(())
}

/// `T(u)` is nonincreasing left of the pivot and nondecreasing right of it.
pub fn check_variance_monotone(mpe: &MarkedProcessEval, pivot: f64) -> Result<(), String> {
    let g = mpe.grid_len();
    for u in 1..g {
        let (x0, x1) = (mpe.grid[(u - 1, 0)], mpe.grid[(u, 0)]);
        let (t0, t1) = (mpe.variance[u - 1], mpe.variance[u]);
        let slack = 1e-12 * (t0 + t1 + 1e-300);
        if x1 <= pivot && t1 > t0 + slack {
            return Err(format!("T increases left of the pivot at {x1}"));
        }
        if x0 > pivot && t1 + slack < t0 {
            return Err(format!("T decreases right of the pivot at {x1}"));
        }
    }
    Ok(())
}

/// Least-squares normal equations and mean-zero influence.
pub fn check_normal_equations(data: &Dataset, degree: usize) -> Result<(), String> {
    let model = Polynomial::new(degree, true).unwrap();
    let fit = fit_least_squares(data, &model, &vec![0.0; degree + 1]).map_err(|e| e.to_string())?;
    let n = data.n() as f64;
    let scale = data.y().amax().max(1.0);
    let score = fit.gradient.tr_mul(&fit.residuals) / n;
    if score.amax() > 1e-9 * scale {
        return Err(format!("normal equations violated: {score}"));
    }
    let mean_infl = fit.influence.row_mean();
    if mean_infl.amax() > 1e-7 * scale {
        return Err(format!("influence mean {mean_infl}"));
    }
    Ok(())
}

/// Nadaraya-Watson reproduces a constant target wherever the density is positive.
pub fn check_kernel_constant(w: &[f64], c: f64, h: f64) -> Result<(), String> {
    let wm = DMatrix::from_column_slice(w.len(), 1, w);
    let t = DMatrix::from_element(w.len(), 1, c);
    for kernel in [Kernel::Epanechnikov, Kernel::Biweight, Kernel::Uniform, Kernel::Gaussian] {
        let fit = nadaraya_watson(&wm, &t, &[h], kernel).map_err(|e| e.to_string())?;
        for i in 0..w.len() {
            if fit.density[i] > 0.0 && (fit.regression[(i, 0)] - c).abs() > 1e-10 * (1.0 + c.abs()) {
                return Err(format!("{kernel:?} gave {} for constant {c}", fit.regression[(i, 0)]));
            }
        }
    }
    Ok(())
}

/// Runs `f` inside rayon pools of one and four threads and compares the results.
pub fn same_across_thread_counts<T: PartialEq + Send, F: Fn() -> T + Send + Sync>(f: F) -> bool {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    one.install(&f) == four.install(&f)
}
