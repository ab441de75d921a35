use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::solve_spd;

const MAX_ITER: usize = 100;
const MAX_COEF: f64 = 1e3;

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Binomial-logistic maximum-likelihood fit, `E(Y | X) = m * logistic(alpha + beta'X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Intercept, empty when the model has none.
    pub alpha_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub trials: u32,
    /// `beta_hat' X_i`, excluding the intercept.
    pub index: DVector<f64>,
    pub probability: DVector<f64>,
    pub fitted_mean: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `n x (a + d)` parameter gradient of the mean, `m p (1 - p) (1, X_i)`.
    pub gradient: DMatrix<f64>,
    /// `n x (a + d)` influence rows `(I_n / n)^-1 * score_i`.
    pub influence: DMatrix<f64>,
    pub iterations: usize,
}

fn design(data: &Dataset, intercept: bool) -> DMatrix<f64> {
    let (n, d) = (data.n(), data.d());
    if intercept {
        DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { data.x()[(i, j - 1)] })
    } else {
        data.x().clone()
    }
}

fn log_likelihood(eta: &DVector<f64>, y: &DVector<f64>, m: f64) -> f64 {
    eta.iter().zip(y.iter()).map(|(e, y)| y * e - m * log1p_exp(*e)).sum()
}

/// Newton-Raphson MLE of the binomial-logistic model with `trials` trials.
pub fn fit_binomial_logistic(data: &Dataset, trials: u32, intercept: bool) -> Result<GlmFit> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let m = f64::from(trials);
    let y = data.y();
    if let Some(i) = y.iter().position(|v| v.fract() != 0.0 || *v < 0.0 || *v > m) {
        return Err(Error::InvalidInput(format!(
            "response {i} = {} is not a count in 0..={trials}",
            y[i]
        )));
    }
    let xd = design(data, intercept);
    let (n, p) = xd.shape();
    if xd.tr_mul(&xd).cholesky().is_none() {
        return Err(Error::Singular("design (rank deficient)"));
    }

    let mut coef = DVector::<f64>::zeros(p);
    let mut eta = &xd * &coef;
    let mut ll = log_likelihood(&eta, y, m);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let prob = eta.map(logistic);
        let score = xd.tr_mul(&(y - &prob * m));
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let wgt = m * prob[i] * (1.0 - prob[i]);
            let row = xd.row(i);
            info += row.transpose() * row * wgt;
        }
        let step = solve_spd(&info, &score).ok_or(Error::Separation)?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &coef + &step * scale;
            let cand_eta = &xd * &cand;
            let cand_ll = log_likelihood(&cand_eta, y, m);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                coef = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if coef.amax() > MAX_COEF {
            return Err(Error::Separation);
        }
        let small_step = step.amax() * scale <= 1e-10 * (1.0 + coef.amax());
        if !accepted || small_step {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(if coef.amax() > 30.0 {
            Error::Separation
        } else {
            Error::NonConvergence {
                what: "logistic Newton-Raphson",
                iterations: MAX_ITER,
            }
        });
    }

    let prob = eta.map(logistic);
    if prob.iter().any(|&q| q <= 0.0 || q >= 1.0) {
        return Err(Error::Separation);
    }
    let fitted_mean = &prob * m;
    let residuals = y - &fitted_mean;

    let mut gradient = xd.clone();
    for (i, mut row) in gradient.row_iter_mut().enumerate() {
        row *= m * prob[i] * (1.0 - prob[i]);
    }
    let info_n = xd.tr_mul(&gradient) / n as f64;
    let inv = info_n
        .cholesky()
        .ok_or(Error::Singular("Fisher information"))?
        .inverse();
    let mut influence = &xd * inv;
    for (i, mut row) in influence.row_iter_mut().enumerate() {
        row *= residuals[i];
    }

    let (alpha_hat, beta_hat) = if intercept {
        (vec![coef[0]], coef.iter().skip(1).copied().collect::<Vec<_>>())
    } else {
        (Vec::new(), coef.iter().copied().collect())
    };
    let beta = DVector::from_column_slice(&beta_hat);
    let index = data.x() * beta;

    Ok(GlmFit {
        alpha_hat,
        beta_hat,
        trials,
        index,
        probability: prob,
        fitted_mean,
        residuals,
        gradient,
        influence,
        iterations,
    })
}
