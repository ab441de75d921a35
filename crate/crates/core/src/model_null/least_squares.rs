use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::solve_spd;

const GN_MAX_ITER: usize = 200;
const GN_MAX_HALVINGS: usize = 40;

/// A regression function `gamma(x, theta)` with its parameter gradient.
pub trait RegressionFunction: Send + Sync + Debug {
    fn n_params(&self) -> usize;

    fn value(&self, x: &[f64], theta: &[f64]) -> f64;

    /// Writes `d gamma / d theta` at `(x, theta)` into `out`.
    fn gradient(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// True when `gamma` is linear in `theta`, which allows a closed-form fit.
    fn is_linear(&self) -> bool {
        false
    }

    /// True for `theta x` and `theta_0 + theta_1 x`, whose influence has a
    /// closed form in sample moments.
    fn is_straight_line(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

/// Polynomial in the first covariate: `theta_0 + theta_1 x + ... + theta_k x^k`,
/// optionally without the constant term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Polynomial {
    pub degree: usize,
    pub intercept: bool,
}

impl Polynomial {
    pub fn new(degree: usize, intercept: bool) -> Result<Self> {
        if degree == 0 && !intercept {
            return Err(Error::InvalidInput("polynomial has no terms".into()));
        }
        Ok(Polynomial { degree, intercept })
    }

    /// `gamma(x, theta) = theta x`.
    pub fn through_origin() -> Self {
        Polynomial { degree: 1, intercept: false }
    }

    /// `gamma(x, theta) = theta_0 + theta_1 x`.
    pub fn linear() -> Self {
        Polynomial { degree: 1, intercept: true }
    }

    fn first_power(&self) -> i32 {
        if self.intercept {
            0
        } else {
            1
        }
    }
}

impl RegressionFunction for Polynomial {
    fn n_params(&self) -> usize {
        self.degree + usize::from(self.intercept)
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        let p0 = self.first_power();
        theta
            .iter()
            .enumerate()
            .map(|(k, t)| t * x[0].powi(p0 + k as i32))
            .sum()
    }

    fn gradient(&self, x: &[f64], _theta: &[f64], out: &mut [f64]) {
        let p0 = self.first_power();
        for (k, o) in out.iter_mut().enumerate() {
            *o = x[0].powi(p0 + k as i32);
        }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn is_straight_line(&self) -> bool {
        self.degree == 1
    }

    fn describe(&self) -> String {
        match (self.degree, self.intercept) {
            (1, false) => "linear-through-origin".into(),
            (1, true) => "linear".into(),
            (k, true) => format!("poly:{k}"),
            (k, false) => format!("poly-origin:{k}"),
        }
    }
}

/// Least-squares fit of a parametric null.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFit {
    pub theta_hat: Vec<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `n x p`, row `i` is `d gamma / d theta` at `(X_i, theta_hat)`.
    pub gradient: DMatrix<f64>,
    /// `n x p`, row `i` is the estimated influence `h(X_i, Y_i, theta_hat)`.
    pub influence: DMatrix<f64>,
}

fn gradient_matrix(x: &DMatrix<f64>, model: &dyn RegressionFunction, theta: &[f64]) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), model.n_params());
    let mut g = DMatrix::zeros(n, p);
    let mut buf = vec![0.0; p];
    let mut row = vec![0.0; x.ncols()];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        model.gradient(&row, theta, &mut buf);
        for j in 0..p {
            g[(i, j)] = buf[j];
        }
    }
    g
}

fn fitted_values(x: &DMatrix<f64>, model: &dyn RegressionFunction, theta: &[f64]) -> DVector<f64> {
    let mut row = vec![0.0; x.ncols()];
    DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            model.value(&row, theta)
        }),
    )
}

/// Minimizes the residual sum of squares and returns `theta_hat` only.
/// Used directly by the wild bootstrap, which refits once per replicate.
pub(crate) fn least_squares_theta(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &dyn RegressionFunction,
    theta_init: &[f64],
) -> Result<Vec<f64>> {
    let p = model.n_params();
    if theta_init.len() != p {
        return Err(Error::InvalidInput(format!(
            "theta_init has length {} but the model has {p} parameters",
            theta_init.len()
        )));
    }
    if model.is_linear() {
        let g = gradient_matrix(x, model, theta_init);
        let gram = g.tr_mul(&g);
        let rhs = g.tr_mul(y);
        let theta = solve_spd(&gram, &rhs).ok_or(Error::Singular("design Gram matrix"))?;
        return Ok(theta.iter().copied().collect());
    }

    // Gauss-Newton with step halving
    let mut theta = theta_init.to_vec();
    let mut sse = (y - fitted_values(x, model, &theta)).norm_squared();
    if !sse.is_finite() {
        return Err(Error::InvalidInput("model is not finite at theta_init".into()));
    }
    for _ in 0..GN_MAX_ITER {
        let resid = y - fitted_values(x, model, &theta);
        let g = gradient_matrix(x, model, &theta);
        let step = solve_spd(&g.tr_mul(&g), &g.tr_mul(&resid))
            .ok_or(Error::Singular("Gauss-Newton normal matrix"))?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..GN_MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let cand_sse = (y - fitted_values(x, model, &cand)).norm_squared();
            if cand_sse.is_finite() && cand_sse <= sse {
                accepted = Some((cand, cand_sse));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_sse)) = accepted else {
            // no descent along the Gauss-Newton direction: stationary point
            return Ok(theta);
        };
        let moved = theta
            .iter()
            .zip(&cand)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let flat = sse - cand_sse <= 1e-15 * sse.max(f64::MIN_POSITIVE);
        theta = cand;
        sse = cand_sse;
        if moved || flat {
            return Ok(theta);
        }
    }
    Err(Error::NonConvergence {
        what: "Gauss-Newton least squares",
        iterations: GN_MAX_ITER,
    })
}

/// Least-squares fit of `Y = gamma(X, theta) + error`.
///
/// Linear-in-theta models use the normal equations; others use
/// Gauss-Newton from `theta_init`. The influence of straight-line models
/// comes from [`ls_influence_linear`]; every other model uses the sandwich
/// form `(n^-1 sum g g')^-1 g_i e_i`.
pub fn fit_least_squares(
    data: &Dataset,
    model: &dyn RegressionFunction,
    theta_init: &[f64],
) -> Result<ParametricFit> {
    let theta_hat = least_squares_theta(data.x(), data.y(), model, theta_init)?;
    let fitted = fitted_values(data.x(), model, &theta_hat);
    let residuals = data.y() - &fitted;
    let gradient = gradient_matrix(data.x(), model, &theta_hat);

    let influence = if model.is_straight_line() {
        ls_influence_linear(data, &theta_hat)?
    } else {
        let n = data.n() as f64;
        let gram = gradient.tr_mul(&gradient) / n;
        let inv = gram
            .clone()
            .cholesky()
            .ok_or(Error::Singular("gradient Gram matrix"))?
            .inverse();
        let mut infl = &gradient * inv;
        for (i, mut row) in infl.row_iter_mut().enumerate() {
            row *= residuals[i];
        }
        infl
    };

    Ok(ParametricFit {
        theta_hat,
        fitted,
        residuals,
        gradient,
        influence,
    })
}

/// Closed-form influence of the least-squares straight line, with sample
/// moments in place of population moments.
///
/// `theta_hat` of length 1 selects the through-origin model `theta x`,
/// where `h = x y / m_xx - (m_xy / m_xx^2) x^2` with raw second moments.
/// Length 2 selects `theta_0 + theta_1 x`; column 1 is
/// `h_1 = (x - mu_X)(y - mu_Y) / s_X^2 - (s_XY / s_X^4)(x - mu_X)^2`
/// and column 0 is the induced intercept influence
/// `h_0 = (y - mu_Y) - theta_1 (x - mu_X) - mu_X h_1`.
pub fn ls_influence_linear(data: &Dataset, theta_hat: &[f64]) -> Result<DMatrix<f64>> {
    let n = data.n();
    let nf = n as f64;
    let x = data.x().column(0);
    let y = data.y();
    match theta_hat.len() {
        1 => {
            let mxx = x.iter().map(|v| v * v).sum::<f64>() / nf;
            let mxy = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / nf;
            if mxx == 0.0 {
                return Err(Error::ZeroVariance);
            }
            Ok(DMatrix::from_fn(n, 1, |i, _| {
                x[i] * y[i] / mxx - mxy / (mxx * mxx) * x[i] * x[i]
            }))
        }
        2 => {
            let mu_x = x.mean();
            let mu_y = y.mean();
            let sxx = x.iter().map(|v| (v - mu_x).powi(2)).sum::<f64>() / nf;
            let sxy = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - mu_x) * (b - mu_y))
                .sum::<f64>()
                / nf;
            if sxx <= 1e-300 {
                return Err(Error::ZeroVariance);
            }
            let slope = sxy / sxx;
            let mut h = DMatrix::zeros(n, 2);
            for i in 0..n {
                let dx = x[i] - mu_x;
                let dy = y[i] - mu_y;
                let h1 = dx * dy / sxx - sxy / (sxx * sxx) * dx * dx;
                h[(i, 1)] = h1;
                h[(i, 0)] = dy - slope * dx - mu_x * h1;
            }
            Ok(h)
        }
        p => Err(Error::InvalidInput(format!(
            "closed-form influence covers straight lines only, got {p} parameters"
        ))),
    }
}
