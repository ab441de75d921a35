//! Marked empirical processes `R_n(u) = n^-1/2 sum_i A_i(u)` for each null
//! family, together with the variance estimate `T(u)` and the bootstrap
//! scores `Q_i(u)` that calibrate them.
//!
//! Observations accumulate toward a pivot: along each coordinate,
//! `t in J_x` iff `t >= x` when `x <= a`, and `t <= x` when `x > a`.
//! Multivariate sets are products of the coordinate half-lines.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model_null::{kernel_matrix, GlmFit, KernelFit, ParametricFit, PartialLinearFit};

/// Pivots `a_j` defining the index sets. A pivot of `-inf` on every
/// coordinate gives the classical left-to-right sets `{t <= x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSetRule {
    pivots: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl IndexSetRule {
    pub fn new(pivots: Vec<f64>) -> Result<Self> {
        if pivots.is_empty() || pivots.iter().any(|a| a.is_nan() || *a == f64::INFINITY) {
            return Err(Error::InvalidInput("pivots must be finite or -inf".into()));
        }
        Ok(IndexSetRule { pivots })
    }

    /// Coordinate-wise sample medians of the rows of `points`.
    pub fn medians(points: &DMatrix<f64>) -> Self {
        let pivots = points
            .column_iter()
            .map(|c| median(c.as_slice()))
            .collect();
        IndexSetRule { pivots }
    }

    pub fn classical(d: usize) -> Self {
        IndexSetRule {
            pivots: vec![f64::NEG_INFINITY; d],
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    #[inline]
    pub fn contains_1d(pivot: f64, t: f64, x: f64) -> bool {
        if x <= pivot {
            t >= x
        } else {
            t <= x
        }
    }

    /// `t in J_x`.
    pub fn contains(&self, t: &[f64], x: &[f64]) -> bool {
        self.pivots
            .iter()
            .zip(t.iter().zip(x))
            .all(|(&a, (&t, &x))| Self::contains_1d(a, t, x))
    }

    /// Every finite pivot must leave at least two observations on each side.
    pub fn check_sides(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "rule has {} pivots but points have {} coordinates",
                self.dim(),
                points.ncols()
            )));
        }
        for (j, &a) in self.pivots.iter().enumerate() {
            if a == f64::NEG_INFINITY {
                continue;
            }
            let below = points.column(j).iter().filter(|&&t| t <= a).count();
            let above = points.nrows() - below;
            if below < 2 || above < 2 {
                return Err(Error::PivotSide { coordinate: j, pivot: a });
            }
        }
        Ok(())
    }

    /// `G x n` membership matrix, entry `(u, i)` is `I(points_i in J_{grid_u})`.
    pub fn indicator(&self, points: &DMatrix<f64>, grid: &DMatrix<f64>) -> DMatrix<f64> {
        let mut ind = DMatrix::zeros(grid.nrows(), points.nrows());
        for u in 0..grid.nrows() {
            for i in 0..points.nrows() {
                let inside = (0..self.dim()).all(|j| {
                    Self::contains_1d(self.pivots[j], points[(i, j)], grid[(u, j)])
                });
                if inside {
                    ind[(u, i)] = 1.0;
                }
            }
        }
        ind
    }
}

/// Deduplicated grid of the rows of `points`, sorted lexicographically, with
/// the empirical-measure mass of each grid point.
pub fn empirical_grid(points: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = points.shape();
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().copied().collect()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut uniq: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for r in rows {
        match uniq.last() {
            Some(last) if *last == r => *counts.last_mut().unwrap() += 1,
            _ => {
                uniq.push(r);
                counts.push(1);
            }
        }
    }
    let grid = DMatrix::from_fn(uniq.len(), d, |u, j| uniq[u][j]);
    let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
    (grid, weights)
}

/// Marks, variance estimates, and bootstrap scores on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedProcessEval {
    /// `G x k` grid points.
    pub grid: DMatrix<f64>,
    /// Mass of each grid point under the empirical measure; sums to one.
    pub grid_weights: Vec<f64>,
    /// `n x G`, entry `(i, u)` is `A_i(u)`.
    pub marks: DMatrix<f64>,
    /// `T(u) = n^-1 sum_i A_i(u)^2`.
    pub variance: Vec<f64>,
    /// `n x G`, entry `(i, u)` is `Q_i(u)`.
    pub qscores: DMatrix<f64>,
    /// Per original observation; excluded rows are absent from `marks`.
    pub excluded: Vec<bool>,
    /// Grid points with `T(u)` at or below this value count as zero
    /// variance. Set relative to the response scale so that rounding noise
    /// in exact fits is not mistaken for signal.
    pub variance_floor: f64,
}

/// Relative size of the variance floor against the mean squared weighted
/// response; corresponds to marks below about 1e-12 of the response scale.
const VARIANCE_FLOOR_REL: f64 = 1e-24;

fn variance_floor<I: Iterator<Item = f64>>(weighted_response: I) -> f64 {
    let (sum, count) = weighted_response.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        VARIANCE_FLOOR_REL * sum / count as f64
    }
}

fn column_mean_squares(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.norm_squared() / n).collect()
}

impl MarkedProcessEval {
    /// Assembles a process from marks and scores, computing `T(u)` from the
    /// marks. Grid points are the column indices with uniform mass.
    pub fn from_marks(marks: DMatrix<f64>, qscores: DMatrix<f64>) -> Result<Self> {
        if marks.shape() != qscores.shape() {
            return Err(Error::InvalidInput("marks and scores differ in shape".into()));
        }
        let (n, g) = marks.shape();
        if n == 0 || g == 0 {
            return Err(Error::InvalidInput("empty process".into()));
        }
        if marks.iter().chain(qscores.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite marks or scores".into()));
        }
        Ok(MarkedProcessEval {
            grid: DMatrix::from_fn(g, 1, |u, _| u as f64),
            grid_weights: vec![1.0 / g as f64; g],
            variance: column_mean_squares(&marks),
            marks,
            qscores,
            excluded: vec![false; n],
            variance_floor: 0.0,
        })
    }

    /// Number of rows contributing to the marks.
    pub fn n(&self) -> usize {
        self.marks.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.marks.ncols()
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|&&e| e).count()
    }

    /// `R_n(u)` at every grid point.
    pub fn process(&self) -> Vec<f64> {
        let scale = (self.n() as f64).sqrt();
        self.marks.column_iter().map(|c| c.sum() / scale).collect()
    }

    /// False when `T(u)` is zero up to the variance floor; such grid points
    /// are left out of every statistic.
    pub fn is_informative(&self, u: usize) -> bool {
        self.variance[u] > self.variance_floor
    }

    pub fn degenerate_variance_count(&self) -> usize {
        (0..self.grid_len()).filter(|&u| !self.is_informative(u)).count()
    }
}

/// Shared construction for the indicator families: `A_i(u) = I_i(u) e_i`
/// and `Q_i(u) = A_i(u) - G(u)' infl_i` with `G(u) = n^-1 sum_i I_i(u) grad_i`.
fn indicator_process(
    points: &DMatrix<f64>,
    rule: &IndexSetRule,
    response: &DVector<f64>,
    residuals: &DVector<f64>,
    gradient: &DMatrix<f64>,
    influence: &DMatrix<f64>,
) -> Result<MarkedProcessEval> {
    let n = points.nrows();
    rule.check_sides(points)?;
    let (grid, grid_weights) = empirical_grid(points);
    let ind = rule.indicator(points, &grid);

    let mut marks = ind.transpose();
    for (i, mut row) in marks.row_iter_mut().enumerate() {
        row *= residuals[i];
    }
    // G(u) stacked as rows: G x p
    let g_hat = &ind * gradient / n as f64;
    let correction = influence * g_hat.transpose();
    let qscores = &marks - correction;

    Ok(MarkedProcessEval {
        grid,
        grid_weights,
        variance: column_mean_squares(&marks),
        marks,
        qscores,
        excluded: vec![false; n],
        variance_floor: variance_floor(response.iter().copied()),
    })
}

/// Parametric null with one covariate; the grid is the observed `X`.
pub fn build_parametric(
    fit: &ParametricFit,
    data: &Dataset,
    rule: &IndexSetRule,
) -> Result<MarkedProcessEval> {
    if data.d() != 1 {
        return Err(Error::InvalidInput(format!(
            "parametric process needs one covariate, got {}",
            data.d()
        )));
    }
    indicator_process(data.x(), rule, data.y(), &fit.residuals, &fit.gradient, &fit.influence)
}

/// Binomial-logistic null; the grid is the fitted index `beta' X_i`.
pub fn build_glm(fit: &GlmFit, rule: &IndexSetRule) -> Result<MarkedProcessEval> {
    let points = DMatrix::from_column_slice(fit.index.len(), 1, fit.index.as_slice());
    let response = &fit.fitted_mean + &fit.residuals;
    indicator_process(&points, rule, &response, &fit.residuals, &fit.gradient, &fit.influence)
}

/// Kernel-smoothed indicator `r(x, W_i) = sum_j K_ij I(X_j in J_x) / sum_j K_ij`,
/// `n x G`.
fn smoothed_indicator(kmat: &DMatrix<f64>, ind: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = kmat * ind.transpose();
    let sums = kmat.column_sum();
    for (i, mut row) in r.row_iter_mut().enumerate() {
        if sums[i] > 0.0 {
            row /= sums[i];
        }
    }
    r
}

fn check_exclusions(excluded: &[bool]) -> Result<()> {
    let count = excluded.iter().filter(|&&e| e).count();
    if count * 5 > excluded.len() {
        return Err(Error::TooManyExcluded {
            excluded: count,
            n: excluded.len(),
        });
    }
    Ok(())
}

/// Variable-selection null `E(Y | W, Z) = g(W)`; the grid is the observed
/// `X = (W, Z)`.
pub fn build_variable_selection(
    kfit: &KernelFit,
    data: &Dataset,
    rule: &IndexSetRule,
) -> Result<MarkedProcessEval> {
    let split = data.require_split()?;
    let n = data.n();
    if kfit.density.len() != n {
        return Err(Error::InvalidInput("kernel fit and data differ in length".into()));
    }
    check_exclusions(&kfit.flagged)?;
    let x = data.x();
    rule.check_sides(x)?;
    let (grid, grid_weights) = empirical_grid(x);
    let ind = rule.indicator(x, &grid);
    let w = data.columns(&split.w);
    let kmat = kernel_matrix(&w, &kfit.bandwidth, kfit.kernel);
    let r_hat = smoothed_indicator(&kmat, &ind);

    let rows: Vec<usize> = (0..n).filter(|&i| !kfit.flagged[i]).collect();
    let g = grid.nrows();
    let mut marks = DMatrix::zeros(rows.len(), g);
    let mut qscores = DMatrix::zeros(rows.len(), g);
    for (r, &i) in rows.iter().enumerate() {
        let fe = kfit.density[i] * (data.y()[i] - kfit.regression[(i, 0)]);
        for u in 0..g {
            marks[(r, u)] = ind[(u, i)] * fe;
            qscores[(r, u)] = (ind[(u, i)] - r_hat[(i, u)]) * fe;
        }
    }
    Ok(MarkedProcessEval {
        grid,
        grid_weights,
        variance: column_mean_squares(&marks),
        marks,
        qscores,
        excluded: kfit.flagged.clone(),
        variance_floor: variance_floor(rows.iter().map(|&i| kfit.density[i] * data.y()[i])),
    })
}

/// Partial-linear null `E(Y | W, Z) = theta'Z + g(W)`.
///
/// Scores are `Q_i(x) = w_i e_i D_i(x)` with
/// `D_i(x) = I(X_i in J_x) - r(x, W_i) - w_i c(x)' S^-1 (Z_i - m_Z(W_i))` and
/// `c(x) = n^-1 sum_j w_j I(X_j in J_x) (Z_j - m_Z(W_j))`.
pub fn build_partial_linear(
    pfit: &PartialLinearFit,
    data: &Dataset,
    rule: &IndexSetRule,
) -> Result<MarkedProcessEval> {
    let split = data.require_split()?;
    let n = data.n();
    if pfit.included.len() != n {
        return Err(Error::InvalidInput("partial-linear fit and data differ in length".into()));
    }
    let excluded: Vec<bool> = pfit.included.iter().map(|b| !b).collect();
    check_exclusions(&excluded)?;
    let x = data.x();
    rule.check_sides(x)?;
    let (grid, grid_weights) = empirical_grid(x);
    let ind = rule.indicator(x, &grid);
    let w = data.columns(&split.w);
    let kmat = kernel_matrix(&w, &pfit.kernel.bandwidth, pfit.kernel.kernel);
    let r_hat = smoothed_indicator(&kmat, &ind);

    let rows: Vec<usize> = (0..n).filter(|&i| pfit.included[i]).collect();
    let n_eff = rows.len() as f64;
    let g = grid.nrows();
    let dz = pfit.z_centered.ncols();

    // c(x) for every grid point, G x d_z
    let mut c_hat = DMatrix::zeros(g, dz);
    for &i in &rows {
        for u in 0..g {
            if ind[(u, i)] != 0.0 {
                for k in 0..dz {
                    c_hat[(u, k)] += pfit.weights[i] * pfit.z_centered[(i, k)];
                }
            }
        }
    }
    c_hat /= n_eff;
    // S^-1 (Z_i - m_Z(W_i)) stacked as rows, n x d_z
    let s_inv_z = &pfit.z_centered * &pfit.s_hat_inv;
    let correction = &s_inv_z * c_hat.transpose(); // n x G

    let mut marks = DMatrix::zeros(rows.len(), g);
    let mut qscores = DMatrix::zeros(rows.len(), g);
    for (r, &i) in rows.iter().enumerate() {
        let wi = pfit.weights[i];
        let we = wi * pfit.adjusted_residuals[i];
        for u in 0..g {
            marks[(r, u)] = ind[(u, i)] * we;
            let d = ind[(u, i)] - r_hat[(i, u)] - wi * correction[(i, u)];
            qscores[(r, u)] = we * d;
        }
    }
    Ok(MarkedProcessEval {
        grid,
        grid_weights,
        variance: column_mean_squares(&marks),
        marks,
        qscores,
        excluded,
        variance_floor: variance_floor(rows.iter().map(|&i| pfit.weights[i] * data.y()[i])),
    })
}
