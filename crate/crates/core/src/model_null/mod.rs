//! Fitting the null-model families and exposing the pieces each marked
//! process needs: residuals, parameter gradients, influence rows, and
//! kernel estimates.

mod kernel;
mod least_squares;
mod logistic;
mod partial_linear;

pub use kernel::{
    default_bandwidth, fit_variable_selection, kernel_matrix, nadaraya_watson, Kernel, KernelFit,
    DENSITY_FLOOR,
};
pub use least_squares::{fit_least_squares, ls_influence_linear, ParametricFit, Polynomial, RegressionFunction};
pub(crate) use least_squares::least_squares_theta;
pub use logistic::{fit_binomial_logistic, logistic, GlmFit};
pub use partial_linear::{fit_partial_linear, PartialLinearFit, PlWeight};

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for symmetric positive definite `a`. Returns `None`
/// when a Cholesky pivot collapses relative to its diagonal entry, which
/// treats numerically singular systems as singular.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    for j in 0..a.nrows() {
        let pivot = l[(j, j)] * l[(j, j)];
        if !(pivot > 1e-12 * a[(j, j)]) || !pivot.is_finite() {
            return None;
        }
    }
    Some(chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix, with the same
/// singularity rule as [`solve_spd`].
pub(crate) fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    for j in 0..a.nrows() {
        let pivot = l[(j, j)] * l[(j, j)];
        if !(pivot > 1e-12 * a[(j, j)]) || !pivot.is_finite() {
            return None;
        }
    }
    Some(chol.inverse())
}
