use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::kernel::{default_bandwidth, nadaraya_watson, Kernel, KernelFit};
use super::inverse_spd;

/// Weight function `w(W)` used by the partial-linear process.
#[derive(Clone, Default)]
pub enum PlWeight {
    /// The estimated density `f_W(W_i)`.
    #[default]
    EstimatedDensity,
    Unit,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for PlWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlWeight::EstimatedDensity => f.write_str("EstimatedDensity"),
            PlWeight::Unit => f.write_str("Unit"),
            PlWeight::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialLinearFit {
    pub theta_hat: DVector<f64>,
    pub s_hat: DMatrix<f64>,
    pub s_hat_inv: DMatrix<f64>,
    /// Column 0 is `m(W_i)`, columns `1..` are `m_Z(W_i)`.
    pub kernel: KernelFit,
    /// `w(W_i)`.
    pub weights: DVector<f64>,
    /// `Z_i - m_Z(W_i)`, `n x d_z`.
    pub z_centered: DMatrix<f64>,
    /// `Y_i - m(W_i) - theta' (Z_i - m_Z(W_i))`.
    pub adjusted_residuals: DVector<f64>,
    /// Observations above the density floor.
    pub included: Vec<bool>,
}

impl PartialLinearFit {
    pub fn n_included(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

/// Weighted kernel estimator of the linear part of `Y = theta'Z + g(W) + e`.
///
/// `theta = S^-1 n^-1 sum w^2 (Z - m_Z)(Y - m)` with
/// `S = n^-1 sum w^2 (Z - m_Z)(Z - m_Z)'`; sums run over observations that
/// clear the density floor.
pub fn fit_partial_linear(
    data: &Dataset,
    bandwidth: Option<&[f64]>,
    kernel: Kernel,
    weight: &PlWeight,
) -> Result<PartialLinearFit> {
    let split = data.require_split()?;
    let n = data.n();
    let w = data.columns(&split.w);
    let z = data.columns(&split.z);
    let dz = z.ncols();
    let h = match bandwidth {
        Some(h) if h.len() == 1 => vec![h[0]; split.w.len()],
        Some(h) => h.to_vec(),
        None => default_bandwidth(&w)?,
    };

    let mut targets = DMatrix::zeros(n, 1 + dz);
    targets.set_column(0, data.y());
    for c in 0..dz {
        targets.set_column(1 + c, &z.column(c));
    }
    let kfit = nadaraya_watson(&w, &targets, &h, kernel)?;
    let included: Vec<bool> = kfit.flagged.iter().map(|f| !f).collect();
    let n_eff = included.iter().filter(|&&b| b).count();
    if n_eff == 0 {
        return Err(Error::InvalidInput("every observation is below the density floor".into()));
    }

    let weights = DVector::from_iterator(
        n,
        (0..n).map(|i| match weight {
            PlWeight::EstimatedDensity => kfit.density[i],
            PlWeight::Unit => 1.0,
            PlWeight::Custom(f) => {
                let wi: Vec<f64> = w.row(i).iter().copied().collect();
                f(&wi)
            }
        }),
    );
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("weight function returned a non-finite value".into()));
    }

    let z_centered = DMatrix::from_fn(n, dz, |i, c| z[(i, c)] - kfit.regression[(i, 1 + c)]);
    let mut s_hat = DMatrix::zeros(dz, dz);
    let mut rhs = DVector::zeros(dz);
    for i in (0..n).filter(|&i| included[i]) {
        let w2 = weights[i] * weights[i];
        let zc = z_centered.row(i).transpose();
        s_hat += &zc * zc.transpose() * w2;
        rhs += &zc * (w2 * (data.y()[i] - kfit.regression[(i, 0)]));
    }
    s_hat /= n_eff as f64;
    rhs /= n_eff as f64;
    let s_hat_inv = inverse_spd(&s_hat).ok_or(Error::Singular("S matrix of the partial-linear fit"))?;
    let theta_hat = &s_hat_inv * rhs;

    let adjusted_residuals = DVector::from_fn(n, |i, _| {
        let lin: f64 = (0..dz).map(|c| theta_hat[c] * z_centered[(i, c)]).sum();
        data.y()[i] - kfit.regression[(i, 0)] - lin
    });

    Ok(PartialLinearFit {
        theta_hat,
        s_hat,
        s_hat_inv,
        kernel: kfit,
        weights,
        z_centered,
        adjusted_residuals,
        included,
    })
}
