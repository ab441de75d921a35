use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Observations whose density estimate falls below this fraction of the
/// largest one are flagged and later left out of the marks.
pub const DENSITY_FLOOR: f64 = 1e-3;

/// Univariate even kernels integrating to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Biweight,
    Uniform,
    Gaussian,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Biweight => {
                if u.abs() <= 1.0 {
                    let t = 1.0 - u * u;
                    0.9375 * t * t
                } else {
                    0.0
                }
            }
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
            Kernel::Uniform => "uniform",
            Kernel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            "uniform" => Ok(Kernel::Uniform),
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Rule-of-thumb undersmoothing bandwidth `s_j * n^(-1/3)` for each column.
pub fn default_bandwidth(w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = w.nrows() as f64;
    w.column_iter()
        .enumerate()
        .map(|(j, col)| {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var > 0.0 {
                Ok(var.sqrt() * n.powf(-1.0 / 3.0))
            } else {
                Err(Error::InvalidInput(format!("W column {j} is constant")))
            }
        })
        .collect()
}

/// Unnormalized product-kernel matrix `K_ij = prod_k k((W_ik - W_jk) / h_k)`.
pub fn kernel_matrix(w: &DMatrix<f64>, h: &[f64], kernel: Kernel) -> DMatrix<f64> {
    let n = w.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..w.ncols())
                .map(|c| kernel.eval((w[(i, c)] - w[(j, c)]) / h[c]))
                .product();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Nadaraya-Watson estimates at the sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    pub kernel: Kernel,
    /// One bandwidth per `W` coordinate.
    pub bandwidth: Vec<f64>,
    /// `f_W(W_i)`.
    pub density: DVector<f64>,
    /// `n x k`, one column per target. `NaN` where the density is zero.
    pub regression: DMatrix<f64>,
    /// Density below [`DENSITY_FLOOR`] times the maximum.
    pub flagged: Vec<bool>,
}

impl KernelFit {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// First regression column, the conditional mean of `Y`.
    pub fn response_regression(&self) -> DVector<f64> {
        self.regression.column(0).into_owned()
    }
}

/// Kernel density of `W` and kernel regression of each target column on
/// `W`, both evaluated at `W_1..W_n`.
pub fn nadaraya_watson(
    w: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    h: &[f64],
    kernel: Kernel,
) -> Result<KernelFit> {
    let (n, dw) = w.shape();
    if h.len() != dw {
        return Err(Error::InvalidInput(format!(
            "{} bandwidths for {dw} W columns",
            h.len()
        )));
    }
    if h.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidInput("bandwidths must be positive".into()));
    }
    if targets.nrows() != n {
        return Err(Error::InvalidInput("targets and W differ in length".into()));
    }
    let kmat = kernel_matrix(w, h, kernel);
    let norm = n as f64 * h.iter().product::<f64>();
    let sums = kmat.column_sum();
    let density = sums.map(|s| s / norm);
    let weighted = &kmat * targets;
    let regression = DMatrix::from_fn(n, targets.ncols(), |i, c| {
        if sums[i] > 0.0 {
            weighted[(i, c)] / sums[i]
        } else {
            f64::NAN
        }
    });
    let max = density.max();
    let flagged = density.iter().map(|&f| f < DENSITY_FLOOR * max).collect();
    Ok(KernelFit {
        kernel,
        bandwidth: h.to_vec(),
        density,
        regression,
        flagged,
    })
}

/// Kernel fit of the variable-selection null `E(Y | X) = g(W)`.
pub fn fit_variable_selection(
    data: &Dataset,
    bandwidth: Option<&[f64]>,
    kernel: Kernel,
) -> Result<KernelFit> {
    let split = data.require_split()?;
    let w = data.columns(&split.w);
    let h = match bandwidth {
        Some(h) if h.len() == 1 => vec![h[0]; split.w.len()],
        Some(h) => h.to_vec(),
        None => default_bandwidth(&w)?,
    };
    let targets = DMatrix::from_column_slice(data.n(), 1, data.y().as_slice());
    nadaraya_watson(&w, &targets, &h, kernel)
}
