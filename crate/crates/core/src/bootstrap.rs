//! Bootstrap calibration.
//!
//! The empirical-likelihood statistics are calibrated by perturbing the
//! frozen scores `Q_i(u)` with i.i.d. bounded multipliers. The residual
//! process baseline uses a wild bootstrap that regenerates responses and
//! refits the parametric null in every replicate.
//!
//! Replicate `b` always draws its multipliers from ChaCha stream `b` under
//! the configured seed, so the output does not depend on thread count or
//! scheduling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::marked_process::{empirical_grid, IndexSetRule, MarkedProcessEval};
use crate::model_null::{least_squares_theta, ParametricFit, RegressionFunction};
use crate::rng::stream_rng;
use crate::testkit::irf_from_process;

/// Replicates are processed in blocks of this many columns so memory stays
/// bounded at full-scale replicate counts.
const BLOCK: usize = 256;

/// Maximum share of wild-bootstrap replicates allowed to fail refitting.
pub const WILD_FAILURE_LIMIT: f64 = 0.01;

/// Multiplier laws with mean 0, variance 1, and bounded support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierDistribution {
    /// `+1` or `-1` with probability 1/2 each.
    #[default]
    Rademacher,
    /// Mammen's golden-section two-point law.
    Mammen,
}

impl MultiplierDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            MultiplierDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MultiplierDistribution::Mammen => {
                let s5 = 5f64.sqrt();
                let p_low = (s5 + 1.0) / (2.0 * s5);
                if rng.random::<f64>() < p_low {
                    (1.0 - s5) / 2.0
                } else {
                    (1.0 + s5) / 2.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MultiplierDistribution::Rademacher => "rademacher",
            MultiplierDistribution::Mammen => "mammen",
        }
    }
}

impl std::str::FromStr for MultiplierDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(MultiplierDistribution::Rademacher),
            "mammen" | "mammen_two_point" | "mammen-two-point" => Ok(MultiplierDistribution::Mammen),
            other => Err(Error::InvalidInput(format!("unknown multiplier '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MultiplierConfig {
    pub replicates: usize,
    pub distribution: MultiplierDistribution,
    pub seed: u64,
}

impl MultiplierConfig {
    pub fn new(replicates: usize, distribution: MultiplierDistribution, seed: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::InvalidInput("need at least one bootstrap replicate".into()));
        }
        Ok(MultiplierConfig {
            replicates,
            distribution,
            seed,
        })
    }

    /// Multipliers `V_1..V_n` of replicate `b`.
    pub fn draws(&self, n: usize, b: usize) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, b as u64);
        (0..n).map(|_| self.distribution.sample(&mut rng)).collect()
    }

    /// `n x len` matrix whose column `k` holds the multipliers of replicate `start + k`.
    fn block(&self, n: usize, start: usize, len: usize) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (start..start + len)
            .into_par_iter()
            .map(|b| self.draws(n, b))
            .collect();
        DMatrix::from_fn(n, len, |i, k| cols[k][i])
    }
}

/// Bootstrap copies of the sup and integral statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElReplicates {
    pub sup: Vec<f64>,
    pub integral: Vec<f64>,
}

fn informative_columns(mpe: &MarkedProcessEval) -> Result<Vec<usize>> {
    let cols: Vec<usize> = (0..mpe.grid_len()).filter(|&u| mpe.is_informative(u)).collect();
    if cols.is_empty() {
        return Err(Error::AllDegenerateVariance);
    }
    Ok(cols)
}

fn accumulate_el(
    mpe: &MarkedProcessEval,
    cols: &[usize],
    multipliers: &DMatrix<f64>,
    out: &mut ElReplicates,
) {
    let scale = (mpe.n() as f64).sqrt();
    // R*(u) for every grid point and replicate: G x len
    let r = mpe.qscores.tr_mul(multipliers) / scale;
    for k in 0..multipliers.ncols() {
        let mut sup = 0.0f64;
        let mut integral = 0.0;
        for &u in cols {
            let v = r[(u, k)] * r[(u, k)] / mpe.variance[u];
            sup = sup.max(v);
            integral += mpe.grid_weights[u] * v;
        }
        out.sup.push(sup);
        out.integral.push(integral);
    }
}

/// Multiplier bootstrap `R*(u) = n^-1/2 sum_i Q_i(u) V_i` with
/// `S* = sup_u R*(u)^2 / T(u)` and `T* = sum_u mass(u) R*(u)^2 / T(u)`.
/// Grid points with zero `T(u)` are skipped, matching the observed statistics.
pub fn multiplier_replicates(mpe: &MarkedProcessEval, cfg: &MultiplierConfig) -> Result<ElReplicates> {
    let cols = informative_columns(mpe)?;
    let mut out = ElReplicates {
        sup: Vec::with_capacity(cfg.replicates),
        integral: Vec::with_capacity(cfg.replicates),
    };
    let mut start = 0;
    while start < cfg.replicates {
        let len = BLOCK.min(cfg.replicates - start);
        let v = cfg.block(mpe.n(), start, len);
        accumulate_el(mpe, &cols, &v, &mut out);
        start += len;
    }
    Ok(out)
}

/// Same as [`multiplier_replicates`] with caller-supplied multipliers, one
/// replicate per column of `multipliers` (`n x B`).
pub fn replicates_from_multipliers(
    mpe: &MarkedProcessEval,
    multipliers: &DMatrix<f64>,
) -> Result<ElReplicates> {
    if multipliers.nrows() != mpe.n() || multipliers.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "multiplier matrix must be {} x B",
            mpe.n()
        )));
    }
    let cols = informative_columns(mpe)?;
    let mut out = ElReplicates {
        sup: Vec::with_capacity(multipliers.ncols()),
        integral: Vec::with_capacity(multipliers.ncols()),
    };
    accumulate_el(mpe, &cols, multipliers, &mut out);
    Ok(out)
}

/// Wild-bootstrap copies of the residual-process statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WildReplicates {
    pub ks: Vec<f64>,
    pub cvm: Vec<f64>,
    pub failed: usize,
}

struct WildSetup {
    ind: DMatrix<f64>,
    grid_weights: Vec<f64>,
}

fn wild_setup(data: &Dataset, fit: &ParametricFit, rule: &IndexSetRule) -> Result<WildSetup> {
    if data.d() != 1 {
        return Err(Error::InvalidInput("wild bootstrap covers the one-covariate parametric family".into()));
    }
    if fit.residuals.len() != data.n() {
        return Err(Error::InvalidInput("fit and data differ in length".into()));
    }
    rule.check_sides(data.x())?;
    let (grid, grid_weights) = empirical_grid(data.x());
    Ok(WildSetup {
        ind: rule.indicator(data.x(), &grid),
        grid_weights,
    })
}

fn wild_one(
    data: &Dataset,
    fit: &ParametricFit,
    model: &dyn RegressionFunction,
    setup: &WildSetup,
    v: &[f64],
) -> Option<(f64, f64)> {
    let y_star = DVector::from_fn(data.n(), |i, _| fit.fitted[i] + fit.residuals[i] * v[i]);
    let theta = least_squares_theta(data.x(), &y_star, model, &fit.theta_hat).ok()?;
    let mut row = [0.0];
    let resid = DVector::from_fn(data.n(), |i, _| {
        row[0] = data.x()[(i, 0)];
        y_star[i] - model.value(&row, &theta)
    });
    let process = (&setup.ind * resid) / (data.n() as f64).sqrt();
    let st = irf_from_process(process.as_slice(), &setup.grid_weights);
    (st.ks.is_finite() && st.cvm.is_finite()).then_some((st.ks, st.cvm))
}

fn collect_wild(results: Vec<Option<(f64, f64)>>) -> Result<WildReplicates> {
    let total = results.len();
    let mut out = WildReplicates {
        ks: Vec::with_capacity(total),
        cvm: Vec::with_capacity(total),
        failed: 0,
    };
    for r in results {
        match r {
            Some((ks, cvm)) => {
                out.ks.push(ks);
                out.cvm.push(cvm);
            }
            None => out.failed += 1,
        }
    }
    if out.failed as f64 > WILD_FAILURE_LIMIT * total as f64 {
        return Err(Error::TooManyFailures {
            what: "wild bootstrap refits",
            failed: out.failed,
            total,
            limit_pct: WILD_FAILURE_LIMIT * 100.0,
        });
    }
    Ok(out)
}

/// Wild bootstrap for the parametric residual process: `Y*_i = gamma(X_i,
/// theta) + e_i V_i`, refit, rebuild `R*`, and record KS* and CvM*.
pub fn wild_bootstrap_parametric(
    data: &Dataset,
    fit: &ParametricFit,
    model: &dyn RegressionFunction,
    rule: &IndexSetRule,
    cfg: &MultiplierConfig,
) -> Result<WildReplicates> {
    let setup = wild_setup(data, fit, rule)?;
    let results: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| wild_one(data, fit, model, &setup, &cfg.draws(data.n(), b)))
        .collect();
    collect_wild(results)
}

/// Same as [`wild_bootstrap_parametric`] with caller-supplied multipliers
/// (`n x B`).
pub fn wild_from_multipliers(
    data: &Dataset,
    fit: &ParametricFit,
    model: &dyn RegressionFunction,
    rule: &IndexSetRule,
    multipliers: &DMatrix<f64>,
) -> Result<WildReplicates> {
    if multipliers.nrows() != data.n() || multipliers.ncols() == 0 {
        return Err(Error::InvalidInput(format!("multiplier matrix must be {} x B", data.n())));
    }
    let setup = wild_setup(data, fit, rule)?;
    let results = multipliers
        .column_iter()
        .map(|c| wild_one(data, fit, model, &setup, c.as_slice()))
        .collect();
    collect_wild(results)
}
