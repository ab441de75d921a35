//! Test statistics on a marked process and bootstrap p-values.

use serde::Serialize;

use crate::el_core::{el_log_ratio, ExtReal, MarkVector, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::marked_process::MarkedProcessEval;

/// Value substituted for an infinite log ratio when integrating over the grid.
pub const DEFAULT_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElStatistics {
    pub ell_curve: Vec<ExtReal>,
    /// Supremum of the log-ratio curve.
    pub s_n: ExtReal,
    /// Integral of the (capped) log-ratio curve against the empirical measure.
    pub t_n: f64,
    /// Grid points where zero is outside the hull of the marks.
    pub degenerate_count: usize,
    /// Grid points skipped because `T(u)` is zero.
    pub zero_variance_count: usize,
    pub capped: bool,
}

/// `S_n = sup_u ell(u)` and `T_n = sum_u mass(u) ell(u)`.
pub fn el_statistics(mpe: &MarkedProcessEval, cap: f64) -> Result<ElStatistics> {
    if !(cap > 0.0) {
        return Err(Error::InvalidInput(format!("cap must be positive, got {cap}")));
    }
    let mut ell_curve = Vec::with_capacity(mpe.grid_len());
    let mut s_n = ExtReal::Finite(0.0);
    let mut t_n = 0.0;
    let mut degenerate_count = 0;
    let mut zero_variance_count = 0;
    for (u, col) in mpe.marks.column_iter().enumerate() {
        if !mpe.is_informative(u) {
            zero_variance_count += 1;
            ell_curve.push(ExtReal::Finite(0.0));
            continue;
        }
        let marks = MarkVector::new(col.iter().copied().collect())?;
        let ell = el_log_ratio(&marks, DEFAULT_TOL)?.log_ratio();
        match ell {
            ExtReal::Finite(v) => t_n += mpe.grid_weights[u] * v,
            ExtReal::PosInfinity => {
                degenerate_count += 1;
                t_n += mpe.grid_weights[u] * cap;
            }
        }
        s_n = s_n.max(ell);
        ell_curve.push(ell);
    }
    Ok(ElStatistics {
        ell_curve,
        s_n,
        t_n,
        degenerate_count,
        zero_variance_count,
        capped: degenerate_count > 0,
    })
}

/// Kolmogorov-Smirnov and Cramer-von Mises functionals of `R_n` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrfStatistics {
    pub ks: f64,
    pub cvm: f64,
}

pub fn irf_statistics(mpe: &MarkedProcessEval) -> IrfStatistics {
    irf_from_process(&mpe.process(), &mpe.grid_weights)
}

pub(crate) fn irf_from_process(process: &[f64], grid_weights: &[f64]) -> IrfStatistics {
    let ks = process.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let cvm = process.iter().zip(grid_weights).map(|(r, w)| w * r * r).sum();
    IrfStatistics { ks, cvm }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub observed: f64,
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
    pub replicates: usize,
}

/// Bootstrap p-value `(1 + #{b : rep_b >= observed}) / (B + 1)`; rejects
/// when `p <= level`.
pub fn decide(observed: f64, bootstrap_reps: &[f64], level: f64) -> Result<Decision> {
    if bootstrap_reps.is_empty() {
        return Err(Error::InvalidInput("no bootstrap replicates".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    if observed.is_nan() {
        return Err(Error::InvalidInput("observed statistic is NaN".into()));
    }
    let exceed = bootstrap_reps.iter().filter(|&&r| r >= observed).count();
    let p_value = (1 + exceed) as f64 / (bootstrap_reps.len() + 1) as f64;
    Ok(Decision {
        observed,
        p_value,
        reject: p_value <= level,
        level,
        replicates: bootstrap_reps.len(),
    })
}
