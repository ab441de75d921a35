//! Scalar empirical likelihood for a single moment constraint.
//!
//! Given marks `A_1..A_n`, the log ratio is
//! `-2 log max { prod(n w_i) : w_i >= 0, sum w_i = 1, sum w_i A_i = 0 }`.
//! When zero lies strictly inside the range of the marks the maximizer is
//! `w_i = 1 / (n (1 + lambda A_i))` where `lambda` is the unique root of
//! `sum A_i / (1 + lambda A_i) = 0` on `(-1/max A, -1/min A)`. Otherwise the
//! constraint set is empty and the ratio is reported as [`ExtReal::PosInfinity`].

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 200;

/// A real number or `+infinity`, kept as a separate variant so that an
/// empty constraint set is never confused with floating-point overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Lossy view as `f64`, mapping the sentinel to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
            _ => ExtReal::PosInfinity,
        }
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInfinity => f.write_str("+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => serializer.serialize_f64(*v),
            ExtReal::PosInfinity => serializer.serialize_str("+inf"),
        }
    }
}

/// Marks `A_i`, one per observation. Nonempty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkVector(Vec<f64>);

impl MarkVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("mark vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("mark {i} is not finite")));
        }
        Ok(MarkVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Outcome of [`el_log_ratio`].
#[derive(Debug, Clone, PartialEq)]
pub enum ElEvaluation {
    Finite {
        log_ratio: f64,
        lambda: f64,
        weights: Vec<f64>,
    },
    /// Zero lies outside the open convex hull of the marks.
    Degenerate,
}

impl ElEvaluation {
    pub fn log_ratio(&self) -> ExtReal {
        match self {
            ElEvaluation::Finite { log_ratio, .. } => ExtReal::Finite(*log_ratio),
            ElEvaluation::Degenerate => ExtReal::PosInfinity,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            ElEvaluation::Finite { lambda, .. } => Some(*lambda),
            ElEvaluation::Degenerate => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            ElEvaluation::Finite { weights, .. } => Some(weights),
            ElEvaluation::Degenerate => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, ElEvaluation::Degenerate)
    }
}

fn extremes(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Solves `sum A_i / (1 + lambda A_i) = 0` for the Lagrange multiplier.
///
/// The marks are rescaled by `max |A_i|` before iterating, so `tol` bounds
/// the constraint residual relative to that scale (times `max(1, |lambda|)`). Iteration is Newton's
/// method safeguarded by a shrinking bracket; a step that leaves the
/// bracket is replaced by bisection.
pub fn solve_lambda(marks: &MarkVector, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let values = marks.values();
    let (min, max) = extremes(values);
    if !(min < 0.0 && max > 0.0) {
        return Err(Error::HullViolation);
    }
    let scale = max.max(-min);
    let scaled: Vec<f64> = values.iter().map(|a| a / scale).collect();
    let (smin, smax) = (min / scale, max / scale);

    // open admissible interval for the scaled problem
    let mut lo = -1.0 / smax;
    let mut hi = -1.0 / smin;

    let eval = |lambda: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for &a in &scaled {
            let r = a / (1.0 + lambda * a);
            f += r;
            df -= r * r;
        }
        (f, df)
    };

    let mut lambda = 0.0;
    for _ in 0..MAX_ITER {
        let (f, df) = eval(lambda);
        // sum_i 1/(1 + lambda a_i) = n - lambda f, so scaling by lambda keeps the weights normalized
        if f.abs() * lambda.abs().max(1.0) <= tol {
            return Ok(lambda / scale);
        }
        // f is strictly decreasing, so its sign tells which side the root is on
        if f > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - f / df;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == lambda || hi - lo <= 4.0 * f64::EPSILON * lambda.abs().max(1.0) {
            // bracket has collapsed to floating-point resolution
            return Ok(next / scale);
        }
        lambda = next;
    }
    Err(Error::NonConvergence {
        what: "Lagrange multiplier",
        iterations: MAX_ITER,
    })
}

/// Log empirical-likelihood ratio `ell = -2 log EL` for one mark vector.
pub fn el_log_ratio(marks: &MarkVector, tol: f64) -> Result<ElEvaluation> {
    let values = marks.values();
    let n = values.len() as f64;
    if values.iter().all(|&a| a == 0.0) {
        return Ok(ElEvaluation::Finite {
            log_ratio: 0.0,
            lambda: 0.0,
            weights: vec![1.0 / n; values.len()],
        });
    }
    let (min, max) = extremes(values);
    if !(min < 0.0 && max > 0.0) {
        return Ok(ElEvaluation::Degenerate);
    }
    let lambda = solve_lambda(marks, tol)?;
    let mut log_ratio = 0.0;
    let weights = values
        .iter()
        .map(|&a| {
            let t = lambda * a;
            log_ratio += t.ln_1p();
            1.0 / (n * (1.0 + t))
        })
        .collect();
    Ok(ElEvaluation::Finite {
        log_ratio: (2.0 * log_ratio).max(0.0),
        lambda,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marks(v: &[f64]) -> MarkVector {
        MarkVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_marks_give_zero_lambda() {
        assert_eq!(solve_lambda(&marks(&[-1.0, 1.0]), DEFAULT_TOL).unwrap(), 0.0);
        assert_eq!(solve_lambda(&marks(&[-1.0, 0.5, 0.5]), DEFAULT_TOL).unwrap(), 0.0);
    }

    #[test]
    fn two_point_lambda() {
        // -1/(1 - l) + 2/(1 + 2l) = 0  =>  l = 1/4
        let l = solve_lambda(&marks(&[-1.0, 2.0]), DEFAULT_TOL).unwrap();
        assert!((l - 0.25).abs() < 1e-12, "{l}");
    }

    #[test]
    fn two_point_log_ratio_and_weights() {
        let ev = el_log_ratio(&marks(&[-1.0, 2.0]), DEFAULT_TOL).unwrap();
        let expected = -2.0 * (8.0f64 / 9.0).ln();
        assert!((ev.log_ratio().to_f64() - expected).abs() < 1e-12);
        assert!((expected - 0.23557).abs() < 1e-5);
        let w = ev.weights().unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_marks_are_a_perfect_fit() {
        let ev = el_log_ratio(&marks(&[0.0, 0.0, 0.0]), DEFAULT_TOL).unwrap();
        assert_eq!(ev.log_ratio(), ExtReal::Finite(0.0));
        assert_eq!(ev.lambda(), Some(0.0));
        assert_eq!(ev.weights().unwrap(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn same_sign_marks_are_degenerate() {
        let ev = el_log_ratio(&marks(&[1.0, 2.0, 3.0]), DEFAULT_TOL).unwrap();
        assert!(ev.is_degenerate());
        assert_eq!(ev.log_ratio(), ExtReal::PosInfinity);
        assert!(ev.lambda().is_none() && ev.weights().is_none());
        assert_eq!(
            solve_lambda(&marks(&[1.0, 2.0, 3.0]), DEFAULT_TOL),
            Err(Error::HullViolation)
        );
    }

    #[test]
    fn zeros_do_not_rescue_the_hull() {
        let ev = el_log_ratio(&marks(&[0.0, 0.0, 1.5]), DEFAULT_TOL).unwrap();
        assert!(ev.is_degenerate());
        let ev = el_log_ratio(&marks(&[0.0, -1.0, 0.0, 2.0]), DEFAULT_TOL).unwrap();
        assert!(!ev.is_degenerate());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MarkVector::new(vec![]).is_err());
        assert!(MarkVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(solve_lambda(&marks(&[-1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn extreme_skew_converges() {
        // root sits very close to the lower end of the admissible interval
        let mut v = vec![1e-6; 50];
        v.push(-1.0);
        let ev = el_log_ratio(&marks(&v), DEFAULT_TOL).unwrap();
        let w = ev.weights().unwrap();
        let s: f64 = w.iter().sum();
        let c: f64 = w.iter().zip(&v).map(|(w, a)| w * a).sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(c.abs() < 1e-9);
        assert!(w.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn ext_real_ordering_and_display() {
        assert_eq!(ExtReal::Finite(1.0).max(ExtReal::Finite(2.0)), ExtReal::Finite(2.0));
        assert_eq!(ExtReal::Finite(1.0).max(ExtReal::PosInfinity), ExtReal::PosInfinity);
        assert_eq!(ExtReal::PosInfinity.to_string(), "+inf");
    }
}
