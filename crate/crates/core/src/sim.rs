//! Monte Carlo rejection-rate studies for the one-covariate regression
//! designs and the binomial-response designs.

use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::bootstrap::{
    multiplier_replicates, wild_bootstrap_parametric, MultiplierConfig, MultiplierDistribution,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::marked_process::{build_glm, build_parametric, IndexSetRule, MarkedProcessEval};
use crate::model_null::{fit_binomial_logistic, fit_least_squares, logistic, Polynomial};
use crate::rng::derive_seed;
use crate::testkit::{decide, el_statistics, irf_statistics, DEFAULT_CAP};

/// Share of Monte Carlo replicates allowed to fail before a study aborts.
pub const STUDY_FAILURE_LIMIT: f64 = 0.02;

pub const GLM_TRIALS: u32 = 15;
pub const GLM_BETA: [f64; 3] = [1.0, 2.0, 0.5];

/// Deviation `d(x)` added to the linear null.
pub fn deviation(code: u8, x: f64) -> f64 {
    match code {
        0 => 0.0,
        1 => x * x,
        2 => 0.3 * x * x.exp(),
        3 => 0.3 * (4.0 * std::f64::consts::PI * x).sin(),
        4 => {
            if x <= 0.5 {
                0.4 * x
            } else {
                -0.4 * (1.0 - x)
            }
        }
        _ => f64::NAN,
    }
}

/// Error standard deviation `sigma(x)`.
pub fn sigma(code: u8, x: f64) -> f64 {
    match code {
        1 => 0.25,
        2 => 0.5 * x,
        3 => 0.125 * (2.0 - x),
        _ => f64::NAN,
    }
}

/// `Y = X + d(X) + sigma(X) eps` with `X ~ U[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ScenarioP {
    pub n: usize,
    pub d_code: u8,
    pub sigma_code: u8,
}

impl ScenarioP {
    pub fn new(n: usize, d_code: u8, sigma_code: u8) -> Result<Self> {
        if d_code > 4 {
            return Err(Error::InvalidInput(format!("d code must be 0..4, got {d_code}")));
        }
        if !(1..=3).contains(&sigma_code) {
            return Err(Error::InvalidInput(format!("sigma code must be 1..3, got {sigma_code}")));
        }
        if n < 4 {
            return Err(Error::InvalidInput(format!("sample size {n} is too small")));
        }
        Ok(ScenarioP { n, d_code, sigma_code })
    }

    pub fn regression(&self, x: f64) -> f64 {
        x + deviation(self.d_code, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmModel {
    Null,
    Probit,
    Quadratic,
}

impl GlmModel {
    pub fn name(self) -> &'static str {
        match self {
            GlmModel::Null => "Null",
            GlmModel::Probit => "Probit",
            GlmModel::Quadratic => "Quadratic",
        }
    }

    /// Success probability at a covariate vector of length 3.
    pub fn probability(self, x: &[f64]) -> f64 {
        let index: f64 = x.iter().zip(GLM_BETA).map(|(a, b)| a * b).sum();
        match self {
            GlmModel::Null => logistic(index),
            GlmModel::Probit => normal_cdf(index),
            GlmModel::Quadratic => logistic(x[0] + 2.0 * x[1] + 0.25 * (x[1] + 1.0).powi(2)),
        }
    }
}

impl std::str::FromStr for GlmModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "null" => Ok(GlmModel::Null),
            "probit" => Ok(GlmModel::Probit),
            "quadratic" => Ok(GlmModel::Quadratic),
            other => Err(Error::InvalidInput(format!("unknown binomial model '{other}'"))),
        }
    }
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// Binomial responses with 15 trials and covariates uniform on
/// `[-1, 1] x [-1, 1] x [0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ScenarioGlm {
    pub n: usize,
    pub model: GlmModel,
}

impl ScenarioGlm {
    pub fn new(n: usize, model: GlmModel) -> Result<Self> {
        if n < 10 {
            return Err(Error::InvalidInput(format!("sample size {n} is too small")));
        }
        Ok(ScenarioGlm { n, model })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Scenario {
    Parametric(ScenarioP),
    Glm(ScenarioGlm),
}

impl Scenario {
    pub fn n(&self) -> usize {
        match self {
            Scenario::Parametric(s) => s.n,
            Scenario::Glm(s) => s.n,
        }
    }

    /// Content key; seeds depend on what a scenario is, not where it sits in a list.
    fn key(&self) -> u64 {
        match self {
            Scenario::Parametric(s) => {
                (1 << 60) | (u64::from(s.d_code) << 52) | (u64::from(s.sigma_code) << 44) | s.n as u64
            }
            Scenario::Glm(s) => {
                let m = match s.model {
                    GlmModel::Null => 0u64,
                    GlmModel::Probit => 1,
                    GlmModel::Quadratic => 2,
                };
                (2 << 60) | (m << 52) | s.n as u64
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Parametric(s) => write!(f, "sigma={} d={} n={}", s.sigma_code, s.d_code, s.n),
            Scenario::Glm(s) => write!(f, "model={} n={}", s.model.name(), s.n),
        }
    }
}

pub fn generate_parametric(sc: &ScenarioP, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let x: f64 = rng.random();
        let eps: f64 = StandardNormal.sample(&mut rng);
        pairs.push((x, sc.regression(x) + sigma(sc.sigma_code, x) * eps));
    }
    Dataset::from_pairs(&pairs)
}

pub fn generate_glm(sc: &ScenarioGlm, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sc.n);
    let mut y = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let x = vec![
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(0.0..=2.0),
        ];
        let p = sc.model.probability(&x);
        let draw = Binomial::new(u64::from(GLM_TRIALS), p)
            .map_err(|e| Error::InvalidInput(format!("binomial law: {e}")))?
            .sample(&mut rng);
        rows.push(x);
        y.push(draw as f64);
    }
    Dataset::from_rows(&rows, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TestKind {
    #[serde(rename = "IRF-KS")]
    IrfKs,
    #[serde(rename = "IRF-CVM")]
    IrfCvm,
    #[serde(rename = "EL-KS")]
    ElKs,
    #[serde(rename = "EL-CVM")]
    ElCvm,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::IrfKs, TestKind::IrfCvm, TestKind::ElKs, TestKind::ElCvm];

    pub fn label(self) -> &'static str {
        match self {
            TestKind::IrfKs => "IRF-KS",
            TestKind::IrfCvm => "IRF-CVM",
            TestKind::ElKs => "EL-KS",
            TestKind::ElCvm => "EL-CVM",
        }
    }

    pub fn is_el(self) -> bool {
        matches!(self, TestKind::ElKs | TestKind::ElCvm)
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "IRF-KS" => Ok(TestKind::IrfKs),
            "IRF-CVM" => Ok(TestKind::IrfCvm),
            "EL-KS" => Ok(TestKind::ElKs),
            "EL-CVM" => Ok(TestKind::ElCvm),
            other => Err(Error::InvalidInput(format!("unknown test '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 1000 Monte Carlo samples, 500 bootstrap replicates.
    Desk,
    /// 10000 Monte Carlo samples, 5000 bootstrap replicates.
    Paper,
}

impl Scale {
    pub fn reps(self) -> usize {
        match self {
            Scale::Desk => 1000,
            Scale::Paper => 10_000,
        }
    }

    pub fn bootstrap(self) -> usize {
        match self {
            Scale::Desk => 500,
            Scale::Paper => 5000,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" | "full" => Ok(Scale::Paper),
            other => Err(Error::InvalidInput(format!("unknown scale '{other}'"))),
        }
    }
}

/// Pivot for the binomial designs, on the scale of the fitted index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmPivot {
    /// Sample median of the fitted index.
    Median,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub reps: usize,
    pub bootstrap: usize,
    pub level: f64,
    pub seed: u64,
    pub tests: Vec<TestKind>,
    /// Multiplier law for the empirical-likelihood calibration.
    pub multiplier: MultiplierDistribution,
    /// Multiplier law for the wild bootstrap of the residual-process tests.
    pub wild_multiplier: MultiplierDistribution,
    pub parametric_pivot: f64,
    pub glm_pivot: GlmPivot,
    /// Pivot of the residual-process baseline; `None` accumulates left to right.
    pub irf_pivot: Option<f64>,
}

impl StudyConfig {
    pub fn new(scale: Scale, seed: u64) -> Self {
        StudyConfig {
            reps: scale.reps(),
            bootstrap: scale.bootstrap(),
            level: 0.05,
            seed,
            tests: TestKind::ALL.to_vec(),
            multiplier: MultiplierDistribution::Rademacher,
            wild_multiplier: MultiplierDistribution::Mammen,
            parametric_pivot: 0.5,
            glm_pivot: GlmPivot::Median,
            irf_pivot: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.bootstrap == 0 {
            return Err(Error::InvalidInput("reps and bootstrap must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidInput("no tests selected".into()));
        }
        Ok(())
    }
}

/// One cell of a rejection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub scenario: Scenario,
    pub test: TestKind,
    /// Percentage of completed samples with `p <= level`.
    pub rejection_pct: f64,
    /// Monte Carlo standard error of the percentage.
    pub mc_se_pct: f64,
    pub completed: usize,
    pub failed: usize,
}

fn el_decisions(
    mpe: &MarkedProcessEval,
    cfg: &StudyConfig,
    seed: u64,
    out: &mut Vec<(TestKind, bool)>,
) -> Result<()> {
    let wanted: Vec<TestKind> = cfg.tests.iter().copied().filter(|t| t.is_el()).collect();
    if wanted.is_empty() {
        return Ok(());
    }
    let stats = el_statistics(mpe, DEFAULT_CAP)?;
    let mcfg = MultiplierConfig::new(cfg.bootstrap, cfg.multiplier, seed)?;
    let reps = multiplier_replicates(mpe, &mcfg)?;
    for t in wanted {
        let d = match t {
            TestKind::ElKs => decide(stats.s_n.to_f64(), &reps.sup, cfg.level)?,
            _ => decide(stats.t_n, &reps.integral, cfg.level)?,
        };
        out.push((t, d.reject));
    }
    Ok(())
}

/// Reject flags for every requested test on one simulated sample.
fn one_sample(scenario: &Scenario, cfg: &StudyConfig, rep: usize) -> Result<Vec<(TestKind, bool)>> {
    let key = scenario.key();
    let data_seed = derive_seed(cfg.seed, &[key, rep as u64, 0]);
    let el_seed = derive_seed(cfg.seed, &[key, rep as u64, 1]);
    let wild_seed = derive_seed(cfg.seed, &[key, rep as u64, 2]);
    let mut out = Vec::with_capacity(cfg.tests.len());
    match scenario {
        Scenario::Parametric(sc) => {
            let data = generate_parametric(sc, data_seed)?;
            let model = Polynomial::through_origin();
            let fit = fit_least_squares(&data, &model, &[1.0])?;
            let rule = IndexSetRule::new(vec![cfg.parametric_pivot])?;
            let mpe = build_parametric(&fit, &data, &rule)?;
            el_decisions(&mpe, cfg, el_seed, &mut out)?;

            let irf: Vec<TestKind> = cfg.tests.iter().copied().filter(|t| !t.is_el()).collect();
            if !irf.is_empty() {
                let irf_rule = match cfg.irf_pivot {
                    Some(a) => IndexSetRule::new(vec![a])?,
                    None => IndexSetRule::classical(1),
                };
                let irf_mpe = build_parametric(&fit, &data, &irf_rule)?;
                let observed = irf_statistics(&irf_mpe);
                let wcfg = MultiplierConfig::new(cfg.bootstrap, cfg.wild_multiplier, wild_seed)?;
                let wild = wild_bootstrap_parametric(&data, &fit, &model, &irf_rule, &wcfg)?;
                for t in irf {
                    let d = match t {
                        TestKind::IrfKs => decide(observed.ks, &wild.ks, cfg.level)?,
                        _ => decide(observed.cvm, &wild.cvm, cfg.level)?,
                    };
                    out.push((t, d.reject));
                }
            }
        }
        Scenario::Glm(sc) => {
            let data = generate_glm(sc, data_seed)?;
            let fit = fit_binomial_logistic(&data, GLM_TRIALS, false)?;
            let rule = match cfg.glm_pivot {
                GlmPivot::Median => {
                    IndexSetRule::medians(&DMatrix::from_column_slice(fit.index.len(), 1, fit.index.as_slice()))
                }
                GlmPivot::Value(a) => IndexSetRule::new(vec![a])?,
            };
            let mpe = build_glm(&fit, &rule)?;
            el_decisions(&mpe, cfg, el_seed, &mut out)?;
        }
    }
    Ok(out)
}

/// Rejection percentages for each scenario and applicable test. The
/// residual-process baselines are reported for the one-covariate designs only.
pub fn run_study(scenarios: &[Scenario], cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for scenario in scenarios {
        let tests: Vec<TestKind> = {
            let mut t: Vec<TestKind> = cfg
                .tests
                .iter()
                .copied()
                .filter(|t| t.is_el() || matches!(scenario, Scenario::Parametric(_)))
                .collect();
            t.sort();
            t.dedup();
            t
        };
        if tests.is_empty() {
            continue;
        }
        let local = StudyConfig {
            tests: tests.clone(),
            ..cfg.clone()
        };
        let outcomes: Vec<Option<Vec<(TestKind, bool)>>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| one_sample(scenario, &local, rep).ok())
            .collect();
        let failed = outcomes.iter().filter(|o| o.is_none()).count();
        if failed as f64 > STUDY_FAILURE_LIMIT * cfg.reps as f64 {
            return Err(Error::TooManyFailures {
                what: "Monte Carlo samples",
                failed,
                total: cfg.reps,
                limit_pct: STUDY_FAILURE_LIMIT * 100.0,
            });
        }
        let completed = cfg.reps - failed;
        for t in tests {
            let rejections = outcomes
                .iter()
                .flatten()
                .filter(|o| o.iter().any(|&(k, r)| k == t && r))
                .count();
            let p = if completed > 0 {
                rejections as f64 / completed as f64
            } else {
                f64::NAN
            };
            rows.push(StudyRow {
                scenario: *scenario,
                test: t,
                rejection_pct: 100.0 * p,
                mc_se_pct: 100.0 * (p * (1.0 - p) / completed as f64).sqrt(),
                completed,
                failed,
            });
        }
    }
    Ok(rows)
}

/// Rows of the homoscedastic/heteroscedastic tables for one sigma code.
pub fn parametric_table(sigma_code: u8) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for d in 0..=4 {
        for n in [50, 100] {
            out.push(Scenario::Parametric(ScenarioP::new(n, d, sigma_code)?));
        }
    }
    Ok(out)
}

pub fn glm_table() -> Vec<Scenario> {
    let mut out = Vec::new();
    for model in [GlmModel::Null, GlmModel::Probit, GlmModel::Quadratic] {
        for n in [50, 100, 500] {
            out.push(Scenario::Glm(ScenarioGlm { n, model }));
        }
    }
    out
}

/// Named predefined tables `table1`..`table4`.
pub fn predefined(name: &str) -> Result<Vec<Scenario>> {
    match name {
        "table1" => parametric_table(1),
        "table2" => parametric_table(2),
        "table3" => parametric_table(3),
        "table4" => Ok(glm_table()),
        other => Err(Error::InvalidInput(format!("unknown table '{other}'"))),
    }
}

/// Aligned text layout: one line per scenario, one column per test, each
/// cell `pct (se)`.
pub fn format_table(rows: &[StudyRow]) -> String {
    let mut tests: Vec<TestKind> = rows.iter().map(|r| r.test).collect();
    tests.sort();
    tests.dedup();
    let mut scenarios: Vec<Scenario> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario);
        }
    }
    let mut out = String::new();
    let mut last_header = None;
    for sc in scenarios {
        let is_glm = matches!(sc, Scenario::Glm(_));
        if last_header != Some(is_glm) {
            if last_header.is_some() {
                out.push('\n');
            }
            if is_glm {
                let _ = write!(out, "{:<10}{:>6}", "Model", "n");
            } else {
                let _ = write!(out, "{:>5}{:>3}{:>6}", "sigma", "d", "n");
            }
            for t in &tests {
                let _ = write!(out, "{:>17}", t.label());
            }
            out.push('\n');
            last_header = Some(is_glm);
        }
        match sc {
            Scenario::Parametric(s) => {
                let _ = write!(out, "{:>5}{:>3}{:>6}", s.sigma_code, s.d_code, s.n);
            }
            Scenario::Glm(s) => {
                let _ = write!(out, "{:<10}{:>6}", s.model.name(), s.n);
            }
        }
        for t in &tests {
            match rows.iter().find(|r| r.scenario == sc && r.test == *t) {
                Some(r) => {
                    let cell = format!("{:.2} ({:.2})", r.rejection_pct, r.mc_se_pct);
                    let _ = write!(out, "{cell:>17}");
                }
                None => {
                    let _ = write!(out, "{:>17}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
