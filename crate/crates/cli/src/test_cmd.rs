//! `elgof test`: fit a null family to a data file and run the requested tests.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use elgof::bootstrap::{
    multiplier_replicates, wild_bootstrap_parametric, ElReplicates, MultiplierConfig, MultiplierDistribution,
};
use elgof::marked_process::{
    build_glm, build_parametric, build_partial_linear, build_variable_selection, IndexSetRule,
    MarkedProcessEval,
};
use elgof::model_null::{
    fit_binomial_logistic, fit_least_squares, fit_partial_linear, fit_variable_selection, Kernel,
    PlWeight, Polynomial, RegressionFunction,
};
use elgof::sim::TestKind;
use elgof::testkit::{decide, el_statistics, irf_statistics, Decision, ElStatistics, IrfStatistics};
use elgof::{Dataset, ExtReal};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::input::{read_table, Table};
use crate::OutputFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Parametric,
    Glm,
    #[value(alias = "variable_selection")]
    VariableSelection,
    #[value(alias = "partial_linear")]
    PartialLinear,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Parametric => "parametric",
            Family::Glm => "glm",
            Family::VariableSelection => "variable_selection",
            Family::PartialLinear => "partial_linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Density,
    Unit,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Delimited text file (comma or tab) with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub family: Family,
    /// Response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Covariate columns, comma separated. Defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Nonparametric covariates for the semiparametric families.
    #[arg(long, value_delimiter = ',')]
    pub w_cols: Vec<String>,
    /// Remaining covariates for the semiparametric families.
    #[arg(long, value_delimiter = ',')]
    pub z_cols: Vec<String>,
    /// Parametric regression function: linear, linear-through-origin, poly:K, or poly-origin:K.
    #[arg(long, default_value = "linear")]
    pub model: String,
    /// Binomial trials per observation (glm family).
    #[arg(long, default_value_t = 1)]
    pub trials: u32,
    /// Fit the logistic model without an intercept.
    #[arg(long)]
    pub no_intercept: bool,
    /// Tests to run: el-ks, el-cvm, irf-ks, irf-cvm.
    #[arg(long, value_delimiter = ',', default_value = "el-ks,el-cvm")]
    pub tests: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 500)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplier law for the empirical-likelihood bootstrap.
    #[arg(long, default_value = "rademacher")]
    pub multiplier: String,
    /// Multiplier law for the wild bootstrap of the residual-process tests.
    #[arg(long, default_value = "mammen")]
    pub wild_multiplier: String,
    /// Kernel bandwidth, one value or one per W column.
    #[arg(long, value_delimiter = ',')]
    pub bandwidth: Vec<f64>,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: String,
    /// Index-set pivot: "median", "classical", or one value per covariate
    /// (for glm, a value on the fitted-index scale).
    #[arg(long, default_value = "median", allow_hyphen_values = true)]
    pub pivot: String,
    /// Pivot for the residual-process tests; defaults to left-to-right accumulation.
    #[arg(long, default_value = "classical", allow_hyphen_values = true)]
    pub irf_pivot: String,
    /// Weight function for the partial-linear family.
    #[arg(long, value_enum, default_value = "density")]
    pub pl_weight: WeightChoice,
    /// Value used for infinite log ratios in the integral statistic.
    #[arg(long, default_value_t = elgof::testkit::DEFAULT_CAP)]
    pub cap: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
}

/// Effective configuration, echoed in every report.
#[derive(Debug, Serialize)]
struct ConfigRecord {
    record: &'static str,
    input: String,
    family: Family,
    response: String,
    covariates: Vec<String>,
    w_cols: Vec<String>,
    z_cols: Vec<String>,
    model: Option<String>,
    trials: Option<u32>,
    intercept: Option<bool>,
    tests: Vec<TestKind>,
    level: f64,
    bootstrap: usize,
    seed: u64,
    multiplier: &'static str,
    wild_multiplier: Option<&'static str>,
    kernel: Option<&'static str>,
    bandwidth: Option<Vec<f64>>,
    #[serde(serialize_with = "pivot_values")]
    pivot: Vec<f64>,
    #[serde(serialize_with = "optional_pivot_values")]
    irf_pivot: Option<Vec<f64>>,
    pl_weight: Option<WeightChoice>,
    cap: f64,
    n: usize,
}

/// The classical rule's pivot is written as the string "-inf".
fn pivot_values<S: serde::Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = serializer.serialize_seq(Some(values.len()))?;
    for &v in values {
        if v == f64::NEG_INFINITY {
            seq.serialize_element("-inf")?;
        } else {
            seq.serialize_element(&v)?;
        }
    }
    seq.end()
}

fn optional_pivot_values<S: serde::Serializer>(values: &Option<Vec<f64>>, serializer: S) -> Result<S::Ok, S::Error> {
    match values {
        Some(v) => pivot_values(v, serializer),
        None => serializer.serialize_none(),
    }
}

#[derive(Debug, Serialize)]
struct Parameter {
    name: String,
    value: f64,
}

#[derive(Debug, Serialize)]
struct FitRecord {
    record: &'static str,
    parameters: Vec<Parameter>,
    excluded: usize,
    iterations: Option<usize>,
}

#[derive(Debug, Serialize)]
struct StatisticsRecord {
    record: &'static str,
    s_n: ExtReal,
    t_n: f64,
    irf_ks: Option<f64>,
    irf_cvm: Option<f64>,
    grid_points: usize,
    degenerate_points: usize,
    zero_variance_points: usize,
    capped: bool,
}

#[derive(Debug, Serialize)]
struct DecisionRecord {
    record: &'static str,
    test: TestKind,
    statistic: f64,
    p_value: f64,
    reject: bool,
    level: f64,
    replicates: usize,
    failed_replicates: usize,
}

struct Report {
    config: ConfigRecord,
    fit: FitRecord,
    statistics: StatisticsRecord,
    decisions: Vec<DecisionRecord>,
}

fn parse_tests(raw: &[String]) -> CliResult<Vec<TestKind>> {
    let mut tests = Vec::new();
    for t in raw {
        let kind: TestKind = t.parse().map_err(|_| CliError::Config(format!("unknown test '{t}'")))?;
        if !tests.contains(&kind) {
            tests.push(kind);
        }
    }
    if tests.is_empty() {
        return Err(CliError::Config("no tests requested".into()));
    }
    Ok(tests)
}

fn parse_model(spec: &str) -> CliResult<Polynomial> {
    let bad = || CliError::Config(format!("unknown model '{spec}'"));
    let poly = match spec {
        "linear" => Polynomial::linear(),
        "linear-through-origin" | "origin" => Polynomial::through_origin(),
        other => {
            let (intercept, k) = if let Some(k) = other.strip_prefix("poly-origin:") {
                (false, k)
            } else if let Some(k) = other.strip_prefix("poly:") {
                (true, k)
            } else {
                return Err(bad());
            };
            let degree: usize = k.parse().map_err(|_| bad())?;
            Polynomial::new(degree, intercept)?
        }
    };
    Ok(poly)
}

/// `points` gives the coordinates the sets are built on.
fn parse_pivot(spec: &str, points: &DMatrix<f64>) -> CliResult<IndexSetRule> {
    match spec {
        "median" => Ok(IndexSetRule::medians(points)),
        "classical" | "-inf" => Ok(IndexSetRule::classical(points.ncols())),
        list => {
            let values: Vec<f64> = list
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    if v == "-inf" {
                        Ok(f64::NEG_INFINITY)
                    } else {
                        v.parse().map_err(|_| CliError::Config(format!("bad pivot value '{v}'")))
                    }
                })
                .collect::<CliResult<_>>()?;
            if values.len() != points.ncols() {
                return Err(CliError::Config(format!(
                    "pivot needs {} values, got {}",
                    points.ncols(),
                    values.len()
                )));
            }
            Ok(IndexSetRule::new(values)?)
        }
    }
}

fn matrix_of(table: &Table, names: &[String]) -> CliResult<DMatrix<f64>> {
    let cols: Vec<&[f64]> = names.iter().map(|c| table.column(c)).collect::<CliResult<_>>()?;
    Ok(DMatrix::from_fn(table.rows(), cols.len(), |i, j| cols[j][i]))
}

fn params(names: impl IntoIterator<Item = String>, values: &[f64]) -> Vec<Parameter> {
    names
        .into_iter()
        .zip(values)
        .map(|(name, &value)| Parameter { name, value })
        .collect()
}

fn decision(test: TestKind, d: Decision, failed: usize) -> DecisionRecord {
    DecisionRecord {
        record: "decision",
        test,
        statistic: d.observed,
        p_value: d.p_value,
        reject: d.reject,
        level: d.level,
        replicates: d.replicates,
        failed_replicates: failed,
    }
}

fn el_decisions(
    mpe: &MarkedProcessEval,
    stats: &ElStatistics,
    tests: &[TestKind],
    cfg: &MultiplierConfig,
    level: f64,
) -> CliResult<Vec<DecisionRecord>> {
    if !tests.iter().any(|t| t.is_el()) {
        return Ok(Vec::new());
    }
    // With no informative grid point every replicate is the empty max/sum,
    // so the counting p-value is 1.
    let reps = match multiplier_replicates(mpe, cfg) {
        Err(elgof::Error::AllDegenerateVariance) => ElReplicates {
            sup: vec![0.0; cfg.replicates],
            integral: vec![0.0; cfg.replicates],
        },
        other => other?,
    };
    let mut out = Vec::new();
    for &t in tests {
        match t {
            TestKind::ElKs => out.push(decision(t, decide(stats.s_n.to_f64(), &reps.sup, level)?, 0)),
            TestKind::ElCvm => out.push(decision(t, decide(stats.t_n, &reps.integral, level)?, 0)),
            _ => {}
        }
    }
    Ok(out)
}

fn run(args: &TestArgs) -> CliResult<Report> {
    let tests = parse_tests(&args.tests)?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Config(format!("level must lie in (0, 1), got {}", args.level)));
    }
    if args.bootstrap == 0 {
        return Err(CliError::Config("bootstrap must be at least 1".into()));
    }
    let multiplier: MultiplierDistribution = args.multiplier.parse()?;
    let wild_multiplier: MultiplierDistribution = args.wild_multiplier.parse()?;
    let kernel: Kernel = args.kernel.parse()?;
    let irf_requested = tests.iter().any(|t| !t.is_el());
    if irf_requested && args.family != Family::Parametric {
        return Err(CliError::Config("residual-process tests are available for the parametric family only".into()));
    }

    let table = read_table(&args.input)?;
    let y = DVector::from_column_slice(table.column(&args.response)?);
    let semiparametric = matches!(args.family, Family::VariableSelection | Family::PartialLinear);
    let (w_cols, z_cols) = (args.w_cols.clone(), args.z_cols.clone());
    let covariates: Vec<String> = if semiparametric {
        if w_cols.is_empty() || z_cols.is_empty() {
            return Err(CliError::Config("this family needs --w-cols and --z-cols".into()));
        }
        w_cols.iter().chain(&z_cols).cloned().collect()
    } else if args.covariates.is_empty() {
        table.headers.iter().filter(|h| **h != args.response).cloned().collect()
    } else {
        args.covariates.clone()
    };
    if covariates.is_empty() {
        return Err(CliError::Config("no covariate columns".into()));
    }
    if covariates.contains(&args.response) {
        return Err(CliError::Config("the response cannot also be a covariate".into()));
    }
    let x = matrix_of(&table, &covariates)?;
    let mut data = Dataset::new(x, y)?;
    if semiparametric {
        let nw = w_cols.len();
        data = data.with_split((0..nw).collect(), (nw..covariates.len()).collect())?;
    }
    let bandwidth = (!args.bandwidth.is_empty()).then(|| args.bandwidth.clone());
    let mcfg = MultiplierConfig::new(args.bootstrap, multiplier, args.seed)?;

    let mut config = ConfigRecord {
        record: "config",
        input: args.input.display().to_string(),
        family: args.family,
        response: args.response.clone(),
        covariates: covariates.clone(),
        w_cols: w_cols.clone(),
        z_cols: z_cols.clone(),
        model: None,
        trials: None,
        intercept: None,
        tests: tests.clone(),
        level: args.level,
        bootstrap: args.bootstrap,
        seed: args.seed,
        multiplier: multiplier.name(),
        wild_multiplier: None,
        kernel: None,
        bandwidth: None,
        pivot: Vec::new(),
        irf_pivot: None,
        pl_weight: None,
        cap: args.cap,
        n: data.n(),
    };

    let (mpe, fit, irf_parts) = match args.family {
        Family::Parametric => {
            if data.d() != 1 {
                return Err(CliError::Config(format!(
                    "parametric family takes one covariate, got {}",
                    data.d()
                )));
            }
            let model = parse_model(&args.model)?;
            config.model = Some(model.describe());
            let fit = fit_least_squares(&data, &model, &vec![0.0; model.n_params()])?;
            let rule = parse_pivot(&args.pivot, data.x())?;
            config.pivot = rule.pivots().to_vec();
            let mpe = build_parametric(&fit, &data, &rule)?;
            let names: Vec<String> = (0..fit.theta_hat.len()).map(|k| format!("theta{k}")).collect();
            let record = FitRecord {
                record: "fit",
                parameters: params(names, &fit.theta_hat),
                excluded: 0,
                iterations: None,
            };
            let irf = if irf_requested {
                let irf_rule = parse_pivot(&args.irf_pivot, data.x())?;
                config.irf_pivot = Some(irf_rule.pivots().to_vec());
                config.wild_multiplier = Some(wild_multiplier.name());
                let irf_mpe = build_parametric(&fit, &data, &irf_rule)?;
                let wcfg = MultiplierConfig::new(args.bootstrap, wild_multiplier, args.seed)?;
                let wild = wild_bootstrap_parametric(&data, &fit, &model, &irf_rule, &wcfg)?;
                Some((irf_statistics(&irf_mpe), wild))
            } else {
                None
            };
            (mpe, record, irf)
        }
        Family::Glm => {
            let intercept = !args.no_intercept;
            config.trials = Some(args.trials);
            config.intercept = Some(intercept);
            let fit = fit_binomial_logistic(&data, args.trials, intercept)?;
            let points = DMatrix::from_column_slice(fit.index.len(), 1, fit.index.as_slice());
            let rule = parse_pivot(&args.pivot, &points)?;
            config.pivot = rule.pivots().to_vec();
            let mpe = build_glm(&fit, &rule)?;
            let names = fit.alpha_hat.iter().map(|_| "intercept".to_string()).chain(covariates.iter().cloned());
            let values: Vec<f64> = fit.alpha_hat.iter().chain(&fit.beta_hat).copied().collect();
            let parameters = params(names, &values);
            let record = FitRecord {
                record: "fit",
                parameters,
                excluded: 0,
                iterations: Some(fit.iterations),
            };
            (mpe, record, None)
        }
        Family::VariableSelection => {
            config.kernel = Some(kernel.name());
            let kfit = fit_variable_selection(&data, bandwidth.as_deref(), kernel)?;
            config.bandwidth = Some(kfit.bandwidth.clone());
            let rule = parse_pivot(&args.pivot, data.x())?;
            config.pivot = rule.pivots().to_vec();
            let mpe = build_variable_selection(&kfit, &data, &rule)?;
            let record = FitRecord {
                record: "fit",
                parameters: Vec::new(),
                excluded: kfit.flagged_count(),
                iterations: None,
            };
            (mpe, record, None)
        }
        Family::PartialLinear => {
            config.kernel = Some(kernel.name());
            config.pl_weight = Some(args.pl_weight);
            let weight = match args.pl_weight {
                WeightChoice::Density => PlWeight::EstimatedDensity,
                WeightChoice::Unit => PlWeight::Unit,
            };
            let pfit = fit_partial_linear(&data, bandwidth.as_deref(), kernel, &weight)?;
            config.bandwidth = Some(pfit.kernel.bandwidth.clone());
            let rule = parse_pivot(&args.pivot, data.x())?;
            config.pivot = rule.pivots().to_vec();
            let mpe = build_partial_linear(&pfit, &data, &rule)?;
            let record = FitRecord {
                record: "fit",
                parameters: params(z_cols.iter().cloned(), pfit.theta_hat.as_slice()),
                excluded: data.n() - pfit.n_included(),
                iterations: None,
            };
            (mpe, record, None)
        }
    };

    let stats = el_statistics(&mpe, args.cap)?;
    let mut decisions = el_decisions(&mpe, &stats, &tests, &mcfg, args.level)?;
    let mut irf_values: Option<IrfStatistics> = None;
    if let Some((observed, wild)) = irf_parts {
        for &t in &tests {
            match t {
                TestKind::IrfKs => decisions.push(decision(t, decide(observed.ks, &wild.ks, args.level)?, wild.failed)),
                TestKind::IrfCvm => {
                    decisions.push(decision(t, decide(observed.cvm, &wild.cvm, args.level)?, wild.failed))
                }
                _ => {}
            }
        }
        irf_values = Some(observed);
    }
    decisions.sort_by_key(|d| tests.iter().position(|t| *t == d.test));

    let statistics = StatisticsRecord {
        record: "statistics",
        s_n: stats.s_n,
        t_n: stats.t_n,
        irf_ks: irf_values.map(|s| s.ks),
        irf_cvm: irf_values.map(|s| s.cvm),
        grid_points: mpe.grid_len(),
        degenerate_points: stats.degenerate_count,
        zero_variance_points: stats.zero_variance_count,
        capped: stats.capped,
    };
    Ok(Report {
        config,
        fit,
        statistics,
        decisions,
    })
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn render_text(r: &Report) -> String {
    let c = &r.config;
    let mut s = String::new();
    let _ = writeln!(s, "input       {}", c.input);
    let _ = writeln!(s, "family      {}", c.family.name());
    let _ = writeln!(s, "response    {}", c.response);
    let _ = writeln!(s, "covariates  {}", c.covariates.join(", "));
    if !c.w_cols.is_empty() {
        let _ = writeln!(s, "W / Z       {} / {}", c.w_cols.join(", "), c.z_cols.join(", "));
    }
    if let Some(m) = &c.model {
        let _ = writeln!(s, "model       {m}");
    }
    if let (Some(t), Some(i)) = (c.trials, c.intercept) {
        let _ = writeln!(s, "trials      {t} (intercept: {i})");
    }
    if let (Some(k), Some(h)) = (c.kernel, &c.bandwidth) {
        let hs: Vec<String> = h.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "kernel      {k}, bandwidth {}", hs.join(", "));
    }
    let pivots: Vec<String> = c.pivot.iter().map(|v| fmt_num(*v)).collect();
    let _ = writeln!(s, "pivot       {}", pivots.join(", "));
    if let Some(p) = &c.irf_pivot {
        let pivots: Vec<String> = p.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "irf pivot   {}", pivots.join(", "));
    }
    let _ = writeln!(
        s,
        "bootstrap   {} replicates, multiplier {}{}, seed {}",
        c.bootstrap,
        c.multiplier,
        c.wild_multiplier.map(|w| format!(" (wild: {w})")).unwrap_or_default(),
        c.seed
    );
    let _ = writeln!(s, "n           {}", c.n);
    s.push('\n');
    for p in &r.fit.parameters {
        let _ = writeln!(s, "estimate    {} = {}", p.name, fmt_num(p.value));
    }
    if let Some(it) = r.fit.iterations {
        let _ = writeln!(s, "iterations  {it}");
    }
    let _ = writeln!(s, "excluded    {}", r.fit.excluded);
    s.push('\n');
    let st = &r.statistics;
    let s_n = match st.s_n {
        ExtReal::Finite(v) => fmt_num(v),
        ExtReal::PosInfinity => "+inf".into(),
    };
    let _ = writeln!(s, "S_n         {s_n}");
    let _ = writeln!(s, "T_n         {}", fmt_num(st.t_n));
    if let (Some(ks), Some(cvm)) = (st.irf_ks, st.irf_cvm) {
        let _ = writeln!(s, "IRF KS      {}", fmt_num(ks));
        let _ = writeln!(s, "IRF CvM     {}", fmt_num(cvm));
    }
    let _ = writeln!(
        s,
        "grid        {} points, {} outside the hull, {} with zero variance{}",
        st.grid_points,
        st.degenerate_points,
        st.zero_variance_points,
        if st.capped { " (integral capped)" } else { "" }
    );
    s.push('\n');
    let _ = writeln!(s, "{:<8} {:>14} {:>10}  decision at {}", "test", "statistic", "p-value", c.level);
    for d in &r.decisions {
        let stat = if d.statistic.is_infinite() { "+inf".to_string() } else { fmt_num(d.statistic) };
        let _ = writeln!(
            s,
            "{:<8} {:>14} {:>10.6}  {}",
            d.test.label(),
            stat,
            d.p_value,
            if d.reject { "reject" } else { "do not reject" }
        );
    }
    s
}

fn render_json(r: &Report) -> String {
    let mut lines = vec![
        serde_json::to_string(&r.config).unwrap(),
        serde_json::to_string(&r.fit).unwrap(),
        serde_json::to_string(&r.statistics).unwrap(),
    ];
    lines.extend(r.decisions.iter().map(|d| serde_json::to_string(d).unwrap()));
    lines.join("\n") + "\n"
}

pub fn execute(args: &TestArgs) -> CliResult<String> {
    let report = run(args)?;
    Ok(match args.format {
        OutputFormat::Text => render_text(&report),
        OutputFormat::Json => render_json(&report),
    })
}
