//! `elgof sim`: Monte Carlo rejection tables.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use elgof::bootstrap::MultiplierDistribution;
use elgof::sim::{
    format_table, predefined, run_study, GlmModel, GlmPivot, Scale, Scenario, ScenarioGlm, ScenarioP,
    StudyConfig, TestKind,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::OutputFormat;

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// Plain `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predefined tables: table1, table2, table3, table4.
    #[arg(long, value_delimiter = ',')]
    pub tables: Vec<String>,
    /// Extra scenarios such as `sigma=2,d=4,n=100` or `model=probit,n=500`.
    /// Repeat the flag for several scenarios.
    #[arg(long)]
    pub scenario: Vec<String>,
    /// desk (1000 samples, 500 bootstrap draws) or paper (10000, 5000).
    #[arg(long)]
    pub scale: Option<String>,
    /// Monte Carlo samples per scenario; overrides the scale.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Bootstrap replicates per sample; overrides the scale.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub tests: Vec<String>,
    #[arg(long)]
    pub multiplier: Option<String>,
    #[arg(long)]
    pub wild_multiplier: Option<String>,
    /// Pivot for the one-covariate designs.
    #[arg(long, allow_hyphen_values = true)]
    pub pivot: Option<f64>,
    /// Pivot for the binomial designs: "median" of the fitted index or a value.
    #[arg(long, allow_hyphen_values = true)]
    pub glm_pivot: Option<String>,
    /// Pivot for the residual-process baseline; "classical" accumulates left to right.
    #[arg(long, allow_hyphen_values = true)]
    pub irf_pivot: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Fills unset fields of `args` from a `key = value` file. Lines starting
/// with `#` are ignored; `scenario` may repeat.
pub fn merge_config_file(args: &mut SimArgs, text: &str) -> CliResult<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        let num_err = || config_error(format!("line {}: bad value for {key}", lineno + 1));
        let list = |v: &str| v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>();
        match key {
            "tables" if args.tables.is_empty() => args.tables = list(&value),
            "scenario" => args.scenario.push(value),
            "scale" if args.scale.is_none() => args.scale = Some(value),
            "reps" if args.reps.is_none() => args.reps = Some(value.parse().map_err(|_| num_err())?),
            "bootstrap" if args.bootstrap.is_none() => args.bootstrap = Some(value.parse().map_err(|_| num_err())?),
            "seed" if args.seed.is_none() => args.seed = Some(value.parse().map_err(|_| num_err())?),
            "level" if args.level.is_none() => args.level = Some(value.parse().map_err(|_| num_err())?),
            "tests" if args.tests.is_empty() => args.tests = list(&value),
            "multiplier" if args.multiplier.is_none() => args.multiplier = Some(value),
            "wild_multiplier" if args.wild_multiplier.is_none() => args.wild_multiplier = Some(value),
            "pivot" if args.pivot.is_none() => args.pivot = Some(value.parse().map_err(|_| num_err())?),
            "glm_pivot" if args.glm_pivot.is_none() => args.glm_pivot = Some(value),
            "irf_pivot" if args.irf_pivot.is_none() => args.irf_pivot = Some(value),
            "format" if args.format.is_none() => {
                args.format = Some(match value.as_str() {
                    "text" => OutputFormat::Text,
                    "json" => OutputFormat::Json,
                    _ => return Err(config_error(format!("line {}: unknown format '{value}'", lineno + 1))),
                })
            }
            "output" if args.output.is_none() => args.output = Some(PathBuf::from(value)),
            "tables" | "scale" | "reps" | "bootstrap" | "seed" | "level" | "tests" | "multiplier"
            | "wild_multiplier" | "pivot" | "glm_pivot" | "irf_pivot" | "format" | "output" => {}
            other => return Err(config_error(format!("line {}: unknown key '{other}'", lineno + 1))),
        }
    }
    Ok(())
}

/// `sigma=S,d=D,n=N` for the one-covariate designs, `model=M,n=N` for the
/// binomial designs.
pub fn parse_scenario(spec: &str) -> CliResult<Scenario> {
    let mut sigma = None;
    let mut d = None;
    let mut n = None;
    let mut model = None;
    for part in spec.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| config_error(format!("scenario '{spec}': expected key=value pairs")))?;
        let v = v.trim();
        let bad = |_| config_error(format!("scenario '{spec}': bad value for {}", k.trim()));
        match k.trim() {
            "sigma" => sigma = Some(v.parse::<u8>().map_err(bad)?),
            "d" => d = Some(v.parse::<u8>().map_err(bad)?),
            "n" => n = Some(v.parse::<usize>().map_err(bad)?),
            "model" => model = Some(v.parse::<GlmModel>()?),
            other => return Err(config_error(format!("scenario '{spec}': unknown key '{other}'"))),
        }
    }
    let n = n.ok_or_else(|| config_error(format!("scenario '{spec}' needs n")))?;
    match (sigma, d, model) {
        (Some(s), Some(d), None) => Ok(Scenario::Parametric(ScenarioP::new(n, d, s)?)),
        (None, None, Some(m)) => Ok(Scenario::Glm(ScenarioGlm::new(n, m)?)),
        _ => Err(config_error(format!(
            "scenario '{spec}' must give either sigma and d, or model"
        ))),
    }
}

#[derive(Serialize)]
struct StudyHeader<'a> {
    record: &'static str,
    #[serde(flatten)]
    config: &'a StudyConfig,
    scenarios: usize,
}

#[derive(Serialize)]
struct CellRecord<'a> {
    record: &'static str,
    #[serde(flatten)]
    row: &'a elgof::sim::StudyRow,
}

pub fn execute(mut args: SimArgs) -> CliResult<Option<String>> {
    if let Some(path) = args.config.clone() {
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
        merge_config_file(&mut args, &text)?;
    }
    let scale: Scale = args.scale.as_deref().unwrap_or("desk").parse()?;
    let mut cfg = StudyConfig::new(scale, args.seed.unwrap_or(0));
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(b) = args.bootstrap {
        cfg.bootstrap = b;
    }
    if let Some(l) = args.level {
        cfg.level = l;
    }
    if !args.tests.is_empty() {
        cfg.tests = args
            .tests
            .iter()
            .map(|t| t.parse::<TestKind>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(m) = &args.multiplier {
        cfg.multiplier = m.parse::<MultiplierDistribution>()?;
    }
    if let Some(m) = &args.wild_multiplier {
        cfg.wild_multiplier = m.parse::<MultiplierDistribution>()?;
    }
    if let Some(p) = args.pivot {
        cfg.parametric_pivot = p;
    }
    if let Some(p) = &args.glm_pivot {
        cfg.glm_pivot = match p.as_str() {
            "median" => GlmPivot::Median,
            v => GlmPivot::Value(v.parse().map_err(|_| config_error(format!("bad glm pivot '{v}'")))?),
        };
    }
    if let Some(p) = &args.irf_pivot {
        cfg.irf_pivot = match p.as_str() {
            "classical" | "-inf" => None,
            v => Some(v.parse().map_err(|_| config_error(format!("bad irf pivot '{v}'")))?),
        };
    }

    let mut scenarios = Vec::new();
    for t in &args.tables {
        scenarios.extend(predefined(t)?);
    }
    for s in &args.scenario {
        scenarios.push(parse_scenario(s)?);
    }
    if scenarios.is_empty() {
        return Err(config_error("no scenarios: pass --tables or --scenario"));
    }

    let rows = run_study(&scenarios, &cfg).map_err(|e| match e {
        elgof::Error::InvalidInput(msg) => CliError::Config(msg),
        other => CliError::Study(other),
    })?;
    let text = match args.format.unwrap_or(OutputFormat::Text) {
        OutputFormat::Text => {
            let mut s = format!(
                "Percentage of rejections at level {} ({} samples, {} bootstrap replicates, seed {}); Monte Carlo standard errors in parentheses\n\n",
                cfg.level, cfg.reps, cfg.bootstrap, cfg.seed
            );
            s.push_str(&format_table(&rows));
            s
        }
        OutputFormat::Json => {
            let header = StudyHeader {
                record: "study",
                config: &cfg,
                scenarios: scenarios.len(),
            };
            let mut lines = vec![serde_json::to_string(&header).unwrap()];
            lines.extend(rows.iter().map(|row| serde_json::to_string(&CellRecord { record: "cell", row }).unwrap()));
            lines.join("\n") + "\n"
        }
    };
    match &args.output {
        Some(path) => {
            fs::write(path, text).map_err(CliError::Output)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
