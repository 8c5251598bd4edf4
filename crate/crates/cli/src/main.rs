//! `ctsmooth`: smoothed plug-in estimates of contingency-table measures.
//!
//! ```text
//! ctsmooth estimate --measure cramer-v --rule optimal table.csv
//! ctsmooth ci --measure symmetry-phi --level 0.95 --draws 10000 table.csv
//! ctsmooth simulate --measure cramer-v --gammas 1..10 --rules all truth.csv
//! ```
//!
//! Exit codes: 0 on success, 2 for usage and input errors, 3 when the table
//! lies outside the measure's domain.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use ctsmooth::montecarlo::{run_experiment, ExperimentConfig};
use ctsmooth::tables::{parse_count_table, parse_prob_table};
use ctsmooth::{
    credible_interval, estimate, AlphaRule, CountTable, EstimatorConfig, MeasureKind, MeasureSpec,
};

#[derive(Parser, Debug)]
#[command(
    name = "ctsmooth",
    version,
    about = "Dirichlet-smoothed estimators of contingency-table measures"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point estimate of the measure from a table of counts.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "optimal", value_parser = parse_rule)]
        rule: AlphaRule,
    },
    /// Equal-tailed posterior credible interval from a table of counts.
    Ci {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "optimal", value_parser = parse_rule)]
        rule: AlphaRule,
        /// Credible level in (0, 1).
        #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
        level: f64,
        /// Posterior draws.
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(100..))]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Bias and MSE of each rule on multinomial samples from a probability table.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rules, or `all` for the five standard ones.
        #[arg(long = "rules", alias = "rule", default_value = "all", value_parser = parse_rules)]
        rules: RuleList,
        /// Sample sizes per cell: `1..10`, `1..=10` or `1,2,5`.
        #[arg(long, default_value = "1..10", value_parser = parse_gammas)]
        gammas: GammaList,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        replications: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label for the `truth_table_id` column (default: the file stem).
        #[arg(long)]
        table_id: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// `cramer-v` or `symmetry-phi`.
    #[arg(long)]
    measure: MeasureKind,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
    /// Upper bound on data-driven alphas (default: n / (rc)).
    #[arg(long, value_parser = parse_alpha_max)]
    alpha_max: Option<f64>,
    /// Output format (default: json, csv for `simulate`).
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// CSV table, one row per line, no header.
    input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
struct RuleList(Vec<AlphaRule>);

#[derive(Debug, Clone)]
struct GammaList(Vec<u64>);

fn parse_rule(s: &str) -> Result<AlphaRule, String> {
    s.parse()
}

fn parse_rules(s: &str) -> Result<RuleList, String> {
    if s == "all" {
        return Ok(RuleList(AlphaRule::all()));
    }
    s.split(',')
        .map(|r| r.trim().parse())
        .collect::<Result<_, _>>()
        .map(RuleList)
}

fn parse_gammas(s: &str) -> Result<GammaList, String> {
    let number = |t: &str| {
        t.trim()
            .parse::<u64>()
            .ok()
            .filter(|&g| g > 0)
            .ok_or_else(|| format!("invalid gamma {t:?} (expected a positive integer)"))
    };
    let gammas: Vec<u64> = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (number(lo)?, number(hi.strip_prefix('=').unwrap_or(hi))?);
        if lo > hi {
            return Err(format!("empty gamma range {s:?}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(number).collect::<Result<_, _>>()?
    };
    Ok(GammaList(gammas))
}

fn parse_level(s: &str) -> Result<f64, String> {
    let level: f64 = s.parse().map_err(|_| format!("invalid level {s:?}"))?;
    if level > 0.0 && level < 1.0 {
        Ok(level)
    } else {
        Err(format!(
            "level must lie strictly between 0 and 1 (got {level})"
        ))
    }
}

fn parse_alpha_max(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("invalid alpha-max {s:?}"))?;
    if a >= 0.0 && a.is_finite() {
        Ok(a)
    } else {
        Err(format!(
            "alpha-max must be finite and nonnegative (got {a})"
        ))
    }
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<ctsmooth::Error> for Failure {
    fn from(e: ctsmooth::Error) -> Self {
        Failure {
            code: if e.is_domain_error() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct EstimateReport {
    measure: &'static str,
    lambda: f64,
    rule: AlphaRule,
    alpha_used: f64,
    estimate: f64,
    #[serde(flatten)]
    diagnostics: Option<Diagnostics>,
}

#[derive(Serialize)]
struct Diagnostics {
    a1_hat: Option<f64>,
    a2_hat: Option<f64>,
    clamped: bool,
}

impl Common {
    fn spec(&self) -> Result<MeasureSpec, Failure> {
        Ok(MeasureSpec::new(self.measure, self.lambda)?)
    }

    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            alpha_max: self.alpha_max,
        }
    }

    fn read(&self) -> Result<String, Failure> {
        fs::read_to_string(&self.input).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", self.input.display()),
        })
    }

    fn counts(&self) -> Result<CountTable, Failure> {
        Ok(parse_count_table(&self.read()?)?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut out = io::stdout().lock();
    match run(cli.command, &mut out).and_then(|()| out.flush().map_err(Failure::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command, out: &mut impl Write) -> Result<(), Failure> {
    match command {
        Command::Estimate { common, rule } => {
            let spec = common.spec()?;
            let t = common.counts()?;
            let r = estimate(&spec, &t, rule, &common.config())?;
            let diagnostics = r.optimal.map(|o| Diagnostics {
                a1_hat: o.coefficients.map(|c| c.a1),
                a2_hat: o.coefficients.map(|c| c.a2),
                clamped: o.clamped,
            });
            let report = EstimateReport {
                measure: spec.kind().name(),
                lambda: spec.lambda(),
                rule,
                alpha_used: r.alpha_used,
                estimate: r.estimate.value(),
                diagnostics,
            };
            emit(out, &report, common.format.unwrap_or(Format::Json))
        }
        Command::Ci {
            common,
            rule,
            level,
            draws,
            seed,
        } => {
            let spec = common.spec()?;
            let t = common.counts()?;
            let ci = credible_interval(
                &spec,
                &t,
                rule,
                &common.config(),
                level,
                draws as usize,
                seed,
            )?;
            emit(out, &ci, common.format.unwrap_or(Format::Json))
        }
        Command::Simulate {
            common,
            rules,
            gammas,
            replications,
            seed,
            table_id,
        } => {
            let spec = common.spec()?;
            let truth = parse_prob_table(&common.read()?)?;
            let config = ExperimentConfig {
                truth,
                truth_id: table_id.unwrap_or_else(|| file_stem(&common.input)),
                spec,
                rules: rules.0,
                gammas: gammas.0,
                replications: replications as usize,
                seed,
                estimator: common.config(),
            };
            let result = run_experiment(&config)?;
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => Ok(result.write_csv(out)?),
                Format::Json => {
                    serde_json::to_writer_pretty(&mut *out, &result.rows)
                        .map_err(io::Error::from)?;
                    Ok(writeln!(out)?)
                }
            }
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Writes a flat record as pretty JSON or as a two-line CSV.
fn emit<T: Serialize>(out: &mut impl Write, record: &T, format: Format) -> Result<(), Failure> {
    let value = serde_json::to_value(record).map_err(io::Error::from)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &value).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let Value::Object(fields) = value else {
                unreachable!("reports are structs")
            };
            let cell = |v: &Value| match v {
                Value::Null => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let header: Vec<&str> = fields.keys().map(String::as_str).collect();
            let row: Vec<String> = fields.values().map(cell).collect();
            writeln!(out, "{}", header.join(","))?;
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}
