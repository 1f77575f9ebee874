//! Command line front end: `ddm value|estimate|risk|simulate`.
//!
//! Kept as a library module so integration tests can drive the argument
//! parsing and report rendering directly; the binary is a two-line shim.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::binomial::{
    hurley_additive, hurley_geometric, BinomialAdditiveParams, BinomialGeometricParams,
};
use crate::deterministic::{
    gordon_price, h_model_price, three_stage_decline_dividends, three_stage_price,
    two_stage_price, GordonParams, HModelParams, ThreeStageParams, TwoStageParams,
};
use crate::error::DdmError;
use crate::estimation::{
    capm_cost_of_equity, discretize_states, estimate_transition_matrix, growth_series,
    CapmInputs, RiskFree,
};
use crate::markov::{check_conditions, price_and_risk, psi1_residual, solve_psi1};
use crate::sim::{simulate_dividend_paths, DividendProcess, SimConfig};
use crate::types::{DiscountRate, DividendSeries, MarkovGrowthModel, TransitionMatrix};

/// Errors the front end can hit on top of the library's own.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(#[from] DdmError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: dividends must be positive")]
    NonPositiveDividend { line: usize },
    #[error("line {line}: duplicate date")]
    DuplicateDate { line: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Domain and input errors exit 1, I/O failures exit 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddm", version, about = "Dividend discount valuation toolkit")]
pub struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Table)]
    pub output: OutputFormat,
    /// Seed for any Monte Carlo work.
    #[arg(long, global = true, env = "DDM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price a dividend stream with a closed-form model.
    Value(ValueArgs),
    /// Fit a growth-state model to a dividend history.
    Estimate(EstimateArgs),
    /// Price mean and dispersion under chain-driven growth.
    Risk(RiskArgs),
    /// Monte Carlo check of a closed-form value.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    #[arg(long, value_enum)]
    pub model: ValueModel,
    /// Current dividend (or EPS for the three-stage model).
    #[arg(long)]
    pub dividend: f64,
    /// Cost of equity, as a rate.
    #[arg(long)]
    pub rate: f64,
    /// Growth rate (constant, or the opening rate for phased models).
    #[arg(long, default_value_t = 0.0)]
    pub growth: f64,
    /// Terminal growth rate for phased models.
    #[arg(long)]
    pub terminal_growth: Option<f64>,
    /// Terminal cost of equity, when it differs from the opening one.
    #[arg(long)]
    pub terminal_rate: Option<f64>,
    /// Length of the opening phase in periods.
    #[arg(long)]
    pub years: Option<u32>,
    /// End of the decline phase (three-stage model).
    #[arg(long)]
    pub decline_until: Option<u32>,
    /// Decline-phase cost of equity (three-stage model).
    #[arg(long)]
    pub decline_rate: Option<f64>,
    /// Half-life of the fade from opening to terminal growth (H model).
    #[arg(long)]
    pub half_life: Option<f64>,
    /// Opening payout ratio (three-stage model).
    #[arg(long)]
    pub payout: Option<f64>,
    /// Terminal payout ratio (three-stage model).
    #[arg(long)]
    pub terminal_payout: Option<f64>,
    /// Up-move probability (binomial models).
    #[arg(long)]
    pub up_probability: Option<f64>,
    /// Bankruptcy probability per period (binomial models).
    #[arg(long, default_value_t = 0.0)]
    pub bankruptcy: f64,
    /// Additive dividend step (binomial additive model).
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValueModel {
    Gordon,
    TwoStage,
    HModel,
    ThreeStage,
    BinomialAdditive,
    BinomialGeometric,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV of `date,dividend` rows.
    #[arg(long)]
    pub dividends: PathBuf,
    /// Number of growth states to fit.
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    /// Additive smoothing for transition counts.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// Cost of equity used for the fitted model's diagnostics.
    #[arg(long)]
    pub rate: f64,
    /// CSV of `date,return` rows for the stock (cost-of-equity regression).
    #[arg(long, requires = "market_returns")]
    pub stock_returns: Option<PathBuf>,
    /// CSV of `date,return` rows for the market index.
    #[arg(long, requires = "stock_returns")]
    pub market_returns: Option<PathBuf>,
    /// Risk-free rate for the regression.
    #[arg(long, default_value_t = 0.0)]
    pub risk_free: f64,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// CSV of `date,dividend` rows to fit the chain from.
    #[arg(long)]
    pub dividends: PathBuf,
    /// Number of growth states.
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    /// Additive smoothing for transition counts.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// Cost of equity, as a rate.
    #[arg(long)]
    pub rate: f64,
    /// State to price from; defaults to the state of the latest observation.
    #[arg(long)]
    pub state: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Process to simulate.
    #[arg(long, value_enum)]
    pub process: SimProcess,
    #[arg(long)]
    pub dividend: f64,
    #[arg(long)]
    pub rate: f64,
    /// Growth rate (geometric) or additive step, depending on the process.
    #[arg(long, default_value_t = 0.0)]
    pub growth: f64,
    /// Up-move probability.
    #[arg(long, default_value_t = 1.0)]
    pub up_probability: f64,
    /// Bankruptcy probability per period.
    #[arg(long, default_value_t = 0.0)]
    pub bankruptcy: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Fixed horizon; derived from the tail tolerance when omitted.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimProcess {
    BinomialAdditive,
    BinomialGeometric,
}

/// One uniform report for every subcommand. Fields that a given command does
/// not produce are `Null` and omitted from tables; the JSON shape is stable.
#[derive(Debug, Clone, Serialize)]
pub struct ValuationReport {
    pub model: String,
    pub price: Value,
    pub psi1: Value,
    pub psi2: Value,
    pub variance: Value,
    pub covariance: Value,
    pub g_bar: Value,
    pub g_bar2: Value,
    pub conditions: Value,
    pub seed: Value,
    /// Anything command-specific: solver residuals, fitted matrices,
    /// standard errors.
    pub details: Value,
}

impl ValuationReport {
    fn new(model: impl Into<String>) -> Self {
        ValuationReport {
            model: model.into(),
            price: Value::Null,
            psi1: Value::Null,
            psi2: Value::Null,
            variance: Value::Null,
            covariance: Value::Null,
            g_bar: Value::Null,
            g_bar2: Value::Null,
            conditions: Value::Null,
            seed: Value::Null,
            details: Value::Null,
        }
    }
}

/// Reads `date,dividend` rows into a series.
///
/// The header must match exactly. Out-of-order rows are sorted with a
/// warning on stderr; duplicate dates and non-positive dividends are errors,
/// reported with their line number.
pub fn ingest_dividends(path: &Path) -> Result<DividendSeries, CliError> {
    let raw = read_to_string(path)?;
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "SERIES".into());
    let mut rows = parse_dated_csv(&raw, "date,dividend")?;
    for (line, _, dividend) in &rows {
        if *dividend <= 0.0 {
            return Err(CliError::NonPositiveDividend { line: *line });
        }
    }
    let sorted = rows.windows(2).all(|w| w[0].1 < w[1].1);
    if !sorted {
        eprintln!("warning: dividend rows out of order; sorting by date");
        rows.sort_by_key(|(_, date, _)| *date);
    }
    for pair in rows.windows(2) {
        if pair[0].1 == pair[1].1 {
            return Err(CliError::DuplicateDate { line: pair[1].0 });
        }
    }
    DividendSeries::new(ticker, rows.into_iter().map(|(_, d, v)| (d, v)).collect())
        .map_err(CliError::from)
}

/// Reads `date,return` rows; returns may be negative, duplicates are still
/// errors and out-of-order rows are sorted.
pub fn ingest_returns(path: &Path) -> Result<Vec<(NaiveDate, f64)>, CliError> {
    let raw = read_to_string(path)?;
    let mut rows = parse_dated_csv(&raw, "date,return")?;
    let sorted = rows.windows(2).all(|w| w[0].1 < w[1].1);
    if !sorted {
        eprintln!("warning: return rows out of order; sorting by date");
        rows.sort_by_key(|(_, date, _)| *date);
    }
    for pair in rows.windows(2) {
        if pair[0].1 == pair[1].1 {
            return Err(CliError::DuplicateDate { line: pair[1].0 });
        }
    }
    Ok(rows.into_iter().map(|(_, d, v)| (d, v)).collect())
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    let mut buffer = String::new();
    std::fs::File::open(path)?.read_to_string(&mut buffer)?;
    Ok(buffer)
}

/// Parses `(line, date, value)` rows after an exact header match.
fn parse_dated_csv(
    raw: &str,
    expected_header: &str,
) -> Result<Vec<(usize, NaiveDate, f64)>, CliError> {
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == expected_header => {}
        Some((_, header)) => {
            return Err(CliError::Parse {
                line: 1,
                message: format!("expected header '{expected_header}', got '{header}'"),
            })
        }
        None => {
            return Err(CliError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (index, content) in lines {
        let line = index + 1;
        let content = content.trim_end();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split(',');
        let (date_text, value_text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(d), Some(v), None) => (d.trim(), v.trim()),
            _ => {
                return Err(CliError::Parse {
                    line,
                    message: "expected exactly two comma-separated fields".into(),
                })
            }
        };
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|e| {
            CliError::Parse {
                line,
                message: format!("bad date '{date_text}': {e}"),
            }
        })?;
        let value: f64 = value_text.parse().map_err(|e| CliError::Parse {
            line,
            message: format!("bad number '{value_text}': {e}"),
        })?;
        if !value.is_finite() {
            return Err(CliError::Parse {
                line,
                message: format!("non-finite value '{value_text}'"),
            });
        }
        rows.push((line, date, value));
    }
    Ok(rows)
}

/// Executes a parsed command and produces the report.
pub fn run(cli: &Cli) -> Result<ValuationReport, CliError> {
    match &cli.command {
        Command::Value(args) => run_value(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Risk(args) => run_risk(args),
        Command::Simulate(args) => run_simulate(args, cli.seed),
    }
}

fn missing(flag: &str, model: &str) -> CliError {
    CliError::Parse {
        line: 0,
        message: format!("--{flag} is required for the {model} model"),
    }
}

fn run_value(args: &ValueArgs) -> Result<ValuationReport, CliError> {
    let (name, price, details) = match args.model {
        ValueModel::Gordon => {
            let price = gordon_price(&GordonParams {
                d0: args.dividend,
                g: args.growth,
                k_e: args.rate,
            })?;
            ("gordon", price, Value::Null)
        }
        ValueModel::TwoStage => {
            let params = TwoStageParams {
                d0: args.dividend,
                g_h: args.growth,
                k_e_h: args.rate,
                n: args.years.ok_or_else(|| missing("years", "two-stage"))?,
                g_st: args
                    .terminal_growth
                    .ok_or_else(|| missing("terminal-growth", "two-stage"))?,
                k_e_st: args.terminal_rate.unwrap_or(args.rate),
            };
            ("two-stage", two_stage_price(&params)?, Value::Null)
        }
        ValueModel::HModel => {
            let params = HModelParams {
                d0: args.dividend,
                g_a: args.growth,
                g_n: args
                    .terminal_growth
                    .ok_or_else(|| missing("terminal-growth", "H"))?,
                h: args.half_life.ok_or_else(|| missing("half-life", "H"))?,
                k_e: args.rate,
            };
            ("h-model", h_model_price(&params)?, Value::Null)
        }
        ValueModel::ThreeStage => {
            let n1 = args.years.ok_or_else(|| missing("years", "three-stage"))?;
            let n2 = args
                .decline_until
                .ok_or_else(|| missing("decline-until", "three-stage"))?;
            let pi_a = args.payout.ok_or_else(|| missing("payout", "three-stage"))?;
            let pi_n = args
                .terminal_payout
                .ok_or_else(|| missing("terminal-payout", "three-stage"))?;
            let g_n = args
                .terminal_growth
                .ok_or_else(|| missing("terminal-growth", "three-stage"))?;
            if n2 < n1 {
                return Err(CliError::Parse {
                    line: 0,
                    message: "--decline-until must be at least --years".into(),
                });
            }
            let decline_dividends =
                three_stage_decline_dividends(args.dividend, pi_a, pi_n, args.growth, g_n, n1, n2);
            let params = ThreeStageParams {
                eps0: args.dividend,
                pi_a,
                pi_n,
                g_a: args.growth,
                g_n,
                n1,
                n2,
                k_e_h: args.rate,
                k_e_d: args.decline_rate.unwrap_or(args.rate),
                k_e_st: args.terminal_rate.unwrap_or(args.rate),
                decline_dividends: decline_dividends.clone(),
            };
            (
                "three-stage",
                three_stage_price(&params)?,
                json!({ "decline_dividends": decline_dividends }),
            )
        }
        ValueModel::BinomialAdditive => {
            let value = hurley_additive(&BinomialAdditiveParams {
                d0: args.dividend,
                delta: args.step.ok_or_else(|| missing("step", "binomial-additive"))?,
                q: args
                    .up_probability
                    .ok_or_else(|| missing("up-probability", "binomial-additive"))?,
                q_b: args.bankruptcy,
                k_e: args.rate,
            })?;
            (
                "binomial-additive",
                value.value,
                json!({ "lower_bound": value.lower_bound }),
            )
        }
        ValueModel::BinomialGeometric => {
            let value = hurley_geometric(&BinomialGeometricParams {
                d0: args.dividend,
                g: args.growth,
                q: args
                    .up_probability
                    .ok_or_else(|| missing("up-probability", "binomial-geometric"))?,
                q_b: args.bankruptcy,
                k_e: args.rate,
            })?;
            (
                "binomial-geometric",
                value.value,
                json!({ "lower_bound": value.lower_bound }),
            )
        }
    };
    let mut report = ValuationReport::new(name);
    report.price = json!(price);
    report.details = details;
    Ok(report)
}

fn fit_model(
    series: &DividendSeries,
    states: usize,
    smoothing: f64,
    rate: f64,
) -> Result<(MarkovGrowthModel, Vec<usize>, TransitionMatrix), CliError> {
    let growth = growth_series(series)?;
    let discretization = discretize_states(&growth, states)?;
    let transition = estimate_transition_matrix(&discretization.indices, states, smoothing)?;
    let model = MarkovGrowthModel::new(
        discretization.states,
        transition.clone(),
        DiscountRate::from_annual(rate)?,
    )?;
    Ok((model, discretization.indices, transition))
}

fn run_estimate(args: &EstimateArgs) -> Result<ValuationReport, CliError> {
    let series = ingest_dividends(&args.dividends)?;
    let (model, indices, transition) =
        fit_model(&series, args.states, args.smoothing, args.rate)?;
    let report_conditions = check_conditions(&model);

    let capm = match (&args.stock_returns, &args.market_returns) {
        (Some(stock_path), Some(market_path)) => {
            let stock = ingest_returns(stock_path)?;
            let market = ingest_returns(market_path)?;
            let estimate = capm_cost_of_equity(&CapmInputs {
                stock_returns: stock.iter().map(|(_, r)| *r).collect(),
                market_returns: market.iter().map(|(_, r)| *r).collect(),
                risk_free: RiskFree::Constant(args.risk_free),
            })?;
            json!({ "beta": estimate.beta, "alpha": estimate.alpha, "k_e": estimate.k_e })
        }
        _ => Value::Null,
    };

    let mut report = ValuationReport::new("estimate");
    report.g_bar = json!(report_conditions.g_bar);
    report.g_bar2 = json!(report_conditions.g_bar2);
    report.conditions = json!({
        "a1": report_conditions.a1_holds,
        "a2": report_conditions.a2_holds,
    });
    report.details = json!({
        "ticker": series.ticker(),
        "observations": series.len(),
        "state_factors": model.states().factors(),
        "transition": transition.to_rows(),
        "state_path": indices,
        "capm": capm,
    });
    Ok(report)
}

fn run_risk(args: &RiskArgs) -> Result<ValuationReport, CliError> {
    let series = ingest_dividends(&args.dividends)?;
    let (model, indices, transition) =
        fit_model(&series, args.states, args.smoothing, args.rate)?;
    let current_state = match args.state {
        Some(state) => state,
        // The last growth observation tells us which state we sit in now.
        None => *indices.last().expect("growth series is nonempty"),
    };
    let dividend = series.last_dividend();
    let solved = price_and_risk(&model, current_state, dividend)?;
    let conditions = check_conditions(&model);
    let psi = solve_psi1(&model)?;

    let mut report = ValuationReport::new("markov-risk");
    report.price = json!(solved.price);
    report.psi1 = json!(psi.psi1());
    report.psi2 = json!(solved.second_moment / (dividend * dividend));
    report.variance = json!(solved.variance);
    report.g_bar = json!(conditions.g_bar);
    report.g_bar2 = json!(conditions.g_bar2);
    report.conditions = json!({ "a1": conditions.a1_holds, "a2": conditions.a2_holds });
    report.details = json!({
        "ticker": series.ticker(),
        "dividend": dividend,
        "state": current_state,
        "state_factors": model.states().factors(),
        "transition": transition.to_rows(),
        "psi1_residual": psi1_residual(&model, psi.psi1()),
    });
    Ok(report)
}

fn run_simulate(args: &SimulateArgs, seed: u64) -> Result<ValuationReport, CliError> {
    let (name, process, closed_form) = match args.process {
        SimProcess::BinomialAdditive => {
            let params = BinomialAdditiveParams {
                d0: args.dividend,
                delta: args.growth,
                q: args.up_probability,
                q_b: args.bankruptcy,
                k_e: args.rate,
            };
            let value = hurley_additive(&params)?;
            (
                "simulate-binomial-additive",
                DividendProcess::BinomialAdditive(params),
                value,
            )
        }
        SimProcess::BinomialGeometric => {
            let params = BinomialGeometricParams {
                d0: args.dividend,
                g: args.growth,
                q: args.up_probability,
                q_b: args.bankruptcy,
                k_e: args.rate,
            };
            let value = hurley_geometric(&params)?;
            (
                "simulate-binomial-geometric",
                DividendProcess::BinomialGeometric(params),
                value,
            )
        }
    };
    let mut cfg = SimConfig::new(args.paths, seed);
    if let Some(h) = args.horizon {
        cfg = cfg.with_horizon(h);
    }
    let summary = simulate_dividend_paths(&process, &cfg)?;

    let mut report = ValuationReport::new(name);
    report.price = json!(summary.mean);
    report.variance = json!(summary.sample_variance);
    report.seed = json!(seed);
    report.details = json!({
        "closed_form": closed_form.value,
        "lower_bound": closed_form.lower_bound,
        "std_error": summary.std_error,
        "second_moment": summary.second_moment,
        "paths": summary.paths,
        "horizon": summary.horizon,
        "floored_paths": summary.floored_paths,
        "tail_bound": summary.tail_bound,
    });
    Ok(report)
}

/// Renders the report in the requested format.
pub fn render(report: &ValuationReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes")
        }
        OutputFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!("model                {}\n", report.model));
            let rows = [
                ("price", &report.price),
                ("psi1", &report.psi1),
                ("psi2", &report.psi2),
                ("variance", &report.variance),
                ("covariance", &report.covariance),
                ("g_bar", &report.g_bar),
                ("g_bar2", &report.g_bar2),
                ("conditions", &report.conditions),
                ("seed", &report.seed),
                ("details", &report.details),
            ];
            for (label, value) in rows {
                if !value.is_null() {
                    out.push_str(&format!("{label:<20} {}\n", render_value(value)));
                }
            }
            out
        }
    }
}

/// Scalars print with six significant digits; structures fall back to JSON.
fn render_value(value: &Value) -> String {
    match value {
        Value::Number(n) => match n.as_f64() {
            Some(x) => format_sig(x),
            None => n.to_string(),
        },
        Value::Array(items) if items.iter().all(|v| v.is_number()) => {
            let rendered: Vec<String> = items.iter().map(render_value).collect();
            format!("[{}]", rendered.join(", "))
        }
        other => other.to_string(),
    }
}

fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 6;
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Full command-line entry: parses, runs, prints, and maps errors to exit
/// codes (0 success, 1 domain/input error, 2 I/O error).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits by convention.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            println!("{}", render(&report, cli.output));
            0
        }
        Err(error) => {
            eprintln!("error: {error}");
            error.exit_code()
        }
    }
}
