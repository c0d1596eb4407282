mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volpath::models::Covariance;

use crate::config::{RunConfig, SimKind};
use crate::error::CliError;

/// Realized-volatility pipeline: simulate, estimate, fit, forecast, evaluate.
#[derive(Debug, Parser)]
#[command(name = "volpath", version)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, global = true, env = "VOLPATH_THREADS")]
    threads: Option<usize>,
    /// Master seed for simulation and bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate intraday bars (jump diffusion) or a daily path-dependent panel.
    Simulate(SimulateArgs),
    /// Intraday bars to daily realized measures.
    Estimate(EstimateArgs),
    /// In-sample fits of the selected models.
    Fit(FitArgs),
    /// Rolling out-of-sample forecasts.
    Forecast(ForecastArgs),
    /// Losses, model confidence set and out-of-sample R².
    Evaluate(EvaluateArgs),
    /// Print the text tables of an output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<SimKind>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    intraday: Option<usize>,
    /// Daily diffusion volatility.
    #[arg(long)]
    sigma: Option<f64>,
    /// Annualized drift.
    #[arg(long)]
    mu: Option<f64>,
    /// Expected jumps per day.
    #[arg(long)]
    jump_intensity: Option<f64>,
    #[arg(long)]
    jump_std: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Bars CSV with timestamp and price columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Jump-test tail probability.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rex_alpha: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    req_quantiles: Option<Vec<f64>>,
    #[arg(long)]
    min_obs: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Directory with components.csv + closes.csv, or daily.csv.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated model names, e.g. HAR-RV,LASSO-HAR-PD-CJ.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// classical or hc0.
    #[arg(long)]
    covariance: Option<String>,
    /// Keep kernel decays at their default values instead of estimating them.
    #[arg(long)]
    fixed_lambdas: bool,
    #[arg(long)]
    acf_lags: Option<usize>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Estimation window length H.
    #[arg(long)]
    window: Option<usize>,
    /// Out-of-sample length M.
    #[arg(long)]
    out_len: Option<usize>,
    #[arg(long)]
    refit_every: Option<usize>,
    /// External forecasts as NAME=PATH (`date,horizon,predicted`); repeatable.
    #[arg(long = "import", value_name = "NAME=PATH")]
    imports: Vec<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory of forecast_<model>_h<h>.csv files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    block_len: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<(), CliError> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    match &cli.command {
        Command::Simulate(a) => {
            let s = &mut cfg.simulate;
            set(&mut s.kind, &a.kind);
            set(&mut s.n_days, &a.days);
            set(&mut s.n_intraday, &a.intraday);
            set(&mut s.sigma, &a.sigma);
            set(&mut s.mu, &a.mu);
            set(&mut s.jump_intensity, &a.jump_intensity);
            set(&mut s.jump_std, &a.jump_std);
        }
        Command::Estimate(a) => {
            let e = &mut cfg.estimate;
            set(&mut e.jump_alpha, &a.alpha);
            set(&mut e.rex_alpha, &a.rex_alpha);
            set(&mut e.min_obs, &a.min_obs);
            if let Some(q) = &a.req_quantiles {
                e.req_quantiles = (q[0], q[1]);
            }
        }
        Command::Fit(a) => {
            let f = &mut cfg.fit;
            set(&mut f.models, &a.models);
            set(&mut f.acf_lags, &a.acf_lags);
            if a.fixed_lambdas {
                f.estimate_lambdas = false;
            }
            if let Some(c) = &a.covariance {
                f.covariance = match c.to_ascii_lowercase().as_str() {
                    "classical" => Covariance::Classical,
                    "hc0" => Covariance::Hc0,
                    _ => return Err(CliError::Config(format!("unknown covariance: {c}"))),
                };
            }
        }
        Command::Forecast(a) => {
            let f = &mut cfg.forecast;
            if a.models.is_some() {
                f.models = a.models.clone();
            }
            set(&mut f.horizons, &a.horizons);
            set(&mut f.window, &a.window);
            set(&mut f.out_len, &a.out_len);
            set(&mut f.refit_lambda_every, &a.refit_every);
        }
        Command::Evaluate(a) => {
            let e = &mut cfg.evaluate;
            set(&mut e.benchmark, &a.benchmark);
            set(&mut e.reps, &a.reps);
            set(&mut e.levels, &a.levels);
            if a.block_len.is_some() {
                e.block_len = a.block_len;
            }
        }
        Command::Report(_) => {}
    }
    Ok(())
}

fn parse_imports(raw: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    raw.iter()
        .map(|s| match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
            _ => Err(CliError::Config(format!(
                "--import expects NAME=PATH, got {s}"
            ))),
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    apply_overrides(&mut cfg, &cli)?;
    cfg.validate()?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, &a.out),
        Command::Estimate(a) => commands::estimate(&cfg, &a.input, &a.out),
        Command::Fit(a) => commands::fit(&cfg, &a.input, &a.out),
        Command::Forecast(a) => {
            commands::forecast(&cfg, &a.input, &a.out, &parse_imports(&a.imports)?)
        }
        Command::Evaluate(a) => commands::evaluate(&cfg, &a.input, &a.out),
        Command::Report(a) => {
            print!("{}", commands::report(&a.input)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
