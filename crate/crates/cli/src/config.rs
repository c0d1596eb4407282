//! Run configuration: TOML file, defaults and validation.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use volpath::estimators::{ComponentConfig, QuantileRule};
use volpath::evaluate::{LossKind, McsStatistic};
use volpath::features::ReturnConvention;
use volpath::forecast::ForecastConfig;
use volpath::models::{Covariance, FitOptions, LassoOptions, ModelSpec, PdOptions};
use volpath::synth::{PdvSimConfig, SimConfig, VolProcess};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub fit: FitSection,
    pub forecast: ForecastSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            simulate: SimulateSection::default(),
            estimate: EstimateSection::default(),
            fit: FitSection::default(),
            forecast: ForecastSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    /// Intraday bars from a jump diffusion.
    JumpDiffusion,
    /// Daily closes and RV from the path-dependent generator.
    Pdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub low: f64,
    pub high: f64,
    pub switch_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub kind: SimKind,
    pub n_days: usize,
    pub n_intraday: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Two-state volatility; replaces `sigma` when present.
    pub regime: Option<Regime>,
    pub jump_intensity: f64,
    pub jump_std: f64,
    pub start_price: f64,
    pub start_date: NaiveDate,
    pub lambda1: f64,
    pub lambda2: f64,
    pub betas: [f64; 3],
    pub noise_std: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let jd = SimConfig::default();
        let pdv = PdvSimConfig::default();
        Self {
            kind: SimKind::JumpDiffusion,
            n_days: jd.n_days,
            n_intraday: jd.n_intraday,
            mu: jd.mu,
            sigma: 0.01,
            regime: None,
            jump_intensity: jd.jump_intensity,
            jump_std: jd.jump_size_std,
            start_price: jd.start_price,
            start_date: jd.start_date,
            lambda1: pdv.lambda1,
            lambda2: pdv.lambda2,
            betas: pdv.betas,
            noise_std: pdv.noise_std,
        }
    }
}

impl SimulateSection {
    pub fn jump_diffusion(&self, seed: u64) -> SimConfig {
        SimConfig {
            n_days: self.n_days,
            n_intraday: self.n_intraday,
            mu: self.mu,
            vol: match self.regime {
                Some(r) => VolProcess::TwoState {
                    low: r.low,
                    high: r.high,
                    switch_rate: r.switch_rate,
                },
                None => VolProcess::Constant { sigma: self.sigma },
            },
            jump_intensity: self.jump_intensity,
            jump_size_std: self.jump_std,
            seed,
            start_price: self.start_price,
            start_date: self.start_date,
        }
    }

    pub fn pdv(&self, seed: u64, convention: ReturnConvention) -> PdvSimConfig {
        PdvSimConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            betas: self.betas,
            noise_std: self.noise_std,
            n_days: self.n_days,
            seed,
            start_price: self.start_price,
            start_date: self.start_date,
            convention,
            ..PdvSimConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub jump_alpha: f64,
    pub rex_alpha: f64,
    pub req_quantiles: (f64, f64),
    pub quantile_rule: QuantileRule,
    pub min_obs: usize,
    pub timestamp_column: String,
    pub price_column: String,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let c = ComponentConfig::default();
        Self {
            jump_alpha: c.jump_alpha,
            rex_alpha: c.rex_alpha,
            req_quantiles: c.req_quantiles,
            quantile_rule: c.quantile_rule,
            min_obs: volpath::ingest::DEFAULT_MIN_OBS,
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
        }
    }
}

impl EstimateSection {
    pub fn components(&self) -> ComponentConfig {
        ComponentConfig {
            jump_alpha: self.jump_alpha,
            rex_alpha: self.rex_alpha,
            req_quantiles: self.req_quantiles,
            quantile_rule: self.quantile_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub models: Vec<String>,
    pub convention: ReturnConvention,
    pub covariance: Covariance,
    pub estimate_lambdas: bool,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub starts: usize,
    pub lasso_folds: usize,
    pub lasso_grid_size: usize,
    pub lasso_grid_ratio: f64,
    pub lasso_tol: f64,
    pub lasso_max_sweeps: usize,
    /// Residual autocorrelation lags written per model; 0 disables.
    pub acf_lags: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            models: [
                "HAR-RV",
                "HAR-CJ",
                "HAR-RS",
                "HAR-REX",
                "HAR-REQ",
                "HAR-PD-RV",
                "HAR-PD-CJ",
                "HAR-PD-RS",
                "HAR-PD-REX",
                "HAR-PD-REQ",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            convention: ReturnConvention::default(),
            covariance: o.covariance,
            estimate_lambdas: o.estimate_lambdas,
            lambda_lower: o.pd.lower,
            lambda_upper: o.pd.upper,
            starts: o.pd.starts,
            lasso_folds: o.lasso_folds,
            lasso_grid_size: o.lasso_grid_size,
            lasso_grid_ratio: o.lasso_grid_ratio,
            lasso_tol: o.lasso.tol,
            lasso_max_sweeps: o.lasso.max_sweeps,
            acf_lags: 50,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            estimate_lambdas: self.estimate_lambdas,
            pd: PdOptions {
                lower: self.lambda_lower,
                upper: self.lambda_upper,
                starts: self.starts,
                covariance: self.covariance,
                ..d.pd
            },
            covariance: self.covariance,
            lasso: LassoOptions {
                tol: self.lasso_tol,
                max_sweeps: self.lasso_max_sweeps,
            },
            lasso_folds: self.lasso_folds,
            lasso_grid_size: self.lasso_grid_size,
            lasso_grid_ratio: self.lasso_grid_ratio,
        }
    }
}

/// Parses model names, echoing the first unknown one.
pub fn parse_models(
    names: &[String],
    convention: ReturnConvention,
) -> Result<Vec<ModelSpec>, CliError> {
    if names.is_empty() {
        return Err(CliError::Config("no models selected".into()));
    }
    names
        .iter()
        .map(|n| {
            n.parse::<ModelSpec>()
                .map(|mut s| {
                    s.convention = convention;
                    s
                })
                .map_err(|_| CliError::Config(format!("unknown model: {n}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    /// Defaults to the fit model list when absent.
    pub models: Option<Vec<String>>,
    pub horizons: Vec<usize>,
    pub window: usize,
    pub out_len: usize,
    pub refit_lambda_every: usize,
    pub floor: f64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let c = ForecastConfig::default();
        Self {
            models: None,
            horizons: vec![1, 5, 22],
            window: c.window,
            out_len: c.out_len,
            refit_lambda_every: c.refit_lambda_every,
            floor: c.floor,
        }
    }
}

impl ForecastSection {
    pub fn config(&self, horizon: usize) -> ForecastConfig {
        ForecastConfig {
            window: self.window,
            horizon,
            out_len: self.out_len,
            refit_lambda_every: self.refit_lambda_every,
            floor: self.floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub benchmark: String,
    pub losses: Vec<LossKind>,
    pub statistics: Vec<McsStatistic>,
    pub reps: usize,
    /// `None` uses the cube root of the evaluation length.
    pub block_len: Option<usize>,
    pub levels: Vec<f64>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            benchmark: "HAR-RV".into(),
            losses: LossKind::ALL.to_vec(),
            statistics: vec![McsStatistic::Range, McsStatistic::SemiQuadratic],
            reps: 5000,
            block_len: None,
            levels: vec![0.01, 0.1, 0.25],
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: volpath::Error| CliError::Config(e.to_string());
        self.estimate.components().validate().map_err(cfg)?;
        if self.estimate.min_obs < 2 {
            return Err(CliError::Config(format!(
                "min_obs must be >= 2, got {}",
                self.estimate.min_obs
            )));
        }
        self.simulate
            .jump_diffusion(self.seed)
            .validate()
            .map_err(cfg)?;
        self.fit.options().pd.validate().map_err(cfg)?;
        parse_models(&self.fit.models, self.fit.convention)?;
        if let Some(m) = &self.forecast.models {
            parse_models(m, self.fit.convention)?;
        }
        if self.forecast.horizons.is_empty() {
            return Err(CliError::Config("no forecast horizons".into()));
        }
        for h in &self.forecast.horizons {
            self.forecast.config(*h).validate().map_err(cfg)?;
        }
        let e = &self.evaluate;
        if e.reps < 100 {
            return Err(CliError::Config(format!(
                "MCS reps must be >= 100, got {}",
                e.reps
            )));
        }
        if e.block_len == Some(0) {
            return Err(CliError::Config("MCS block length must be >= 1".into()));
        }
        if e.levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(CliError::Config(format!(
                "MCS levels must lie in (0, 1): {:?}",
                e.levels
            )));
        }
        if e.losses.is_empty() || e.statistics.is_empty() {
            return Err(CliError::Config(
                "need at least one loss and one MCS statistic".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("seed = 9\n[forecast]\nwindow = 300\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.forecast.window, 300);
        assert_eq!(c.forecast.out_len, 600);
        assert_eq!(c.evaluate.reps, 5000);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("[fit]\nmodel = []\n").is_err());
    }

    #[test]
    fn unknown_model_echoed() {
        let err = parse_models(&["HAR-XYZ".into()], ReturnConvention::default()).unwrap_err();
        assert!(err.to_string().contains("HAR-XYZ"));
    }
}
