//! Model catalog, design construction and estimation.

mod acf;
mod catalog;
mod design;
mod lasso;
mod ols;
mod pd;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use acf::{residual_acf, ResidualAcf};
pub use catalog::{
    Block, Component, ModelFamily, ModelSpec, PriceFeature, SameDay, Shrinkage, DEFAULT_HORIZONS,
};
pub use design::{
    build_design, design_from_table, regressor_table, DesignMatrix, ModelData, RegressorTable,
};
pub use lasso::{
    contiguous_folds, lasso_cv, lasso_cv_with, lasso_fit, lasso_fit_warm, penalty_grid,
    penalty_max, LassoCv, LassoFit, LassoOptions,
};
pub use ols::{information_criteria, ols_fit, ols_fit_with, Covariance, Regression};
pub use pd::{
    conditional_fit, fit_pd, fit_pd_on, nelder_mead, Minimum, PdFit, PdOptions, StartOutcome,
};

use crate::error::Result;

/// Estimation settings shared by in-sample fits and rolling forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Estimate kernel decays by profiled least squares; otherwise use the
    /// decays stored in the model spec.
    pub estimate_lambdas: bool,
    pub pd: PdOptions,
    pub covariance: Covariance,
    pub lasso: LassoOptions,
    pub lasso_folds: usize,
    pub lasso_grid_size: usize,
    /// Smallest grid penalty as a fraction of the deactivation bound.
    pub lasso_grid_ratio: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            estimate_lambdas: true,
            pd: PdOptions::default(),
            covariance: Covariance::Classical,
            lasso: LassoOptions::default(),
            lasso_folds: 10,
            lasso_grid_size: 50,
            lasso_grid_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    /// Absent for shrinkage fits.
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSummary {
    pub penalty: f64,
    pub support: Vec<String>,
    pub sweeps: usize,
    pub folds: usize,
    pub grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
}

/// A fitted model. `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// The model spec with the decays used in the final fit.
    pub spec: ModelSpec,
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    pub sse: f64,
    pub adj_r2: f64,
    pub aic: f64,
    pub bic: f64,
    /// Estimated decays, one per kernel block, when they were estimated.
    pub lambdas_hat: Option<Vec<f64>>,
    /// The regressor block each decay drives.
    pub lambda_blocks: Vec<String>,
    pub boundary: Vec<bool>,
    /// Coefficient standard errors that account for estimated decays.
    pub joint_se: Option<Vec<f64>>,
    /// Expected-sign checks that failed (R1 slope above 0, R2 slope below 0).
    pub sign_violations: Vec<String>,
    pub lasso: Option<LassoSummary>,
    pub optimizer: Vec<StartOutcome>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients[0].estimate
            + self.coefficients[1..]
                .iter()
                .zip(row)
                .map(|(c, x)| c.estimate * x)
                .sum::<f64>()
    }
}

fn sign_violations(names: &[String], beta: &[f64]) -> Vec<String> {
    names
        .iter()
        .zip(&beta[1..])
        .filter_map(|(n, b)| match n.as_str() {
            "R1" if *b > 0.0 => Some(format!("R1 slope {b} > 0")),
            "R2" if *b < 0.0 => Some(format!("R2 slope {b} < 0")),
            _ => None,
        })
        .collect()
}

fn coefficient_table(names: &[String], beta: &[f64], se: Option<&[f64]>) -> Vec<Coefficient> {
    std::iter::once("const".to_string())
        .chain(names.iter().cloned())
        .enumerate()
        .map(|(j, name)| Coefficient {
            name,
            estimate: beta[j],
            se: se.map(|s| s[j]),
        })
        .collect()
}

/// Fits `spec` with decays held at their current values. `penalty` is the
/// LASSO penalty for shrinkage specs; `None` selects it by cross-validation.
pub fn fit_fixed(
    spec: &ModelSpec,
    design: &DesignMatrix,
    penalty: Option<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut result = match spec.shrinkage {
        Shrinkage::None => {
            let reg = ols_fit_with(design, opts.covariance)?;
            FitResult {
                spec: spec.clone(),
                coefficients: coefficient_table(&reg.names, &reg.beta, Some(&reg.se)),
                n_obs: reg.n_obs,
                sse: reg.sse,
                adj_r2: reg.adj_r2,
                aic: reg.aic,
                bic: reg.bic,
                lambdas_hat: None,
                lambda_blocks: spec.family.lambda_blocks(),
                boundary: Vec::new(),
                joint_se: None,
                sign_violations: sign_violations(&reg.names, &reg.beta),
                lasso: None,
                optimizer: Vec::new(),
                residuals: reg.residuals,
            }
        }
        Shrinkage::Lasso => {
            let (fit, grid, cv_mse) = match penalty {
                Some(p) => (
                    lasso_fit_warm(design, p, None, &opts.lasso)?,
                    vec![p],
                    Vec::new(),
                ),
                None => {
                    let grid = penalty_grid(design, opts.lasso_grid_size, opts.lasso_grid_ratio);
                    let cv = lasso_cv_with(design, &grid, opts.lasso_folds, &opts.lasso)?;
                    (cv.fit, cv.grid, cv.cv_mse)
                }
            };
            FitResult {
                spec: spec.clone(),
                coefficients: coefficient_table(&fit.names, &fit.beta, None),
                n_obs: fit.n_obs,
                sse: fit.sse,
                adj_r2: fit.adj_r2,
                aic: fit.aic,
                bic: fit.bic,
                lambdas_hat: None,
                lambda_blocks: spec.family.lambda_blocks(),
                boundary: Vec::new(),
                joint_se: None,
                sign_violations: sign_violations(&fit.names, &fit.beta),
                lasso: Some(LassoSummary {
                    penalty: fit.penalty,
                    support: fit.support(),
                    sweeps: fit.sweeps,
                    folds: if cv_mse.is_empty() {
                        0
                    } else {
                        opts.lasso_folds
                    },
                    grid,
                    cv_mse,
                }),
                optimizer: Vec::new(),
                residuals: fit.residuals,
            }
        }
    };
    result.spec.lambdas = spec.lambdas.clone();
    Ok(result)
}

/// Fits `spec` on targets in `targets` with regressors lagged by `shift`.
/// Decays are estimated first when the family has any and
/// `opts.estimate_lambdas` is set. Returns the fit and its design.
pub fn fit_model_on(
    spec: &ModelSpec,
    data: &ModelData,
    shift: usize,
    targets: Range<usize>,
    opts: &FitOptions,
) -> Result<(FitResult, DesignMatrix)> {
    spec.validate()?;
    if spec.family.lambda_count() > 0 && opts.estimate_lambdas {
        let pd = fit_pd_on(spec, data, shift, targets, &opts.pd)?;
        let fitted = spec.clone().with_lambdas(pd.lambdas.clone());
        let mut result = fit_fixed(&fitted, &pd.design, None, opts)?;
        result.lambdas_hat = Some(pd.lambdas);
        result.boundary = pd.boundary;
        if spec.shrinkage == Shrinkage::None {
            result.joint_se = pd.joint_se;
        }
        result.optimizer = pd.starts;
        Ok((result, pd.design))
    } else {
        let table = regressor_table(spec, data)?;
        let design = design_from_table(&table, data, shift, targets)?;
        Ok((fit_fixed(spec, &design, None, opts)?, design))
    }
}

/// In-sample fit over every usable row with the family's natural alignment.
pub fn fit_model(spec: &ModelSpec, data: &ModelData, opts: &FitOptions) -> Result<FitResult> {
    fit_model_on(spec, data, spec.family.default_shift(), 0..data.len(), opts).map(|(f, _)| f)
}
