//! Profiled least squares over kernel decays.
//!
//! For a fixed λ vector the design is rebuilt and solved by OLS; the outer
//! problem minimizes that SSE over ln λ with Nelder–Mead from several
//! starts. Points outside the search box are clamped onto it.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::ModelSpec;
use super::design::{design_from_table, regressor_table, DesignMatrix, ModelData};
use super::ols::{ols_fit_with, Covariance, Regression};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdOptions {
    pub lower: f64,
    pub upper: f64,
    pub starts: usize,
    /// Objective evaluations allowed per start and per dimension.
    pub max_evals_per_dim: usize,
    /// Simplex size tolerance in ln λ.
    pub xtol: f64,
    /// Relative spread tolerance of simplex SSE values.
    pub ftol: f64,
    pub covariance: Covariance,
}

impl Default for PdOptions {
    fn default() -> Self {
        Self {
            lower: 0.01,
            upper: 50.0,
            starts: 5,
            max_evals_per_dim: 250,
            xtol: 1e-7,
            ftol: 1e-12,
            covariance: Covariance::Classical,
        }
    }
}

impl PdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decay search box [{}, {}] is invalid",
                self.lower, self.upper
            )));
        }
        if self.starts == 0 || self.max_evals_per_dim < 10 {
            return Err(Error::InvalidParameter(
                "need at least one start and ten evaluations".into(),
            ));
        }
        Ok(())
    }

    /// Starting decays: `starts` points log-spaced strictly inside the box.
    pub fn start_points(&self) -> Vec<f64> {
        let (a, b) = (self.lower.ln(), self.upper.ln());
        let m = self.starts as f64 + 1.0;
        (1..=self.starts)
            .map(|k| (a + (b - a) * k as f64 / m).exp())
            .collect()
    }
}

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub sse: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Profiled fit at the best decays found.
#[derive(Debug, Clone, PartialEq)]
pub struct PdFit {
    pub lambdas: Vec<f64>,
    /// Per decay, whether it ended on the search box.
    pub boundary: Vec<bool>,
    pub regression: Regression,
    pub design: DesignMatrix,
    pub starts: Vec<StartOutcome>,
    /// Coefficient standard errors from the joint least-squares problem in
    /// (β, λ), which account for the decays being estimated. `None` when
    /// the joint Jacobian is rank deficient.
    pub joint_se: Option<Vec<f64>>,
}

/// Result of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization with standard coefficients
/// (reflection 1, expansion 2, contraction ½, shrink ½). The initial simplex
/// adds `step` to each coordinate of `x0`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    xtol: f64,
    ftol: f64,
) -> Minimum {
    let d = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let converged;

    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };

    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = (vals[d] - vals[0]).abs();
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if vals[0].is_finite()
            && spread <= ftol * vals[0].abs().max(f64::MIN_POSITIVE)
            && size <= xtol
        {
            converged = true;
            break;
        }
        if size <= xtol * 1e-3 || evals.get() >= max_evals {
            converged = size <= xtol;
            break;
        }

        let mut centroid = vec![0.0; d];
        for p in &pts[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let worst = pts[d].clone();
        let xr = lerp(&centroid, &worst, -1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = lerp(&centroid, &worst, -2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
            continue;
        }
        if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < vals[d] {
            let xc = lerp(&centroid, &xr, 0.5);
            let fc = eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = lerp(&centroid, &worst, 0.5);
            let fc = eval(&xc);
            (xc, fc, fc < vals[d])
        };
        if accept {
            pts[d] = xc;
            vals[d] = fc;
            continue;
        }
        for i in 1..=d {
            pts[i] = lerp(&pts[0], &pts[i], 0.5);
            vals[i] = eval(&pts[i]);
        }
    }
    Minimum {
        x: pts[0].clone(),
        fx: vals[0],
        evaluations: evals.get(),
        converged,
    }
}

/// OLS on the design of `spec` (at its current decays) restricted to
/// target indices in `targets`, with regressors lagged by `shift`.
pub fn conditional_fit(
    spec: &ModelSpec,
    data: &ModelData,
    shift: usize,
    targets: Range<usize>,
    covariance: Covariance,
) -> Result<(DesignMatrix, Regression)> {
    let table = regressor_table(spec, data)?;
    let design = design_from_table(&table, data, shift, targets)?;
    let reg = ols_fit_with(&design, covariance)?;
    Ok((design, reg))
}

/// Estimates the decays of `spec` by profiled least squares over the given
/// target rows. The returned regression is the OLS refit at λ̂.
pub fn fit_pd_on(
    spec: &ModelSpec,
    data: &ModelData,
    shift: usize,
    targets: Range<usize>,
    opts: &PdOptions,
) -> Result<PdFit> {
    opts.validate()?;
    let d = spec.family.lambda_count();
    if d == 0 {
        return Err(Error::InvalidParameter(format!(
            "{} has no kernel decays",
            spec.family
        )));
    }
    let (lo, hi) = (opts.lower.ln(), opts.upper.ln());
    let to_lambdas = |u: &[f64]| -> Vec<f64> { u.iter().map(|v| v.clamp(lo, hi).exp()).collect() };
    let sse = |u: &[f64]| -> f64 {
        let s = spec.clone().with_lambdas(to_lambdas(u));
        match conditional_fit(&s, data, shift, targets.clone(), Covariance::Classical) {
            Ok((_, reg)) => reg.sse,
            Err(_) => f64::INFINITY,
        }
    };
    let starts = opts.start_points();
    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .map(|&s| {
            let x0 = vec![s.ln(); d];
            let step = 0.5 * (hi - lo) / (opts.starts as f64 + 1.0);
            let m = nelder_mead(
                sse,
                &x0,
                step,
                opts.max_evals_per_dim * d,
                opts.xtol,
                opts.ftol,
            );
            StartOutcome {
                start: vec![s; d],
                lambdas: to_lambdas(&m.x),
                sse: m.fx,
                evaluations: m.evaluations,
                converged: m.converged,
            }
        })
        .collect();
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.sse.is_finite())
        .min_by(|(i, a), (j, b)| a.sse.total_cmp(&b.sse).then(i.cmp(j)))
        .map(|(_, o)| o.lambdas.clone())
        .ok_or_else(|| Error::Optimization(format!("every start failed for {}", spec.name())))?;
    let fitted = spec.clone().with_lambdas(best.clone());
    let (design, regression) = conditional_fit(&fitted, data, shift, targets, opts.covariance)?;
    let tol = 1e-9;
    let boundary = best
        .iter()
        .map(|l| (l.ln() - lo).abs() < tol || (l.ln() - hi).abs() < tol)
        .collect();
    let joint_se = joint_standard_errors(&fitted, data, shift, &design, &regression)?;
    Ok(PdFit {
        lambdas: best,
        boundary,
        regression,
        design,
        starts: outcomes,
        joint_se,
    })
}

/// Classical standard errors of β from the Jacobian of the fitted values in
/// (β, λ). Derivatives in λ are central differences of the regressors.
fn joint_standard_errors(
    spec: &ModelSpec,
    data: &ModelData,
    shift: usize,
    design: &DesignMatrix,
    reg: &Regression,
) -> Result<Option<Vec<f64>>> {
    let n = design.rows();
    let p = design.cols();
    let d = spec.lambdas.len();
    let k = p + 1 + d;
    if n <= k {
        return Ok(None);
    }
    let mut jac = DMatrix::zeros(n, k);
    for i in 0..n {
        jac[(i, 0)] = 1.0;
        for j in 0..p {
            jac[(i, j + 1)] = design.columns[j][i];
        }
    }
    let rows: Vec<usize> = design.target_index.iter().map(|t| t - shift).collect();
    for m in 0..d {
        let h = 1e-5 * spec.lambdas[m];
        let table_at = |delta: f64| -> Result<Vec<Vec<f64>>> {
            let mut l = spec.lambdas.clone();
            l[m] += delta;
            let t = regressor_table(&spec.clone().with_lambdas(l), data)?;
            Ok(t.columns
                .iter()
                .map(|c| rows.iter().map(|&o| c[o]).collect())
                .collect())
        };
        let up = table_at(h)?;
        let down = table_at(-h)?;
        for i in 0..n {
            jac[(i, p + 1 + m)] = (0..p)
                .map(|j| reg.beta[j + 1] * (up[j][i] - down[j][i]) / (2.0 * h))
                .sum::<f64>();
        }
    }
    // Scale columns to unit norm before inverting.
    let norms: Vec<f64> = (0..k).map(|j| jac.column(j).norm()).collect();
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Ok(None);
    }
    for j in 0..k {
        let nj = norms[j];
        jac.column_mut(j).scale_mut(1.0 / nj);
    }
    let r = jac.qr().r();
    if (0..k).any(|j| r[(j, j)].abs() < 1e-12) {
        return Ok(None);
    }
    let Some(r_inv) = r.solve_upper_triangular(&DMatrix::identity(k, k)) else {
        return Ok(None);
    };
    let cov = &r_inv * r_inv.transpose() * (reg.sse / (n - k) as f64);
    Ok(Some(
        (0..=p)
            .map(|j| cov[(j, j)].max(0.0).sqrt() / norms[j])
            .collect(),
    ))
}

/// In-sample profiled fit over every usable row.
pub fn fit_pd(spec: &ModelSpec, data: &ModelData, opts: &PdOptions) -> Result<PdFit> {
    fit_pd_on(spec, data, spec.family.default_shift(), 0..data.len(), opts)
}
