//! LASSO by cyclic coordinate descent.
//!
//! The objective is `½Σ(y − β₀ − xβ)² + penalty·Σ|β_j|` on the original
//! scale with an unpenalized intercept. Descent runs on standardized
//! columns and target, where coordinate `j` carries the penalty
//! `penalty / (s_y s_j)`, so the reported coefficients solve the
//! original-scale problem exactly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::ols::{information_criteria, standardize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop when no standardized coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub penalty: f64,
    pub names: Vec<String>,
    /// Intercept first, then slopes, on the original scale.
    pub beta: Vec<f64>,
    /// Slopes on the standardized scale, reusable as a warm start.
    pub gamma: Vec<f64>,
    pub sweeps: usize,
    pub max_change: f64,
    pub sse: f64,
    pub sst: f64,
    pub n_obs: usize,
    pub adj_r2: f64,
    pub aic: f64,
    pub bic: f64,
    /// Original-scale objective after each sweep.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl LassoFit {
    /// Names of the columns with a nonzero slope.
    pub fn support(&self) -> Vec<String> {
        self.names
            .iter()
            .zip(&self.beta[1..])
            .filter(|(_, b)| **b != 0.0)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.beta[0]
            + self.beta[1..]
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Smallest penalty that sets every slope to zero: `max_j |x_jᵀ(y − ȳ)|`.
pub fn penalty_max(design: &DesignMatrix) -> f64 {
    let y = &design.target;
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    design
        .columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter()
                .zip(y)
                .map(|(x, v)| (x - m) * (v - ybar))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// `count` penalties log-spaced from `penalty_max` down to `ratio · penalty_max`.
pub fn penalty_grid(design: &DesignMatrix, count: usize, ratio: f64) -> Vec<f64> {
    let top = penalty_max(design);
    if count == 1 {
        return vec![top];
    }
    (0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lasso_fit(design: &DesignMatrix, penalty: f64) -> Result<LassoFit> {
    lasso_fit_warm(design, penalty, None, &LassoOptions::default())
}

/// Sweeps between attempts to jump to the exact solution on the current
/// support. Cyclic descent crawls when columns are nearly collinear.
const POLISH_EVERY: usize = 1000;

/// Solves the optimality conditions with the support and signs of `gamma`
/// held fixed: `Z_Aᵀ(ỹ − Z_A γ_A) = pen_A ∘ sign(γ_A)`. Returns the solution
/// only if it keeps those signs and every inactive coordinate satisfies
/// `|z_jᵀ r| ≤ pen_j`, i.e. it is the lasso optimum.
fn kkt_polish(zcols: &[&[f64]], y: &[f64], pen: &[f64], gamma: &[f64]) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(k, k, |a, b| dot(zcols[active[a]], zcols[active[b]]));
    let rhs = DVector::from_fn(k, |a, _| {
        let j = active[a];
        dot(zcols[j], y) - pen[j] * gamma[j].signum()
    });
    let sol = gram.cholesky()?.solve(&rhs);
    let mut out = vec![0.0; gamma.len()];
    for (a, &j) in active.iter().enumerate() {
        if sol[a].signum() != gamma[j].signum() || !sol[a].is_finite() {
            return None;
        }
        out[j] = sol[a];
    }
    let mut resid = y.to_vec();
    for &j in &active {
        for (r, z) in resid.iter_mut().zip(zcols[j]) {
            *r -= out[j] * z;
        }
    }
    let feasible = (0..gamma.len())
        .filter(|j| out[*j] == 0.0)
        .all(|j| dot(zcols[j], &resid).abs() <= pen[j] * (1.0 + 1e-12));
    feasible.then_some(out)
}

/// Coordinate descent from `warm` (standardized slopes) or from zero.
pub fn lasso_fit_warm(
    design: &DesignMatrix,
    penalty: f64,
    warm: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "penalty must be finite and >= 0, got {penalty}"
        )));
    }
    let n = design.rows();
    let p = design.cols();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "lasso rows".into(),
            required: 3,
            available: n,
        });
    }
    let std = standardize(&design.names, &design.columns)?;
    let y = &design.target;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let sy = (sst / (n as f64 - 1.0)).sqrt();
    if !(sy > 0.0) {
        return Err(Error::Degenerate("lasso target is constant".into()));
    }
    let ytil: Vec<f64> = y.iter().map(|v| (v - ybar) / sy).collect();
    let zcols: Vec<&[f64]> = std.z.as_slice().chunks(n).collect();
    let pen: Vec<f64> = std.scales.iter().map(|s| penalty / (sy * s)).collect();
    let nn = n as f64 - 1.0;

    // At or above the deactivation bound the zero vector satisfies the
    // optimality conditions; returning it directly avoids rounding in ρ.
    let inactive = penalty >= penalty_max(design);
    let mut gamma = match warm {
        Some(w) if w.len() == p && !inactive => w.to_vec(),
        _ => vec![0.0; p],
    };
    let mut resid = ytil.clone();
    for (j, g) in gamma.iter().enumerate() {
        if *g != 0.0 {
            for (r, z) in resid.iter_mut().zip(zcols[j]) {
                *r -= g * z;
            }
        }
    }
    let objective = |resid: &[f64], gamma: &[f64]| -> f64 {
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let l1: f64 = gamma.iter().zip(&pen).map(|(g, q)| g.abs() * q).sum();
        sy * sy * (0.5 * rss + l1)
    };

    let to_beta = |gamma: &[f64]| -> Vec<f64> {
        let mut beta = vec![0.0; p + 1];
        for j in 0..p {
            beta[j + 1] = sy * gamma[j] / std.scales[j];
        }
        beta[0] = ybar - (0..p).map(|j| beta[j + 1] * std.means[j]).sum::<f64>();
        beta
    };

    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut max_change = 0.0f64;
    if !inactive {
        loop {
            max_change = 0.0;
            for j in 0..p {
                let z = zcols[j];
                let old = gamma[j];
                let rho = z.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() + nn * old;
                let new = soft_threshold(rho, pen[j]) / nn;
                if new != old {
                    let delta = new - old;
                    for (r, zi) in resid.iter_mut().zip(z) {
                        *r -= delta * zi;
                    }
                    gamma[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            sweeps += 1;
            if max_change >= opts.tol && sweeps % POLISH_EVERY == 0 {
                if let Some(exact) = kkt_polish(&zcols, &ytil, &pen, &gamma) {
                    resid.clone_from(&ytil);
                    for (j, g) in exact.iter().enumerate() {
                        if *g != 0.0 {
                            for (r, z) in resid.iter_mut().zip(zcols[j]) {
                                *r -= g * z;
                            }
                        }
                    }
                    gamma = exact;
                }
            }
            trace.push(objective(&resid, &gamma));
            if max_change < opts.tol {
                break;
            }
            if sweeps >= opts.max_sweeps {
                return Err(Error::NotConverged {
                    sweeps,
                    max_change,
                    last_iterate: to_beta(&gamma),
                });
            }
        }
    }

    let beta = to_beta(&gamma);
    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            y[i] - beta[0]
                - (0..p)
                    .map(|j| beta[j + 1] * design.columns[j][i])
                    .sum::<f64>()
        })
        .collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let k = 1 + gamma.iter().filter(|g| **g != 0.0).count();
    let (adj_r2, aic, bic) = information_criteria(n, k, sse, sst);
    Ok(LassoFit {
        penalty,
        names: design.names.clone(),
        beta,
        gamma,
        sweeps,
        max_change,
        sse,
        sst,
        n_obs: n,
        adj_r2,
        aic,
        bic,
        objective_trace: trace,
        residuals,
    })
}

/// Contiguous fold boundaries; the first `rows % folds` folds get one extra row.
pub fn contiguous_folds(rows: usize, folds: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let base = rows / folds;
    if base < 2 {
        return Err(Error::InsufficientData {
            what: format!("rows for {folds}-fold validation (2 per fold)"),
            required: 2 * folds,
            available: rows,
        });
    }
    let extra = rows % folds;
    let mut start = 0;
    Ok((0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoCv {
    pub penalty: f64,
    pub grid: Vec<f64>,
    /// Mean validation MSE per grid value.
    pub cv_mse: Vec<f64>,
    pub fit: LassoFit,
}

/// K-fold cross-validation over `grid` with contiguous time blocks. Ties in
/// mean validation MSE go to the earliest grid value. The selected penalty
/// is refit on all rows.
pub fn lasso_cv(design: &DesignMatrix, grid: &[f64], folds: usize) -> Result<LassoCv> {
    lasso_cv_with(design, grid, folds, &LassoOptions::default())
}

pub fn lasso_cv_with(
    design: &DesignMatrix,
    grid: &[f64],
    folds: usize,
    opts: &LassoOptions,
) -> Result<LassoCv> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("penalty grid is empty".into()));
    }
    let blocks = contiguous_folds(design.rows(), folds)?;
    let per_fold: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|block| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..design.rows()).filter(|i| !block.contains(i)).collect();
            let valid: Vec<usize> = block.clone().collect();
            let tr = design.select_rows(&train);
            let va = design.select_rows(&valid);
            let mut warm: Option<Vec<f64>> = None;
            grid.iter()
                .map(|&pen| {
                    let fit = lasso_fit_warm(&tr, pen, warm.as_deref(), opts)?;
                    let mse = (0..va.rows())
                        .map(|i| (va.target[i] - fit.predict(&va.row(i))).powi(2))
                        .sum::<f64>()
                        / va.rows() as f64;
                    warm = Some(fit.gamma);
                    Ok(mse)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let cv_mse: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / folds as f64)
        .collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]).then(a.cmp(&b)))
        .expect("nonempty grid");
    let fit = lasso_fit_warm(design, grid[best], None, opts)?;
    Ok(LassoCv {
        penalty: grid[best],
        grid: grid.to_vec(),
        cv_mse,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ols::ols_fit;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(seed: u64, n: usize, p: usize) -> DesignMatrix {
        let mut rng = stream(seed, 0);
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                (0..n)
                    .map(|_| {
                        (j + 1) as f64 * {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z
                        }
                    })
                    .collect()
            })
            .collect();
        let y = (0..n)
            .map(|i| {
                1.0 + 0.8 * cols[0][i] - 0.3 * cols[p - 1][i] + {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect();
        DesignMatrix::from_columns((0..p).map(|j| format!("x{j}")).collect(), cols, y).unwrap()
    }

    #[test]
    fn zero_penalty_is_ols() {
        let d = random_design(1, 200, 5);
        let l = lasso_fit(&d, 0.0).unwrap();
        let o = ols_fit(&d).unwrap();
        for (a, b) in l.beta.iter().zip(&o.beta) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn deactivation_bound() {
        let d = random_design(2, 100, 4);
        let top = penalty_max(&d);
        let l = lasso_fit(&d, top).unwrap();
        assert!(l.beta[1..].iter().all(|b| *b == 0.0));
        let ybar = d.target.iter().sum::<f64>() / 100.0;
        assert!((l.beta[0] - ybar).abs() < 1e-12);
        let l = lasso_fit(&d, 0.99 * top).unwrap();
        assert_eq!(l.support().len(), 1);
    }

    #[test]
    fn objective_never_increases() {
        let d = random_design(3, 150, 6);
        let l = lasso_fit(&d, 0.1 * penalty_max(&d)).unwrap();
        for w in l.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
    }

    #[test]
    fn fold_layout() {
        let f = contiguous_folds(600, 10).unwrap();
        assert!(f.iter().all(|r| r.len() == 60));
        let f = contiguous_folds(23, 10).unwrap();
        assert_eq!(f[0], 0..3);
        assert_eq!(f[3], 9..11);
        assert_eq!(f.last().unwrap().end, 23);
        assert!(contiguous_folds(19, 10).is_err());
        assert!(contiguous_folds(19, 1).is_err());
    }

    #[test]
    fn single_value_grid() {
        let d = random_design(4, 120, 3);
        let cv = lasso_cv(&d, &[0.5], 10).unwrap();
        assert_eq!(cv.penalty, 0.5);
        assert!(lasso_cv(&d, &[], 10).is_err());
    }

    #[test]
    fn non_convergence_carries_iterate() {
        let d = random_design(5, 100, 4);
        let opts = LassoOptions {
            tol: 0.0,
            max_sweeps: 3,
        };
        match lasso_fit_warm(&d, 0.0, None, &opts) {
            Err(Error::NotConverged {
                sweeps,
                last_iterate,
                ..
            }) => {
                assert_eq!(sweeps, 3);
                assert_eq!(last_iterate.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
