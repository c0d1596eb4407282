use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use crate::error::{Error, Result};

/// Covariance estimator for the coefficient standard errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    #[default]
    Classical,
    /// White's heteroskedasticity-consistent sandwich (HC0).
    Hc0,
}

/// Least-squares fit with an intercept. `beta[0]` is the intercept and
/// `beta[j]` belongs to `names[j − 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub n_obs: usize,
    pub sse: f64,
    pub sst: f64,
    pub adj_r2: f64,
    pub aic: f64,
    pub bic: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl Regression {
    /// Parameter count including the intercept.
    pub fn k(&self) -> usize {
        self.beta.len()
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

/// Adjusted R², AIC and BIC from stored N, k and sums of squares.
pub fn information_criteria(n: usize, k: usize, sse: f64, sst: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let kf = k as f64;
    let adj_r2 = 1.0 - (sse / (nf - kf)) / (sst / (nf - 1.0));
    let ll = nf * (sse / nf).ln();
    (adj_r2, ll + 2.0 * kf, ll + kf * nf.ln())
}

pub(crate) struct Standardized {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// n × p, centered and scaled to unit sample variance.
    pub z: DMatrix<f64>,
}

/// Centers and scales each column, rejecting constant or nearly collinear
/// columns by name.
pub(crate) fn standardize(names: &[String], columns: &[Vec<f64>]) -> Result<Standardized> {
    let n = columns.first().map_or(0, Vec::len);
    let p = columns.len();
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for (name, c) in names.iter().zip(columns) {
        if let Some(v) = c.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "column {name} holds non-finite value {v}"
            )));
        }
        let m = c.iter().sum::<f64>() / n as f64;
        let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if !(s > 0.0) || s <= 1e-14 * m.abs() {
            return Err(Error::SingularDesign(format!("column {name} is constant")));
        }
        means.push(m);
        scales.push(s);
    }
    let z = DMatrix::from_fn(n, p, |i, j| (columns[j][i] - means[j]) / scales[j]);
    for a in 0..p {
        for b in a + 1..p {
            let corr = z.column(a).dot(&z.column(b)) / (n as f64 - 1.0);
            if corr.abs() > 1.0 - 1e-10 {
                return Err(Error::SingularDesign(format!(
                    "columns {} and {} are collinear (correlation {corr})",
                    names[a], names[b]
                )));
            }
        }
    }
    Ok(Standardized { means, scales, z })
}

/// Ordinary least squares on `design` with classical standard errors.
pub fn ols_fit(design: &DesignMatrix) -> Result<Regression> {
    ols_fit_with(design, Covariance::Classical)
}

/// Ordinary least squares via a QR factorization of the standardized design.
pub fn ols_fit_with(design: &DesignMatrix, covariance: Covariance) -> Result<Regression> {
    let n = design.rows();
    let p = design.cols();
    let k = p + 1;
    if n <= k {
        return Err(Error::InsufficientData {
            what: "least-squares rows".into(),
            required: k + 1,
            available: n,
        });
    }
    let y = &design.target;
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target holds non-finite value {v}"
        )));
    }
    let std = standardize(&design.names, &design.columns)?;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));

    let qr = std.z.clone().qr();
    let r = qr.r();
    let scale = (n as f64 - 1.0).sqrt();
    for j in 0..p {
        if r[(j, j)].abs() < 1e-10 * scale {
            return Err(Error::SingularDesign(format!(
                "column {} is a linear combination of earlier columns",
                design.names[j]
            )));
        }
    }
    let qty = qr.q().transpose() * &yc;
    let gamma = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;

    let mut beta = vec![0.0; k];
    for j in 0..p {
        beta[j + 1] = gamma[j] / std.scales[j];
    }
    beta[0] = ybar - (0..p).map(|j| beta[j + 1] * std.means[j]).sum::<f64>();

    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            y[i] - beta[0]
                - (0..p)
                    .map(|j| beta[j + 1] * design.columns[j][i])
                    .sum::<f64>()
        })
        .collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let sst: f64 = yc.iter().map(|v| v * v).sum();

    // Coefficients θ = (ȳ, γ) on the augmented standardized design [1, Z],
    // whose Gram matrix is block-diagonal: diag(n, RᵀR).
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign("triangular inverse failed".into()))?;
    let gram_inv_z = &r_inv * r_inv.transpose();
    let mut gram_inv = DMatrix::zeros(k, k);
    gram_inv[(0, 0)] = 1.0 / n as f64;
    gram_inv.view_mut((1, 1), (p, p)).copy_from(&gram_inv_z);
    let cov_theta = match covariance {
        Covariance::Classical => gram_inv * (sse / (n - k) as f64),
        Covariance::Hc0 => {
            let mut meat = DMatrix::zeros(k, k);
            let mut a = DVector::zeros(k);
            for (i, e) in residuals.iter().enumerate() {
                a[0] = 1.0;
                for j in 0..p {
                    a[j + 1] = std.z[(i, j)];
                }
                meat.ger(e * e, &a, &a, 1.0);
            }
            &gram_inv * meat * &gram_inv
        }
    };
    // β = T θ.
    let mut t = DMatrix::zeros(k, k);
    t[(0, 0)] = 1.0;
    for j in 0..p {
        t[(0, j + 1)] = -std.means[j] / std.scales[j];
        t[(j + 1, j + 1)] = 1.0 / std.scales[j];
    }
    let cov_beta = &t * cov_theta * t.transpose();
    let se = (0..k).map(|j| cov_beta[(j, j)].max(0.0).sqrt()).collect();

    let (adj_r2, aic, bic) = information_criteria(n, k, sse, sst);
    Ok(Regression {
        names: design.names.clone(),
        beta,
        se,
        n_obs: n,
        sse,
        sst,
        adj_r2,
        aic,
        bic,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn design(cols: Vec<Vec<f64>>, y: Vec<f64>) -> DesignMatrix {
        let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_columns(names, cols, y).unwrap()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = ols_fit(&design(vec![x], y)).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert!((fit.beta[1] - 2.0).abs() < 1e-12);
        assert!((fit.adj_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_and_orthogonality() {
        let mut rng = stream(3, 0);
        let n = 200;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                0.5 + cols[0][i] - 2.0 * cols[2][i]
                    + 0.3 * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    }
            })
            .collect();
        let d = design(cols.clone(), y.clone());
        let fit = ols_fit(&d).unwrap();
        for c in &cols {
            let dot: f64 = c.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            assert!(dot.abs() / (n as f64) < 1e-10);
        }
        assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-10);

        // Independent check of the classical SE through (XᵀX)⁻¹.
        let x = DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let s2 = fit.sse / (n - 4) as f64;
        for j in 0..4 {
            assert!((fit.se[j] - (s2 * xtx_inv[(j, j)]).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn rescaling_leaves_adj_r2() {
        let mut rng = stream(4, 0);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                v + {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect();
        let a = ols_fit(&design(vec![x.clone()], y.clone())).unwrap();
        let b = ols_fit(&design(
            vec![x.iter().map(|v| 1000.0 * v + 7.0).collect()],
            y,
        ))
        .unwrap();
        assert!((a.adj_r2 - b.adj_r2).abs() < 1e-12);
        assert!((a.beta[1] - 1000.0 * b.beta[1]).abs() < 1e-9);
    }

    #[test]
    fn singular_designs_name_columns() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let err = ols_fit(&design(
            vec![x.clone(), x.iter().map(|v| 3.0 * v).collect()],
            y.clone(),
        ))
        .unwrap_err();
        assert!(
            matches!(err, Error::SingularDesign(ref m) if m.contains("x0") && m.contains("x1"))
        );
        let err = ols_fit(&design(vec![x.clone(), vec![2.0; 10]], y.clone())).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(ref m) if m.contains("x1")));
        let z: Vec<f64> = x.iter().map(|v| (v * 0.7).sin()).collect();
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let err = ols_fit(&design(vec![x, z, sum], y)).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(ref m) if m.contains("x2")));
    }

    #[test]
    fn hc0_matches_direct_sandwich() {
        let mut rng = stream(5, 0);
        let n = 150;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                1.0 + v
                    + v.abs() * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    }
            })
            .collect();
        let fit = ols_fit_with(&design(vec![x.clone()], y), Covariance::Hc0).unwrap();
        let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let bread = (xm.transpose() * &xm).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..n {
            let row = xm.row(i).transpose();
            meat += &row * row.transpose() * fit.residuals[i].powi(2);
        }
        let cov = &bread * meat * &bread;
        for j in 0..2 {
            assert!((fit.se[j] - cov[(j, j)].sqrt()).abs() < 1e-10);
        }
    }
}
