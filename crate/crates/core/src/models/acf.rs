use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::autocorrelations;

/// Residual autocorrelations with the ±1.96/√N white-noise band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualAcf {
    pub rho: Vec<f64>,
    pub band: f64,
}

impl ResidualAcf {
    pub fn inside_fraction(&self) -> f64 {
        self.rho.iter().filter(|r| r.abs() <= self.band).count() as f64 / self.rho.len() as f64
    }
}

pub fn residual_acf(residuals: &[f64], max_lag: usize) -> Result<ResidualAcf> {
    let rho = autocorrelations(residuals, max_lag)?;
    Ok(ResidualAcf {
        rho,
        band: 1.96 / (residuals.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_mostly_inside() {
        let mut rng = stream(11, 0);
        let e: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let acf = residual_acf(&e, 500).unwrap();
        let f = acf.inside_fraction();
        assert!((0.92..=0.98).contains(&f), "{f}");
    }

    #[test]
    fn alternating() {
        let e: Vec<f64> = (0..400)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let acf = residual_acf(&e, 1).unwrap();
        assert!(acf.rho[0] < -0.99);
    }
}
