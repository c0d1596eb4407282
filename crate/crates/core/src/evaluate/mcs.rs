//! Model confidence set by iterated equivalence tests.
//!
//! The variance of each mean loss differential and the null distribution
//! of the test statistic both come from a moving-block bootstrap of the
//! dates. One set of bootstrap indices is drawn per replication from its
//! own counter-based stream and shared by all models and all steps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Equivalence-test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McsStatistic {
    /// `max_{u,v} |d̄_uv| / √var(d̄_uv)`.
    Range,
    /// `max_{u,v} d̄_uv² / var(d̄_uv)`.
    SemiQuadratic,
    /// `max_u d̄_u· / √var(d̄_u·)` with `d̄_u·` the model's mean loss minus
    /// the average over the set.
    DeviationMax,
}

impl McsStatistic {
    pub fn name(self) -> &'static str {
        match self {
            McsStatistic::Range => "T_R",
            McsStatistic::SemiQuadratic => "T_max",
            McsStatistic::DeviationMax => "T_max_dev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub statistic: McsStatistic,
    pub reps: usize,
    /// `None` uses `⌈n^{1/3}⌉`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            statistic: McsStatistic::Range,
            reps: 5000,
            block_len: None,
            seed: 0,
        }
    }
}

pub fn default_block_len(n: usize) -> usize {
    let mut l = (n as f64).cbrt().ceil() as usize;
    // Guard against cbrt rounding just above an exact cube.
    while l > 1 && (l - 1).pow(3) >= n {
        l -= 1;
    }
    l.max(1)
}

/// One elimination step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub eliminated: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub statistic: McsStatistic,
    pub models: Vec<String>,
    /// Monotonized p-value per model, in input order.
    pub p_values: Vec<f64>,
    /// Models in elimination order; the last entry is never eliminated.
    pub steps: Vec<McsStep>,
    pub reps: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl McsResult {
    /// Models whose p-value is at least `alpha`.
    pub fn survivors(&self, alpha: f64) -> Vec<String> {
        self.models
            .iter()
            .zip(&self.p_values)
            .filter(|(_, p)| **p >= alpha)
            .map(|(m, _)| m.clone())
            .collect()
    }

    pub fn survives(&self, model: &str, alpha: f64) -> bool {
        self.models
            .iter()
            .position(|m| m == model)
            .is_some_and(|i| self.p_values[i] >= alpha)
    }
}

fn bootstrap_indices(n: usize, block: usize, seed: u64, rep: u64) -> Vec<usize> {
    let mut rng = stream(seed, rep);
    let starts = n - block + 1;
    let mut idx = Vec::with_capacity(n + block);
    while idx.len() < n {
        let s = rng.random_range(0..starts);
        idx.extend(s..s + block);
    }
    idx.truncate(n);
    idx
}

/// `x / √v` with 0/0 read as 0 and x/0 as ±∞.
fn standardized(x: f64, var: f64) -> f64 {
    if var > 0.0 {
        x / var.sqrt()
    } else if x == 0.0 {
        0.0
    } else {
        x.signum() * f64::INFINITY
    }
}

/// Runs the full elimination sequence on `losses[model][date]` for one loss
/// kind. P-values are monotonized along the elimination order.
pub fn mcs(models: &[String], losses: &[Vec<f64>], cfg: &McsConfig) -> Result<McsResult> {
    let m = losses.len();
    if m == 0 || m != models.len() {
        return Err(Error::InvalidParameter(
            "one loss series per model name required".into(),
        ));
    }
    let n = losses[0].len();
    if n == 0 || losses.iter().any(|l| l.len() != n) {
        return Err(Error::InvalidParameter(
            "loss series must be nonempty and of equal length".into(),
        ));
    }
    if cfg.reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 bootstrap reps, got {}",
            cfg.reps
        )));
    }
    let block_len = cfg.block_len.unwrap_or_else(|| default_block_len(n));
    if block_len == 0 || block_len > n {
        return Err(Error::InvalidParameter(format!(
            "block length {block_len} outside 1..={n}"
        )));
    }

    let means: Vec<f64> = losses
        .iter()
        .map(|l| l.iter().sum::<f64>() / n as f64)
        .collect();
    // boot[b][i]: mean loss of model i under replication b.
    let boot: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|b| {
            let idx = bootstrap_indices(n, block_len, cfg.seed, b);
            losses
                .iter()
                .map(|l| idx.iter().map(|&t| l[t]).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();

    let mut alive: Vec<usize> = (0..m).collect();
    let mut steps = Vec::with_capacity(m);
    let mut p_values = vec![1.0; m];
    let mut running_max = 0.0f64;
    while alive.len() > 1 {
        let (stat, boot_stats, worst) = match cfg.statistic {
            McsStatistic::Range | McsStatistic::SemiQuadratic => {
                pairwise_step(&alive, &means, &boot, cfg.statistic)
            }
            McsStatistic::DeviationMax => deviation_step(&alive, &means, &boot),
        };
        let exceed = boot_stats.iter().filter(|t| **t >= stat).count();
        let p = exceed as f64 / cfg.reps as f64;
        running_max = running_max.max(p);
        p_values[worst] = running_max;
        steps.push(McsStep {
            eliminated: models[worst].clone(),
            statistic: stat,
            p_value: p,
        });
        alive.retain(|&i| i != worst);
    }
    steps.push(McsStep {
        eliminated: models[alive[0]].clone(),
        statistic: 0.0,
        p_value: 1.0,
    });
    p_values[alive[0]] = 1.0;
    Ok(McsResult {
        statistic: cfg.statistic,
        models: models.to_vec(),
        p_values,
        steps,
        reps: cfg.reps,
        block_len,
        seed: cfg.seed,
    })
}

/// Statistic, its bootstrap distribution and the model to eliminate, using
/// pairwise differentials.
fn pairwise_step(
    alive: &[usize],
    means: &[f64],
    boot: &[Vec<f64>],
    kind: McsStatistic,
) -> (f64, Vec<f64>, usize) {
    let k = alive.len();
    let reps = boot.len() as f64;
    let mut var = vec![vec![0.0; k]; k];
    for a in 0..k {
        for c in a + 1..k {
            let (i, j) = (alive[a], alive[c]);
            let d = means[i] - means[j];
            let v = boot.iter().map(|b| (b[i] - b[j] - d).powi(2)).sum::<f64>() / reps;
            var[a][c] = v;
            var[c][a] = v;
        }
    }
    let transform = |z: f64| match kind {
        McsStatistic::SemiQuadratic => z * z,
        _ => z.abs(),
    };
    let mut stat = 0.0f64;
    // Worst model: largest standardized adverse differential against any other.
    let mut worst = (alive[0], f64::NEG_INFINITY);
    for a in 0..k {
        let mut own = f64::NEG_INFINITY;
        for c in 0..k {
            if a == c {
                continue;
            }
            let z = standardized(means[alive[a]] - means[alive[c]], var[a][c]);
            stat = stat.max(transform(z));
            own = own.max(z);
        }
        if own > worst.1 {
            worst = (alive[a], own);
        }
    }
    let boot_stats = boot
        .iter()
        .map(|b| {
            let mut t = 0.0f64;
            for a in 0..k {
                for c in a + 1..k {
                    let (i, j) = (alive[a], alive[c]);
                    let z = standardized(b[i] - b[j] - (means[i] - means[j]), var[a][c]);
                    t = t.max(transform(if z.is_finite() { z } else { 0.0 }));
                }
            }
            t
        })
        .collect();
    (stat, boot_stats, worst.0)
}

fn deviation_step(alive: &[usize], means: &[f64], boot: &[Vec<f64>]) -> (f64, Vec<f64>, usize) {
    let k = alive.len() as f64;
    let reps = boot.len() as f64;
    // Averaging pairwise differences keeps identical series at exactly zero.
    let deviations = |v: &[f64]| -> Vec<f64> {
        alive
            .iter()
            .map(|&i| alive.iter().map(|&j| v[i] - v[j]).sum::<f64>() / k)
            .collect()
    };
    let dev = deviations(means);
    let boot_dev: Vec<Vec<f64>> = boot.iter().map(|b| deviations(b)).collect();
    let var: Vec<f64> = (0..alive.len())
        .map(|a| {
            boot_dev
                .iter()
                .map(|bd| (bd[a] - dev[a]).powi(2))
                .sum::<f64>()
                / reps
        })
        .collect();
    let z: Vec<f64> = dev
        .iter()
        .zip(&var)
        .map(|(d, v)| standardized(*d, *v))
        .collect();
    let (mut worst, mut stat) = (0, f64::NEG_INFINITY);
    for (a, zi) in z.iter().enumerate() {
        if *zi > stat {
            stat = *zi;
            worst = a;
        }
    }
    let boot_stats = boot_dev
        .iter()
        .map(|bd| {
            (0..alive.len())
                .map(|a| {
                    let t = standardized(bd[a] - dev[a], var[a]);
                    if t.is_finite() {
                        t
                    } else {
                        0.0
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    (stat, boot_stats, alive[worst])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(default_block_len(600), 9);
        assert_eq!(default_block_len(27), 3);
        assert_eq!(default_block_len(1), 1);
    }

    #[test]
    fn single_model() {
        let r = mcs(
            &names(1),
            &[vec![1.0, 2.0, 3.0]],
            &McsConfig {
                reps: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.p_values, vec![1.0]);
    }

    #[test]
    fn identical_series_keep_everything() {
        let l: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        for statistic in [
            McsStatistic::Range,
            McsStatistic::SemiQuadratic,
            McsStatistic::DeviationMax,
        ] {
            let cfg = McsConfig {
                statistic,
                reps: 200,
                ..Default::default()
            };
            let r = mcs(&names(3), &[l.clone(), l.clone(), l.clone()], &cfg).unwrap();
            assert!(r.p_values.iter().all(|p| *p == 1.0), "{statistic:?}");
        }
    }

    #[test]
    fn clear_loser_goes_first() {
        let a: Vec<f64> = (0..300)
            .map(|i| 1.0 + 0.1 * (i as f64 * 0.7).sin())
            .collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        let r = mcs(
            &names(2),
            &[b, a],
            &McsConfig {
                reps: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.steps[0].eliminated, "m0");
        assert!(r.p_values[0] < 0.01);
        assert_eq!(r.p_values[1], 1.0);
    }

    #[test]
    fn reproducible_and_validated() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64).sin().abs()).collect();
        let b: Vec<f64> = (0..100).map(|i| (i as f64 * 1.3).cos().abs()).collect();
        let cfg = McsConfig {
            reps: 300,
            seed: 7,
            ..Default::default()
        };
        let x = mcs(&names(2), &[a.clone(), b.clone()], &cfg).unwrap();
        let y = mcs(&names(2), &[a.clone(), b.clone()], &cfg).unwrap();
        assert_eq!(x, y);
        assert!(mcs(
            &names(2),
            &[a.clone(), b.clone()],
            &McsConfig { reps: 50, ..cfg }
        )
        .is_err());
        assert!(mcs(
            &names(2),
            &[a, b],
            &McsConfig {
                block_len: Some(101),
                ..cfg
            }
        )
        .is_err());
    }
}
