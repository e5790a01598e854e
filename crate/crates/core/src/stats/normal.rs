use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub std_dev: f64,
}

impl NormalFit {
    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        if self.std_dev == 0.0 {
            return if samples.iter().all(|&x| x == self.mean) {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let var = self.std_dev * self.std_dev;
        let norm = -0.5 * (2.0 * PI * var).ln();
        samples
            .iter()
            .map(|x| norm - (x - self.mean).powi(2) / (2.0 * var))
            .sum()
    }
}

/// Closed-form normal MLE (variance divisor `n`).
pub fn fit_normal_mle(samples: &[f64]) -> Result<NormalFit> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        log::warn!("normal fit over {} identical values has zero spread", samples.len());
    }
    Ok(NormalFit {
        mean,
        std_dev: var.sqrt(),
    })
}

/// Bayesian information criterion `k ln n − 2 ln L`; lower is better.
pub fn bic(log_likelihood: f64, k_params: usize, n_samples: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Domain("BIC needs at least one sample".into()));
    }
    Ok(k_params as f64 * (n_samples as f64).ln() - 2.0 * log_likelihood)
}
