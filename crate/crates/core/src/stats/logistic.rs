use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic distribution with location `m` and scale `s`.
///
/// `s = 0` is allowed and denotes a point mass at `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub m: f64,
    pub s: f64,
}

impl LogisticModel {
    pub const ZERO: LogisticModel = LogisticModel { m: 0.0, s: 0.0 };

    pub fn new(m: f64, s: f64) -> Result<Self> {
        if !m.is_finite() || !s.is_finite() || s < 0.0 {
            return Err(Error::Domain(format!("invalid logistic parameters m={m}, s={s}")));
        }
        Ok(Self { m, s })
    }

    pub fn std_dev(&self) -> f64 {
        self.s * PI / 3f64.sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.m) / self.s;
        -z - self.s.ln() - 2.0 * softplus(-z)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-(x - self.m) / self.s).exp())
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        self.m + self.s * (u / (1.0 - u)).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.s == 0.0 {
            return self.m;
        }
        let u: f64 = rng.sample(rand::distr::Open01);
        self.quantile(u)
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

/// ln(1 + e^a) without overflow.
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Mean log-likelihood with its gradient and Hessian in (m, s).
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalFit {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

pub(crate) fn mean_log_likelihood(samples: &[f64], m: f64, s: f64) -> LocalFit {
    let n = samples.len() as f64;
    let (mut value, mut gm, mut gs) = (0.0, 0.0, 0.0);
    let (mut hmm, mut hms, mut hss) = (0.0, 0.0, 0.0);
    for &x in samples {
        let z = (x - m) / s;
        let t = (z / 2.0).tanh();
        let q = 0.5 * (1.0 - t * t);
        value += -z - 2.0 * softplus(-z);
        gm += t;
        gs += z * t - 1.0;
        hmm -= q;
        hms -= q * z + t;
        hss += 1.0 - 2.0 * z * t - z * z * q;
    }
    let s2 = s * s;
    LocalFit {
        value: value / n - s.ln(),
        grad: [gm / (n * s), gs / (n * s)],
        hess: [[hmm / (n * s2), hms / (n * s2)], [hms / (n * s2), hss / (n * s2)]],
    }
}

/// Tolerance on the scale-free gradient `s · ∇ℓ̄` at convergence.
pub const MLE_GRADIENT_TOL: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 500;

/// Maximum-likelihood logistic fit by damped Newton iteration.
///
/// Starts from the sample median and the moment estimate `σ̂·√3/π` of the
/// scale. Converges when the gradient of the mean log-likelihood, scaled by
/// `s` to be unit-free, has norm below [`MLE_GRADIENT_TOL`].
pub fn fit_logistic_mle(samples: &[f64]) -> Result<LogisticModel> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    let Some(&first) = samples.first() else {
        return Err(Error::Degenerate("no samples".into()));
    };
    if samples.iter().all(|&x| x == first) {
        return Err(Error::Degenerate(format!(
            "all {} samples equal {first}; logistic scale would be 0",
            samples.len()
        )));
    }

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut m = median(samples);
    let mut s = var.sqrt() * 3f64.sqrt() / PI;

    let mut cur = mean_log_likelihood(samples, m, s);
    for _ in 0..MAX_NEWTON_STEPS {
        let g = cur.grad;
        if (g[0] * s).hypot(g[1] * s) < MLE_GRADIENT_TOL {
            return Ok(LogisticModel { m, s });
        }
        let h = cur.hess;
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        // Newton direction where the Hessian is negative definite,
        // scaled gradient ascent elsewhere.
        let dir = if h[0][0] < 0.0 && det > 0.0 {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            [g[0] * s * s, g[1] * s * s]
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let (m_new, s_new) = (m + step * dir[0], s + step * dir[1]);
            if s_new > 0.0 && s_new.is_finite() {
                let next = mean_log_likelihood(samples, m_new, s_new);
                if next.value >= cur.value - 1e-15 * cur.value.abs() {
                    accepted = Some((m_new, s_new, next));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((m_new, s_new, next)) => {
                m = m_new;
                s = s_new;
                cur = next;
            }
            // No ascent possible along the search direction: at a maximum up
            // to rounding.
            None => break,
        }
    }

    let g = cur.grad;
    if (g[0] * s).hypot(g[1] * s) < 1e3 * MLE_GRADIENT_TOL {
        Ok(LogisticModel { m, s })
    } else {
        Err(Error::Internal(format!(
            "logistic MLE did not converge (m={m}, s={s}, grad={g:?})"
        )))
    }
}

pub(crate) fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}
