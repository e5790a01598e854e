//! Size-dependent logistic models for per-step width/height changes.
//!
//! The location is a single pooled constant; the scale grows with the log
//! of the cell's pixel count, `s(p) = a + b ln p`, floored at `min_scale`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic_mle, LogisticModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthModel {
    pub location: f64,
    pub intercept: f64,
    pub slope: f64,
    pub min_scale: f64,
    /// Set when the data did not support a size dependence.
    #[serde(default)]
    pub size_independent: bool,
}

impl GrowthModel {
    /// No growth at all.
    pub const STATIC: GrowthModel = GrowthModel {
        location: 0.0,
        intercept: 0.0,
        slope: 0.0,
        min_scale: 0.0,
        size_independent: true,
    };

    pub fn constant(model: LogisticModel) -> Self {
        GrowthModel {
            location: model.m,
            intercept: model.s,
            slope: 0.0,
            min_scale: 0.0,
            size_independent: true,
        }
    }

    pub fn scale(&self, pixels: u32) -> f64 {
        let lp = f64::from(pixels.max(1)).ln();
        (self.intercept + self.slope * lp).max(self.min_scale)
    }

    pub fn at(&self, pixels: u32) -> LogisticModel {
        LogisticModel {
            m: self.location,
            s: self.scale(pixels),
        }
    }

    /// True when the scale can decrease with cell size.
    pub fn is_decreasing(&self) -> bool {
        self.slope < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFitOptions {
    pub min_per_bucket: usize,
    pub min_scale: f64,
}

impl Default for GrowthFitOptions {
    fn default() -> Self {
        Self {
            min_per_bucket: 30,
            min_scale: 0.01,
        }
    }
}

/// Per-bucket scale estimate used in the log-linear regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketScale {
    pub mean_ln_pixels: f64,
    pub scale: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub model: GrowthModel,
    pub buckets: Vec<BucketScale>,
}

/// Fits a [`GrowthModel`] to `(pixels, delta)` samples.
///
/// Samples are binned by `floor(log2(pixels))`; bins with fewer than
/// `min_per_bucket` samples are merged into the next larger bin (the last
/// sparse bin joins its predecessor). Each bin's logistic MLE scale is then
/// regressed on the bin's mean `ln(pixels)`.
pub fn fit_growth_scale(samples: &[(u32, f64)], opts: GrowthFitOptions) -> Result<GrowthFit> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no growth samples".into()));
    }
    let deltas: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let pooled = match fit_logistic_mle(&deltas) {
        Ok(fit) => fit,
        Err(Error::Degenerate(_)) => {
            log::warn!("all {} growth samples are identical; using a fixed increment", deltas.len());
            return Ok(GrowthFit {
                model: GrowthModel {
                    location: deltas[0],
                    intercept: 0.0,
                    slope: 0.0,
                    min_scale: opts.min_scale,
                    size_independent: true,
                },
                buckets: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };

    let mut bins: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for &(p, d) in samples {
        bins.entry(p.max(1).ilog2()).or_default().push((p.max(1), d));
    }
    let mut groups: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut pending: Vec<(u32, f64)> = Vec::new();
    for (_, bin) in bins {
        pending.extend(bin);
        if pending.len() >= opts.min_per_bucket {
            groups.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(pending),
            None => groups.push(pending),
        }
    }

    let buckets: Vec<BucketScale> = groups
        .iter()
        .filter_map(|g| {
            let ds: Vec<f64> = g.iter().map(|s| s.1).collect();
            let fit = fit_logistic_mle(&ds).ok()?;
            let mean_ln = g.iter().map(|s| f64::from(s.0).ln()).sum::<f64>() / g.len() as f64;
            Some(BucketScale {
                mean_ln_pixels: mean_ln,
                scale: fit.s,
                count: g.len(),
            })
        })
        .collect();

    let spread = buckets
        .iter()
        .map(|b| b.mean_ln_pixels)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if buckets.len() < 2 || spread.1 - spread.0 < 1e-9 {
        log::warn!(
            "growth samples span too few size buckets ({}); using a size-independent scale",
            buckets.len()
        );
        return Ok(GrowthFit {
            model: GrowthModel {
                location: pooled.m,
                intercept: pooled.s,
                slope: 0.0,
                min_scale: opts.min_scale,
                size_independent: true,
            },
            buckets,
        });
    }

    let k = buckets.len() as f64;
    let lx = buckets.iter().map(|b| b.mean_ln_pixels).sum::<f64>() / k;
    let sy = buckets.iter().map(|b| b.scale).sum::<f64>() / k;
    let sxy: f64 = buckets
        .iter()
        .map(|b| (b.mean_ln_pixels - lx) * (b.scale - sy))
        .sum();
    let sxx: f64 = buckets.iter().map(|b| (b.mean_ln_pixels - lx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = sy - slope * lx;
    if slope < 0.0 {
        log::warn!("fitted growth scale decreases with cell size (slope {slope:.4})");
    }

    Ok(GrowthFit {
        model: GrowthModel {
            location: pooled.m,
            intercept,
            slope,
            min_scale: opts.min_scale,
            size_independent: false,
        },
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize, a: f64, b: f64, seed: u64) -> Vec<(u32, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p = 2f64.powf(rng.random_range(2.0..12.0)).round() as u32;
                let model = LogisticModel {
                    m: 0.3,
                    s: a + b * f64::from(p).ln(),
                };
                (p, model.sample(&mut rng))
            })
            .collect()
    }

    #[test]
    fn recovers_log_linear_scale() {
        let fit = fit_growth_scale(&synthetic(60_000, 0.1, 0.05, 4), GrowthFitOptions::default()).unwrap();
        let m = fit.model;
        assert!(!m.size_independent);
        assert!((m.intercept - 0.1).abs() <= 0.01, "{m:?}");
        assert!((m.slope - 0.05).abs() <= 0.005, "{m:?}");
        assert!((m.location - 0.3).abs() < 0.02, "{m:?}");
    }

    #[test]
    fn single_pixel_count_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = LogisticModel { m: 0.0, s: 0.5 };
        let samples: Vec<(u32, f64)> = (0..200).map(|_| (64, model.sample(&mut rng))).collect();
        let fit = fit_growth_scale(&samples, GrowthFitOptions::default()).unwrap();
        assert!(fit.model.size_independent);
        assert_eq!(fit.model.slope, 0.0);
        assert!((fit.model.scale(64) - 0.5).abs() < 0.1);
    }

    #[test]
    fn small_cells_clamp_at_min_scale() {
        let model = GrowthModel {
            location: 0.0,
            intercept: -0.2,
            slope: 0.1,
            min_scale: 0.01,
            size_independent: false,
        };
        assert_eq!(model.scale(1), 0.01);
        assert_eq!(model.scale(0), 0.01);
        assert!((model.scale(1000) - (-0.2 + 0.1 * 1000f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn sparse_bins_merge_upward() {
        // 10 samples in the smallest bin, 40 in the next: one group of 50
        // plus one large group.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples = Vec::new();
        for (p, n) in [(3u32, 10), (5, 40), (1000, 60)] {
            for _ in 0..n {
                samples.push((p, rng.random_range(-1.0..1.0)));
            }
        }
        let fit = fit_growth_scale(&samples, GrowthFitOptions::default()).unwrap();
        let counts: Vec<usize> = fit.buckets.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![50, 60]);
    }

    #[test]
    fn scale_non_decreasing_when_slope_non_negative() {
        let fit = fit_growth_scale(&synthetic(20_000, 0.2, 0.03, 8), GrowthFitOptions::default()).unwrap();
        let m = fit.model;
        assert!(!m.is_decreasing());
        let mut prev = 0.0;
        for p in 1..5000 {
            let s = m.scale(p);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn identical_increments_yield_fixed_step() {
        let samples = vec![(10, 2.0), (100, 2.0), (1000, 2.0)];
        let m = fit_growth_scale(&samples, GrowthFitOptions::default()).unwrap().model;
        assert_eq!(m.location, 2.0);
        assert_eq!(m.scale(100), 0.01);
    }
}
